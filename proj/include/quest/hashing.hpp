#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace quest {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// First `hex_chars` characters of sha256_hex(data).
std::string short_hash(std::string_view data, std::size_t hex_chars = 32);

constexpr std::uint64_t fnv1a64(std::string_view data) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash64(std::string_view data) noexcept { return mix64(fnv1a64(data)); }

} // namespace quest
