#include "quest/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "quest/error.hpp"

namespace quest {

std::string read_file(fs::path const & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError(fmt::format("read failed for '{}'", path.string()));
    }
    return std::move(ss).str();
}

void write_file_atomic(fs::path const & path, std::string_view contents)
{
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += fmt::format(".tmp.{}.{}", ::getpid(), counter.fetch_add(1));

    int const fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw IoError(fmt::format("cannot create '{}': {}", tmp.string(), std::strerror(errno)));
    }
    std::size_t off = 0;
    while (off < contents.size()) {
        auto const n = ::write(fd, contents.data() + off, contents.size() - off);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            int const err = errno;
            ::close(fd);
            ::unlink(tmp.c_str());
            throw IoError(fmt::format("write failed for '{}': {}", tmp.string(), std::strerror(err)));
        }
        off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        ::unlink(tmp.c_str());
        throw IoError(fmt::format("flush failed for '{}'", tmp.string()));
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        ::unlink(tmp.c_str());
        throw IoError(fmt::format("rename to '{}' failed: {}", path.string(), ec.message()));
    }
}

std::vector<json> parse_jsonl(std::string_view text)
{
    std::vector<json> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto const nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        try {
            out.push_back(json::parse(line));
        } catch (json::parse_error const & e) {
            throw FormatError(fmt::format("invalid JSON: {}", e.what()), line_no);
        }
    }
    return out;
}

std::vector<json> read_jsonl(fs::path const & path)
{
    try {
        return parse_jsonl(read_file(path));
    } catch (FormatError const & e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()), e.line(), e.field());
    }
}

std::string to_jsonl(std::vector<json> const & records)
{
    std::string out;
    for (auto const & r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

void write_jsonl_atomic(fs::path const & path, std::vector<json> const & records)
{
    write_file_atomic(path, to_jsonl(records));
}

} // namespace quest
