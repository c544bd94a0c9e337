#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace quest {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(fs::path const & path);

/// Writes to a sibling temp file, fsyncs, then renames over `path`, so
/// readers see either the old file or the complete new one.
void write_file_atomic(fs::path const & path, std::string_view contents);

/// One JSON value per non-empty line. FormatError carries the 1-based line.
std::vector<json> parse_jsonl(std::string_view text);
std::vector<json> read_jsonl(fs::path const & path);

/// Serialize records one per line, each terminated by '\n'.
std::string to_jsonl(std::vector<json> const & records);
void write_jsonl_atomic(fs::path const & path, std::vector<json> const & records);

} // namespace quest
