#include "quest/corpus.hpp"

#include <unordered_set>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"

namespace quest {

namespace {

bool is_blank(std::string_view line) noexcept
{
    return line.find_first_not_of(" \t\f\v") == std::string_view::npos;
}

std::optional<int> taco_difficulty(std::string_view label)
{
    if (label == "EASY") return 1;
    if (label == "MEDIUM") return 2;
    if (label == "MEDIUM_HARD") return 3;
    if (label == "HARD") return 4;
    if (label == "VERY_HARD") return 5;
    return std::nullopt;
}

std::string record_name(json const & rec, std::size_t line)
{
    if (rec.is_object() && rec.contains("id") && rec["id"].is_string()) {
        return fmt::format("record '{}'", rec["id"].get<std::string>());
    }
    return fmt::format("record on line {}", line);
}

std::vector<std::string> read_tags(json const & rec, std::size_t line)
{
    std::vector<std::string> tags;
    if (!rec.contains("tags") || rec["tags"].is_null()) {
        return tags;
    }
    if (!rec["tags"].is_array()) {
        throw FormatError(fmt::format("{}: tags must be a list of strings", record_name(rec, line)), line, "tags");
    }
    for (auto const & t : rec["tags"]) {
        if (!t.is_string()) {
            throw FormatError(fmt::format("{}: tags must be a list of strings", record_name(rec, line)), line, "tags");
        }
        tags.push_back(t.get<std::string>());
    }
    return tags;
}

Problem parse_v1(json const & rec, std::size_t line)
{
    Problem p;
    if (!rec.contains("id") || !rec["id"].is_string() || rec["id"].get<std::string>().empty()) {
        throw FormatError(fmt::format("{}: missing or empty string id", record_name(rec, line)), line, "id");
    }
    p.id = rec["id"].get<std::string>();
    if (!rec.contains("statement") || !rec["statement"].is_string()) {
        throw FormatError(fmt::format("{}: missing string statement", record_name(rec, line)), line, "statement");
    }
    p.statement = rec["statement"].get<std::string>();
    if (rec.contains("difficulty") && !rec["difficulty"].is_null()) {
        auto const & d = rec["difficulty"];
        if (!d.is_number_integer() || d.get<long long>() < 1 || d.get<long long>() > 5) {
            throw FormatError(
                fmt::format("{}: difficulty must be an integer in [1, 5], got {}", record_name(rec, line), d.dump()),
                line, "difficulty");
        }
        p.difficulty_label = d.get<int>();
    }
    p.source_tags = read_tags(rec, line);
    return p;
}

Problem parse_taco(json const & rec, std::size_t line)
{
    Problem p;
    if (rec.contains("id") && !rec["id"].is_null()) {
        if (rec["id"].is_string()) {
            p.id = rec["id"].get<std::string>();
        } else if (rec["id"].is_number_integer()) {
            p.id = std::to_string(rec["id"].get<long long>());
        }
    }
    if (p.id.empty()) {
        p.id = fmt::format("taco-{}", line);
    }
    if (!rec.contains("question") || !rec["question"].is_string()) {
        throw FormatError(fmt::format("{}: missing string question", record_name(rec, line)), line, "question");
    }
    p.statement = rec["question"].get<std::string>();
    if (rec.contains("difficulty") && !rec["difficulty"].is_null()) {
        if (!rec["difficulty"].is_string()) {
            throw FormatError(fmt::format("{}: difficulty must be a TACO label", record_name(rec, line)), line,
                              "difficulty");
        }
        auto const label = rec["difficulty"].get<std::string>();
        p.difficulty_label = taco_difficulty(label);
        if (!p.difficulty_label && label != "UNKNOWN_DIFFICULTY") {
            throw FormatError(fmt::format("{}: unknown TACO difficulty '{}'", record_name(rec, line), label), line,
                              "difficulty");
        }
    }
    p.source_tags = read_tags(rec, line);
    return p;
}

} // namespace

json CorpusManifest::to_json() const
{
    return json{{"source", source},
                {"schema", schema},
                {"content_sha256", content_sha256},
                {"records_read", records_read},
                {"duplicates_dropped", duplicates_dropped}};
}

CorpusManifest CorpusManifest::from_json(json const & j)
{
    CorpusManifest m;
    m.source = j.at("source").get<std::string>();
    m.schema = j.at("schema").get<std::string>();
    m.content_sha256 = j.at("content_sha256").get<std::string>();
    m.records_read = j.at("records_read").get<std::size_t>();
    m.duplicates_dropped = j.at("duplicates_dropped").get<std::size_t>();
    return m;
}

Corpus::Corpus(std::vector<Problem> problems, CorpusManifest manifest)
    : problems_(std::move(problems)), manifest_(std::move(manifest))
{
    index_.reserve(problems_.size());
    for (std::size_t i = 0; i < problems_.size(); ++i) {
        if (!index_.emplace(problems_[i].id, i).second) {
            throw FormatError(fmt::format("duplicate problem id '{}'", problems_[i].id));
        }
    }
}

Problem const * Corpus::find(std::string_view id) const
{
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &problems_[it->second];
}

Corpus Corpus::with_concepts(std::unordered_map<std::string, ConceptSet> const & concepts) const
{
    auto problems = problems_;
    for (auto & p : problems) {
        auto it = concepts.find(p.id);
        if (it != concepts.end()) {
            p.concepts = it->second;
        } else {
            p.concepts.reset();
        }
    }
    return Corpus(std::move(problems), manifest_);
}

std::string normalize_statement(std::string_view raw)
{
    std::string unified;
    unified.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\r') {
            unified.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') {
                ++i;
            }
        } else {
            unified.push_back(raw[i]);
        }
    }

    std::vector<std::string_view> lines;
    std::string_view view(unified);
    std::size_t pos = 0;
    while (pos <= view.size()) {
        auto const nl = view.find('\n', pos);
        lines.push_back(view.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }

    std::size_t first = 0;
    while (first < lines.size() && is_blank(lines[first])) {
        ++first;
    }
    std::size_t last = lines.size();
    while (last > first && is_blank(lines[last - 1])) {
        --last;
    }

    std::string out;
    bool prev_blank = false;
    for (std::size_t i = first; i < last; ++i) {
        auto line = lines[i];
        if (i == first) {
            line.remove_prefix(std::min(line.find_first_not_of(" \t\f\v"), line.size()));
        }
        if (i + 1 == last) {
            auto const end = line.find_last_not_of(" \t\f\v");
            line = line.substr(0, end == std::string_view::npos ? 0 : end + 1);
        }
        bool const blank = is_blank(line);
        if (blank && prev_blank) {
            continue;
        }
        if (i != first) {
            out.push_back('\n');
        }
        if (!blank) {
            out.append(line);
        }
        prev_blank = blank;
    }
    return out;
}

Corpus parse_corpus(std::string_view text, std::string_view schema, std::string source)
{
    if (schema != kSeedSchemaV1 && schema != kSeedSchemaTaco) {
        throw UsageError(fmt::format("unknown corpus schema '{}'", schema));
    }
    auto const records = [&] {
        // keep physical line numbers for error messages
        std::vector<std::pair<std::size_t, json>> out;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto const nl = text.find('\n', pos);
            auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
            pos = (nl == std::string_view::npos) ? text.size() : nl + 1;
            ++line_no;
            if (is_blank(line) || line == "\r") {
                continue;
            }
            try {
                out.emplace_back(line_no, json::parse(line));
            } catch (json::parse_error const & e) {
                throw FormatError(fmt::format("invalid JSON record: {}", e.what()), line_no);
            }
        }
        return out;
    }();

    std::vector<Problem> problems;
    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> statements;
    std::size_t duplicates = 0;
    for (auto const & [line, rec] : records) {
        if (!rec.is_object()) {
            throw FormatError("record is not a JSON object", line);
        }
        auto p = schema == kSeedSchemaV1 ? parse_v1(rec, line) : parse_taco(rec, line);
        p.statement = normalize_statement(p.statement);
        if (p.statement.empty()) {
            throw FormatError(fmt::format("record '{}': statement is empty", p.id), line, "statement");
        }
        if (!ids.insert(p.id).second) {
            throw FormatError(fmt::format("duplicate id '{}'", p.id), line, "id");
        }
        if (!statements.insert(p.statement).second) {
            ++duplicates;
            continue;
        }
        problems.push_back(std::move(p));
    }

    CorpusManifest manifest;
    manifest.source = std::move(source);
    manifest.schema = std::string(schema);
    manifest.content_sha256 = sha256_hex(text);
    manifest.records_read = records.size();
    manifest.duplicates_dropped = duplicates;
    if (duplicates > 0) {
        log().info("corpus {}: {} duplicate dropped", manifest.source, duplicates);
    }
    return Corpus(std::move(problems), std::move(manifest));
}

Corpus load_corpus(fs::path const & path, std::string_view schema)
{
    return parse_corpus(read_file(path), schema, path.string());
}

} // namespace quest
