#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "quest/concept.hpp"
#include "quest/io.hpp"

namespace quest {

/// Seed problem. `difficulty_label`, when present, is an integer in [1, 5].
struct Problem
{
    std::string id;
    std::string statement;
    std::optional<int> difficulty_label;
    std::vector<std::string> source_tags;
    std::optional<ConceptSet> concepts;
};

struct CorpusManifest
{
    std::string source;
    std::string schema;
    std::string content_sha256;
    std::size_t records_read = 0;
    std::size_t duplicates_dropped = 0;

    [[nodiscard]] json to_json() const;
    static CorpusManifest from_json(json const & j);
};

/// Ordered, deduplicated seed problems. Immutable once loaded.
class Corpus
{
public:
    Corpus() = default;
    Corpus(std::vector<Problem> problems, CorpusManifest manifest);

    [[nodiscard]] std::vector<Problem> const & problems() const noexcept { return problems_; }
    [[nodiscard]] CorpusManifest const & manifest() const noexcept { return manifest_; }
    [[nodiscard]] std::size_t size() const noexcept { return problems_.size(); }

    [[nodiscard]] Problem const * find(std::string_view id) const;

    /// Copy with concept sets attached; ids absent from `concepts` keep none.
    [[nodiscard]] Corpus with_concepts(std::unordered_map<std::string, ConceptSet> const & concepts) const;

private:
    std::vector<Problem> problems_;
    CorpusManifest manifest_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Native seed schema: one JSON object per line with
/// {"id": str, "statement": str, "difficulty": int 1-5 | null, "tags": [str]}.
inline constexpr std::string_view kSeedSchemaV1 = "quest-seed-v1";

/// TACO-shaped records: {"question": str, "difficulty": "EASY".."VERY_HARD"
/// | "UNKNOWN_DIFFICULTY", "tags": [str]}, optional "id"; ids default to
/// "taco-<line>".
inline constexpr std::string_view kSeedSchemaTaco = "taco";

/// Trim the text, convert CRLF/CR to LF, turn whitespace-only lines into
/// empty lines and collapse runs of blank lines to one. Idempotent.
std::string normalize_statement(std::string_view raw);

/// Parse and validate a seed corpus. Exact duplicate statements (after
/// normalization) keep their first occurrence. A duplicate id, a malformed
/// record or an out-of-range label throws FormatError naming the line.
Corpus parse_corpus(std::string_view text, std::string_view schema = kSeedSchemaV1, std::string source = "<memory>");
Corpus load_corpus(fs::path const & path, std::string_view schema = kSeedSchemaV1);

} // namespace quest
