#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "quest/concept.hpp"
#include "quest/corpus.hpp"
#include "quest/gateway.hpp"
#include "quest/templates.hpp"

namespace quest {

/// Audit record for one problem's extraction attempts.
struct ExtractionRecord
{
    std::string problem_id;
    std::vector<std::string> raw_responses;
    std::optional<ConceptSet> concepts; // absent when extraction failed
    std::vector<std::string> warnings;

    [[nodiscard]] bool ok() const noexcept { return concepts.has_value(); }
    [[nodiscard]] json to_json() const;
    static ExtractionRecord from_json(json const & j);
};

/// Prompts for the concepts of one problem. An attempt whose response has
/// no parseable topics is re-prompted up to `parse_retries` more times
/// with a fresh sample index. Gateway errors propagate as BackendError.
ExtractionRecord extract_concepts(Problem const & problem, Gateway & gateway, PromptTemplate const & tmpl,
                                  int parse_retries = 3);

struct CorpusExtraction
{
    Corpus corpus; // concepts attached to successfully extracted problems
    std::vector<ExtractionRecord> records; // ordered by problem id
    std::set<Concept> vocabulary;
    std::size_t failed = 0;
};

/// Extract every problem concurrently (bounded by the gateway limit) and
/// merge in problem id order, so the result does not depend on corpus order
/// or scheduling.
CorpusExtraction extract_corpus(Corpus const & corpus, Gateway & gateway, PromptTemplate const & tmpl,
                                int parse_retries = 3);

/// Rebuild an extraction result from persisted audit records.
CorpusExtraction apply_extraction_records(Corpus const & corpus, std::vector<ExtractionRecord> records);

} // namespace quest
