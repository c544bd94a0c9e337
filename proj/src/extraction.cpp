#include "quest/extraction.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/logging.hpp"
#include "quest/parallel.hpp"

namespace quest {

namespace {

json concept_set_json(ConceptSet const & s)
{
    return json{{"topics", s.topics()}, {"knowledge_points", s.knowledge_points()}};
}

ConceptSet concept_set_from_json(json const & j)
{
    ConceptSet s;
    for (auto const & t : j.at("topics")) {
        s.add(ConceptKind::Topic, t.get<std::string>());
    }
    for (auto const & k : j.at("knowledge_points")) {
        s.add(ConceptKind::KnowledgePoint, k.get<std::string>());
    }
    return s;
}

} // namespace

json ExtractionRecord::to_json() const
{
    json j{{"problem_id", problem_id},
           {"status", ok() ? "ok" : "extraction_failed"},
           {"raw_responses", raw_responses},
           {"warnings", warnings}};
    j["concepts"] = concepts ? concept_set_json(*concepts) : json(nullptr);
    return j;
}

ExtractionRecord ExtractionRecord::from_json(json const & j)
{
    ExtractionRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.raw_responses = j.at("raw_responses").get<std::vector<std::string>>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
    if (!j.at("concepts").is_null()) {
        r.concepts = concept_set_from_json(j["concepts"]);
    }
    return r;
}

ExtractionRecord extract_concepts(Problem const & problem, Gateway & gateway, PromptTemplate const & tmpl,
                                  int parse_retries)
{
    if (problem.statement.empty()) {
        throw UsageError(fmt::format("problem '{}' has an empty statement", problem.id));
    }
    auto const prompt = fill_template(tmpl, {{"problem", problem.statement}});
    ExtractionRecord record;
    record.problem_id = problem.id;

    for (int attempt = 0; attempt <= parse_retries; ++attempt) {
        auto const result = gateway.complete(gateway.make_request(RoleTag::ConceptExtract, prompt, attempt));
        if (!result.ok()) {
            throw BackendError(
                fmt::format("concept extraction for '{}' failed: {}", problem.id, result.error));
        }
        record.raw_responses.push_back(result.text);
        try {
            auto parsed = parse_concept_response(result.text);
            if (parsed.concepts.topics().empty()) {
                record.warnings.emplace_back(fmt::format("attempt {}: no topics", attempt + 1));
                continue;
            }
            for (auto & w : parsed.warnings) {
                record.warnings.push_back(fmt::format("attempt {}: {}", attempt + 1, w));
            }
            record.concepts = std::move(parsed.concepts);
            return record;
        } catch (FormatError const & e) {
            record.warnings.emplace_back(fmt::format("attempt {}: {}", attempt + 1, e.what()));
        }
    }
    log().warn("concept extraction failed for '{}' after {} attempts", problem.id, parse_retries + 1);
    return record;
}

CorpusExtraction apply_extraction_records(Corpus const & corpus, std::vector<ExtractionRecord> records)
{
    std::sort(records.begin(), records.end(),
              [](auto const & a, auto const & b) { return a.problem_id < b.problem_id; });
    CorpusExtraction out;
    std::unordered_map<std::string, ConceptSet> by_id;
    for (auto const & r : records) {
        if (!corpus.find(r.problem_id)) {
            throw FormatError(fmt::format("extraction record for unknown problem '{}'", r.problem_id));
        }
        if (r.concepts) {
            by_id.emplace(r.problem_id, *r.concepts);
            auto all = r.concepts->all();
            out.vocabulary.insert(all.begin(), all.end());
        } else {
            ++out.failed;
        }
    }
    out.corpus = corpus.with_concepts(by_id);
    out.records = std::move(records);
    return out;
}

CorpusExtraction extract_corpus(Corpus const & corpus, Gateway & gateway, PromptTemplate const & tmpl,
                                int parse_retries)
{
    auto const & problems = corpus.problems();
    std::vector<ExtractionRecord> records(problems.size());
    parallel_for(problems.size(), gateway.max_in_flight(),
                 [&](std::size_t i) { records[i] = extract_concepts(problems[i], gateway, tmpl, parse_retries); });
    auto out = apply_extraction_records(corpus, std::move(records));
    log().info("extracted concepts for {} problems ({} failed), vocabulary size {}", problems.size(), out.failed,
               out.vocabulary.size());
    return out;
}

} // namespace quest
