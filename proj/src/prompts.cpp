#include "quest/prompts.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"

namespace quest {

namespace {

std::string join_names(ConceptCombination const & c, ConceptKind kind)
{
    std::string out;
    for (auto const & x : c) {
        if (x.kind != kind) {
            continue;
        }
        if (!out.empty()) {
            out += ", ";
        }
        out += x.name;
    }
    return out.empty() ? "(none)" : out;
}

} // namespace

double jaccard_distance(ConceptCombination const & a, ConceptCombination const & b)
{
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    std::size_t const uni = a.size() + b.size() - inter;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard_distance(ConceptSet const & a, ConceptSet const & b)
{
    return jaccard_distance(a.all(), b.all());
}

std::vector<Problem> select_exemplars(ConceptCombination const & combination, std::span<Problem const> corpus,
                                      std::size_t k)
{
    struct Candidate
    {
        double distance;
        Problem const * problem;
    };
    std::vector<Candidate> pool;
    pool.reserve(corpus.size());
    for (auto const & p : corpus) {
        if (p.concepts) {
            pool.push_back({jaccard_distance(combination, p.concepts->all()), &p});
        }
    }
    auto const better = [](Candidate const & a, Candidate const & b) {
        if (a.distance != b.distance) {
            return a.distance < b.distance;
        }
        return a.problem->id < b.problem->id;
    };
    if (pool.size() < k) {
        log().warn("exemplar pool has {} problems with concepts, fewer than k={}", pool.size(), k);
        k = pool.size();
    }
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), better);
    std::vector<Problem> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(*pool[i].problem);
    }
    return out;
}

std::string format_concept_list(ConceptCombination const & combination)
{
    return fmt::format("Topics: {}\nKnowledge points: {}", join_names(combination, ConceptKind::Topic),
                       join_names(combination, ConceptKind::KnowledgePoint));
}

GenerationPrompt render_prompt(PromptTemplate const & tmpl, ConceptCombination const & combination,
                               std::span<Problem const> exemplars)
{
    if (exemplars.empty()) {
        throw UsageError("render_prompt needs at least one exemplar");
    }
    std::string blocks;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        auto const & ex = exemplars[i];
        if (!ex.concepts) {
            throw UsageError(fmt::format("exemplar '{}' has no concept set", ex.id));
        }
        if (i > 0) {
            blocks += "\n\n";
        }
        blocks += fmt::format("### Example {}\n{}\nProblem:\n{}", i + 1, format_concept_list(ex.concepts->all()),
                              ex.statement);
    }

    GenerationPrompt prompt;
    prompt.template_id = tmpl.id;
    prompt.combination = combination;
    for (auto const & ex : exemplars) {
        prompt.exemplar_ids.push_back(ex.id);
    }
    prompt.rendered_text = fill_template(tmpl, {{"concepts", format_concept_list(combination)}, {"exemplars", blocks}});
    prompt.prompt_id = short_hash(tmpl.id + '\n' + prompt.rendered_text);
    return prompt;
}

json GenerationPrompt::to_json() const
{
    json concepts = json::array();
    for (auto const & c : combination) {
        concepts.push_back(json{{"kind", to_string(c.kind)}, {"name", c.name}});
    }
    return json{{"prompt_id", prompt_id},
                {"template_id", template_id},
                {"concepts", concepts},
                {"exemplar_ids", exemplar_ids},
                {"rendered_text", rendered_text}};
}

GenerationPrompt GenerationPrompt::from_json(json const & j)
{
    GenerationPrompt p;
    p.prompt_id = j.at("prompt_id").get<std::string>();
    p.template_id = j.at("template_id").get<std::string>();
    for (auto const & c : j.at("concepts")) {
        p.combination.insert(Concept::make(concept_kind_from_string(c.at("kind").get<std::string>()),
                                           c.at("name").get<std::string>()));
    }
    p.exemplar_ids = j.at("exemplar_ids").get<std::vector<std::string>>();
    p.rendered_text = j.at("rendered_text").get<std::string>();
    return p;
}

} // namespace quest
