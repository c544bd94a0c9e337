#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "quest/concept.hpp"
#include "quest/corpus.hpp"
#include "quest/templates.hpp"

namespace quest {

/// 1 - |A ∩ B| / |A ∪ B| over all concepts of both kinds; 0 for two empty sets.
double jaccard_distance(ConceptCombination const & a, ConceptCombination const & b);
double jaccard_distance(ConceptSet const & a, ConceptSet const & b);

/// The k problems with concept sets closest to `combination`, ordered by
/// ascending distance then ascending id. Returns fewer (with a warning)
/// when the pool is smaller than k.
std::vector<Problem> select_exemplars(ConceptCombination const & combination, std::span<Problem const> corpus,
                                      std::size_t k = 8);

struct GenerationPrompt
{
    std::string prompt_id; // 32 hex chars of sha256(template id, rendered text)
    std::string template_id;
    ConceptCombination combination;
    std::vector<std::string> exemplar_ids; // rank order
    std::string rendered_text;

    [[nodiscard]] json to_json() const;
    static GenerationPrompt from_json(json const & j);
};

/// Fills {{concepts}} and {{exemplars}}. Concepts are listed sorted,
/// exemplars in the given rank order, each as an "### Example N" block.
GenerationPrompt render_prompt(PromptTemplate const & tmpl, ConceptCombination const & combination,
                               std::span<Problem const> exemplars);

/// "Topics: a, b" / "Knowledge points: c" lines for a combination.
std::string format_concept_list(ConceptCombination const & combination);

} // namespace quest
