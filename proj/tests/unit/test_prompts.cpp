#include <doctest.h>

#include <algorithm>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/prompts.hpp"
#include "quest/random.hpp"
#include "quest/templates.hpp"

using namespace quest;

namespace {

ConceptCombination combo(std::vector<std::string> const & topics, std::vector<std::string> const & kps = {})
{
    ConceptCombination c;
    for (auto const & t : topics) {
        c.insert(Concept::make(ConceptKind::Topic, t));
    }
    for (auto const & k : kps) {
        c.insert(Concept::make(ConceptKind::KnowledgePoint, k));
    }
    return c;
}

Problem with_concepts(std::string id, ConceptCombination const & c)
{
    Problem p;
    p.id = std::move(id);
    p.statement = "Statement for " + p.id;
    ConceptSet s;
    for (auto const & x : c) {
        s.add(x.kind, x.name);
    }
    p.concepts = s;
    return p;
}

ConceptCombination random_combo(RandomSource & rng)
{
    ConceptCombination c;
    auto const n = rng.uniform_index(5);
    for (std::uint64_t i = 0; i < n; ++i) {
        c.insert(Concept::make(rng.uniform_index(2) ? ConceptKind::Topic : ConceptKind::KnowledgePoint,
                               fmt::format("c{}", rng.uniform_index(6))));
    }
    return c;
}

} // namespace

TEST_SUITE("prompts")
{
    TEST_CASE("jaccard distance values")
    {
        CHECK(jaccard_distance(combo({"a", "b"}), combo({"a", "b"})) == 0.0);
        CHECK(std::abs(jaccard_distance(combo({"a", "b"}), combo({"b", "c"})) - 2.0 / 3.0) < 1e-12);
        CHECK(jaccard_distance(combo({"a"}), combo({"b"})) == 1.0);
        CHECK(jaccard_distance(ConceptCombination{}, ConceptCombination{}) == 0.0);
        // kinds are distinct concepts
        CHECK(jaccard_distance(combo({"a"}), combo({}, {"a"})) == 1.0);
    }

    TEST_CASE("jaccard distance is a pseudometric")
    {
        RandomSource rng(4);
        for (int i = 0; i < 2000; ++i) {
            auto const a = random_combo(rng);
            auto const b = random_combo(rng);
            auto const c = random_combo(rng);
            CHECK(jaccard_distance(a, b) == jaccard_distance(b, a));
            CHECK(jaccard_distance(a, a) == 0.0);
            CHECK(jaccard_distance(a, c) <= jaccard_distance(a, b) + jaccard_distance(b, c) + 1e-12);
        }
    }

    TEST_CASE("exemplar ranking and ties")
    {
        std::vector<Problem> pool = {with_concepts("p3", combo({"a", "b"})), with_concepts("p1", combo({"a", "c"})),
                                     with_concepts("p2", combo({"a", "d"})), with_concepts("p0", combo({"x"}))};
        Problem failed;
        failed.id = "p-failed";
        failed.statement = "no concepts";
        pool.push_back(failed);
        auto const got = select_exemplars(combo({"a", "b"}), pool, 3);
        REQUIRE(got.size() == 3);
        CHECK(got[0].id == "p3");
        CHECK(got[1].id == "p1");
        CHECK(got[2].id == "p2");
        CHECK(select_exemplars(combo({"a", "b"}), pool, 10).size() == 4);
    }

    TEST_CASE("exemplar selection matches a brute-force scan")
    {
        RandomSource rng(8);
        std::vector<Problem> pool;
        for (int i = 0; i < 200; ++i) {
            pool.push_back(with_concepts(fmt::format("q{:03d}", i), random_combo(rng)));
        }
        for (int trial = 0; trial < 50; ++trial) {
            auto const target = random_combo(rng);
            std::vector<std::pair<double, std::string>> all;
            for (auto const & p : pool) {
                all.emplace_back(jaccard_distance(target, p.concepts->all()), p.id);
            }
            std::sort(all.begin(), all.end());
            auto const got = select_exemplars(target, pool, 8);
            REQUIRE(got.size() == 8);
            for (std::size_t k = 0; k < 8; ++k) {
                CHECK(got[k].id == all[k].second);
            }
            auto shuffled = pool;
            std::reverse(shuffled.begin(), shuffled.end());
            auto const again = select_exemplars(target, shuffled, 8);
            for (std::size_t k = 0; k < 8; ++k) {
                CHECK(again[k].id == got[k].id);
            }
        }
    }

    TEST_CASE("rendering is deterministic and structural")
    {
        TemplateRegistry reg;
        auto const & tmpl = reg.get(template_ids::kProblemGenerate);
        auto const c = combo({"dynamic programming", "graphs"}, {"knapsack problem", "dijkstra's algorithm"});
        std::vector<Problem> ex;
        for (int i = 0; i < 8; ++i) {
            ex.push_back(with_concepts(fmt::format("e{}", i), combo({"graphs"})));
        }
        auto const a = render_prompt(tmpl, c, ex);
        auto const b = render_prompt(tmpl, c, ex);
        CHECK(a.rendered_text == b.rendered_text);
        CHECK(a.prompt_id == b.prompt_id);
        CHECK(a.prompt_id.size() == 32);
        std::size_t blocks = 0;
        for (auto pos = a.rendered_text.find("### Example "); pos != std::string::npos;
             pos = a.rendered_text.find("### Example ", pos + 1)) {
            ++blocks;
        }
        CHECK(blocks == 8);
        for (auto const & x : c) {
            CHECK(a.rendered_text.find(x.name) != std::string::npos);
        }
        CHECK(a.exemplar_ids.front() == "e0");
        auto const back = GenerationPrompt::from_json(a.to_json());
        CHECK(back.rendered_text == a.rendered_text);
        CHECK(back.combination == a.combination);
        CHECK(back.exemplar_ids == a.exemplar_ids);

        std::vector<Problem> other(ex.begin(), ex.begin() + 7);
        CHECK(render_prompt(tmpl, c, other).prompt_id != a.prompt_id);
    }

    TEST_CASE("concept lists are sorted")
    {
        auto const text = format_concept_list(combo({"zeta", "alpha"}, {"mid"}));
        CHECK(text == "Topics: alpha, zeta\nKnowledge points: mid");
        CHECK(format_concept_list(combo({"x"})) == "Topics: x\nKnowledge points: (none)");
    }

    TEST_CASE("templates")
    {
        TemplateRegistry reg;
        CHECK(reg.get(template_ids::kProblemGenerate).placeholders() == std::vector<std::string>{"concepts", "exemplars"});
        CHECK_THROWS_WITH_AS(fill_template(reg.get(template_ids::kProblemGenerate), {{"concepts", "x"}}),
                             doctest::Contains("'exemplars' unfilled"), FormatError);
        CHECK(fill_template({"t", "a {{x}} b {{x}}"}, {{"x", "1"}}) == "a 1 b 1");
        CHECK_THROWS_AS((void)reg.get("missing-template"), UsageError);
        CHECK(reg.ids().size() == 4);
    }
}
