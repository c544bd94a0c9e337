#include <doctest.h>

#include <cmath>
#include <map>

#include <fmt/format.h>

#include "oracles.hpp"
#include "quest/concept_graph.hpp"
#include "quest/corpus.hpp"
#include "quest/error.hpp"
#include "quest/random.hpp"

using namespace quest;

namespace {

Problem problem(std::string id, std::vector<std::string> topics, std::vector<std::string> kps,
                std::optional<int> label = std::nullopt)
{
    Problem p;
    p.id = std::move(id);
    p.statement = "statement of " + p.id;
    p.difficulty_label = label;
    ConceptSet s;
    for (auto const & t : topics) {
        s.add(ConceptKind::Topic, t);
    }
    for (auto const & k : kps) {
        s.add(ConceptKind::KnowledgePoint, k);
    }
    p.concepts = s;
    return p;
}

Concept topic(std::string const & n) { return Concept::make(ConceptKind::Topic, n); }
Concept kp(std::string const & n) { return Concept::make(ConceptKind::KnowledgePoint, n); }

GraphParams cooc(double eps = 1.0) { return {WeightMode::CoOccurrence, 0.2, eps}; }

/// Star graph: hub topic "h" linked to knowledge points with the given frequencies.
ConceptGraph star(std::vector<int> const & freqs, GraphParams params)
{
    std::vector<Problem> ps;
    int id = 0;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        for (int k = 0; k < freqs[i]; ++k) {
            ps.push_back(problem(fmt::format("p{}", id++), {"h"}, {fmt::format("k{}", i)}));
        }
    }
    return ConceptGraph::build(ps, params);
}

} // namespace

TEST_SUITE("concept_graph")
{
    TEST_CASE("edge statistics aggregate labels")
    {
        std::vector<Problem> ps = {problem("a", {"u"}, {"v"}, 3), problem("b", {"u"}, {"v"}, 5)};
        auto const g = ConceptGraph::build(ps, {});
        auto const u = *g.find(topic("u"));
        auto const v = *g.find(kp("v"));
        auto const * s = g.edge_stats(u, v);
        REQUIRE(s != nullptr);
        CHECK(s->freq == 2);
        CHECK(s->mean_difficulty() == doctest::Approx(4.0).epsilon(1e-12));
    }

    TEST_CASE("edge weight formulas")
    {
        CHECK(std::abs(edge_weight({1, 0, 0}, cooc()) - std::log(2.0)) < 1e-9);
        CHECK(std::abs(edge_weight({1, 0, 0}, cooc()) - 0.6931) < 1e-4);
        GraphParams const da{WeightMode::DifficultyAware, 0.2, 1.0};
        EdgeStats const s{10, 30, 10};
        CHECK(std::abs(edge_weight(s, da) - std::log(5.4)) < 1e-9);
        CHECK(std::abs(edge_weight(s, da) - 1.6864) < 1e-4);
        // no labeled problem on the edge: diff = 0
        CHECK(std::abs(edge_weight({4, 0, 0}, da) - std::log(0.2 * 4 + 1.0)) < 1e-12);
    }

    TEST_CASE("alpha = 1 reproduces co-occurrence weights")
    {
        RandomSource rng(9);
        for (int i = 0; i < 1000; ++i) {
            auto const freq = 1 + rng.uniform_index(50);
            auto const count = rng.uniform_index(freq + 1);
            auto const sum = static_cast<std::int64_t>(count + rng.uniform_index(4 * count + 1));
            double const eps = 0.01 + rng.uniform_real() * 2;
            EdgeStats const s{freq, sum, count};
            CHECK(edge_weight(s, {WeightMode::DifficultyAware, 1.0, eps}) ==
                  edge_weight(s, {WeightMode::CoOccurrence, 0.2, eps}));
        }
    }

    TEST_CASE("parameter validation")
    {
        CHECK_THROWS_AS((GraphParams{WeightMode::DifficultyAware, 1.5, 1.0}.validate()), UsageError);
        CHECK_THROWS_AS((GraphParams{WeightMode::DifficultyAware, 0.2, 0.0}.validate()), UsageError);
        std::vector<Problem> none;
        CHECK_THROWS_AS(ConceptGraph::build(none, {}), FormatError);
    }

    TEST_CASE("transition distributions")
    {
        SUBCASE("equal weights")
        {
            auto const g = star({2, 2}, cooc());
            auto const t = transition_distribution(g, *g.find(topic("h")));
            REQUIRE(t.size() == 2);
            CHECK(std::abs(t[0].probability - 0.5) < 1e-12);
            CHECK(std::abs(t[1].probability - 0.5) < 1e-12);
        }
        SUBCASE("frequencies 1 and 3")
        {
            auto const g = star({1, 3}, cooc());
            auto const t = transition_distribution(g, *g.find(topic("h")));
            REQUIRE(t.size() == 2);
            CHECK(std::abs(t[0].probability - 2.0 / 6.0) < 1e-9);
            CHECK(std::abs(t[1].probability - 4.0 / 6.0) < 1e-9);
        }
        SUBCASE("single neighbor")
        {
            auto const g = star({5}, cooc());
            auto const t = transition_distribution(g, *g.find(topic("h")));
            REQUIRE(t.size() == 1);
            CHECK(t[0].probability == 1.0);
        }
    }

    TEST_CASE("transitions match a plain softmax and sum to one")
    {
        RandomSource rng(21);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<int> freqs;
            auto const n = 1 + rng.uniform_index(7);
            for (std::uint64_t i = 0; i < n; ++i) {
                freqs.push_back(static_cast<int>(1 + rng.uniform_index(9)));
            }
            auto const g = star(freqs, cooc(0.5));
            auto const h = *g.find(topic("h"));
            auto const t = transition_distribution(g, h);
            std::vector<double> w;
            for (auto const & x : t) {
                w.push_back(g.weight(h, x.node));
            }
            auto const expect = oracle::softmax(w);
            double total = 0;
            for (std::size_t i = 0; i < t.size(); ++i) {
                CHECK(std::abs(t[i].probability - expect[i]) < 1e-12);
                total += t[i].probability;
            }
            CHECK(std::abs(total - 1.0) < 1e-12);
        }
    }

    TEST_CASE("heavier edges are more likely")
    {
        auto const lo = star({1, 2}, cooc());
        auto const hi = star({1, 5}, cooc());
        auto const plo = transition_distribution(lo, *lo.find(topic("h")))[1].probability;
        auto const phi = transition_distribution(hi, *hi.find(topic("h")))[1].probability;
        CHECK(phi > plo);
        CHECK(hi.weight(*hi.find(topic("h")), *hi.find(kp("k1"))) > lo.weight(*lo.find(topic("h")), *lo.find(kp("k1"))));
    }

    TEST_CASE("weights are symmetric")
    {
        std::vector<Problem> ps = {problem("a", {"x", "y"}, {"z"}, 2), problem("b", {"x"}, {"z", "w"}, 4),
                                   problem("c", {"y"}, {"w"})};
        for (auto mode : {WeightMode::CoOccurrence, WeightMode::DifficultyAware}) {
            auto const g = ConceptGraph::build(ps, {mode, 0.2, 1.0});
            for (auto const & e : g.edges()) {
                CHECK(g.weight(e.u, e.v) == g.weight(e.v, e.u));
                CHECK(e.stats.freq >= 1);
                CHECK(e.stats.diff_count <= e.stats.freq);
            }
        }
    }

    TEST_CASE("isolated nodes have no transitions")
    {
        std::vector<Problem> ps = {problem("a", {"lonely"}, {}), problem("b", {"x"}, {"y"})};
        auto const g = ConceptGraph::build(ps, {});
        CHECK_THROWS_AS(transition_distribution(g, *g.find(topic("lonely"))), EmptyNeighborhoodError);
    }

    TEST_CASE("walks start on topics and follow edges")
    {
        std::vector<Problem> ps = {problem("a", {"x", "y"}, {"z"}, 2), problem("b", {"x"}, {"z", "w"}, 4),
                                   problem("c", {"y"}, {"w", "v"}), problem("d", {"lonely"}, {})};
        auto const g = ConceptGraph::build(ps, {});
        for (std::uint64_t i = 0; i < 500; ++i) {
            auto rng = RandomSource::for_item(99, i);
            auto const w = sample_walk(g, rng, 6);
            REQUIRE_FALSE(w.path.empty());
            CHECK(w.path.front() == w.start_topic);
            CHECK(w.start_topic.kind == ConceptKind::Topic);
            CHECK(w.path.size() <= 7);
            for (std::size_t k = 1; k < w.path.size(); ++k) {
                CHECK(g.edge_stats(*g.find(w.path[k - 1]), *g.find(w.path[k])) != nullptr);
            }
            CHECK(w.combination == ConceptCombination(w.path.begin(), w.path.end()));
            if (w.start_topic.name == "lonely") {
                CHECK(w.path.size() == 1);
            }
        }
    }

    TEST_CASE("walks are reproducible per seed")
    {
        std::vector<Problem> ps = {problem("a", {"x", "y"}, {"z"}), problem("b", {"x"}, {"z", "w"})};
        auto const g = ConceptGraph::build(ps, {});
        auto r1 = RandomSource::for_item(5, 3);
        auto r2 = RandomSource::for_item(5, 3);
        auto const a = sample_walk(g, r1);
        auto const b = sample_walk(g, r2);
        CHECK(a.path == b.path);
        auto r3 = RandomSource(1);
        auto const fixed = sample_walk(g, r3, 4, WalkLength::Fixed);
        CHECK(fixed.path.size() == 5);
        auto r4 = RandomSource(1);
        CHECK(sample_walk(g, r4, 0).path.size() == 1);
    }

    TEST_CASE("line graph transition from the middle node")
    {
        std::vector<Problem> ps = {problem("ab", {"a"}, {"b"}), problem("bc", {"c"}, {"b"})};
        auto const g = ConceptGraph::build(ps, cooc());
        auto const b = *g.find(kp("b"));
        RandomSource rng(17);
        int to_a = 0;
        int const n = 100000;
        for (int i = 0; i < n; ++i) {
            to_a += sample_next(g, b, rng) == *g.find(topic("a")) ? 1 : 0;
        }
        double const sigma = std::sqrt(n * 0.25);
        CHECK(std::abs(to_a - n / 2) < 3 * sigma);
    }

    TEST_CASE("serialization round trip")
    {
        std::vector<Problem> ps = {problem("a", {"x", "y"}, {"z"}, 2), problem("b", {"x"}, {"z", "w"}, 4),
                                   problem("c", {"y"}, {"w"})};
        auto const g = ConceptGraph::build(ps, {WeightMode::DifficultyAware, 0.3, 0.1});
        auto const text = serialize_graph(g);
        auto const back = deserialize_graph(text);
        CHECK(back == g);
        CHECK(serialize_graph(back) == text);
        CHECK(back.params().alpha == 0.3);
        CHECK(back.params().epsilon == 0.1);
    }

    TEST_CASE("corrupted graph files are rejected")
    {
        std::vector<Problem> ps = {problem("a", {"x", "y"}, {"z"}, 2), problem("b", {"x"}, {"z", "w"}, 4)};
        auto const text = serialize_graph(ConceptGraph::build(ps, {}));
        auto const edges_at = text.find("\nedges ");
        REQUIRE(edges_at != std::string::npos);
        auto const first_edge_end = text.find('\n', text.find('\n', edges_at + 1) + 1);
        auto const truncated = text.substr(0, first_edge_end + 1);
        CHECK_THROWS_WITH_AS(deserialize_graph(truncated), doctest::Contains("truncated edge section"), FormatError);

        auto flipped = text;
        flipped[text.find("nodes") + 8] ^= 1;
        CHECK_THROWS_AS(deserialize_graph(flipped), FormatError);

        auto version = text;
        version.replace(0, version.find('\n'), "quest-concept-graph 99");
        CHECK_THROWS_WITH_AS(deserialize_graph(version), doctest::Contains("version"), FormatError);
        CHECK_THROWS_AS(deserialize_graph("hello"), FormatError);
    }

    TEST_CASE("large graphs re-serialize byte-identically")
    {
        std::vector<Problem> ps;
        RandomSource rng(2);
        for (int i = 0; i < 400; ++i) {
            std::vector<std::string> kps;
            for (int k = 0; k < 12; ++k) {
                kps.push_back(fmt::format("k{}", rng.uniform_index(200)));
            }
            ps.push_back(problem(fmt::format("p{}", i), {fmt::format("t{}", rng.uniform_index(10))}, kps,
                                 static_cast<int>(1 + rng.uniform_index(5))));
        }
        auto const g = ConceptGraph::build(ps, {});
        CHECK(g.edges().size() >= 10000);
        auto const text = serialize_graph(g);
        CHECK(serialize_graph(deserialize_graph(text)) == text);
    }

    TEST_CASE("with_params keeps the structure")
    {
        std::vector<Problem> ps = {problem("a", {"x"}, {"z"}, 5), problem("b", {"x"}, {"z"}, 1)};
        auto const g = ConceptGraph::build(ps, cooc());
        auto const d = g.with_params({WeightMode::DifficultyAware, 0.5, 1.0});
        CHECK(d.edges() == g.edges());
        CHECK(std::abs(d.weight(0, 1) - std::log(0.5 * 2 + 0.5 * 3 + 1)) < 1e-12);
    }
}
