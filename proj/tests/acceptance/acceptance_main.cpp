#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "e2e.hpp"
#include "oracles.hpp"
#include "quest/concept_graph.hpp"
#include "quest/curation.hpp"
#include "quest/decontamination.hpp"
#include "quest/difficulty.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"
#include "quest/random.hpp"

using namespace quest;

namespace {

enum class Verdict
{
    Pass,
    Fail,
    Skip,
};

struct Outcome
{
    Verdict verdict = Verdict::Pass;
    std::string detail;
};

Outcome pass(std::string detail = {}) { return {Verdict::Pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Verdict::Fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Verdict::Skip, std::move(detail)}; }

struct Criterion
{
    std::string name;
    double time_limit_s;
    std::function<Outcome()> check;
};

using Cell = std::optional<std::string>;

OutputGrid random_grid(RandomSource & rng, std::size_t m, std::size_t t, double none_p, std::uint64_t alphabet)
{
    OutputGrid g(m, std::vector<Cell>(t));
    for (auto & row : g) {
        for (auto & c : row) {
            if (rng.uniform_real() >= none_p) {
                c = std::to_string(rng.uniform_index(alphabet));
            }
        }
    }
    return g;
}

ExecutionMatrix matrix_of(OutputGrid g)
{
    ExecutionMatrix m;
    m.problem_id = "p";
    m.inputs.assign(g.empty() ? 0 : g.front().size(), "in");
    m.solutions.assign(g.size(), "code");
    m.outputs = std::move(g);
    return m;
}

template <typename T>
void shuffle(std::vector<T> & v, RandomSource & rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.uniform_index(i)]);
    }
}

bool near(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x)
{
    if (x <= 0.0) {
        return 1.0;
    }
    double const lg = std::lgamma(a);
    if (x < a + 1.0) {
        double sum = 1.0 / a;
        double term = sum;
        for (int n = 1; n < 1000; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) {
                break;
            }
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    double b = x + 1.0 - a;
    double c = 1.0 / 1e-300;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000; ++i) {
        double const an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        d = std::abs(d) < 1e-300 ? 1e-300 : d;
        c = b + an / c;
        c = std::abs(c) < 1e-300 ? 1e-300 : c;
        d = 1.0 / d;
        double const del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) {
            break;
        }
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

Problem labeled(std::string id, std::vector<std::string> const & topics, std::optional<int> label)
{
    Problem p;
    p.id = std::move(id);
    p.statement = "statement " + p.id;
    p.difficulty_label = label;
    ConceptSet s;
    for (auto const & t : topics) {
        s.add(ConceptKind::Topic, t);
    }
    p.concepts = s;
    return p;
}

std::string words(RandomSource & rng, std::size_t n, std::string const & prefix)
{
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        out += fmt::format("{}{}{}", i ? " " : "", prefix, rng.uniform_index(5000));
    }
    return out;
}

DifficultyReport report(std::string id, double delta, bool valid)
{
    DifficultyReport r;
    r.problem_id = std::move(id);
    r.delta = delta;
    r.valid = valid;
    return r;
}

// ---------------------------------------------------------------------------

Outcome formula_conformance()
{
    std::vector<std::string> bad;
    GraphParams const cooc{WeightMode::CoOccurrence, 0.2, 1.0};
    GraphParams const aware{WeightMode::DifficultyAware, 0.2, 1.0};
    if (!near(edge_weight({1, 0, 0}, cooc), std::log(2.0))) {
        bad.push_back("co-occurrence weight");
    }
    if (!near(edge_weight({10, 30, 10}, aware), std::log(5.4))) {
        bad.push_back("difficulty-aware weight");
    }
    {
        std::vector<Problem> ps = {labeled("p0", {"h", "a"}, std::nullopt)};
        for (int i = 1; i <= 3; ++i) {
            ps.push_back(labeled(fmt::format("p{}", i), {"h", "b"}, std::nullopt));
        }
        auto const g = ConceptGraph::build(ps, cooc);
        auto const t = transition_distribution(g, *g.find(Concept::make(ConceptKind::Topic, "h")));
        if (t.size() != 2 || !near(t[0].probability, 2.0 / 6.0) || !near(t[1].probability, 4.0 / 6.0)) {
            bad.push_back("transition softmax");
        }
        std::vector<Problem> eq = {labeled("x", {"m", "l"}, std::nullopt), labeled("y", {"m", "r"}, std::nullopt)};
        auto const ge = ConceptGraph::build(eq, cooc);
        auto const te = transition_distribution(ge, *ge.find(Concept::make(ConceptKind::Topic, "m")));
        if (!near(te[0].probability, 0.5) || !near(te[1].probability, 0.5)) {
            bad.push_back("equal-weight softmax");
        }
    }
    std::vector<int> const counts{4, 2};
    if (!near(compute_delta(counts, 4, 2), 0.25)) {
        bad.push_back("delta");
    }
    std::vector<Problem> ps = {labeled("a", {"u", "v"}, 3), labeled("b", {"u", "v"}, 5)};
    auto const g = ConceptGraph::build(ps, aware);
    auto const * s = g.edge_stats(0, 1);
    if (!s || s->freq != 2 || !near(s->mean_difficulty(), 4.0)) {
        bad.push_back("edge statistics");
    }
    if (!bad.empty()) {
        return fail(fmt::format("{}", fmt::join(bad, ", ")));
    }
    return pass("weights, softmax, delta, edge statistics");
}

Outcome delta_oracle()
{
    RandomSource rng(7001);
    std::size_t mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        auto const m = 1 + rng.uniform_index(8);
        auto const t = 1 + rng.uniform_index(20);
        auto const grid = random_grid(rng, m, t, rng.uniform_real() * 0.6, 1 + rng.uniform_index(4));
        auto const vote = majority_vote(grid);
        auto const d = compute_delta(vote.majority_counts, static_cast<int>(m), static_cast<int>(t));
        bool ok = d == oracle::delta(grid) && vote.none_fraction == oracle::none_fraction(grid);
        for (std::size_t c = 0; c < t && ok; ++c) {
            auto const col = oracle::column_majority(grid, c);
            ok = vote.majority_outputs[c] == col.majority && vote.majority_counts[c] == col.count;
        }
        mismatches += ok ? 0 : 1;
    }
    return mismatches ? fail(fmt::format("{} of 10000 matrices differ", mismatches)) : pass("10000 matrices");
}

Outcome delta_boundaries()
{
    OutputGrid consensus(8, std::vector<Cell>(20, Cell("42")));
    if (score_matrix(matrix_of(consensus)).delta != 0.0) {
        return fail("consensus delta != 0");
    }
    OutputGrid distinct(8, std::vector<Cell>(20));
    for (int m = 0; m < 8; ++m) {
        for (int t = 0; t < 20; ++t) {
            distinct[m][t] = std::to_string(m);
        }
    }
    if (score_matrix(matrix_of(distinct)).delta != 0.875) {
        return fail("all-distinct delta != 0.875");
    }
    RandomSource rng(7002);
    for (int i = 0; i < 1000; ++i) {
        auto const m = 2 + rng.uniform_index(7);
        auto const t = 1 + rng.uniform_index(20);
        auto grid = random_grid(rng, m, t, 0.2, 3);
        auto const base = score_matrix(matrix_of(grid)).delta;
        shuffle(grid, rng);
        std::vector<std::size_t> perm(t);
        std::iota(perm.begin(), perm.end(), 0);
        shuffle(perm, rng);
        OutputGrid moved(m, std::vector<Cell>(t));
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < t; ++c) {
                moved[r][c] = grid[r][perm[c]];
            }
        }
        if (std::abs(score_matrix(matrix_of(moved)).delta - base) > 1e-12) {
            return fail(fmt::format("permutation {} changed delta", i));
        }
    }
    return pass("consensus 0, all-distinct 0.875, 1000 permutations");
}

Outcome alpha_degeneration()
{
    RandomSource rng(7003);
    for (int i = 0; i < 1000; ++i) {
        EdgeStats s;
        s.freq = 1 + rng.uniform_index(1000);
        s.diff_count = rng.uniform_index(s.freq + 1);
        s.diff_sum = static_cast<std::int64_t>(s.diff_count * rng.uniform_index(6));
        double const eps = 0.01 + rng.uniform_real() * 2.0;
        auto const a = edge_weight(s, {WeightMode::DifficultyAware, 1.0, eps});
        auto const b = edge_weight(s, {WeightMode::CoOccurrence, 0.2, eps});
        if (a != b || b != oracle::cooccurrence_weight(static_cast<double>(s.freq), eps)) {
            return fail(fmt::format("edge {} differs: {} vs {}", i, a, b));
        }
    }
    return pass("1000 edges");
}

Outcome walk_statistics()
{
    std::map<std::pair<int, int>, int> const freqs = {{{0, 1}, 1}, {{0, 2}, 3}, {{0, 3}, 2}, {{1, 2}, 5},
                                                      {{1, 4}, 1}, {{2, 3}, 2}, {{2, 4}, 4}, {{3, 4}, 7}};
    std::vector<Problem> ps;
    int id = 0;
    for (auto const & [e, f] : freqs) {
        for (int k = 0; k < f; ++k) {
            std::optional<int> label = (id % 3 == 0) ? std::nullopt : std::optional<int>(1 + id % 5);
            ps.push_back(labeled(fmt::format("p{:03d}", id++), {fmt::format("n{}", e.first), fmt::format("n{}", e.second)},
                                 label));
        }
    }
    auto const g = ConceptGraph::build(ps, {});
    if (g.nodes().size() != 5) {
        return fail("graph does not have 5 nodes");
    }
    constexpr int kDraws = 100000;
    double min_p = 1.0;
    for (NodeId u = 0; u < 5; ++u) {
        auto const dist = transition_distribution(g, u);
        std::map<NodeId, int> hits;
        RandomSource rng(RandomSource::for_item(7004, u));
        for (int i = 0; i < kDraws; ++i) {
            ++hits[sample_next(g, u, rng)];
        }
        double chi2 = 0.0;
        for (auto const & t : dist) {
            double const expected = t.probability * kDraws;
            double const diff = hits[t.node] - expected;
            chi2 += diff * diff / expected;
        }
        double const p = gamma_q(static_cast<double>(dist.size() - 1) / 2.0, chi2 / 2.0);
        min_p = std::min(min_p, p);
        if (hits.size() != dist.size()) {
            return fail(fmt::format("node {} reached a non-neighbor", u));
        }
    }
    if (min_p <= 0.01) {
        return fail(fmt::format("min p-value {:.4f}", min_p));
    }
    return pass(fmt::format("5 nodes x {} draws, min p = {:.3f}", kDraws, min_p));
}

Outcome rejection_selection()
{
    RandomSource rng(7005);
    for (int i = 0; i < 1000; ++i) {
        CandidatePool pool;
        pool.prompt.prompt_id = fmt::format("prompt{}", i);
        auto const k = 1 + rng.uniform_index(8);
        std::vector<std::tuple<double, int, std::string>> valid;
        for (std::uint64_t c = 0; c < k; ++c) {
            auto p = GeneratedProblem::make(pool.prompt.prompt_id, static_cast<int>(c), fmt::format("s{}-{}", i, c));
            double const d = static_cast<double>(rng.uniform_index(6)) / 8.0;
            bool const v = rng.uniform_index(5) != 0;
            pool.candidates.push_back({p, report(p.problem_id, d, v)});
            if (v) {
                valid.emplace_back(-d, static_cast<int>(c), p.statement);
            }
        }
        shuffle(pool.candidates, rng);
        std::sort(valid.begin(), valid.end());
        auto const got = select_hardest(pool, "run");
        if (got.has_value() != !valid.empty() || (got && got->target_text != std::get<2>(valid.front()))) {
            return fail(fmt::format("pool {} disagrees with the sort oracle", i));
        }
    }
    return pass("1000 pools");
}

Outcome stratification()
{
    RandomSource rng(7006);
    std::vector<DifficultyReport> reports;
    for (int i = 0; i < 1000; ++i) {
        reports.push_back(report(fmt::format("r{:04d}", rng.uniform_index(100000)) + std::to_string(i),
                                 static_cast<double>(rng.uniform_index(17)) / 16.0, true));
    }
    auto ids_sorted_by = [&](auto key) {
        auto copy = reports;
        std::stable_sort(copy.begin(), copy.end(), [&](auto const & a, auto const & b) {
            auto const ka = key(a);
            auto const kb = key(b);
            return ka != kb ? ka < kb : a.problem_id < b.problem_id;
        });
        std::vector<std::string> ids;
        for (auto const & r : copy) {
            ids.push_back(r.problem_id);
        }
        return ids;
    };
    std::uint64_t const seed = 99;
    std::map<Stratum, std::vector<std::string>> const expected = {
        {Stratum::Highest, ids_sorted_by([](auto const & r) { return -r.delta; })},
        {Stratum::Lowest, ids_sorted_by([](auto const & r) { return r.delta; })},
        {Stratum::MedianNearest, ids_sorted_by([](auto const & r) { return std::abs(r.delta - 0.5); })},
        {Stratum::Random, ids_sorted_by([&](auto const & r) { return mix64(seed ^ hash64(r.problem_id)); })},
    };
    for (std::size_t n : {1, 10, 137, 500, 1000}) {
        for (auto const & [s, ids] : expected) {
            auto const got = stratify_by_delta(reports, n, s, seed);
            if (!std::equal(got.begin(), got.end(), ids.begin()) || got.size() != n) {
                return fail(fmt::format("stratum {} n={} differs", to_string(s), n));
            }
        }
    }
    return pass("4 strata x 5 sizes over 1000 reports");
}

Outcome validity_filter()
{
    // 4 x 5 grid: 10 absent cells is exactly half
    OutputGrid g(4, std::vector<Cell>(5, Cell("1")));
    int absent = 0;
    for (auto & row : g) {
        for (auto & c : row) {
            if (absent < 10) {
                c.reset();
                ++absent;
            }
        }
    }
    auto const at = score_matrix(matrix_of(g));
    g[3][4].reset();
    auto const over = score_matrix(matrix_of(g));
    if (at.none_fraction != 0.5 || !at.valid) {
        return fail("none_fraction 0.5 is not valid");
    }
    if (over.valid) {
        return fail("0.5 + one cell is still valid");
    }
    OutputGrid sixty(5, std::vector<Cell>(2, Cell("x")));
    for (int m = 0; m < 3; ++m) {
        sixty[m][0].reset();
        sixty[m][1].reset();
    }
    if (score_matrix(matrix_of(sixty)).valid) {
        return fail("60% absent is valid");
    }
    return pass("0.5 valid, 0.55 invalid, 0.6 invalid");
}

Outcome end_to_end()
{
    qt::TempDir dir;
    auto const first = dir / "first";
    auto const second = dir / "second";
    for (auto const & run : {first, second}) {
        Pipeline p(qt::e2e_config(), run);
        p.run_all();
    }
    auto const mismatches = qt::golden_mismatches(first);
    if (!mismatches.empty()) {
        return fail(fmt::format("golden mismatch: {}", fmt::join(mismatches, ", ")));
    }
    std::vector<std::string> compared = {"d_hard.jsonl", "rlvr.jsonl", "sft.jsonl", "manifest.json"};
    for (auto const & n : compared) {
        if (read_file(first / n) != read_file(second / n)) {
            return fail(fmt::format("second run differs in {}", n));
        }
    }
    for (auto const boundary : kStages) {
        auto const run = dir / fmt::format("crash-{}", to_string(boundary));
        try {
            PipelineOptions opts;
            opts.before_commit = [boundary](Stage s) {
                if (s == boundary) {
                    throw std::runtime_error("simulated crash");
                }
            };
            Pipeline p(qt::e2e_config(), run, opts);
            p.run_all();
            return fail(fmt::format("crash hook at {} did not fire", to_string(boundary)));
        } catch (std::runtime_error const & e) {
            if (std::string_view(e.what()) != "simulated crash") {
                throw;
            }
        }
        {
            Pipeline p(qt::e2e_config(), run);
            p.run_all();
        }
        for (auto const & n : compared) {
            if (read_file(run / n) != read_file(first / n)) {
                return fail(fmt::format("resume after crash at {} differs in {}", to_string(boundary), n));
            }
        }
    }
    auto const d_hard = parse_sft(read_file(first / "d_hard.jsonl"));
    auto const rlvr = parse_rlvr(read_file(first / "rlvr.jsonl"));
    return pass(fmt::format("{} D_hard pairs, {} RLVR problems, 2 runs + 8 crash-resumes", d_hard.size(), rlvr.size()));
}

Outcome decontamination()
{
    RandomSource rng(7007);
    auto const original = words(rng, 150, "b");
    std::vector<Document> gen = {{"dup", original}};
    auto const span = words(rng, 60, "s");
    auto const a = words(rng, 70, "g") + " " + span + " " + words(rng, 25, "g");
    auto const b = words(rng, 30, "h") + " " + span + " " + words(rng, 90, "h");
    gen.push_back({"span", a});
    std::vector<BenchmarkCorpus> corpora = {{"bench", {{"orig", original}, {"other", b}}}};
    auto const rep = scan(gen, corpora);
    if (rep.per_doc[0].score != 1.0 || rep.flagged.empty() || rep.flagged.front().doc_id != "dup") {
        return fail("planted duplicate not flagged at 1.0");
    }
    auto const want = oracle::shingle_jaccard(a, b, 50);
    if (!near(rep.per_doc[1].score, want, 1e-12) || want <= 0.0) {
        return fail(fmt::format("60-token span scored {} vs oracle {}", rep.per_doc[1].score, want));
    }

    auto const clean_bench = load_documents(qt::fixture_dir() / "e2e" / "benchmark_clean.jsonl");
    auto const corpus = load_documents(qt::fixture_dir() / "e2e" / "corpus.jsonl");
    std::vector<BenchmarkCorpus> clean = {{"benchmark_clean", clean_bench}};
    auto const clean_rep = scan(corpus, clean);
    if (clean_rep.global_max != 0.0) {
        return fail(fmt::format("clean fixture global max {}", clean_rep.global_max));
    }

    std::vector<Document> big_gen;
    std::vector<Document> big_bench;
    for (int i = 0; i < 1000; ++i) {
        big_gen.push_back({fmt::format("g{}", i), words(rng, 200, "w")});
        big_bench.push_back({fmt::format("b{}", i), words(rng, 200, "w")});
    }
    big_gen[17].text += " " + big_bench[500].text;
    std::vector<BenchmarkCorpus> big = {{"big", big_bench}};
    auto const t0 = std::chrono::steady_clock::now();
    auto const big_rep = scan(big_gen, big);
    auto const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (big_rep.per_doc[17].benchmark_doc != "b500" || big_rep.per_doc[17].score <= 0.0) {
        return fail("planted document in the 1000-doc corpus not found");
    }
    return pass(fmt::format("duplicate 1.0, span {:.4f}, clean 0, 1000x1000 docs in {:.2f} s", want, secs));
}

Outcome live_smoke()
{
    char const * key = std::getenv("OPENAI_API_KEY");
    if (!key || !*key) {
        return skip("OPENAI_API_KEY not set");
    }
    char const * runner = std::getenv("QUEST_LIVE_RUNNER");
    if (!runner || !*runner) {
        return skip("QUEST_LIVE_RUNNER not set");
    }
    auto config = qt::e2e_config();
    BackendSpec spec;
    spec.kind = "openai";
    char const * endpoint = std::getenv("QUEST_LIVE_ENDPOINT");
    spec.endpoint = endpoint && *endpoint ? endpoint : "https://api.openai.com/v1/chat/completions";
    char const * model = std::getenv("QUEST_LIVE_MODEL");
    spec.model = model && *model ? model : "gpt-4o-mini";
    config.backends = {{"default", spec}};
    config.num_prompts = 20;
    config.num_candidates = 8;
    config.retry.initial_delay = std::chrono::milliseconds(1000);
    std::istringstream words_in(runner);
    config.runner_command.clear();
    for (std::string w; words_in >> w;) {
        config.runner_command.push_back(w);
    }
    qt::TempDir dir;
    Pipeline p(config, dir / "live");
    p.run_all(Stage::Export);
    std::size_t valid = 0;
    double const cap = 1.0 - 1.0 / config.num_solutions;
    for (auto const & j : parse_jsonl(read_file(dir / "live" / "reports.jsonl"))) {
        auto const r = DifficultyReport::from_json(j);
        bool const answered = std::find(r.majority_counts.begin(), r.majority_counts.end(), 0) == r.majority_counts.end();
        double const hi = answered ? cap : 1.0;
        if (r.delta < 0.0 || r.delta > hi + 1e-12) {
            return fail(fmt::format("delta {} outside [0, {}]", r.delta, hi));
        }
        valid += r.valid ? 1 : 0;
    }
    if (valid == 0) {
        return fail("no valid candidate");
    }
    auto const pairs = parse_sft(read_file(dir / "live" / "sft.jsonl"));
    auto const rlvr = parse_rlvr(read_file(dir / "live" / "rlvr.jsonl"));
    return pass(fmt::format("{} valid candidates, {} pairs, {} RLVR problems", valid, pairs.size(), rlvr.size()));
}

} // namespace

int main()
{
    set_log_level("off");
    std::vector<Criterion> const criteria = {
        {"formula conformance", 1.0, formula_conformance},
        {"delta oracle equivalence", 30.0, delta_oracle},
        {"delta boundary properties", 10.0, delta_boundaries},
        {"alpha=1 weight degeneration", 1.0, alpha_degeneration},
        {"random-walk transition statistics", 30.0, walk_statistics},
        {"rejection selection", 5.0, rejection_selection},
        {"stratification oracle", 5.0, stratification},
        {"validity filter boundary", 1.0, validity_filter},
        {"end-to-end determinism", 300.0, end_to_end},
        {"decontamination", 60.0, decontamination},
        {"live smoke", 3600.0, live_smoke},
    };
    int failures = 0;
    for (auto const & c : criteria) {
        auto const t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.check();
        } catch (std::exception const & e) {
            out = fail(std::string("exception: ") + e.what());
        }
        auto const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (out.verdict == Verdict::Pass && secs > c.time_limit_s) {
            out = fail(fmt::format("{} (over the {:.0f} s limit)", out.detail, c.time_limit_s));
        }
        char const * tag = out.verdict == Verdict::Pass ? "PASS" : out.verdict == Verdict::Fail ? "FAIL" : "SKIP";
        std::cout << fmt::format("{} {:<36} {:>8.3f} s  {}", tag, c.name, secs, out.detail) << std::endl;
        failures += out.verdict == Verdict::Fail ? 1 : 0;
    }
    std::cout << (failures ? fmt::format("{} criteria failed", failures) : std::string("all criteria passed"))
              << std::endl;
    return failures ? 1 : 0;
}
