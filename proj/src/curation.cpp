#include "quest/curation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "quest/corpus.hpp"
#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"

namespace quest {

namespace {

std::string lower_ascii(std::string_view s)
{
    std::string out(s);
    for (auto & c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

/// If `line` is a "New Problem" marker, returns the text following it on the same line.
std::optional<std::string_view> marker_rest(std::string_view line)
{
    auto strip = [](std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '#' || s.front() == '*')) {
            s.remove_prefix(1);
        }
        return s;
    };
    auto const t = strip(line);
    constexpr std::string_view kMarker = "new problem";
    if (t.size() < kMarker.size() || lower_ascii(t.substr(0, kMarker.size())) != kMarker) {
        return std::nullopt;
    }
    auto rest = t.substr(kMarker.size());
    while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) {
        rest.remove_prefix(1);
    }
    if (rest.empty()) {
        return rest;
    }
    if (rest.front() != ':') {
        return std::nullopt;
    }
    rest.remove_prefix(1);
    while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) {
        rest.remove_prefix(1);
    }
    return rest;
}

std::vector<TrainingPair> sorted_by_provenance(std::span<TrainingPair const> pairs)
{
    std::vector<TrainingPair> out(pairs.begin(), pairs.end());
    std::sort(out.begin(), out.end(), [](TrainingPair const & a, TrainingPair const & b) {
        return std::tie(a.prompt_id, a.problem_id) < std::tie(b.prompt_id, b.problem_id);
    });
    return out;
}

} // namespace

json TrainingPair::to_json() const
{
    return json{{"prompt", prompt_text},
                {"completion", target_text},
                {"metadata", {{"delta", delta}, {"prompt_id", prompt_id}, {"problem_id", problem_id}, {"run_id", run_id}}}};
}

TrainingPair TrainingPair::from_json(json const & j)
{
    TrainingPair p;
    p.prompt_text = j.at("prompt").get<std::string>();
    p.target_text = j.at("completion").get<std::string>();
    auto const & meta = j.at("metadata");
    p.delta = meta.at("delta").get<double>();
    p.prompt_id = meta.at("prompt_id").get<std::string>();
    p.problem_id = meta.at("problem_id").get<std::string>();
    p.run_id = meta.at("run_id").get<std::string>();
    return p;
}

std::optional<std::string> parse_generated_problem(std::string_view completion)
{
    std::optional<std::size_t> body_start;
    std::string_view inline_rest;
    std::size_t pos = 0;
    while (pos <= completion.size()) {
        auto const nl = completion.find('\n', pos);
        auto const line =
            completion.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        auto const next = nl == std::string_view::npos ? completion.size() : nl + 1;
        if (auto rest = marker_rest(line)) {
            body_start = next;
            inline_rest = *rest;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = next;
    }
    if (!body_start) {
        return std::nullopt;
    }
    std::string body(inline_rest);
    if (*body_start < completion.size()) {
        if (!body.empty()) {
            body.push_back('\n');
        }
        body.append(completion.substr(*body_start));
    }
    auto statement = normalize_statement(body);
    if (statement.empty()) {
        return std::nullopt;
    }
    return statement;
}

std::vector<GeneratedProblem> sample_candidates(GenerationPrompt const & prompt, Gateway & gateway, int k)
{
    if (k < 2) {
        throw UsageError("K must be >= 2");
    }
    std::vector<CompletionRequest> reqs;
    for (int i = 0; i < k; ++i) {
        reqs.push_back(gateway.make_request(RoleTag::ProblemGen, prompt.rendered_text, i));
    }
    auto const results = gateway.complete_batch(reqs);
    std::vector<GeneratedProblem> out;
    std::unordered_set<std::string> seen;
    std::size_t dropped = 0;
    std::size_t duplicates = 0;
    for (int i = 0; i < k; ++i) {
        auto const & r = results[static_cast<std::size_t>(i)];
        auto statement = r.ok() ? parse_generated_problem(r.text) : std::nullopt;
        if (!statement) {
            ++dropped;
            continue;
        }
        if (!seen.insert(*statement).second) {
            ++duplicates;
            continue;
        }
        out.push_back(GeneratedProblem::make(prompt.prompt_id, i, std::move(*statement)));
    }
    if (dropped > 0) {
        log().warn("prompt {}: {} of {} candidates unparseable", prompt.prompt_id, dropped, k);
    }
    if (duplicates > 0) {
        log().info("prompt {}: {} duplicate candidates dropped", prompt.prompt_id, duplicates);
    }
    if (out.empty()) {
        log().warn("prompt {}: no parseable candidates, pool skipped", prompt.prompt_id);
    }
    return out;
}

std::optional<TrainingPair> select_hardest(CandidatePool const & pool, std::string const & run_id,
                                           std::optional<double> min_delta)
{
    ScoredCandidate const * best = nullptr;
    for (auto const & c : pool.candidates) {
        if (!c.report.valid) {
            continue;
        }
        if (!best || c.report.delta > best->report.delta
            || (c.report.delta == best->report.delta && c.problem.candidate_index < best->problem.candidate_index)) {
            best = &c;
        }
    }
    if (!best || (min_delta && best->report.delta < *min_delta)) {
        return std::nullopt;
    }
    return TrainingPair{pool.prompt.rendered_text, best->problem.statement, best->report.delta,
                        pool.prompt.prompt_id, best->problem.problem_id, run_id};
}

std::vector<TrainingPair> dedup_by_statement(std::vector<TrainingPair> pairs)
{
    auto sorted = sorted_by_provenance(pairs);
    std::unordered_set<std::string> seen;
    std::vector<TrainingPair> out;
    for (auto & p : sorted) {
        if (seen.insert(p.target_text).second) {
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::string_view to_string(Stratum s) noexcept
{
    switch (s) {
    case Stratum::Highest: return "highest";
    case Stratum::Lowest: return "lowest";
    case Stratum::MedianNearest: return "median";
    case Stratum::Random: return "random";
    }
    return "random";
}

Stratum stratum_from_string(std::string_view s)
{
    for (auto st : {Stratum::Highest, Stratum::Lowest, Stratum::MedianNearest, Stratum::Random}) {
        if (to_string(st) == s) {
            return st;
        }
    }
    throw UsageError(fmt::format("unknown stratum '{}' (expected highest, lowest, median or random)", s));
}

std::uint64_t random_stratum_key(std::uint64_t seed, std::string_view problem_id)
{
    return mix64(seed ^ hash64(problem_id));
}

std::vector<std::string> stratify_by_delta(std::span<DifficultyReport const> reports, std::size_t n, Stratum stratum,
                                           std::uint64_t seed)
{
    if (n > reports.size()) {
        log().warn("stratum {}: requested {} of {} reports, returning all", to_string(stratum), n, reports.size());
        n = reports.size();
    }
    struct Keyed
    {
        double key;
        std::uint64_t random_key;
        std::string const * id;
    };
    std::vector<Keyed> items;
    items.reserve(reports.size());
    for (auto const & r : reports) {
        Keyed k{0.0, 0, &r.problem_id};
        switch (stratum) {
        case Stratum::Highest: k.key = -r.delta; break;
        case Stratum::Lowest: k.key = r.delta; break;
        case Stratum::MedianNearest: k.key = std::abs(r.delta - 0.5); break;
        case Stratum::Random: k.random_key = random_stratum_key(seed, r.problem_id); break;
        }
        items.push_back(k);
    }
    auto const less = [](Keyed const & a, Keyed const & b) {
        if (a.key != b.key) {
            return a.key < b.key;
        }
        if (a.random_key != b.random_key) {
            return a.random_key < b.random_key;
        }
        return *a.id < *b.id;
    };
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(), less);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(*items[i].id);
    }
    return out;
}

std::size_t export_sft(std::span<TrainingPair const> pairs, fs::path const & path)
{
    if (pairs.empty()) {
        log().warn("SFT export {}: no training pairs", path.string());
    }
    std::vector<json> records;
    for (auto const & p : sorted_by_provenance(pairs)) {
        records.push_back(p.to_json());
    }
    write_jsonl_atomic(path, records);
    return records.size();
}

std::vector<TrainingPair> parse_sft(std::string_view text)
{
    std::vector<TrainingPair> out;
    for (auto const & j : parse_jsonl(text)) {
        out.push_back(TrainingPair::from_json(j));
    }
    return out;
}

std::vector<RlvrRecord> build_rlvr_records(std::span<RlvrSource const> sources, double column_none_threshold)
{
    std::vector<RlvrRecord> out;
    for (auto const & src : sources) {
        if (!src.report.valid) {
            log().debug("RLVR: skipping invalid problem {}", src.problem.problem_id);
            continue;
        }
        auto const rows = src.matrix.num_solutions();
        RlvrRecord rec{src.problem.problem_id, src.problem.statement, {}};
        for (std::size_t t = 0; t < src.matrix.num_inputs(); ++t) {
            std::size_t absent = 0;
            for (std::size_t m = 0; m < rows; ++m) {
                if (!src.matrix.outputs[m][t]) {
                    ++absent;
                }
            }
            double const frac = static_cast<double>(absent) / static_cast<double>(rows);
            auto const & label = src.report.majority_outputs.at(t);
            if (frac <= column_none_threshold && label) {
                rec.tests.push_back({src.matrix.inputs[t], *label});
            }
        }
        if (!rec.tests.empty()) {
            out.push_back(std::move(rec));
        }
    }
    std::sort(out.begin(), out.end(), [](auto const & a, auto const & b) { return a.problem_id < b.problem_id; });
    return out;
}

std::string render_rlvr(std::span<RlvrRecord const> records)
{
    std::vector<json> lines;
    for (auto const & r : records) {
        json tests = json::array();
        for (auto const & t : r.tests) {
            tests.push_back(json{{"input", t.input}, {"expected_output", t.expected_output}});
        }
        lines.push_back(json{{"problem_id", r.problem_id}, {"statement", r.statement}, {"tests", tests}});
    }
    return to_jsonl(lines);
}

std::size_t export_rlvr(std::span<RlvrSource const> sources, fs::path const & path, double column_none_threshold)
{
    auto const records = build_rlvr_records(sources, column_none_threshold);
    write_file_atomic(path, render_rlvr(records));
    return records.size();
}

std::vector<RlvrRecord> parse_rlvr(std::string_view text)
{
    std::vector<RlvrRecord> out;
    for (auto const & j : parse_jsonl(text)) {
        RlvrRecord r;
        r.problem_id = j.at("problem_id").get<std::string>();
        r.statement = j.at("statement").get<std::string>();
        for (auto const & t : j.at("tests")) {
            r.tests.push_back({t.at("input").get<std::string>(), t.at("expected_output").get<std::string>()});
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::size_t export_distill(std::span<TrainingPair const> pairs, fs::path const & path)
{
    std::vector<json> records;
    for (auto const & p : sorted_by_provenance(pairs)) {
        records.push_back(json{{"problem_id", p.problem_id}, {"statement", p.target_text}});
    }
    write_jsonl_atomic(path, records);
    return records.size();
}

} // namespace quest
