#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quest/difficulty.hpp"
#include "quest/execution.hpp"
#include "quest/gateway.hpp"
#include "quest/prompts.hpp"

namespace quest {

/// Problem statement after the last "New Problem:" marker of a generator
/// completion; absent when the marker is missing or nothing follows it.
std::optional<std::string> parse_generated_problem(std::string_view completion);

/// K completions of the prompt with sample_index 0..K-1. Unparseable
/// completions are dropped and duplicate statements keep the first
/// occurrence; candidate_index is the sample index.
std::vector<GeneratedProblem> sample_candidates(GenerationPrompt const & prompt, Gateway & gateway, int k = 8);

struct ScoredCandidate
{
    GeneratedProblem problem;
    DifficultyReport report;
};

struct CandidatePool
{
    GenerationPrompt prompt;
    std::vector<ScoredCandidate> candidates;
};

struct TrainingPair
{
    std::string prompt_text;
    std::string target_text;
    double delta = 0.0;
    std::string prompt_id;
    std::string problem_id;
    std::string run_id;

    /// {"prompt", "completion", "metadata": {delta, prompt_id, problem_id, run_id}}
    [[nodiscard]] json to_json() const;
    static TrainingPair from_json(json const & j);

    friend bool operator==(TrainingPair const &, TrainingPair const &) = default;
};

/// The valid candidate with the largest delta, ties to the lowest
/// candidate_index. Absent when no candidate is valid or the best delta is
/// below `min_delta`.
std::optional<TrainingPair> select_hardest(CandidatePool const & pool, std::string const & run_id,
                                           std::optional<double> min_delta = std::nullopt);

/// Keeps the first pair (in provenance order) for each exact target statement.
std::vector<TrainingPair> dedup_by_statement(std::vector<TrainingPair> pairs);

enum class Stratum
{
    Highest,       // delta descending
    Lowest,        // delta ascending
    MedianNearest, // |delta - 0.5| ascending
    Random,        // seeded uniform sample
};

std::string_view to_string(Stratum s) noexcept;
Stratum stratum_from_string(std::string_view s);

/// Problem ids of n reports from the requested stratum, ties broken by
/// ascending id. Random orders by a seeded hash of the id, which is a
/// uniform random permutation for distinct ids. n larger than the report
/// count returns every id with a warning.
std::vector<std::string> stratify_by_delta(std::span<DifficultyReport const> reports, std::size_t n, Stratum stratum,
                                           std::uint64_t seed = 0);

/// Key used by the Random stratum.
std::uint64_t random_stratum_key(std::uint64_t seed, std::string_view problem_id);

/// SFT records {"prompt", "completion", "metadata": {...}}, sorted by
/// (prompt_id, problem_id). Returns the number written.
std::size_t export_sft(std::span<TrainingPair const> pairs, fs::path const & path);
std::vector<TrainingPair> parse_sft(std::string_view text);

struct RlvrTest
{
    std::string input;
    std::string expected_output;

    friend bool operator==(RlvrTest const &, RlvrTest const &) = default;
};

struct RlvrRecord
{
    std::string problem_id;
    std::string statement;
    std::vector<RlvrTest> tests;

    friend bool operator==(RlvrRecord const &, RlvrRecord const &) = default;
};

struct RlvrSource
{
    GeneratedProblem problem;
    ExecutionMatrix matrix;
    DifficultyReport report;
};

/// Keeps the test inputs whose column has at most `column_none_threshold`
/// absent cells, labelled with the column's majority output. Problems with
/// invalid reports or no surviving tests are dropped. Sorted by problem_id.
std::vector<RlvrRecord> build_rlvr_records(std::span<RlvrSource const> sources, double column_none_threshold = 0.5);
std::size_t export_rlvr(std::span<RlvrSource const> sources, fs::path const & path,
                        double column_none_threshold = 0.5);
std::string render_rlvr(std::span<RlvrRecord const> records);
std::vector<RlvrRecord> parse_rlvr(std::string_view text);

/// Problem-only records {"problem_id", "statement"} for external teachers.
std::size_t export_distill(std::span<TrainingPair const> pairs, fs::path const & path);

} // namespace quest
