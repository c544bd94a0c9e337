#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quest/execution.hpp"
#include "quest/gateway.hpp"
#include "quest/io.hpp"
#include "quest/templates.hpp"

namespace quest {

/// One sampled candidate problem for a generation prompt.
struct GeneratedProblem
{
    std::string problem_id; // content hash of (prompt_id, candidate_index, statement)
    std::string prompt_id;
    std::string statement;
    int candidate_index = 0;

    static GeneratedProblem make(std::string prompt_id, int candidate_index, std::string statement);

    [[nodiscard]] json to_json() const;
    static GeneratedProblem from_json(json const & j);

    friend bool operator==(GeneratedProblem const &, GeneratedProblem const &) = default;
};

using OutputGrid = std::vector<std::vector<std::optional<std::string>>>;

struct MajorityVote
{
    std::vector<std::optional<std::string>> majority_outputs; // absent for all-None columns
    std::vector<int> majority_counts;                         // 0 for all-None columns
    double none_fraction = 0.0;                               // absent cells / (M * T)
};

/// Per column, the most frequent present output; ties go to the
/// lexicographically smallest output. None cells never win but count
/// toward none_fraction.
MajorityVote majority_vote(OutputGrid const & outputs);
MajorityVote majority_vote(ExecutionMatrix const & matrix);

/// delta = 1 - (1 / T) * sum_t counts[t] / M, with T = t_effective = counts.size().
double compute_delta(std::span<int const> majority_counts, int num_solutions, int t_effective);

struct DifficultyReport
{
    std::string problem_id;
    int num_tests = 0;     // T (effective)
    int num_solutions = 0; // M
    std::vector<std::optional<std::string>> majority_outputs;
    std::vector<int> majority_counts;
    double none_fraction = 0.0;
    bool valid = false;
    double delta = 0.0;
    std::string reason; // "ok", "none_fraction_exceeded", "no_test_inputs", ...

    [[nodiscard]] json to_json() const;
    static DifficultyReport from_json(json const & j);

    friend bool operator==(DifficultyReport const &, DifficultyReport const &) = default;
};

/// Vote, score and apply the validity filter (valid iff none_fraction <= threshold).
DifficultyReport score_matrix(ExecutionMatrix const & matrix, double none_threshold = 0.5);

/// Report for a problem that could not be scored.
DifficultyReport unusable_report(std::string problem_id, std::string reason);

/// Test inputs in ```input fences; plain ``` fences are used when none are tagged.
std::vector<std::string> parse_test_inputs(std::string_view response);

struct DifficultyOptions
{
    int num_tests = 20;    // T
    int num_solutions = 8; // M
    double none_threshold = 0.5;
    int input_retries = 3;
    RunLimits limits;
};

struct Assessment
{
    DifficultyReport report;
    std::optional<ExecutionMatrix> matrix;
};

class DifficultyEngine
{
public:
    DifficultyEngine(Gateway & gateway, ExecutionPool & pool, TemplateRegistry const & templates,
                     DifficultyOptions options = {});

    /// Up to T inputs. Under-delivery is re-prompted for the remainder up to
    /// input_retries times; duplicates are kept. Empty when nothing parses.
    std::vector<std::string> generate_test_inputs(GeneratedProblem const & problem);

    /// M completions with sample_index 0..M-1; failed completions become
    /// empty placeholders, which carry no code.
    std::vector<std::string> generate_solutions(GeneratedProblem const & problem);

    /// Inputs, solutions, execution matrix, vote, delta, validity.
    Assessment assess(GeneratedProblem const & problem);

    [[nodiscard]] DifficultyOptions const & options() const noexcept { return options_; }

private:
    Gateway & gateway_;
    ExecutionPool & pool_;
    TemplateRegistry const & templates_;
    DifficultyOptions options_;
};

} // namespace quest
