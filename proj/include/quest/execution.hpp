#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "quest/io.hpp"
#include "quest/parallel.hpp"

namespace quest {

/// Normalized program output: LF line endings, trailing whitespace removed
/// from every line, trailing blank lines removed. Idempotent.
std::string normalize_output(std::string_view raw);

/// Last fenced code block of a model response. Without fences the whole
/// response is returned if it looks like source code. Absent otherwise.
std::optional<std::string> extract_code(std::string_view response);

struct RunLimits
{
    double time_limit = 10.0;                     // seconds, wall clock
    std::uint64_t memory_limit = 512ULL << 20;    // bytes

    friend bool operator==(RunLimits const &, RunLimits const &) = default;
};

enum class RunStatus
{
    Ok,
    Timeout,
    RuntimeError,
    MemoryExceeded,
    NoOutput,
};

std::string_view to_string(RunStatus s) noexcept;
RunStatus run_status_from_string(std::string_view s);

struct RunRequest
{
    std::string program_source;
    std::string input_text;
    RunLimits limits;
};

/// stdout_normalized is present exactly when status == Ok.
struct RunResult
{
    RunStatus status = RunStatus::RuntimeError;
    std::optional<std::string> stdout_normalized;
    std::string stderr_excerpt;
    double wall_time = 0.0;
};

inline constexpr std::string_view kRunnerProtocol = "quest-runner/1";

/// Runner wire protocol: one JSON document per process, newline-terminated,
/// keys sorted, no insignificant whitespace. See docs/FORMATS.md.
std::string encode_run_request(RunRequest const & req);
RunRequest decode_run_request(std::string_view text);
std::string encode_run_result(RunResult const & res);
RunResult decode_run_result(std::string_view text);

/// Runner-internal fault (crash, protocol violation, hang past the hard
/// deadline). The affected cell is recorded as absent.
class RunnerFault : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class Runner
{
public:
    virtual ~Runner() = default;
    /// Throws RunnerFault on runner-internal failures.
    virtual RunResult run(RunRequest const & req) = 0;
};

/// Spawns `argv` once per request, writes the request on stdin and reads
/// the result from stdout. The process is killed if it outlives
/// time_limit + `overhead`.
class ProcessRunner : public Runner
{
public:
    /// Throws RunnerError if argv[0] cannot be found or executed.
    explicit ProcessRunner(std::vector<std::string> argv,
                           std::chrono::milliseconds overhead = std::chrono::milliseconds(5000));

    RunResult run(RunRequest const & req) override;

    [[nodiscard]] std::vector<std::string> const & argv() const noexcept { return argv_; }

private:
    std::vector<std::string> argv_;
    std::chrono::milliseconds overhead_;
};

/// In-process runner for tests.
class FunctionRunner : public Runner
{
public:
    explicit FunctionRunner(std::function<RunResult(RunRequest const &)> fn) : fn_(std::move(fn)) {}
    RunResult run(RunRequest const & req) override { return fn_(req); }

private:
    std::function<RunResult(RunRequest const &)> fn_;
};

/// M x T grid; outputs[m][t] is solutions[m] run on inputs[t], absent when
/// the code is missing or the run did not finish Ok.
struct ExecutionMatrix
{
    std::string problem_id;
    std::vector<std::string> inputs;
    std::vector<std::optional<std::string>> solutions;
    std::vector<std::vector<std::optional<std::string>>> outputs;

    [[nodiscard]] std::size_t num_solutions() const noexcept { return solutions.size(); }
    [[nodiscard]] std::size_t num_inputs() const noexcept { return inputs.size(); }

    [[nodiscard]] json to_json() const;
    static ExecutionMatrix from_json(json const & j);

    friend bool operator==(ExecutionMatrix const &, ExecutionMatrix const &) = default;
};

enum class Schedule
{
    Sequential, // cells dispatched in (m, t) order
    Shuffled,   // cells dispatched in a seeded random order
};

struct PoolOptions
{
    std::size_t pool_size = 0; // 0 = logical CPU count
    bool cache = true;
};

struct PoolStats
{
    std::uint64_t runs = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t faults = 0;
    std::size_t peak_concurrency = 0;
};

/// Bounded fan-out of (solution, input) cells across a runner. Thread-safe;
/// concurrent execute_matrix calls share the same bound.
class ExecutionPool
{
public:
    ExecutionPool(std::shared_ptr<Runner> runner, PoolOptions options = {});

    /// Blocks until all cells resolve. Aggregation is by (m, t) index, so the
    /// grid does not depend on the schedule. Requires at least one solution
    /// and one input.
    ExecutionMatrix execute_matrix(std::string problem_id, std::vector<std::optional<std::string>> solutions,
                                   std::vector<std::string> inputs, RunLimits const & limits,
                                   Schedule schedule = Schedule::Sequential, std::uint64_t schedule_seed = 0);

    [[nodiscard]] std::size_t pool_size() const noexcept { return limiter_.limit(); }
    [[nodiscard]] PoolStats stats() const;

private:
    std::optional<std::string> run_cell(std::string const & program, std::string const & input,
                                        RunLimits const & limits);

    std::shared_ptr<Runner> runner_;
    bool cache_enabled_;
    ConcurrencyLimiter limiter_;
    mutable std::mutex cache_mutex_;
    std::unordered_map<std::string, std::optional<std::string>> cache_;
    std::atomic<std::uint64_t> runs_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> faults_{0};
};

} // namespace quest
