#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quest/concept_graph.hpp"
#include "quest/execution.hpp"
#include "quest/gateway.hpp"
#include "quest/io.hpp"

namespace quest {

/// One model endpoint. kind is "mock" (scripted, `script` file) or
/// "openai" (chat completions at `endpoint`, key read from `api_key_env`).
struct BackendSpec
{
    std::string kind = "mock";
    fs::path script;
    std::string endpoint;
    std::string model = "default";
    std::string api_key_env = "OPENAI_API_KEY";
    std::optional<double> temperature;
    int max_tokens = 4096;
    int timeout_s = 120;
};

struct RunConfig
{
    std::uint64_t seed = 0;
    fs::path seed_corpus;
    std::string corpus_schema = "quest-seed-v1";
    std::optional<fs::path> templates_dir;

    GraphParams graph;
    int max_steps = 6;
    int num_prompts = 20;
    int shots = 8;

    int num_candidates = 8; // K
    int num_solutions = 8;  // M
    int num_tests = 20;     // T
    double temperature = kDefaultTemperature;
    double none_threshold = 0.5;
    std::optional<double> min_delta;
    int parse_retries = 3;
    int input_retries = 3;

    std::size_t max_in_flight = 8;
    bool cache = true;
    RetryPolicy retry;
    /// Keyed by role name or "default".
    std::map<std::string, BackendSpec> backends;

    std::vector<std::string> runner_command;
    std::size_t pool_size = 0;
    RunLimits limits;

    std::size_t stratum_size = 3000;
    std::uint64_t stratum_seed = 0;

    std::vector<fs::path> decontaminate_against;
    double decontaminate_threshold = 0.0;

    /// Directory relative paths were resolved against.
    fs::path base_dir;

    /// Throws UsageError naming the first out-of-range field.
    void validate() const;
    /// Canonical form with resolved paths.
    [[nodiscard]] json to_json() const;
    /// sha256 of the canonical form with paths relative to base_dir and
    /// without the fields that cannot change artifact bytes (runner command,
    /// pool size, in-flight limit).
    [[nodiscard]] std::string hash() const;

    /// Strings may reference ${VAR} or ${VAR:-fallback}; relative paths are
    /// resolved against `base_dir`. Unknown keys are rejected.
    static RunConfig from_json(json const & j, fs::path const & base_dir = {});
    static RunConfig load(fs::path const & path);

    /// Backend for `role`, falling back to "default". Absent when neither exists.
    [[nodiscard]] BackendSpec const * backend_for(RoleTag role) const;
};

/// Expands ${VAR} and ${VAR:-fallback}. Throws UsageError for unset
/// variables without a fallback.
std::string interpolate_env(std::string_view text);

/// Binds each configured role to a backend instance. Backends with equal
/// specs share one instance.
void configure_gateway(Gateway & gateway, RunConfig const & config);

} // namespace quest
