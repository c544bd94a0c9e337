#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "quest/io.hpp"
#include "quest/parallel.hpp"

namespace quest {

enum class RoleTag
{
    ConceptExtract,
    ProblemGen,
    TestInputGen,
    SolutionGen,
    TeacherDistill,
};

inline constexpr std::size_t kRoleCount = 5;

std::string_view to_string(RoleTag role) noexcept;
RoleTag role_from_string(std::string_view s);

inline constexpr double kDefaultTemperature = 0.6;

struct CompletionRequest
{
    RoleTag role = RoleTag::ProblemGen;
    std::string prompt_text;
    double temperature = kDefaultTemperature;
    int max_tokens = 4096;
    int sample_index = 0;
};

enum class FinishReason
{
    Stop,
    Length,
    Error,
};

std::string_view to_string(FinishReason reason) noexcept;
FinishReason finish_reason_from_string(std::string_view s);

struct TokenUsage
{
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

/// finish_reason == Error exactly when text is empty.
struct CompletionResult
{
    std::string text;
    FinishReason finish_reason = FinishReason::Error;
    TokenUsage usage;
    bool cache_hit = false;
    int attempts = 0;
    std::string error;

    [[nodiscard]] bool ok() const noexcept { return finish_reason != FinishReason::Error; }
};

/// What a backend reports for one attempt. Transient replies are retried;
/// Fatal replies (auth, bad config) abort with BackendError.
struct BackendReply
{
    enum class Status
    {
        Ok,
        Transient,
        Fatal,
    };

    Status status = Status::Ok;
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    TokenUsage usage;
    std::string error;
};

struct ModelSettings
{
    std::string model = "default";
    std::optional<double> temperature;
    int max_tokens = 4096;
};

class Backend
{
public:
    virtual ~Backend() = default;

    /// Stable identity used in cache keys.
    [[nodiscard]] virtual std::string id() const = 0;
    virtual BackendReply send(CompletionRequest const & req, ModelSettings const & settings) = 0;
};

struct RetryPolicy
{
    int max_retries = 4;
    std::chrono::milliseconds initial_delay{500};
    std::chrono::milliseconds max_delay{20000};
    double multiplier = 2.0;

    /// Delay before retry number `retry` (1-based), capped at max_delay.
    [[nodiscard]] std::chrono::milliseconds delay_for(int retry) const;
};

struct GatewayOptions
{
    std::size_t max_in_flight = 8;
    bool cache_enabled = true;
    /// Content-addressed response store; in-memory only when unset.
    std::optional<fs::path> cache_dir;
    RetryPolicy retry;
    /// Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats
{
    std::uint64_t requests = 0;
    std::uint64_t backend_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t retries = 0;
    std::uint64_t errors = 0;
    std::size_t peak_in_flight = 0;
};

/// Chat-completion access shared by every pipeline stage. Thread-safe.
class Gateway
{
public:
    explicit Gateway(GatewayOptions options = {});

    void configure(RoleTag role, std::shared_ptr<Backend> backend, ModelSettings settings = {});
    [[nodiscard]] bool configured(RoleTag role) const noexcept;

    /// Request with the role's configured temperature and max_tokens.
    [[nodiscard]] CompletionRequest make_request(RoleTag role, std::string prompt, int sample_index = 0) const;

    /// Retries transient failures with exponential backoff; exhausted
    /// retries give an Error result. Throws BackendError on fatal replies or
    /// when the role has no backend.
    CompletionResult complete(CompletionRequest const & req);

    /// Positionally aligned with `reqs`; per-item failures never abort the batch.
    std::vector<CompletionResult> complete_batch(std::span<CompletionRequest const> reqs);

    [[nodiscard]] std::string cache_key(CompletionRequest const & req) const;
    [[nodiscard]] GatewayStats stats() const;
    [[nodiscard]] std::size_t max_in_flight() const noexcept { return limiter_.limit(); }

private:
    struct RoleBinding
    {
        std::shared_ptr<Backend> backend;
        ModelSettings settings;
    };

    RoleBinding const & binding(RoleTag role) const;
    std::optional<CompletionResult> cache_lookup(std::string const & key);
    void cache_store(std::string const & key, CompletionResult const & result);

    GatewayOptions options_;
    std::array<std::optional<RoleBinding>, kRoleCount> roles_;
    ConcurrencyLimiter limiter_;

    mutable std::mutex cache_mutex_;
    std::unordered_map<std::string, CompletionResult> cache_;

    std::atomic<std::uint64_t> requests_{0};
    std::atomic<std::uint64_t> backend_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> retries_{0};
    std::atomic<std::uint64_t> errors_{0};
};

/// Deterministic scripted backend.
///
/// Script document: {"rules": [rule, ...]}. The first rule whose filters all
/// match answers the request. Filters (all optional): "role", "contains"
/// (substring of the prompt), "prompt_sha256", "sample_index". Response
/// fields: "text" or "texts" (picked by sample_index modulo length),
/// "finish_reason", "fail_first" (first N attempts per prompt/sample are
/// transient failures), "always_fail", "fatal", "delay_ms".
///
/// Text may use {{sample_index}}, {{prompt_hash}} (12 hex chars) and
/// {{choice:a|b|c}}, which picks an option from a hash of the prompt,
/// sample index and occurrence number. A request matching no rule is a
/// fatal reply.
class MockBackend : public Backend
{
public:
    using Responder = std::function<BackendReply(CompletionRequest const &)>;

    explicit MockBackend(json script);
    explicit MockBackend(Responder responder, std::string id = "mock:fn");
    static std::shared_ptr<MockBackend> from_file(fs::path const & path);

    [[nodiscard]] std::string id() const override { return id_; }
    BackendReply send(CompletionRequest const & req, ModelSettings const & settings) override;

    [[nodiscard]] std::uint64_t calls() const noexcept { return calls_.load(); }

private:
    BackendReply scripted(CompletionRequest const & req);

    std::string id_;
    json rules_;
    Responder responder_;
    std::mutex counter_mutex_;
    std::map<std::string, int> attempts_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Expands the mock text placeholders for one request.
std::string expand_mock_text(std::string_view text, CompletionRequest const & req);

struct HttpBackendConfig
{
    /// OpenAI-compatible chat completions URL, e.g. https://api.openai.com/v1/chat/completions
    std::string endpoint;
    std::string api_key;
    std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions client. 429 and 5xx are transient;
/// other 4xx are fatal.
class HttpBackend : public Backend
{
public:
    explicit HttpBackend(HttpBackendConfig config);

    [[nodiscard]] std::string id() const override;
    BackendReply send(CompletionRequest const & req, ModelSettings const & settings) override;

    /// Request body sent for `req`; exposed for tests.
    [[nodiscard]] static json request_body(CompletionRequest const & req, ModelSettings const & settings);
    /// Interprets an HTTP status and response body.
    [[nodiscard]] static BackendReply interpret_response(int status, std::string_view body);

private:
    HttpBackendConfig config_;
    std::string scheme_host_;
    std::string path_;
};

} // namespace quest
