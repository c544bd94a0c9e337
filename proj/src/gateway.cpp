#include "quest/gateway.hpp"

#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"

namespace quest {

std::string_view to_string(RoleTag role) noexcept
{
    switch (role) {
    case RoleTag::ConceptExtract: return "concept_extract";
    case RoleTag::ProblemGen: return "problem_gen";
    case RoleTag::TestInputGen: return "test_input_gen";
    case RoleTag::SolutionGen: return "solution_gen";
    case RoleTag::TeacherDistill: return "teacher_distill";
    }
    return "unknown";
}

RoleTag role_from_string(std::string_view s)
{
    for (auto role : {RoleTag::ConceptExtract, RoleTag::ProblemGen, RoleTag::TestInputGen, RoleTag::SolutionGen,
                      RoleTag::TeacherDistill}) {
        if (to_string(role) == s) {
            return role;
        }
    }
    throw UsageError(fmt::format("unknown role tag '{}'", s));
}

std::string_view to_string(FinishReason reason) noexcept
{
    switch (reason) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
    }
    return "error";
}

FinishReason finish_reason_from_string(std::string_view s)
{
    if (s == "stop") return FinishReason::Stop;
    if (s == "length") return FinishReason::Length;
    if (s == "error") return FinishReason::Error;
    throw FormatError(fmt::format("unknown finish reason '{}'", s));
}

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const
{
    double const scaled = static_cast<double>(initial_delay.count()) * std::pow(multiplier, std::max(retry - 1, 0));
    double const capped = std::min(scaled, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)), limiter_(options_.max_in_flight)
{
    if (!options_.sleep) {
        options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    if (options_.cache_dir) {
        fs::create_directories(*options_.cache_dir);
    }
}

void Gateway::configure(RoleTag role, std::shared_ptr<Backend> backend, ModelSettings settings)
{
    if (!backend) {
        throw UsageError(fmt::format("null backend for role {}", to_string(role)));
    }
    roles_[static_cast<std::size_t>(role)] = RoleBinding{std::move(backend), std::move(settings)};
}

bool Gateway::configured(RoleTag role) const noexcept
{
    return roles_[static_cast<std::size_t>(role)].has_value();
}

Gateway::RoleBinding const & Gateway::binding(RoleTag role) const
{
    auto const & b = roles_[static_cast<std::size_t>(role)];
    if (!b) {
        throw BackendError(fmt::format("no backend configured for role {}", to_string(role)));
    }
    return *b;
}

CompletionRequest Gateway::make_request(RoleTag role, std::string prompt, int sample_index) const
{
    auto const & b = binding(role);
    CompletionRequest req;
    req.role = role;
    req.prompt_text = std::move(prompt);
    req.temperature = b.settings.temperature.value_or(kDefaultTemperature);
    req.max_tokens = b.settings.max_tokens;
    req.sample_index = sample_index;
    return req;
}

std::string Gateway::cache_key(CompletionRequest const & req) const
{
    auto const & b = binding(req.role);
    json key{{"backend", b.backend->id()},
             {"model", b.settings.model},
             {"prompt", req.prompt_text},
             {"temperature", fmt::format("{:a}", req.temperature)},
             {"max_tokens", req.max_tokens},
             {"sample_index", req.sample_index}};
    return sha256_hex(key.dump());
}

std::optional<CompletionResult> Gateway::cache_lookup(std::string const & key)
{
    {
        std::lock_guard lock(cache_mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            return it->second;
        }
    }
    if (!options_.cache_dir) {
        return std::nullopt;
    }
    auto const path = *options_.cache_dir / key.substr(0, 2) / (key + ".json");
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    try {
        auto const j = json::parse(read_file(path));
        CompletionResult r;
        r.text = j.at("text").get<std::string>();
        r.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
        r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
        r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
        r.attempts = 0;
        std::lock_guard lock(cache_mutex_);
        cache_.emplace(key, r);
        return r;
    } catch (std::exception const & e) {
        log().warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
        return std::nullopt;
    }
}

void Gateway::cache_store(std::string const & key, CompletionResult const & result)
{
    {
        std::lock_guard lock(cache_mutex_);
        cache_.insert_or_assign(key, result);
    }
    if (options_.cache_dir) {
        json const j{{"text", result.text},
                     {"finish_reason", to_string(result.finish_reason)},
                     {"usage",
                      {{"prompt_tokens", result.usage.prompt_tokens},
                       {"completion_tokens", result.usage.completion_tokens}}}};
        write_file_atomic(*options_.cache_dir / key.substr(0, 2) / (key + ".json"), j.dump() + "\n");
    }
}

CompletionResult Gateway::complete(CompletionRequest const & req)
{
    if (req.temperature < 0.0 || req.sample_index < 0) {
        throw UsageError("completion request needs temperature >= 0 and sample_index >= 0");
    }
    ++requests_;
    auto const & b = binding(req.role);
    std::string key;
    if (options_.cache_enabled) {
        key = cache_key(req);
        if (auto hit = cache_lookup(key)) {
            ++cache_hits_;
            hit->cache_hit = true;
            hit->attempts = 0;
            return *hit;
        }
    }

    CompletionResult result;
    int const max_attempts = 1 + std::max(options_.retry.max_retries, 0);
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        BackendReply reply;
        {
            LimiterSlot slot(limiter_);
            ++backend_calls_;
            reply = b.backend->send(req, b.settings);
        }
        result.attempts = attempt;
        if (reply.status == BackendReply::Status::Fatal) {
            throw BackendError(fmt::format("{} backend {}: {}", to_string(req.role), b.backend->id(), reply.error));
        }
        if (reply.status == BackendReply::Status::Ok && !reply.text.empty()
            && reply.finish_reason != FinishReason::Error) {
            result.text = std::move(reply.text);
            result.finish_reason = reply.finish_reason;
            result.usage = reply.usage;
            result.error.clear();
            if (attempt > 1) {
                log().debug("{} request succeeded after {} retries", to_string(req.role), attempt - 1);
            }
            if (options_.cache_enabled) {
                cache_store(key, result);
            }
            return result;
        }
        result.error = reply.error.empty() ? std::string("empty response") : reply.error;
        if (attempt < max_attempts) {
            ++retries_;
            auto const delay = options_.retry.delay_for(attempt);
            log().debug("{} request failed ({}), retry {} in {} ms", to_string(req.role), result.error, attempt,
                        delay.count());
            options_.sleep(delay);
        }
    }
    ++errors_;
    log().warn("{} request failed after {} attempts: {}", to_string(req.role), result.attempts, result.error);
    result.text.clear();
    result.finish_reason = FinishReason::Error;
    return result;
}

std::vector<CompletionResult> Gateway::complete_batch(std::span<CompletionRequest const> reqs)
{
    std::vector<CompletionResult> out(reqs.size());
    parallel_for(reqs.size(), limiter_.limit(), [&](std::size_t i) { out[i] = complete(reqs[i]); });
    return out;
}

GatewayStats Gateway::stats() const
{
    GatewayStats s;
    s.requests = requests_.load();
    s.backend_calls = backend_calls_.load();
    s.cache_hits = cache_hits_.load();
    s.retries = retries_.load();
    s.errors = errors_.load();
    s.peak_in_flight = limiter_.peak();
    return s;
}

} // namespace quest
