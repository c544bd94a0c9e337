#include "quest/gateway.hpp"

#include <thread>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"

namespace quest {

namespace {

std::vector<std::string_view> split_options(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        auto const bar = s.find('|', pos);
        out.push_back(s.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
        if (bar == std::string_view::npos) {
            return out;
        }
        pos = bar + 1;
    }
}

bool rule_matches(json const & rule, CompletionRequest const & req, std::string const & prompt_sha)
{
    if (rule.contains("role") && rule["role"].get<std::string>() != to_string(req.role)) {
        return false;
    }
    if (rule.contains("contains")
        && req.prompt_text.find(rule["contains"].get<std::string>()) == std::string::npos) {
        return false;
    }
    if (rule.contains("prompt_sha256") && rule["prompt_sha256"].get<std::string>() != prompt_sha) {
        return false;
    }
    if (rule.contains("sample_index") && rule["sample_index"].get<int>() != req.sample_index) {
        return false;
    }
    return true;
}

} // namespace

std::string expand_mock_text(std::string_view text, CompletionRequest const & req)
{
    auto const prompt_sha = sha256_hex(req.prompt_text);
    std::string out;
    std::size_t pos = 0;
    int occurrence = 0;
    for (;;) {
        auto const open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            return out;
        }
        auto const close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(text.substr(pos));
            return out;
        }
        out.append(text.substr(pos, open - pos));
        auto const name = text.substr(open + 2, close - open - 2);
        if (name == "sample_index") {
            out += std::to_string(req.sample_index);
        } else if (name == "prompt_hash") {
            out += prompt_sha.substr(0, 12);
        } else if (name.starts_with("choice:")) {
            auto const options = split_options(name.substr(7));
            auto const h = hash64(fmt::format("{}:{}:{}", prompt_sha, req.sample_index, occurrence++));
            out.append(options[h % options.size()]);
        } else {
            out.append(text.substr(open, close + 2 - open));
        }
        pos = close + 2;
    }
}

MockBackend::MockBackend(json script) : rules_(std::move(script))
{
    if (!rules_.is_object() || !rules_.contains("rules") || !rules_["rules"].is_array()) {
        throw FormatError("mock script must be an object with a \"rules\" array");
    }
    rules_ = rules_["rules"];
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        auto const & r = rules_[i];
        if (!r.is_object()) {
            throw FormatError(fmt::format("mock rule {} is not an object", i));
        }
        bool const has_text = r.contains("text") && r["text"].is_string();
        bool const has_texts = r.contains("texts") && r["texts"].is_array() && !r["texts"].empty();
        bool const failing = r.value("always_fail", false) || r.value("fatal", false);
        if (!has_text && !has_texts && !failing) {
            throw FormatError(fmt::format("mock rule {} has no text", i));
        }
    }
    id_ = "mock:" + short_hash(rules_.dump(), 16);
}

MockBackend::MockBackend(Responder responder, std::string id)
    : id_(std::move(id)), rules_(json::array()), responder_(std::move(responder))
{}

std::shared_ptr<MockBackend> MockBackend::from_file(fs::path const & path)
{
    json script;
    try {
        script = json::parse(read_file(path));
    } catch (json::parse_error const & e) {
        throw FormatError(fmt::format("mock script '{}': {}", path.string(), e.what()));
    }
    return std::make_shared<MockBackend>(std::move(script));
}

BackendReply MockBackend::send(CompletionRequest const & req, ModelSettings const &)
{
    ++calls_;
    if (responder_) {
        return responder_(req);
    }
    return scripted(req);
}

BackendReply MockBackend::scripted(CompletionRequest const & req)
{
    auto const prompt_sha = sha256_hex(req.prompt_text);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        auto const & rule = rules_[i];
        if (!rule_matches(rule, req, prompt_sha)) {
            continue;
        }
        if (auto const delay = rule.value("delay_ms", 0); delay > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        if (rule.value("fatal", false)) {
            return {BackendReply::Status::Fatal, {}, FinishReason::Error, {}, "scripted fatal error"};
        }
        if (rule.value("always_fail", false)) {
            return {BackendReply::Status::Transient, {}, FinishReason::Error, {}, "scripted failure"};
        }
        if (int const fail_first = rule.value("fail_first", 0); fail_first > 0) {
            std::lock_guard lock(counter_mutex_);
            auto & n = attempts_[fmt::format("{}:{}:{}", i, prompt_sha, req.sample_index)];
            if (n++ < fail_first) {
                return {BackendReply::Status::Transient, {}, FinishReason::Error, {},
                        fmt::format("HTTP {}", rule.value("fail_status", 429))};
            }
        }
        std::string text;
        if (rule.contains("texts")) {
            auto const & texts = rule["texts"];
            text = texts[static_cast<std::size_t>(req.sample_index) % texts.size()].get<std::string>();
        } else {
            text = rule["text"].get<std::string>();
        }
        BackendReply reply;
        reply.text = expand_mock_text(text, req);
        reply.finish_reason = finish_reason_from_string(rule.value("finish_reason", std::string("stop")));
        reply.usage.prompt_tokens = static_cast<std::int64_t>(req.prompt_text.size() / 4);
        reply.usage.completion_tokens = static_cast<std::int64_t>(reply.text.size() / 4);
        return reply;
    }
    return {BackendReply::Status::Fatal, {}, FinishReason::Error, {},
            fmt::format("no scripted response for {} prompt {} sample {}", to_string(req.role),
                        prompt_sha.substr(0, 12), req.sample_index)};
}

} // namespace quest
