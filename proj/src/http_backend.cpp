#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/gateway.hpp"

namespace quest {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config))
{
    auto const scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw UsageError(fmt::format("endpoint '{}' has no scheme", config_.endpoint));
    }
    auto const path_start = config_.endpoint.find('/', scheme_end + 3);
    scheme_host_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string HttpBackend::id() const { return "http:" + config_.endpoint; }

json HttpBackend::request_body(CompletionRequest const & req, ModelSettings const & settings)
{
    return json{{"model", settings.model},
                {"messages", json::array({json{{"role", "user"}, {"content", req.prompt_text}}})},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens},
                // backends without seed support ignore it
                {"seed", req.sample_index}};
}

BackendReply HttpBackend::interpret_response(int status, std::string_view body)
{
    if (status == 429 || status >= 500 || status == 408) {
        return {BackendReply::Status::Transient, {}, FinishReason::Error, {}, fmt::format("HTTP {}", status)};
    }
    if (status < 200 || status >= 300) {
        return {BackendReply::Status::Fatal, {}, FinishReason::Error, {},
                fmt::format("HTTP {}: {}", status, body.substr(0, 300))};
    }
    try {
        auto const j = json::parse(body);
        auto const & choice = j.at("choices").at(0);
        BackendReply reply;
        auto const & content = choice.at("message").at("content");
        reply.text = content.is_string() ? content.get<std::string>() : std::string();
        auto const reason = choice.value("finish_reason", std::string("stop"));
        reply.finish_reason = reason == "length" ? FinishReason::Length : FinishReason::Stop;
        if (j.contains("usage") && j["usage"].is_object()) {
            reply.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            reply.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        if (reply.text.empty()) {
            reply.status = BackendReply::Status::Transient;
            reply.finish_reason = FinishReason::Error;
            reply.error = "empty completion";
        }
        return reply;
    } catch (json::exception const & e) {
        return {BackendReply::Status::Transient, {}, FinishReason::Error, {},
                fmt::format("unparseable completion body: {}", e.what())};
    }
}

BackendReply HttpBackend::send(CompletionRequest const & req, ModelSettings const & settings)
{
    httplib::Client client(scheme_host_);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(std::chrono::seconds(30));
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto const body = request_body(req, settings).dump();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        return {BackendReply::Status::Transient, {}, FinishReason::Error, {},
                fmt::format("transport error: {}", httplib::to_string(res.error()))};
    }
    return interpret_response(res->status, res->body);
}

} // namespace quest
