#include "quest/config.hpp"

#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"

namespace quest {

namespace {

json interpolate_all(json const & j)
{
    if (j.is_string()) {
        return interpolate_env(j.get<std::string>());
    }
    if (j.is_array()) {
        json out = json::array();
        for (auto const & v : j) {
            out.push_back(interpolate_all(v));
        }
        return out;
    }
    if (j.is_object()) {
        json out = json::object();
        for (auto const & [k, v] : j.items()) {
            out[k] = interpolate_all(v);
        }
        return out;
    }
    return j;
}

void reject_unknown(json const & j, std::string_view where, std::initializer_list<std::string_view> known)
{
    if (!j.is_object()) {
        throw UsageError(fmt::format("config: '{}' must be an object", where));
    }
    for (auto const & [k, v] : j.items()) {
        bool found = false;
        for (auto const & name : known) {
            found = found || name == k;
        }
        if (!found) {
            throw UsageError(fmt::format("config: unknown key '{}{}{}'", where, where.empty() ? "" : ".", k));
        }
    }
}

template <typename T>
void read(json const & j, char const * key, T & out, std::string_view where)
{
    if (!j.contains(key) || j[key].is_null()) {
        return;
    }
    try {
        out = j[key].get<T>();
    } catch (json::exception const &) {
        throw UsageError(fmt::format("config: '{}{}{}' has the wrong type", where, where.empty() ? "" : ".", key));
    }
}

fs::path resolve(fs::path const & base, std::string const & p)
{
    fs::path path(p);
    if (path.empty() || path.is_absolute() || base.empty()) {
        return path;
    }
    return (base / path).lexically_normal();
}

json backend_to_json(BackendSpec const & b)
{
    json j{{"kind", b.kind}, {"model", b.model}, {"max_tokens", b.max_tokens}};
    if (b.kind == "mock") {
        j["script"] = b.script.string();
    } else {
        j["endpoint"] = b.endpoint;
        j["api_key_env"] = b.api_key_env;
        j["timeout_s"] = b.timeout_s;
    }
    j["temperature"] = b.temperature ? json(*b.temperature) : json(nullptr);
    return j;
}

} // namespace

std::string interpolate_env(std::string_view text)
{
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
            auto const close = text.find('}', i + 2);
            if (close == std::string_view::npos) {
                throw UsageError(fmt::format("config: unterminated '${{' in '{}'", text));
            }
            auto const body = text.substr(i + 2, close - i - 2);
            auto const sep = body.find(":-");
            std::string const name(body.substr(0, sep));
            if (char const * v = std::getenv(name.c_str()); v != nullptr) {
                out += v;
            } else if (sep != std::string_view::npos) {
                out += body.substr(sep + 2);
            } else {
                throw UsageError(fmt::format("config: environment variable {} is not set", name));
            }
            i = close + 1;
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

void RunConfig::validate() const
{
    auto fail = [](std::string msg) { throw UsageError("config: " + msg); };
    graph.validate();
    if (max_steps < 1) fail("graph.max_steps must be >= 1");
    if (num_prompts < 1) fail("num_prompts must be >= 1");
    if (shots < 0) fail("shots must be >= 0");
    if (num_candidates < 2) fail("K must be >= 2");
    if (num_solutions < 2) fail("M must be >= 2");
    if (num_tests < 1) fail("T must be >= 1");
    if (!(temperature >= 0.0 && temperature <= 2.0)) fail("temperature must be in [0, 2]");
    if (!(none_threshold >= 0.0 && none_threshold <= 1.0)) fail("none_threshold must be in [0, 1]");
    if (min_delta && !(*min_delta >= 0.0 && *min_delta <= 1.0)) fail("min_delta must be in [0, 1]");
    if (parse_retries < 0 || input_retries < 0) fail("retries must be >= 0");
    if (max_in_flight < 1) fail("gateway.max_in_flight must be >= 1");
    if (retry.max_retries < 0) fail("gateway.retry.max_retries must be >= 0");
    if (!(limits.time_limit > 0.0)) fail("runner.time_limit must be positive");
    if (limits.memory_limit == 0) fail("runner.memory_limit must be positive");
    if (!(decontaminate_threshold >= 0.0 && decontaminate_threshold <= 1.0)) {
        fail("decontaminate.threshold must be in [0, 1]");
    }
    for (auto const & [role, b] : backends) {
        if (role != "default") {
            try {
                (void)role_from_string(role);
            } catch (UsageError const &) {
                fail(fmt::format("unknown backend role '{}'", role));
            }
        }
        if (b.kind != "mock" && b.kind != "openai") {
            fail(fmt::format("backend '{}' has unknown kind '{}'", role, b.kind));
        }
        if (b.kind == "mock" && b.script.empty()) fail(fmt::format("mock backend '{}' needs a script", role));
        if (b.kind == "openai" && b.endpoint.empty()) fail(fmt::format("openai backend '{}' needs an endpoint", role));
    }
}

json RunConfig::to_json() const
{
    json bk = json::object();
    for (auto const & [role, b] : backends) {
        bk[role] = backend_to_json(b);
    }
    json against = json::array();
    for (auto const & p : decontaminate_against) {
        against.push_back(p.string());
    }
    return json{
        {"seed", seed},
        {"seed_corpus", seed_corpus.string()},
        {"corpus_schema", corpus_schema},
        {"templates_dir", templates_dir ? json(templates_dir->string()) : json(nullptr)},
        {"graph",
         {{"weight_mode", std::string(to_string(graph.mode))},
          {"alpha", graph.alpha},
          {"epsilon", graph.epsilon},
          {"max_steps", max_steps}}},
        {"num_prompts", num_prompts},
        {"shots", shots},
        {"K", num_candidates},
        {"M", num_solutions},
        {"T", num_tests},
        {"temperature", temperature},
        {"none_threshold", none_threshold},
        {"min_delta", min_delta ? json(*min_delta) : json(nullptr)},
        {"parse_retries", parse_retries},
        {"input_retries", input_retries},
        {"gateway",
         {{"max_in_flight", max_in_flight},
          {"cache", cache},
          {"retry",
           {{"max_retries", retry.max_retries},
            {"initial_delay_ms", retry.initial_delay.count()},
            {"max_delay_ms", retry.max_delay.count()},
            {"multiplier", retry.multiplier}}},
          {"backends", bk}}},
        {"runner",
         {{"command", runner_command},
          {"pool_size", pool_size},
          {"time_limit", limits.time_limit},
          {"memory_limit", limits.memory_limit}}},
        {"strata", {{"size", stratum_size}, {"seed", stratum_seed}}},
        {"decontaminate", {{"against", against}, {"threshold", decontaminate_threshold}}},
    };
}

std::string RunConfig::hash() const
{
    auto j = to_json();
    auto portable = [this](json & field) {
        if (!field.is_string() || base_dir.empty()) {
            return;
        }
        fs::path const p(field.get<std::string>());
        if (p.is_absolute()) {
            field = p.lexically_relative(base_dir).generic_string();
        }
    };
    portable(j["seed_corpus"]);
    portable(j["templates_dir"]);
    for (auto & [role, b] : j["gateway"]["backends"].items()) {
        if (b.contains("script")) {
            portable(b["script"]);
        }
    }
    for (auto & a : j["decontaminate"]["against"]) {
        portable(a);
    }
    j["runner"].erase("command");
    j["runner"].erase("pool_size");
    j["gateway"].erase("max_in_flight");
    return sha256_hex(j.dump());
}

RunConfig RunConfig::from_json(json const & raw, fs::path const & base_dir)
{
    auto const j = interpolate_all(raw);
    reject_unknown(j, "",
                   {"seed", "seed_corpus", "corpus_schema", "templates_dir", "graph", "num_prompts", "shots", "K", "M",
                    "T", "temperature", "none_threshold", "min_delta", "parse_retries", "input_retries", "gateway",
                    "runner", "strata", "decontaminate"});
    RunConfig c;
    c.base_dir = base_dir;
    read(j, "seed", c.seed, "");
    std::string s;
    read(j, "seed_corpus", s, "");
    c.seed_corpus = resolve(base_dir, s);
    read(j, "corpus_schema", c.corpus_schema, "");
    if (j.contains("templates_dir") && j["templates_dir"].is_string()) {
        c.templates_dir = resolve(base_dir, j["templates_dir"].get<std::string>());
    }
    if (j.contains("graph")) {
        auto const & g = j["graph"];
        reject_unknown(g, "graph", {"weight_mode", "alpha", "epsilon", "max_steps"});
        std::string mode(to_string(c.graph.mode));
        read(g, "weight_mode", mode, "graph");
        try {
            c.graph.mode = weight_mode_from_string(mode);
        } catch (Error const & e) {
            throw UsageError(std::string("config: ") + e.what());
        }
        read(g, "alpha", c.graph.alpha, "graph");
        read(g, "epsilon", c.graph.epsilon, "graph");
        read(g, "max_steps", c.max_steps, "graph");
    }
    read(j, "num_prompts", c.num_prompts, "");
    read(j, "shots", c.shots, "");
    read(j, "K", c.num_candidates, "");
    read(j, "M", c.num_solutions, "");
    read(j, "T", c.num_tests, "");
    read(j, "temperature", c.temperature, "");
    read(j, "none_threshold", c.none_threshold, "");
    if (j.contains("min_delta") && !j["min_delta"].is_null()) {
        double d = 0.0;
        read(j, "min_delta", d, "");
        c.min_delta = d;
    }
    read(j, "parse_retries", c.parse_retries, "");
    read(j, "input_retries", c.input_retries, "");
    if (j.contains("gateway")) {
        auto const & g = j["gateway"];
        reject_unknown(g, "gateway", {"max_in_flight", "cache", "retry", "backends"});
        read(g, "max_in_flight", c.max_in_flight, "gateway");
        read(g, "cache", c.cache, "gateway");
        if (g.contains("retry")) {
            auto const & r = g["retry"];
            reject_unknown(r, "gateway.retry", {"max_retries", "initial_delay_ms", "max_delay_ms", "multiplier"});
            read(r, "max_retries", c.retry.max_retries, "gateway.retry");
            std::int64_t ms = c.retry.initial_delay.count();
            read(r, "initial_delay_ms", ms, "gateway.retry");
            c.retry.initial_delay = std::chrono::milliseconds(ms);
            ms = c.retry.max_delay.count();
            read(r, "max_delay_ms", ms, "gateway.retry");
            c.retry.max_delay = std::chrono::milliseconds(ms);
            read(r, "multiplier", c.retry.multiplier, "gateway.retry");
        }
        if (g.contains("backends")) {
            auto const & bs = g["backends"];
            reject_unknown(bs, "gateway.backends",
                           {"default", "concept_extract", "problem_gen", "test_input_gen", "solution_gen",
                            "teacher_distill"});
            for (auto const & [role, bj] : bs.items()) {
                auto const where = "gateway.backends." + role;
                reject_unknown(bj, where,
                               {"kind", "script", "endpoint", "model", "api_key_env", "temperature", "max_tokens",
                                "timeout_s"});
                BackendSpec b;
                read(bj, "kind", b.kind, where);
                std::string script;
                read(bj, "script", script, where);
                b.script = resolve(base_dir, script);
                read(bj, "endpoint", b.endpoint, where);
                read(bj, "model", b.model, where);
                read(bj, "api_key_env", b.api_key_env, where);
                if (bj.contains("temperature") && !bj["temperature"].is_null()) {
                    double t = 0.0;
                    read(bj, "temperature", t, where);
                    b.temperature = t;
                }
                read(bj, "max_tokens", b.max_tokens, where);
                read(bj, "timeout_s", b.timeout_s, where);
                c.backends[role] = std::move(b);
            }
        }
    }
    if (j.contains("runner")) {
        auto const & r = j["runner"];
        reject_unknown(r, "runner", {"command", "pool_size", "time_limit", "memory_limit"});
        read(r, "command", c.runner_command, "runner");
        if (!c.runner_command.empty() && c.runner_command[0].find('/') != std::string::npos) {
            c.runner_command[0] = resolve(base_dir, c.runner_command[0]).string();
        }
        read(r, "pool_size", c.pool_size, "runner");
        read(r, "time_limit", c.limits.time_limit, "runner");
        read(r, "memory_limit", c.limits.memory_limit, "runner");
    }
    if (j.contains("strata")) {
        auto const & st = j["strata"];
        reject_unknown(st, "strata", {"size", "seed"});
        read(st, "size", c.stratum_size, "strata");
        read(st, "seed", c.stratum_seed, "strata");
    }
    if (j.contains("decontaminate")) {
        auto const & d = j["decontaminate"];
        reject_unknown(d, "decontaminate", {"against", "threshold"});
        std::vector<std::string> against;
        read(d, "against", against, "decontaminate");
        for (auto const & a : against) {
            c.decontaminate_against.push_back(resolve(base_dir, a));
        }
        read(d, "threshold", c.decontaminate_threshold, "decontaminate");
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(fs::path const & path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (json::parse_error const & e) {
        throw UsageError(fmt::format("config {}: {}", path.string(), e.what()));
    }
    return from_json(j, fs::absolute(path).parent_path());
}

BackendSpec const * RunConfig::backend_for(RoleTag role) const
{
    if (auto it = backends.find(std::string(to_string(role))); it != backends.end()) {
        return &it->second;
    }
    if (auto it = backends.find("default"); it != backends.end()) {
        return &it->second;
    }
    return nullptr;
}

void configure_gateway(Gateway & gateway, RunConfig const & config)
{
    std::map<std::string, std::shared_ptr<Backend>> instances;
    for (auto role : {RoleTag::ConceptExtract, RoleTag::ProblemGen, RoleTag::TestInputGen, RoleTag::SolutionGen,
                      RoleTag::TeacherDistill}) {
        auto const * spec = config.backend_for(role);
        if (spec == nullptr) {
            continue;
        }
        auto const key = backend_to_json(*spec).dump();
        auto & inst = instances[key];
        if (!inst) {
            if (spec->kind == "mock") {
                inst = MockBackend::from_file(spec->script);
            } else {
                char const * key_value = std::getenv(spec->api_key_env.c_str());
                if (key_value == nullptr || *key_value == '\0') {
                    throw BackendError(fmt::format("environment variable {} is not set", spec->api_key_env));
                }
                inst = std::make_shared<HttpBackend>(
                    HttpBackendConfig{spec->endpoint, key_value, std::chrono::seconds(spec->timeout_s)});
            }
        }
        ModelSettings settings;
        settings.model = spec->model;
        settings.temperature = spec->temperature ? spec->temperature : std::optional<double>(config.temperature);
        settings.max_tokens = spec->max_tokens;
        gateway.configure(role, inst, settings);
    }
}

} // namespace quest
