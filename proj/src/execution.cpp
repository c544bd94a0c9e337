#include "quest/execution.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"
#include "quest/random.hpp"

extern char ** environ;

namespace quest {

std::string normalize_output(std::string_view raw)
{
    std::string out;
    out.reserve(raw.size());
    std::size_t line_start = 0;
    auto flush_line = [&](std::string_view line) {
        auto const end = line.find_last_not_of(" \t\f\v");
        out.append(line.substr(0, end == std::string_view::npos ? 0 : end + 1));
    };
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\n' || raw[i] == '\r') {
            flush_line(raw.substr(line_start, i - line_start));
            out.push_back('\n');
            if (raw[i] == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') {
                ++i;
            }
            line_start = i + 1;
        }
    }
    if (line_start < raw.size()) {
        flush_line(raw.substr(line_start));
    }
    while (!out.empty() && out.back() == '\n') {
        out.pop_back();
    }
    return out;
}

namespace {

bool looks_like_code(std::string_view text)
{
    static constexpr std::string_view kStarters[] = {
        "def ",   "import ",   "from ",  "class ",  "for ",     "while ", "if ",      "elif ",   "else:",
        "print(", "return",    "#include", "int ",  "using ",   "std::",  "} ",       "}",       "try:",
        "except", "with ",     "n = ",   "n, ",     "const ",   "let ",   "fn ",      "public ", "static ",
    };
    std::size_t lines = 0;
    std::size_t code_like = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto const nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        auto const first = line.find_first_not_of(" \t");
        if (first == std::string_view::npos) {
            continue;
        }
        line = line.substr(first);
        auto const last = line.find_last_not_of(" \t\r");
        line = line.substr(0, last + 1);
        ++lines;
        bool const starter = std::any_of(std::begin(kStarters), std::end(kStarters),
                                         [&](std::string_view s) { return line.starts_with(s); });
        char const end = line.back();
        bool const code_end = end == ':' || end == ';' || end == '{' || end == '}' || end == ')';
        bool const assignment = line.find(" = ") != std::string_view::npos && line.find(". ") == std::string_view::npos;
        if (starter || code_end || assignment) {
            ++code_like;
        }
    }
    return lines > 0 && code_like * 10 >= lines * 7;
}

} // namespace

std::optional<std::string> extract_code(std::string_view response)
{
    std::optional<std::string> last_block;
    bool in_block = false;
    std::string current;
    bool saw_fence = false;
    std::size_t pos = 0;
    while (pos <= response.size()) {
        auto const nl = response.find('\n', pos);
        auto line = response.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? response.size() + 1 : nl + 1;
        if (nl == std::string_view::npos && line.empty()) {
            break;
        }
        auto const first = line.find_first_not_of(" \t");
        bool const fence = first != std::string_view::npos && line.substr(first).starts_with("```");
        if (fence) {
            saw_fence = true;
            if (in_block) {
                last_block = current;
                in_block = false;
            } else {
                in_block = true;
                current.clear();
            }
            continue;
        }
        if (in_block) {
            current.append(line);
            current.push_back('\n');
        }
    }
    if (in_block && !current.empty()) {
        // unterminated final fence, usually a truncated completion
        last_block = current;
    }
    if (last_block) {
        if (last_block->find_first_not_of(" \t\r\n") == std::string::npos) {
            return std::nullopt;
        }
        return last_block;
    }
    if (!saw_fence && looks_like_code(response)) {
        return std::string(response);
    }
    return std::nullopt;
}

std::string_view to_string(RunStatus s) noexcept
{
    switch (s) {
    case RunStatus::Ok: return "Ok";
    case RunStatus::Timeout: return "Timeout";
    case RunStatus::RuntimeError: return "RuntimeError";
    case RunStatus::MemoryExceeded: return "MemoryExceeded";
    case RunStatus::NoOutput: return "NoOutput";
    }
    return "RuntimeError";
}

RunStatus run_status_from_string(std::string_view s)
{
    for (auto st : {RunStatus::Ok, RunStatus::Timeout, RunStatus::RuntimeError, RunStatus::MemoryExceeded,
                    RunStatus::NoOutput}) {
        if (to_string(st) == s) {
            return st;
        }
    }
    throw FormatError(fmt::format("unknown run status '{}'", s));
}

std::string encode_run_request(RunRequest const & req)
{
    json j{{"protocol", kRunnerProtocol},
           {"program_source", req.program_source},
           {"input_text", req.input_text},
           {"time_limit", req.limits.time_limit},
           {"memory_limit", req.limits.memory_limit}};
    return j.dump() + "\n";
}

RunRequest decode_run_request(std::string_view text)
{
    try {
        auto const j = json::parse(text);
        if (j.at("protocol").get<std::string>() != kRunnerProtocol) {
            throw FormatError(fmt::format("unsupported runner protocol '{}'", j["protocol"].get<std::string>()));
        }
        RunRequest req;
        req.program_source = j.at("program_source").get<std::string>();
        req.input_text = j.at("input_text").get<std::string>();
        req.limits.time_limit = j.at("time_limit").get<double>();
        req.limits.memory_limit = j.at("memory_limit").get<std::uint64_t>();
        if (!(req.limits.time_limit > 0) || req.limits.memory_limit == 0) {
            throw FormatError("run request limits must be positive");
        }
        return req;
    } catch (json::exception const & e) {
        throw FormatError(fmt::format("malformed run request: {}", e.what()));
    }
}

std::string encode_run_result(RunResult const & res)
{
    json j{{"protocol", kRunnerProtocol},
           {"status", to_string(res.status)},
           {"stderr_excerpt", res.stderr_excerpt},
           {"wall_time", res.wall_time}};
    j["stdout_normalized"] = res.stdout_normalized ? json(*res.stdout_normalized) : json(nullptr);
    return j.dump() + "\n";
}

RunResult decode_run_result(std::string_view text)
{
    try {
        auto const j = json::parse(text);
        if (j.at("protocol").get<std::string>() != kRunnerProtocol) {
            throw FormatError(fmt::format("unsupported runner protocol '{}'", j["protocol"].get<std::string>()));
        }
        RunResult res;
        res.status = run_status_from_string(j.at("status").get<std::string>());
        auto const & out = j.at("stdout_normalized");
        if (!out.is_null()) {
            res.stdout_normalized = out.get<std::string>();
        }
        res.stderr_excerpt = j.value("stderr_excerpt", std::string());
        res.wall_time = j.value("wall_time", 0.0);
        if (res.stdout_normalized.has_value() != (res.status == RunStatus::Ok)) {
            throw FormatError("run result: stdout_normalized must be present exactly when status is Ok");
        }
        return res;
    } catch (json::exception const & e) {
        throw FormatError(fmt::format("malformed run result: {}", e.what()));
    }
}

namespace {

bool executable_on_path(std::string const & name)
{
    if (name.find('/') != std::string::npos) {
        return ::access(name.c_str(), X_OK) == 0;
    }
    char const * path = std::getenv("PATH");
    if (!path) {
        return false;
    }
    std::string_view rest(path);
    while (!rest.empty()) {
        auto const colon = rest.find(':');
        auto const dir = rest.substr(0, colon);
        auto const candidate = fmt::format("{}/{}", dir.empty() ? "." : dir, name);
        if (::access(candidate.c_str(), X_OK) == 0) {
            return true;
        }
        if (colon == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(colon + 1);
    }
    return false;
}

struct Pipe
{
    int fds[2] = {-1, -1};

    Pipe()
    {
        if (::pipe2(fds, O_CLOEXEC) != 0) {
            throw RunnerFault(fmt::format("pipe failed: {}", std::strerror(errno)));
        }
    }
    ~Pipe()
    {
        close_read();
        close_write();
    }
    Pipe(Pipe const &) = delete;
    Pipe & operator=(Pipe const &) = delete;

    void close_read()
    {
        if (fds[0] >= 0) {
            ::close(fds[0]);
            fds[0] = -1;
        }
    }
    void close_write()
    {
        if (fds[1] >= 0) {
            ::close(fds[1]);
            fds[1] = -1;
        }
    }
};

} // namespace

ProcessRunner::ProcessRunner(std::vector<std::string> argv, std::chrono::milliseconds overhead)
    : argv_(std::move(argv)), overhead_(overhead)
{
    if (argv_.empty()) {
        throw RunnerError("runner command is empty");
    }
    if (!executable_on_path(argv_[0])) {
        throw RunnerError(fmt::format("runner executable '{}' not found", argv_[0]));
    }
    // a runner that exits before reading its request must not kill us
    ::signal(SIGPIPE, SIG_IGN);
}

RunResult ProcessRunner::run(RunRequest const & req)
{
    auto const payload = encode_run_request(req);
    Pipe in;
    Pipe out;
    Pipe err;

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in.fds[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out.fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err.fds[1], STDERR_FILENO);

    std::vector<char *> cargv;
    cargv.reserve(argv_.size() + 1);
    for (auto & a : argv_) {
        cargv.push_back(a.data());
    }
    cargv.push_back(nullptr);

    pid_t pid = -1;
    int const rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
        throw RunnerFault(fmt::format("cannot spawn runner '{}': {}", argv_[0], std::strerror(rc)));
    }
    in.close_read();
    out.close_write();
    err.close_write();
    ::fcntl(in.fds[1], F_SETFL, O_NONBLOCK);

    auto const deadline = std::chrono::steady_clock::now()
                          + std::chrono::milliseconds(static_cast<std::int64_t>(req.limits.time_limit * 1000.0))
                          + overhead_;
    std::string stdout_data;
    std::string stderr_data;
    std::size_t written = 0;
    bool timed_out = false;
    char buf[65536];

    while (out.fds[0] >= 0 || err.fds[0] >= 0) {
        std::vector<pollfd> fds;
        if (in.fds[1] >= 0) {
            fds.push_back({in.fds[1], POLLOUT, 0});
        }
        if (out.fds[0] >= 0) {
            fds.push_back({out.fds[0], POLLIN, 0});
        }
        if (err.fds[0] >= 0) {
            fds.push_back({err.fds[0], POLLIN, 0});
        }
        auto const remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            timed_out = true;
            break;
        }
        int const n = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<std::int64_t>(remaining.count(), 1000)));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        for (auto const & p : fds) {
            if (p.revents == 0) {
                continue;
            }
            if (p.fd == in.fds[1]) {
                if (p.revents & (POLLERR | POLLHUP)) {
                    in.close_write();
                    continue;
                }
                auto const w = ::write(p.fd, payload.data() + written, payload.size() - written);
                if (w > 0) {
                    written += static_cast<std::size_t>(w);
                } else if (w < 0 && errno != EAGAIN && errno != EINTR) {
                    in.close_write();
                    continue;
                }
                if (written == payload.size()) {
                    in.close_write();
                }
            } else {
                auto const r = ::read(p.fd, buf, sizeof buf);
                if (r > 0) {
                    (p.fd == out.fds[0] ? stdout_data : stderr_data).append(buf, static_cast<std::size_t>(r));
                } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
                    (p.fd == out.fds[0] ? out : err).close_read();
                }
            }
        }
    }

    if (timed_out) {
        ::kill(pid, SIGKILL);
    }
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (timed_out) {
        throw RunnerFault(fmt::format("runner exceeded hard deadline of {:.1f}s", req.limits.time_limit
                                                                                     + overhead_.count() / 1000.0));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw RunnerFault(fmt::format("runner exited abnormally (status {}): {}", status, stderr_data.substr(0, 500)));
    }
    try {
        return decode_run_result(stdout_data);
    } catch (FormatError const & e) {
        throw RunnerFault(e.what());
    }
}

json ExecutionMatrix::to_json() const
{
    json sols = json::array();
    for (auto const & s : solutions) {
        sols.push_back(s ? json(*s) : json(nullptr));
    }
    json grid = json::array();
    for (auto const & row : outputs) {
        json r = json::array();
        for (auto const & cell : row) {
            r.push_back(cell ? json(*cell) : json(nullptr));
        }
        grid.push_back(std::move(r));
    }
    return json{{"problem_id", problem_id}, {"inputs", inputs}, {"solutions", sols}, {"outputs", grid}};
}

ExecutionMatrix ExecutionMatrix::from_json(json const & j)
{
    ExecutionMatrix m;
    m.problem_id = j.at("problem_id").get<std::string>();
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    for (auto const & s : j.at("solutions")) {
        m.solutions.push_back(s.is_null() ? std::nullopt : std::optional<std::string>(s.get<std::string>()));
    }
    for (auto const & row : j.at("outputs")) {
        auto & r = m.outputs.emplace_back();
        for (auto const & cell : row) {
            r.push_back(cell.is_null() ? std::nullopt : std::optional<std::string>(cell.get<std::string>()));
        }
        if (r.size() != m.inputs.size()) {
            throw FormatError(fmt::format("matrix '{}' row width {} != {} inputs", m.problem_id, r.size(),
                                          m.inputs.size()));
        }
    }
    if (m.outputs.size() != m.solutions.size()) {
        throw FormatError(fmt::format("matrix '{}' has {} rows for {} solutions", m.problem_id, m.outputs.size(),
                                      m.solutions.size()));
    }
    return m;
}

namespace {

std::size_t resolve_pool_size(std::size_t requested)
{
    if (requested > 0) {
        return requested;
    }
    auto const hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

} // namespace

ExecutionPool::ExecutionPool(std::shared_ptr<Runner> runner, PoolOptions options)
    : runner_(std::move(runner)), cache_enabled_(options.cache), limiter_(resolve_pool_size(options.pool_size))
{
    if (!runner_) {
        throw RunnerError("execution pool needs a runner");
    }
}

std::optional<std::string> ExecutionPool::run_cell(std::string const & program, std::string const & input,
                                                   RunLimits const & limits)
{
    std::string key;
    if (cache_enabled_) {
        key = fmt::format("{}:{}:{:a}:{}", sha256_hex(program), sha256_hex(input), limits.time_limit,
                          limits.memory_limit);
        std::lock_guard lock(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            ++cache_hits_;
            return it->second;
        }
    }
    RunResult result;
    try {
        LimiterSlot slot(limiter_);
        ++runs_;
        result = runner_->run(RunRequest{program, input, limits});
    } catch (RunnerFault const & e) {
        ++faults_;
        log().warn("runner fault: {}", e.what());
        return std::nullopt;
    }
    std::optional<std::string> cell;
    if (result.status == RunStatus::Ok && result.stdout_normalized) {
        cell = normalize_output(*result.stdout_normalized);
    }
    if (cache_enabled_) {
        std::lock_guard lock(cache_mutex_);
        cache_.emplace(key, cell);
    }
    return cell;
}

ExecutionMatrix ExecutionPool::execute_matrix(std::string problem_id, std::vector<std::optional<std::string>> solutions,
                                              std::vector<std::string> inputs, RunLimits const & limits,
                                              Schedule schedule, std::uint64_t schedule_seed)
{
    if (solutions.empty() || inputs.empty()) {
        throw UsageError("execute_matrix needs at least one solution and one input");
    }
    ExecutionMatrix m;
    m.problem_id = std::move(problem_id);
    m.inputs = std::move(inputs);
    m.solutions = std::move(solutions);
    auto const rows = m.solutions.size();
    auto const cols = m.inputs.size();
    m.outputs.assign(rows, std::vector<std::optional<std::string>>(cols));

    std::vector<std::size_t> order(rows * cols);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (schedule == Schedule::Shuffled) {
        RandomSource rng(schedule_seed);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        }
    }

    parallel_for(order.size(), limiter_.limit(), [&](std::size_t k) {
        auto const cell = order[k];
        auto const r = cell / cols;
        auto const c = cell % cols;
        if (!m.solutions[r]) {
            return;
        }
        m.outputs[r][c] = run_cell(*m.solutions[r], m.inputs[c], limits);
    });
    return m;
}

PoolStats ExecutionPool::stats() const
{
    return PoolStats{runs_.load(), cache_hits_.load(), faults_.load(), limiter_.peak()};
}

} // namespace quest
