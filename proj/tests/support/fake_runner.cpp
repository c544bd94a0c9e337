// Scripted stand-in for the sandbox runner. Speaks the quest-runner/1
// protocol on stdin/stdout but interprets program_source as a tiny
// stack-free language instead of executing it:
//
//   v starts as the sum of the integers in the input.
//   echo          output the input verbatim
//   add K | mul K | mod K | sub K
//   print         output v (the default when nothing was output)
//   fail          RuntimeError
//   hang          Timeout (reported immediately)
//   oom           MemoryExceeded
//   silent        NoOutput
//   sleep MS      wait before answering
//   crash-runner  exit 3 without a result
//   garble        write a malformed result
//   if-even OP... apply the rest of the line only when v is even
//
// Unknown words are a RuntimeError, like a program that does not compile.

#include <cctype>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace {

using nlohmann::json;

std::int64_t input_sum(std::string const & input)
{
    std::int64_t sum = 0;
    std::size_t i = 0;
    while (i < input.size()) {
        bool neg = false;
        if (input[i] == '-' && i + 1 < input.size() && std::isdigit(static_cast<unsigned char>(input[i + 1]))) {
            neg = true;
            ++i;
        }
        if (std::isdigit(static_cast<unsigned char>(input[i]))) {
            std::int64_t v = 0;
            while (i < input.size() && std::isdigit(static_cast<unsigned char>(input[i]))) {
                v = v * 10 + (input[i] - '0');
                ++i;
            }
            sum += neg ? -v : v;
        } else {
            ++i;
        }
    }
    return sum;
}

std::string normalize(std::string const & raw)
{
    std::string out;
    std::string line;
    std::vector<std::string> lines;
    std::string text;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\r') {
            text.push_back('\n');
            if (i + 1 < raw.size() && raw[i + 1] == '\n') {
                ++i;
            }
        } else {
            text.push_back(raw[i]);
        }
    }
    std::istringstream in(text);
    while (std::getline(in, line)) {
        auto end = line.find_last_not_of(" \t\f\v");
        lines.push_back(end == std::string::npos ? "" : line.substr(0, end + 1));
    }
    while (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size()) {
            out.push_back('\n');
        }
    }
    return out;
}

json result(std::string const & status, json stdout_value = nullptr, std::string const & err = "")
{
    return json{{"protocol", "quest-runner/1"},
                {"status", status},
                {"stderr_excerpt", err},
                {"wall_time", 0.001},
                {"stdout_normalized", std::move(stdout_value)}};
}

void emit(json const & j)
{
    std::cout << j.dump() << "\n";
    std::cout.flush();
}

} // namespace

int main()
{
    std::string raw((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    json req;
    try {
        req = json::parse(raw);
    } catch (json::exception const &) {
        std::cerr << "fake runner: malformed request\n";
        return 2;
    }
    if (req.value("protocol", "") != "quest-runner/1") {
        std::cerr << "fake runner: protocol mismatch\n";
        return 2;
    }
    auto const input = req.at("input_text").get<std::string>();
    std::istringstream program(req.at("program_source").get<std::string>());
    std::int64_t v = input_sum(input);
    std::string out;
    bool wrote = false;
    std::string line;
    while (std::getline(program, line)) {
        std::istringstream words(line);
        std::string op;
        while (words >> op) {
            if (op == "if-even") {
                if (v % 2 != 0) {
                    break;
                }
                continue;
            }
            if (op == "echo") {
                out += input;
                wrote = true;
            } else if (op == "print") {
                out += std::to_string(v) + "\n";
                wrote = true;
            } else if (op == "add" || op == "mul" || op == "mod" || op == "sub") {
                std::int64_t k = 0;
                if (!(words >> k) || (op == "mod" && k == 0)) {
                    emit(result("RuntimeError", nullptr, "bad operand for " + op));
                    return 0;
                }
                if (op == "add") v += k;
                if (op == "sub") v -= k;
                if (op == "mul") v *= k;
                if (op == "mod") v = ((v % k) + k) % k;
            } else if (op == "fail") {
                emit(result("RuntimeError", nullptr, "Traceback: failure requested"));
                return 0;
            } else if (op == "hang") {
                emit(result("Timeout"));
                return 0;
            } else if (op == "oom") {
                emit(result("MemoryExceeded"));
                return 0;
            } else if (op == "silent") {
                emit(result("NoOutput"));
                return 0;
            } else if (op == "sleep") {
                int ms = 0;
                words >> ms;
                std::this_thread::sleep_for(std::chrono::milliseconds(ms));
            } else if (op == "crash-runner") {
                std::cerr << "fake runner: crashing as requested\n";
                return 3;
            } else if (op == "garble") {
                std::cout << "{not json\n";
                return 0;
            } else {
                emit(result("RuntimeError", nullptr, "SyntaxError: unknown word '" + op + "'"));
                return 0;
            }
        }
    }
    if (!wrote) {
        out = std::to_string(v) + "\n";
    }
    emit(result("Ok", normalize(out)));
    return 0;
}
