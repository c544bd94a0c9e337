#include "quest/difficulty.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"

namespace quest {

namespace {

json optional_strings(std::vector<std::optional<std::string>> const & v)
{
    json out = json::array();
    for (auto const & s : v) {
        out.push_back(s ? json(*s) : json(nullptr));
    }
    return out;
}

std::vector<std::optional<std::string>> optional_strings_from(json const & j)
{
    std::vector<std::optional<std::string>> out;
    for (auto const & s : j) {
        out.push_back(s.is_null() ? std::nullopt : std::optional<std::string>(s.get<std::string>()));
    }
    return out;
}

} // namespace

GeneratedProblem GeneratedProblem::make(std::string prompt_id, int candidate_index, std::string statement)
{
    GeneratedProblem p;
    p.problem_id = short_hash(fmt::format("{}\n{}\n{}", prompt_id, candidate_index, statement));
    p.prompt_id = std::move(prompt_id);
    p.statement = std::move(statement);
    p.candidate_index = candidate_index;
    return p;
}

json GeneratedProblem::to_json() const
{
    return json{{"problem_id", problem_id},
                {"prompt_id", prompt_id},
                {"candidate_index", candidate_index},
                {"statement", statement}};
}

GeneratedProblem GeneratedProblem::from_json(json const & j)
{
    GeneratedProblem p;
    p.problem_id = j.at("problem_id").get<std::string>();
    p.prompt_id = j.at("prompt_id").get<std::string>();
    p.candidate_index = j.at("candidate_index").get<int>();
    p.statement = j.at("statement").get<std::string>();
    return p;
}

MajorityVote majority_vote(OutputGrid const & outputs)
{
    MajorityVote vote;
    auto const rows = outputs.size();
    auto const cols = rows == 0 ? 0 : outputs.front().size();
    std::size_t absent = 0;
    for (std::size_t t = 0; t < cols; ++t) {
        std::map<std::string_view, int> counts;
        for (std::size_t m = 0; m < rows; ++m) {
            if (outputs[m].size() != cols) {
                throw UsageError("output grid rows differ in width");
            }
            if (outputs[m][t]) {
                ++counts[*outputs[m][t]];
            } else {
                ++absent;
            }
        }
        std::optional<std::string> best;
        int best_count = 0;
        // map order is lexicographic, so strict > keeps the smallest of tied outputs
        for (auto const & [out, n] : counts) {
            if (n > best_count) {
                best = std::string(out);
                best_count = n;
            }
        }
        vote.majority_outputs.push_back(std::move(best));
        vote.majority_counts.push_back(best_count);
    }
    vote.none_fraction =
        rows * cols == 0 ? 0.0 : static_cast<double>(absent) / static_cast<double>(rows * cols);
    return vote;
}

MajorityVote majority_vote(ExecutionMatrix const & matrix)
{
    return majority_vote(matrix.outputs);
}

double compute_delta(std::span<int const> majority_counts, int num_solutions, int t_effective)
{
    if (t_effective < 1 || num_solutions < 1) {
        throw UsageError("compute_delta needs T_effective >= 1 and M >= 1");
    }
    if (majority_counts.size() != static_cast<std::size_t>(t_effective)) {
        throw UsageError(fmt::format("compute_delta: {} counts for T_effective = {}", majority_counts.size(),
                                     t_effective));
    }
    std::int64_t sum = 0;
    for (int f : majority_counts) {
        if (f < 0 || f > num_solutions) {
            throw UsageError(fmt::format("majority count {} outside [0, {}]", f, num_solutions));
        }
        sum += f;
    }
    auto const cells = static_cast<std::int64_t>(num_solutions) * t_effective;
    return static_cast<double>(cells - sum) / static_cast<double>(cells);
}

DifficultyReport score_matrix(ExecutionMatrix const & matrix, double none_threshold)
{
    if (matrix.num_solutions() == 0 || matrix.num_inputs() == 0) {
        throw UsageError("cannot score an empty execution matrix");
    }
    auto vote = majority_vote(matrix);
    DifficultyReport r;
    r.problem_id = matrix.problem_id;
    r.num_tests = static_cast<int>(matrix.num_inputs());
    r.num_solutions = static_cast<int>(matrix.num_solutions());
    r.delta = compute_delta(vote.majority_counts, r.num_solutions, r.num_tests);
    r.majority_outputs = std::move(vote.majority_outputs);
    r.majority_counts = std::move(vote.majority_counts);
    r.none_fraction = vote.none_fraction;
    r.valid = r.none_fraction <= none_threshold;
    r.reason = r.valid ? "ok" : "none_fraction_exceeded";
    return r;
}

DifficultyReport unusable_report(std::string problem_id, std::string reason)
{
    DifficultyReport r;
    r.problem_id = std::move(problem_id);
    r.valid = false;
    r.none_fraction = 1.0;
    r.reason = std::move(reason);
    return r;
}

json DifficultyReport::to_json() const
{
    return json{{"problem_id", problem_id},
                {"T", num_tests},
                {"M", num_solutions},
                {"majority_outputs", optional_strings(majority_outputs)},
                {"majority_counts", majority_counts},
                {"none_fraction", none_fraction},
                {"valid", valid},
                {"delta", delta},
                {"reason", reason}};
}

DifficultyReport DifficultyReport::from_json(json const & j)
{
    DifficultyReport r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.num_tests = j.at("T").get<int>();
    r.num_solutions = j.at("M").get<int>();
    r.majority_outputs = optional_strings_from(j.at("majority_outputs"));
    r.majority_counts = j.at("majority_counts").get<std::vector<int>>();
    r.none_fraction = j.at("none_fraction").get<double>();
    r.valid = j.at("valid").get<bool>();
    r.delta = j.at("delta").get<double>();
    r.reason = j.value("reason", std::string());
    return r;
}

std::vector<std::string> parse_test_inputs(std::string_view response)
{
    std::vector<std::string> tagged;
    std::vector<std::string> plain;
    bool in_block = false;
    bool block_tagged = false;
    bool block_other_lang = false;
    std::string current;
    std::size_t pos = 0;
    while (pos <= response.size()) {
        auto const nl = response.find('\n', pos);
        auto line = response.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? response.size() + 1 : nl + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        auto const first = line.find_first_not_of(" \t");
        auto const trimmed = first == std::string_view::npos ? std::string_view() : line.substr(first);
        if (trimmed.starts_with("```")) {
            if (in_block) {
                if (block_tagged) {
                    tagged.push_back(current);
                } else if (!block_other_lang) {
                    plain.push_back(current);
                }
                in_block = false;
            } else {
                in_block = true;
                current.clear();
                std::string lang(trimmed.substr(3));
                lang.erase(std::remove_if(lang.begin(), lang.end(), [](unsigned char c) { return std::isspace(c); }),
                           lang.end());
                std::transform(lang.begin(), lang.end(), lang.begin(),
                               [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                block_tagged = lang == "input";
                block_other_lang = !lang.empty() && !block_tagged;
            }
            continue;
        }
        if (in_block) {
            current.append(line);
            current.push_back('\n');
        }
    }
    auto & chosen = tagged.empty() ? plain : tagged;
    std::erase_if(chosen, [](std::string const & s) { return s.find_first_not_of(" \t\n") == std::string::npos; });
    return chosen;
}

DifficultyEngine::DifficultyEngine(Gateway & gateway, ExecutionPool & pool, TemplateRegistry const & templates,
                                   DifficultyOptions options)
    : gateway_(gateway), pool_(pool), templates_(templates), options_(options)
{
    if (options_.num_tests < 1) {
        throw UsageError("number of test inputs T must be >= 1");
    }
    if (options_.num_solutions < 2) {
        throw UsageError("number of solutions M must be >= 2");
    }
    if (!(options_.none_threshold >= 0.0 && options_.none_threshold <= 1.0)) {
        throw UsageError("none threshold must be in [0, 1]");
    }
}

std::vector<std::string> DifficultyEngine::generate_test_inputs(GeneratedProblem const & problem)
{
    auto const & tmpl = templates_.get(template_ids::kTestInputGenerate);
    std::vector<std::string> inputs;
    auto const wanted = static_cast<std::size_t>(options_.num_tests);
    for (int attempt = 0; attempt <= options_.input_retries && inputs.size() < wanted; ++attempt) {
        auto const remaining = wanted - inputs.size();
        auto const prompt =
            fill_template(tmpl, {{"num_tests", std::to_string(remaining)}, {"problem", problem.statement}});
        auto const result = gateway_.complete(gateway_.make_request(RoleTag::TestInputGen, prompt, attempt));
        if (!result.ok()) {
            continue;
        }
        auto parsed = parse_test_inputs(result.text);
        for (auto & in : parsed) {
            if (inputs.size() == wanted) {
                break;
            }
            inputs.push_back(std::move(in));
        }
    }
    if (inputs.size() < wanted) {
        log().debug("problem {}: {} of {} test inputs obtained", problem.problem_id, inputs.size(), wanted);
    }
    return inputs;
}

std::vector<std::string> DifficultyEngine::generate_solutions(GeneratedProblem const & problem)
{
    auto const prompt = fill_template(templates_.get(template_ids::kSolutionGenerate), {{"problem", problem.statement}});
    std::vector<CompletionRequest> reqs;
    reqs.reserve(static_cast<std::size_t>(options_.num_solutions));
    for (int m = 0; m < options_.num_solutions; ++m) {
        reqs.push_back(gateway_.make_request(RoleTag::SolutionGen, prompt, m));
    }
    auto results = gateway_.complete_batch(reqs);
    std::vector<std::string> out;
    out.reserve(results.size());
    for (auto & r : results) {
        out.push_back(r.ok() ? std::move(r.text) : std::string());
    }
    return out;
}

Assessment DifficultyEngine::assess(GeneratedProblem const & problem)
{
    auto inputs = generate_test_inputs(problem);
    if (inputs.empty()) {
        return {unusable_report(problem.problem_id, "no_test_inputs"), std::nullopt};
    }
    auto const responses = generate_solutions(problem);
    std::vector<std::optional<std::string>> programs;
    programs.reserve(responses.size());
    for (auto const & r : responses) {
        programs.push_back(extract_code(r));
    }
    auto matrix = pool_.execute_matrix(problem.problem_id, std::move(programs), std::move(inputs), options_.limits);
    auto report = score_matrix(matrix, options_.none_threshold);
    return {std::move(report), std::move(matrix)};
}

} // namespace quest
