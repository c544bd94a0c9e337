#include "quest/templates.hpp"

#include <fmt/format.h>

#include "quest/error.hpp"

namespace quest {

namespace {

constexpr std::string_view kConceptExtractText = R"(You are an expert in competitive programming. Read the problem below and identify the concepts needed to solve it.

Topics are general directions of the problem, for example "Dynamic Programming", "Graph Algorithms" or "Number Theory".
Knowledge points are the fine-grained techniques a solver must know, for example "Knapsack Problem", "Dijkstra's Algorithm" or "Prime Factorization".

Answer with exactly two sections and nothing else, one item per line:

Topics:
- <topic>
Knowledge Points:
- <knowledge point>

Example answer for a problem asking for the cheapest route between two cities:

Topics:
- Graph Algorithms
Knowledge Points:
- Dijkstra's Algorithm
- Priority Queue

Problem:
{{problem}}
)";

constexpr std::string_view kProblemGenerateText = R"(You are an expert competitive programming problem setter. Your task is to create one new, original and challenging coding problem.

The new problem must combine the following concepts:
{{concepts}}

Below are example problems together with the concepts they involve.

{{exemplars}}

Write a new problem that requires all of the concepts listed above. The problem must be self-contained, with a precise input format, output format and constraints. Do not include a solution. Begin your answer with the line "New Problem:" followed by the problem statement.
)";

constexpr std::string_view kTestInputGenerateText = R"(You are given a competitive programming problem. Write {{num_tests}} distinct test inputs for it. Cover edge cases, small cases and large cases, and make every input follow the input format and constraints exactly.

Output each test input in its own fenced block that opens with ```input and closes with ```. Output only the test inputs.

Example for a problem that reads two integers a and b:

```input
1 2
```
```input
-1000000000 1000000000
```

Problem:
{{problem}}
)";

constexpr std::string_view kSolutionGenerateText = R"(Solve the following competitive programming problem. Your program must read from standard input and write to standard output. Think about the algorithm first, then give the complete program in a single fenced code block.

Problem:
{{problem}}
)";

} // namespace

std::vector<std::string> PromptTemplate::placeholders() const
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string::npos) {
        auto const end = text.find("}}", pos + 2);
        if (end == std::string::npos) {
            break;
        }
        auto name = text.substr(pos + 2, end - pos - 2);
        if (std::find(out.begin(), out.end(), name) == out.end()) {
            out.push_back(std::move(name));
        }
        pos = end + 2;
    }
    return out;
}

std::string fill_template(PromptTemplate const & tmpl, std::map<std::string, std::string> const & values)
{
    std::string out;
    out.reserve(tmpl.text.size() * 2);
    std::size_t pos = 0;
    for (;;) {
        auto const open = tmpl.text.find("{{", pos);
        if (open == std::string::npos) {
            out.append(tmpl.text, pos, std::string::npos);
            break;
        }
        auto const close = tmpl.text.find("}}", open + 2);
        if (close == std::string::npos) {
            throw FormatError(fmt::format("template '{}': unterminated placeholder", tmpl.id));
        }
        out.append(tmpl.text, pos, open - pos);
        auto const name = tmpl.text.substr(open + 2, close - open - 2);
        auto it = values.find(name);
        if (it == values.end()) {
            throw FormatError(fmt::format("template '{}': placeholder '{}' unfilled", tmpl.id, name));
        }
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

TemplateRegistry::TemplateRegistry()
{
    put({std::string(template_ids::kConceptExtract), std::string(kConceptExtractText)});
    put({std::string(template_ids::kProblemGenerate), std::string(kProblemGenerateText)});
    put({std::string(template_ids::kTestInputGenerate), std::string(kTestInputGenerateText)});
    put({std::string(template_ids::kSolutionGenerate), std::string(kSolutionGenerateText)});
}

TemplateRegistry::TemplateRegistry(std::optional<fs::path> const & override_dir) : TemplateRegistry()
{
    if (!override_dir) {
        return;
    }
    if (!fs::is_directory(*override_dir)) {
        throw UsageError(fmt::format("template directory '{}' does not exist", override_dir->string()));
    }
    for (auto const & entry : fs::directory_iterator(*override_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            put({entry.path().stem().string(), read_file(entry.path())});
        }
    }
}

PromptTemplate const & TemplateRegistry::get(std::string_view id) const
{
    auto it = templates_.find(id);
    if (it == templates_.end()) {
        throw UsageError(fmt::format("unknown prompt template '{}'", id));
    }
    return it->second;
}

void TemplateRegistry::put(PromptTemplate tmpl)
{
    auto id = tmpl.id;
    templates_.insert_or_assign(std::move(id), std::move(tmpl));
}

std::vector<std::string> TemplateRegistry::ids() const
{
    std::vector<std::string> out;
    for (auto const & [id, _] : templates_) {
        out.push_back(id);
    }
    return out;
}

} // namespace quest
