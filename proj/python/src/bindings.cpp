#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "quest/concept_graph.hpp"
#include "quest/config.hpp"
#include "quest/curation.hpp"
#include "quest/decontamination.hpp"
#include "quest/difficulty.hpp"
#include "quest/error.hpp"
#include "quest/execution.hpp"
#include "quest/logging.hpp"
#include "quest/pipeline.hpp"

namespace py = pybind11;
using namespace quest;

namespace {

using Grid = std::vector<std::vector<std::optional<std::string>>>;

std::string report_json(Grid const & outputs, double threshold)
{
    ExecutionMatrix m;
    m.problem_id = "";
    m.inputs.assign(outputs.empty() ? 0 : outputs.front().size(), "");
    m.solutions.assign(outputs.size(), "");
    m.outputs = outputs;
    return score_matrix(m, threshold).to_json().dump();
}

std::vector<std::string> stratify(std::vector<std::pair<std::string, double>> const & items, std::size_t n,
                                  std::string const & stratum, std::uint64_t seed)
{
    std::vector<DifficultyReport> reports;
    for (auto const & [id, delta] : items) {
        DifficultyReport r;
        r.problem_id = id;
        r.delta = delta;
        r.valid = true;
        reports.push_back(std::move(r));
    }
    return stratify_by_delta(reports, n, stratum_from_string(stratum), seed);
}

std::string run_pipeline(std::string const & config_path, std::string const & run_dir, std::string const & last,
                         bool force)
{
    PipelineOptions opts;
    opts.force = force;
    Pipeline p(RunConfig::load(config_path), run_dir, opts);
    p.run_all(stage_from_string(last));
    return p.manifest().to_json().dump();
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Native core of the quest_pipeline package";

    auto const base = py::register_exception<Error>(m, "QuestError", PyExc_RuntimeError);
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<StageError>(m, "StageError", base.ptr());
    py::register_exception<BackendError>(m, "BackendError", base.ptr());

    m.def("set_log_level", [](std::string const & level) { set_log_level(level); }, py::arg("level"));
    m.def("normalize_output", [](std::string const & s) { return normalize_output(s); }, py::arg("raw"));
    m.def("normalize_statement", [](std::string const & s) { return normalize_statement(s); }, py::arg("raw"));
    m.def("extract_code", [](std::string const & s) { return extract_code(s); }, py::arg("response"));

    m.def(
        "edge_weight",
        [](std::uint64_t freq, std::int64_t diff_sum, std::uint64_t diff_count, std::string const & mode, double alpha,
           double epsilon) {
            GraphParams p{weight_mode_from_string(mode), alpha, epsilon};
            p.validate();
            return edge_weight({freq, diff_sum, diff_count}, p);
        },
        py::arg("freq"), py::arg("diff_sum") = 0, py::arg("diff_count") = 0, py::arg("mode") = "difficulty-aware",
        py::arg("alpha") = 0.2, py::arg("epsilon") = 1.0);

    m.def(
        "compute_delta",
        [](std::vector<int> const & counts, int m_solutions) {
            return compute_delta(counts, m_solutions, static_cast<int>(counts.size()));
        },
        py::arg("majority_counts"), py::arg("num_solutions"));
    m.def("score_grid_json", &report_json, py::arg("outputs"), py::arg("none_threshold") = 0.5);
    m.def("stratify", &stratify, py::arg("items"), py::arg("n"), py::arg("stratum"), py::arg("seed") = 0);

    m.def("tokenize", [](std::string const & s) { return tokenize(s); }, py::arg("text"));
    m.def(
        "jaccard_50gram",
        [](std::string const & a, std::string const & b) {
            return jaccard_50gram(make_profile("a", a), make_profile("b", b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "config_json", [](std::string const & path) { return RunConfig::load(path).to_json().dump(); },
        py::arg("path"));
    m.def("default_config_json", [] { return RunConfig{}.to_json().dump(); });
    m.def("run_pipeline", &run_pipeline, py::arg("config_path"), py::arg("run_dir"), py::arg("last") = "decontaminate",
          py::arg("force") = false, py::call_guard<py::gil_scoped_release>());
}
