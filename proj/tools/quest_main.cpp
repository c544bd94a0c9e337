// quest: resumable pipeline for synthesizing hard competitive-programming problems.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "quest/config.hpp"
#include "quest/decontamination.hpp"
#include "quest/error.hpp"
#include "quest/logging.hpp"
#include "quest/pipeline.hpp"

namespace {

struct Overrides
{
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<double> epsilon;
    std::optional<std::string> weight_mode;
    std::optional<int> max_steps;
    std::optional<int> num_prompts;
    std::optional<int> num_candidates;
    std::optional<int> num_solutions;
    std::optional<int> num_tests;
    std::optional<double> temperature;
    std::optional<double> none_threshold;
    std::optional<double> min_delta;
    std::optional<std::size_t> pool_size;
    std::vector<std::string> against;

    void apply(quest::RunConfig & c) const
    {
        if (seed) c.seed = *seed;
        if (alpha) c.graph.alpha = *alpha;
        if (epsilon) c.graph.epsilon = *epsilon;
        if (weight_mode) c.graph.mode = quest::weight_mode_from_string(*weight_mode);
        if (max_steps) c.max_steps = *max_steps;
        if (num_prompts) c.num_prompts = *num_prompts;
        if (num_candidates) c.num_candidates = *num_candidates;
        if (num_solutions) c.num_solutions = *num_solutions;
        if (num_tests) c.num_tests = *num_tests;
        if (temperature) c.temperature = *temperature;
        if (none_threshold) c.none_threshold = *none_threshold;
        if (min_delta) c.min_delta = *min_delta;
        if (pool_size) c.pool_size = *pool_size;
        if (!against.empty()) {
            c.decontaminate_against.assign(against.begin(), against.end());
        }
        c.validate();
    }
};

struct Common
{
    std::string config;
    std::string run_dir = "run";
    bool force = false;
    Overrides overrides;
};

void add_common(CLI::App * cmd, Common & c)
{
    cmd->add_option("-c,--config", c.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("-r,--run-dir", c.run_dir, "Run directory")->capture_default_str();
    cmd->add_flag("--force", c.force, "Re-run complete stages; adopt a changed config");
    auto & o = c.overrides;
    cmd->add_option("--seed", o.seed, "Run seed");
    cmd->add_option("--alpha", o.alpha, "Frequency/difficulty mix of edge weights")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--epsilon", o.epsilon, "Edge weight smoothing constant");
    cmd->add_option("--weight-mode", o.weight_mode, "co-occurrence | difficulty-aware")
        ->check(CLI::IsMember({"co-occurrence", "difficulty-aware"}));
    cmd->add_option("--max-steps", o.max_steps, "Maximum random-walk length");
    cmd->add_option("--num-prompts", o.num_prompts, "Random walks to sample");
    cmd->add_option("--num-candidates,-K", o.num_candidates, "Candidates per prompt (K)");
    cmd->add_option("--num-solutions,-M", o.num_solutions, "Solutions per candidate (M)");
    cmd->add_option("--num-tests,-T", o.num_tests, "Test inputs per candidate (T)");
    cmd->add_option("--temperature", o.temperature, "Sampling temperature");
    cmd->add_option("--none-threshold", o.none_threshold, "Maximum failed-cell fraction of a valid problem");
    cmd->add_option("--min-delta", o.min_delta, "Drop pools whose best delta is below this");
    cmd->add_option("--pool-size", o.pool_size, "Concurrent sandbox runs (0 = CPU count)");
    cmd->add_option("--against", o.against, "Benchmark JSONL files for decontamination");
}

quest::RunConfig load_config(Common const & c)
{
    auto config = quest::RunConfig::load(c.config);
    c.overrides.apply(config);
    return config;
}

int run_stage(Common const & c, std::optional<quest::Stage> stage)
{
    quest::PipelineOptions opts;
    opts.force = c.force;
    quest::Pipeline pipeline(load_config(c), c.run_dir, opts);
    if (stage) {
        auto const outcome = pipeline.run_stage(*stage);
        fmt::print("{} {}\n", quest::to_string(*stage), outcome == quest::StageOutcome::Ran ? "complete" : "already complete");
    } else {
        pipeline.run_all();
        fmt::print("run {} complete: {}\n", pipeline.manifest().run_id, pipeline.run_dir().string());
    }
    return 0;
}

int standalone_decontaminate(std::string const & generated, std::vector<std::string> const & against,
                             double threshold, std::string const & output)
{
    auto docs = quest::load_documents(generated);
    std::vector<quest::BenchmarkCorpus> benches;
    for (auto const & f : against) {
        benches.push_back({quest::fs::path(f).filename().string(), quest::load_documents(f)});
    }
    auto const report = quest::scan(docs, benches, threshold);
    auto const text = report.to_json().dump(2) + "\n";
    if (output.empty() || output == "-") {
        std::cout << text;
    } else {
        quest::write_file_atomic(output, text);
    }
    fmt::print(stderr, "{} docs, global max {}, {} flagged\n", report.generated_docs, report.global_max,
               report.flagged.size());
    return 0;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"quest: synthesize difficult competitive-programming problems"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off")->capture_default_str();

    Common common;
    std::optional<quest::Stage> selected;
    bool end_to_end = false;

    for (auto stage : quest::kStages) {
        if (stage == quest::Stage::Decontaminate) {
            continue;
        }
        auto * cmd = app.add_subcommand(std::string(quest::to_string(stage)),
                                        fmt::format("Run the {} stage", quest::to_string(stage)));
        add_common(cmd, common);
        cmd->callback([&selected, stage] { selected = stage; });
    }

    auto * deco = app.add_subcommand("decontaminate", "50-gram overlap scan against benchmark corpora");
    std::string generated;
    std::string output;
    double threshold = 0.0;
    deco->add_option("-c,--config", common.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    deco->add_option("-r,--run-dir", common.run_dir, "Run directory")->capture_default_str();
    deco->add_flag("--force", common.force, "Re-run when already complete");
    deco->add_option("--against", common.overrides.against, "Benchmark JSONL files");
    deco->add_option("--generated", generated, "Standalone mode: generated problems JSONL")->check(CLI::ExistingFile);
    deco->add_option("--threshold", threshold, "Standalone mode: flag scores above this")->capture_default_str();
    deco->add_option("-o,--output", output, "Standalone mode: report path (default stdout)");
    deco->callback([&selected] { selected = quest::Stage::Decontaminate; });

    auto * run = app.add_subcommand("run", "Run every stage, resuming a previous run");
    add_common(run, common);
    run->callback([&end_to_end] { end_to_end = true; });

    auto * show = app.add_subcommand("show-config", "Print the effective configuration");
    std::string show_path;
    show->add_option("-c,--config", show_path, "Run configuration (JSON)")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const & e) {
        int const rc = app.exit(e);
        return rc == 0 ? 0 : quest::exit_code_for(quest::ErrorKind::Usage);
    }

    try {
        quest::set_log_level(log_level);
        if (show->parsed()) {
            auto const config = show_path.empty() ? quest::RunConfig{} : quest::RunConfig::load(show_path);
            std::cout << config.to_json().dump(2) << "\n";
            return 0;
        }
        if (deco->parsed() && !generated.empty()) {
            if (common.overrides.against.empty()) {
                throw quest::UsageError("--generated requires at least one --against file");
            }
            return standalone_decontaminate(generated, common.overrides.against, threshold, output);
        }
        if (deco->parsed() && common.config.empty()) {
            throw quest::UsageError("decontaminate needs --config (pipeline mode) or --generated (standalone mode)");
        }
        return run_stage(common, end_to_end ? std::nullopt : selected);
    } catch (quest::Error const & e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return quest::exit_code_for(e.kind());
    } catch (std::exception const & e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
