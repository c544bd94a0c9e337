#include <doctest.h>

#include <fcntl.h>
#include <sys/file.h>

#include "e2e.hpp"
#include "quest/error.hpp"
#include "quest/pipeline.hpp"

using namespace quest;

namespace {

struct Crash : std::runtime_error
{
    Crash() : std::runtime_error("simulated crash") {}
};

std::string artifact(fs::path const & dir, std::string const & name)
{
    return read_file(dir / name);
}

} // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("stage names and prerequisites")
    {
        for (auto s : kStages) {
            CHECK(stage_from_string(to_string(s)) == s);
        }
        CHECK_FALSE(prerequisite(Stage::Extract));
        CHECK(prerequisite(Stage::Assess) == Stage::Generate);
        CHECK_THROWS_AS(stage_from_string("train"), UsageError);
        CHECK(run_id_for(std::string(64, 'a')) == "run-aaaaaaaaaaaa");
    }

    TEST_CASE("stages refuse to run out of order")
    {
        qt::TempDir dir;
        Pipeline p(qt::e2e_config(), dir / "run");
        CHECK_THROWS_WITH_AS(p.run_stage(Stage::Assess), doctest::Contains("stage generate incomplete"), StageError);
        CHECK(p.run_stage(Stage::Extract) == StageOutcome::Ran);
        CHECK_THROWS_WITH_AS(p.run_stage(Stage::Sample), doctest::Contains("stage build-graph incomplete"),
                             StageError);
    }

    TEST_CASE("full run matches golden artifacts and reruns are no-ops")
    {
        qt::TempDir dir;
        auto const run = dir / "run";
        {
            Pipeline p(qt::e2e_config(), run);
            p.run_all();
            for (auto s : kStages) {
                CHECK(p.manifest().stages.at(std::string(to_string(s))).complete);
            }
        }
        CHECK(qt::golden_mismatches(run).empty());
        auto const manifest = artifact(run, "manifest.json");
        auto const d_hard = artifact(run, "d_hard.jsonl");
        CHECK_FALSE(d_hard.empty());
        {
            Pipeline p(qt::e2e_config(), run);
            for (auto s : kStages) {
                CHECK(p.run_stage(s) == StageOutcome::Skipped);
            }
        }
        CHECK(artifact(run, "manifest.json") == manifest);
        CHECK(artifact(run, "d_hard.jsonl") == d_hard);
    }

    TEST_CASE("a changed config is refused without force")
    {
        qt::TempDir dir;
        auto const run = dir / "run";
        {
            Pipeline p(qt::e2e_config(), run);
            p.run_stage(Stage::Extract);
        }
        auto changed = qt::e2e_config();
        changed.graph.alpha = 0.5;
        CHECK_THROWS_WITH_AS(Pipeline(changed, run), doctest::Contains("--force"), UsageError);
        PipelineOptions force;
        force.force = true;
        Pipeline p(changed, run, force);
        CHECK(p.manifest().config_hash == changed.hash());
        CHECK(p.manifest().stages.empty());

        auto pooled = qt::e2e_config();
        pooled.pool_size = 1;
        pooled.runner_command = {"/somewhere/else"};
        CHECK(pooled.hash() == qt::e2e_config().hash());
    }

    TEST_CASE("a second pipeline cannot share the run directory")
    {
        qt::TempDir dir;
        Pipeline p(qt::e2e_config(), dir / "run");
        CHECK_THROWS_AS(Pipeline(qt::e2e_config(), dir / "run"), StageError);
    }

    TEST_CASE("tampered artifacts invalidate the downstream stage")
    {
        qt::TempDir dir;
        auto const run = dir / "run";
        Pipeline p(qt::e2e_config(), run);
        p.run_all(Stage::BuildGraph);
        write_file_atomic(run / "graph.qcg", "corrupt");
        CHECK_THROWS_WITH_AS(p.run_stage(Stage::Sample), doctest::Contains("stage build-graph incomplete"),
                             StageError);
    }

    TEST_CASE("crash before commit resumes to identical artifacts")
    {
        qt::TempDir dir;
        auto const clean = dir / "clean";
        {
            Pipeline p(qt::e2e_config(), clean);
            p.run_all();
        }
        for (auto crash_at : {Stage::Generate, Stage::Curate}) {
            auto const run = dir / fmt::format("crash-{}", to_string(crash_at));
            {
                PipelineOptions opts;
                opts.before_commit = [crash_at](Stage s) {
                    if (s == crash_at) {
                        throw Crash();
                    }
                };
                Pipeline p(qt::e2e_config(), run, opts);
                CHECK_THROWS_AS(p.run_all(), Crash);
                CHECK_FALSE(p.manifest().stages.count(std::string(to_string(crash_at))));
            }
            {
                Pipeline p(qt::e2e_config(), run);
                CHECK(p.run_stage(Stage::Extract) == StageOutcome::Skipped);
                p.run_all();
            }
            for (auto name : qt::kGoldenArtifacts) {
                CHECK_MESSAGE(artifact(run, std::string(name)) == artifact(clean, std::string(name)), name);
            }
            CHECK(artifact(run, "manifest.json") == artifact(clean, "manifest.json"));
        }
    }

    TEST_CASE("injected runner and backend")
    {
        qt::TempDir dir;
        PipelineOptions opts;
        opts.backend = qt::mock(json::array({{{"text", "nothing parses"}}}));
        Pipeline p(qt::e2e_config(), dir / "run", opts);
        p.run_stage(Stage::Extract);
        auto const concepts = artifact(dir.path() / "run", "concepts.jsonl");
        CHECK(concepts.find("extraction_failed") != std::string::npos);
        CHECK(concepts.find("\"status\":\"ok\"") == std::string::npos);
    }
}
