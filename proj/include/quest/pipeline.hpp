#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "quest/config.hpp"
#include "quest/execution.hpp"
#include "quest/gateway.hpp"
#include "quest/io.hpp"
#include "quest/templates.hpp"

namespace quest {

enum class Stage
{
    Extract,
    BuildGraph,
    Sample,
    Generate,
    Assess,
    Curate,
    Export,
    Decontaminate,
};

inline constexpr std::array kStages = {Stage::Extract,  Stage::BuildGraph, Stage::Sample, Stage::Generate,
                                       Stage::Assess,   Stage::Curate,     Stage::Export, Stage::Decontaminate};

std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view s);
/// Stage whose artifacts `s` consumes; absent for extract.
std::optional<Stage> prerequisite(Stage s) noexcept;

struct StageRecord
{
    bool complete = false;
    std::map<std::string, std::string> artifacts; // file name -> sha256

    friend bool operator==(StageRecord const &, StageRecord const &) = default;
};

struct RunManifest
{
    std::string run_id;
    std::string config_hash;
    json config;
    std::map<std::string, StageRecord> stages; // keyed by stage name

    [[nodiscard]] bool complete(Stage s) const;
    [[nodiscard]] json to_json() const;
    static RunManifest from_json(json const & j);
};

struct PipelineOptions
{
    /// Re-run complete stages and adopt a changed config.
    bool force = false;
    /// Replaces the configured runner command.
    std::shared_ptr<Runner> runner;
    /// Replaces the backends from the config for every role.
    std::shared_ptr<Backend> backend;
    /// Called after a stage's artifacts are written and before the manifest
    /// records it; throwing here simulates a crash at that point.
    std::function<void(Stage)> before_commit;
};

enum class StageOutcome
{
    Ran,
    Skipped, // already complete
};

/// Stage-granular, resumable orchestration over one run directory. Holds an
/// exclusive lock on the directory for its lifetime.
class Pipeline
{
public:
    /// Throws UsageError when the directory belongs to a run with a different
    /// config (unless force) and StageError when another process holds the lock.
    Pipeline(RunConfig config, fs::path run_dir, PipelineOptions options = {});
    ~Pipeline();
    Pipeline(Pipeline const &) = delete;
    Pipeline & operator=(Pipeline const &) = delete;

    /// Throws StageError "stage <prev> incomplete" when the prerequisite is
    /// missing or its artifacts no longer match the manifest.
    StageOutcome run_stage(Stage s);
    /// Every stage in order, through `last`.
    void run_all(Stage last = Stage::Decontaminate);

    [[nodiscard]] RunManifest const & manifest() const noexcept { return manifest_; }
    [[nodiscard]] fs::path const & run_dir() const noexcept { return run_dir_; }
    [[nodiscard]] RunConfig const & config() const noexcept { return config_; }

private:
    void run_extract();
    void run_build_graph();
    void run_sample();
    void run_generate();
    void run_assess();
    void run_curate();
    void run_export();
    void run_decontaminate();

    Gateway & gateway();
    ExecutionPool & pool();
    void require(Stage s) const;
    void write_artifact(std::string const & name, std::string_view contents);
    void write_jsonl_artifact(std::string const & name, std::vector<json> const & records);
    void commit(Stage s);
    void save_manifest() const;
    [[nodiscard]] fs::path path(std::string const & name) const { return run_dir_ / name; }

    RunConfig config_;
    fs::path run_dir_;
    PipelineOptions options_;
    RunManifest manifest_;
    TemplateRegistry templates_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<ExecutionPool> pool_;
    std::map<std::string, std::string> pending_; // artifacts of the running stage
    int lock_fd_ = -1;
};

/// Run id derived from the config hash.
std::string run_id_for(std::string_view config_hash);

} // namespace quest
