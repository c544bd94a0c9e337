#include "quest/pipeline.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fmt/format.h>

#include "quest/concept_graph.hpp"
#include "quest/corpus.hpp"
#include "quest/curation.hpp"
#include "quest/decontamination.hpp"
#include "quest/difficulty.hpp"
#include "quest/error.hpp"
#include "quest/extraction.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"
#include "quest/parallel.hpp"
#include "quest/prompts.hpp"
#include "quest/random.hpp"

namespace quest {

namespace {

constexpr std::string_view kManifestFormat = "quest-run-manifest-v1";

constexpr char const * kCorpusManifest = "corpus_manifest.json";
constexpr char const * kConcepts = "concepts.jsonl";
constexpr char const * kGraph = "graph.qcg";
constexpr char const * kPrompts = "prompts.jsonl";
constexpr char const * kCandidates = "candidates.jsonl";
constexpr char const * kMatrices = "matrices.jsonl";
constexpr char const * kReports = "reports.jsonl";
constexpr char const * kDHard = "d_hard.jsonl";
constexpr char const * kStrata = "strata.json";
constexpr char const * kSft = "sft.jsonl";
constexpr char const * kRlvr = "rlvr.jsonl";
constexpr char const * kDistill = "distill.jsonl";
constexpr char const * kContamination = "contamination.json";

constexpr std::array kAllStrata = {Stratum::Highest, Stratum::Lowest, Stratum::MedianNearest, Stratum::Random};

template <typename T>
std::vector<T> read_records(fs::path const & p)
{
    std::vector<T> out;
    for (auto const & j : read_jsonl(p)) {
        out.push_back(T::from_json(j));
    }
    return out;
}

Corpus load_seed_corpus(RunConfig const & config, fs::path const & manifest_path)
{
    auto corpus = load_corpus(config.seed_corpus, config.corpus_schema);
    if (fs::exists(manifest_path)) {
        auto const recorded = CorpusManifest::from_json(json::parse(read_file(manifest_path)));
        if (recorded.content_sha256 != corpus.manifest().content_sha256) {
            throw StageError(fmt::format("seed corpus {} changed since extract; rerun extract with --force",
                                         config.seed_corpus.string()));
        }
    }
    return corpus;
}

std::size_t worker_count(std::size_t limit)
{
    return std::max<std::size_t>(1, limit);
}

} // namespace

std::string_view to_string(Stage s) noexcept
{
    switch (s) {
    case Stage::Extract: return "extract";
    case Stage::BuildGraph: return "build-graph";
    case Stage::Sample: return "sample";
    case Stage::Generate: return "generate";
    case Stage::Assess: return "assess";
    case Stage::Curate: return "curate";
    case Stage::Export: return "export";
    case Stage::Decontaminate: return "decontaminate";
    }
    return "extract";
}

Stage stage_from_string(std::string_view s)
{
    for (auto st : kStages) {
        if (to_string(st) == s) {
            return st;
        }
    }
    throw UsageError(fmt::format("unknown stage '{}'", s));
}

std::optional<Stage> prerequisite(Stage s) noexcept
{
    auto const it = std::find(kStages.begin(), kStages.end(), s);
    if (it == kStages.begin()) {
        return std::nullopt;
    }
    return *(it - 1);
}

std::string run_id_for(std::string_view config_hash)
{
    return fmt::format("run-{}", config_hash.substr(0, 12));
}

bool RunManifest::complete(Stage s) const
{
    auto const it = stages.find(std::string(to_string(s)));
    return it != stages.end() && it->second.complete;
}

json RunManifest::to_json() const
{
    json st = json::object();
    for (auto s : kStages) {
        auto const name = std::string(to_string(s));
        auto const it = stages.find(name);
        StageRecord const rec = it == stages.end() ? StageRecord{} : it->second;
        st[name] = json{{"complete", rec.complete}, {"artifacts", rec.artifacts}};
    }
    return json{{"format", kManifestFormat}, {"run_id", run_id}, {"config_hash", config_hash}, {"config", config},
                {"stages", st}};
}

RunManifest RunManifest::from_json(json const & j)
{
    if (j.value("format", "") != kManifestFormat) {
        throw FormatError(fmt::format("run manifest: expected format {}", kManifestFormat));
    }
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config");
    for (auto const & [name, rec] : j.at("stages").items()) {
        m.stages[name] = StageRecord{rec.at("complete").get<bool>(),
                                     rec.at("artifacts").get<std::map<std::string, std::string>>()};
    }
    return m;
}

Pipeline::Pipeline(RunConfig config, fs::path run_dir, PipelineOptions options)
    : config_(std::move(config)), run_dir_(std::move(run_dir)), options_(std::move(options)),
      templates_(config_.templates_dir)
{
    config_.validate();
    fs::create_directories(run_dir_);
    auto const lock_path = run_dir_ / ".lock";
    lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) {
        throw IoError(fmt::format("cannot open {}: {}", lock_path.string(), std::strerror(errno)));
    }
    if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        lock_fd_ = -1;
        throw StageError(fmt::format("run directory {} is in use by another process", run_dir_.string()));
    }

    try {
        auto const hash = config_.hash();
        auto const manifest_path = path("manifest.json");
        if (fs::exists(manifest_path)) {
            manifest_ = RunManifest::from_json(json::parse(read_file(manifest_path)));
            if (manifest_.config_hash != hash) {
                if (!options_.force) {
                    throw UsageError(fmt::format("run directory {} was created with a different config "
                                                 "(hash {} vs {}); use --force to restart it",
                                                 run_dir_.string(), manifest_.config_hash.substr(0, 12),
                                                 hash.substr(0, 12)));
                }
                log().warn("config changed; invalidating every stage of {}", run_dir_.string());
                manifest_.stages.clear();
            }
        }
        manifest_.config_hash = hash;
        manifest_.run_id = run_id_for(hash);
        manifest_.config = config_.to_json();
        save_manifest();
    } catch (...) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
        lock_fd_ = -1;
        throw;
    }
}

Pipeline::~Pipeline()
{
    if (lock_fd_ >= 0) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

Gateway & Pipeline::gateway()
{
    if (!gateway_) {
        GatewayOptions go;
        go.max_in_flight = config_.max_in_flight;
        go.cache_enabled = config_.cache;
        if (config_.cache) {
            go.cache_dir = run_dir_ / "cache" / "llm";
        }
        go.retry = config_.retry;
        gateway_ = std::make_unique<Gateway>(go);
        if (options_.backend) {
            for (auto role : {RoleTag::ConceptExtract, RoleTag::ProblemGen, RoleTag::TestInputGen,
                              RoleTag::SolutionGen, RoleTag::TeacherDistill}) {
                ModelSettings ms;
                ms.temperature = config_.temperature;
                gateway_->configure(role, options_.backend, ms);
            }
        } else {
            configure_gateway(*gateway_, config_);
        }
    }
    return *gateway_;
}

ExecutionPool & Pipeline::pool()
{
    if (!pool_) {
        auto runner = options_.runner;
        if (!runner) {
            if (config_.runner_command.empty()) {
                throw UsageError("config: runner.command is required for the assess stage");
            }
            runner = std::make_shared<ProcessRunner>(config_.runner_command);
        }
        pool_ = std::make_unique<ExecutionPool>(runner, PoolOptions{config_.pool_size, true});
    }
    return *pool_;
}

void Pipeline::require(Stage s) const
{
    auto const name = std::string(to_string(s));
    auto const it = manifest_.stages.find(name);
    if (it == manifest_.stages.end() || !it->second.complete) {
        throw StageError(fmt::format("stage {} incomplete", name));
    }
    for (auto const & [file, sha] : it->second.artifacts) {
        auto const p = path(file);
        if (!fs::exists(p) || sha256_hex(read_file(p)) != sha) {
            throw StageError(
                fmt::format("stage {} incomplete: artifact {} is missing or modified; rerun it with --force", name, file));
        }
    }
}

void Pipeline::write_artifact(std::string const & name, std::string_view contents)
{
    write_file_atomic(path(name), contents);
    pending_[name] = sha256_hex(contents);
}

void Pipeline::write_jsonl_artifact(std::string const & name, std::vector<json> const & records)
{
    write_artifact(name, to_jsonl(records));
}

void Pipeline::commit(Stage s)
{
    if (options_.before_commit) {
        options_.before_commit(s);
    }
    manifest_.stages[std::string(to_string(s))] = StageRecord{true, std::move(pending_)};
    pending_.clear();
    save_manifest();
}

void Pipeline::save_manifest() const
{
    write_file_atomic(run_dir_ / "manifest.json", manifest_.to_json().dump(2) + "\n");
}

StageOutcome Pipeline::run_stage(Stage s)
{
    if (manifest_.complete(s) && !options_.force) {
        log().info("stage {} already complete", to_string(s));
        return StageOutcome::Skipped;
    }
    if (auto prev = prerequisite(s)) {
        require(*prev);
    }
    // Downstream results no longer reflect this stage once it re-runs.
    bool downstream = false;
    for (auto st : kStages) {
        if (downstream) {
            manifest_.stages.erase(std::string(to_string(st)));
        }
        if (st == s) {
            manifest_.stages.erase(std::string(to_string(st)));
            downstream = true;
        }
    }
    save_manifest();
    pending_.clear();
    log().info("stage {}: start", to_string(s));
    switch (s) {
    case Stage::Extract: run_extract(); break;
    case Stage::BuildGraph: run_build_graph(); break;
    case Stage::Sample: run_sample(); break;
    case Stage::Generate: run_generate(); break;
    case Stage::Assess: run_assess(); break;
    case Stage::Curate: run_curate(); break;
    case Stage::Export: run_export(); break;
    case Stage::Decontaminate: run_decontaminate(); break;
    }
    commit(s);
    log().info("stage {}: complete", to_string(s));
    return StageOutcome::Ran;
}

void Pipeline::run_all(Stage last)
{
    for (auto s : kStages) {
        // --force applies to the requested stage only, not to a full run.
        bool const force = options_.force;
        options_.force = false;
        run_stage(s);
        options_.force = force;
        if (s == last) {
            break;
        }
    }
}

void Pipeline::run_extract()
{
    auto corpus = load_corpus(config_.seed_corpus, config_.corpus_schema);
    auto const result =
        extract_corpus(corpus, gateway(), templates_.get(template_ids::kConceptExtract), config_.parse_retries);
    log().info("extract: {} problems, {} failed, {} distinct concepts", corpus.size(), result.failed,
               result.vocabulary.size());
    write_artifact(kCorpusManifest, corpus.manifest().to_json().dump(2) + "\n");
    std::vector<json> records;
    for (auto const & r : result.records) {
        records.push_back(r.to_json());
    }
    write_jsonl_artifact(kConcepts, records);
}

void Pipeline::run_build_graph()
{
    auto const corpus = load_seed_corpus(config_, path(kCorpusManifest));
    auto const extraction = apply_extraction_records(corpus, read_records<ExtractionRecord>(path(kConcepts)));
    auto const graph = ConceptGraph::build(extraction.corpus.problems(), config_.graph);
    log().info("build-graph: {} nodes, {} edges, {} topics", graph.nodes().size(), graph.edges().size(),
               graph.topic_roster().size());
    write_artifact(kGraph, serialize_graph(graph));
}

void Pipeline::run_sample()
{
    auto const corpus = load_seed_corpus(config_, path(kCorpusManifest));
    auto const extraction = apply_extraction_records(corpus, read_records<ExtractionRecord>(path(kConcepts)));
    auto const graph = deserialize_graph(read_file(path(kGraph)));
    auto const & tmpl = templates_.get(template_ids::kProblemGenerate);
    std::vector<Problem> pool;
    for (auto const & p : extraction.corpus.problems()) {
        if (p.concepts) {
            pool.push_back(p);
        }
    }
    std::vector<json> records;
    std::unordered_set<std::string> seen;
    for (int i = 0; i < config_.num_prompts; ++i) {
        auto rng = RandomSource::for_item(config_.seed, static_cast<std::uint64_t>(i));
        auto const walk = sample_walk(graph, rng, config_.max_steps);
        auto const exemplars = select_exemplars(walk.combination, pool, static_cast<std::size_t>(config_.shots));
        auto const prompt = render_prompt(tmpl, walk.combination, exemplars);
        if (!seen.insert(prompt.prompt_id).second) {
            log().info("sample: walk {} repeats prompt {}, skipped", i, prompt.prompt_id);
            continue;
        }
        records.push_back(prompt.to_json());
    }
    log().info("sample: {} distinct prompts from {} walks", records.size(), config_.num_prompts);
    write_jsonl_artifact(kPrompts, records);
}

void Pipeline::run_generate()
{
    auto const prompts = read_records<GenerationPrompt>(path(kPrompts));
    auto & gw = gateway();
    std::vector<std::vector<GeneratedProblem>> pools(prompts.size());
    parallel_for(prompts.size(), worker_count(gw.max_in_flight()),
                 [&](std::size_t i) { pools[i] = sample_candidates(prompts[i], gw, config_.num_candidates); });
    std::vector<json> records;
    for (auto const & pool : pools) {
        for (auto const & c : pool) {
            records.push_back(c.to_json());
        }
    }
    log().info("generate: {} candidates for {} prompts", records.size(), prompts.size());
    write_jsonl_artifact(kCandidates, records);
}

void Pipeline::run_assess()
{
    auto const candidates = read_records<GeneratedProblem>(path(kCandidates));
    DifficultyOptions opts;
    opts.num_tests = config_.num_tests;
    opts.num_solutions = config_.num_solutions;
    opts.none_threshold = config_.none_threshold;
    opts.input_retries = config_.input_retries;
    opts.limits = config_.limits;
    DifficultyEngine engine(gateway(), pool(), templates_, opts);
    std::vector<Assessment> results(candidates.size());
    parallel_for(candidates.size(), worker_count(gateway().max_in_flight()),
                 [&](std::size_t i) { results[i] = engine.assess(candidates[i]); });
    std::vector<json> matrices;
    std::vector<json> reports;
    std::size_t valid = 0;
    for (auto const & a : results) {
        if (a.matrix) {
            matrices.push_back(a.matrix->to_json());
        }
        reports.push_back(a.report.to_json());
        valid += a.report.valid ? 1 : 0;
    }
    auto const ps = pool().stats();
    log().info("assess: {} candidates, {} valid; {} runs, {} cached, {} runner faults, peak concurrency {}",
               candidates.size(), valid, ps.runs, ps.cache_hits, ps.faults, ps.peak_concurrency);
    write_jsonl_artifact(kMatrices, matrices);
    write_jsonl_artifact(kReports, reports);
}

void Pipeline::run_curate()
{
    auto const prompts = read_records<GenerationPrompt>(path(kPrompts));
    auto const candidates = read_records<GeneratedProblem>(path(kCandidates));
    auto const reports = read_records<DifficultyReport>(path(kReports));
    std::unordered_map<std::string, DifficultyReport const *> by_id;
    for (auto const & r : reports) {
        by_id[r.problem_id] = &r;
    }
    std::unordered_map<std::string, std::size_t> prompt_index;
    std::vector<CandidatePool> pools;
    for (auto const & p : prompts) {
        prompt_index[p.prompt_id] = pools.size();
        pools.push_back(CandidatePool{p, {}});
    }
    for (auto const & c : candidates) {
        auto const it = by_id.find(c.problem_id);
        auto const pit = prompt_index.find(c.prompt_id);
        if (it == by_id.end() || pit == prompt_index.end()) {
            throw StageError(fmt::format("stage assess incomplete: no report for candidate {}", c.problem_id));
        }
        pools[pit->second].candidates.push_back({c, *it->second});
    }
    std::vector<TrainingPair> pairs;
    for (auto const & pool : pools) {
        if (auto pair = select_hardest(pool, manifest_.run_id, config_.min_delta)) {
            pairs.push_back(std::move(*pair));
        }
    }
    auto const selected = pairs.size();
    pairs = dedup_by_statement(std::move(pairs));
    log().info("curate: {} of {} pools selected, {} after statement dedup", selected, pools.size(), pairs.size());
    std::vector<json> records;
    for (auto const & p : pairs) {
        records.push_back(p.to_json());
    }
    write_jsonl_artifact(kDHard, records);

    std::vector<DifficultyReport> valid;
    std::copy_if(reports.begin(), reports.end(), std::back_inserter(valid), [](auto const & r) { return r.valid; });
    auto const n = std::min(config_.stratum_size, valid.size());
    json strata = json::object();
    for (auto s : kAllStrata) {
        strata[std::string(to_string(s))] = stratify_by_delta(valid, n, s, config_.stratum_seed);
    }
    json doc{{"size", n}, {"valid_reports", valid.size()}, {"seed", config_.stratum_seed}, {"strata", strata}};
    write_artifact(kStrata, doc.dump(2) + "\n");
}

void Pipeline::run_export()
{
    auto const pairs = read_records<TrainingPair>(path(kDHard));
    export_sft(pairs, path(kSft));
    pending_[kSft] = sha256_hex(read_file(path(kSft)));

    auto const candidates = read_records<GeneratedProblem>(path(kCandidates));
    auto const reports = read_records<DifficultyReport>(path(kReports));
    auto const matrices = read_records<ExecutionMatrix>(path(kMatrices));
    std::unordered_map<std::string, GeneratedProblem const *> cand;
    for (auto const & c : candidates) {
        cand[c.problem_id] = &c;
    }
    std::unordered_map<std::string, ExecutionMatrix const *> mat;
    for (auto const & m : matrices) {
        mat[m.problem_id] = &m;
    }
    std::vector<RlvrSource> sources;
    for (auto const & r : reports) {
        if (!r.valid) {
            continue;
        }
        auto const c = cand.find(r.problem_id);
        auto const m = mat.find(r.problem_id);
        if (c == cand.end() || m == mat.end()) {
            throw StageError(fmt::format("stage assess incomplete: no matrix for valid problem {}", r.problem_id));
        }
        sources.push_back({*c->second, *m->second, r});
    }
    auto const rlvr = build_rlvr_records(sources, config_.none_threshold);
    write_artifact(kRlvr, render_rlvr(rlvr));

    export_distill(pairs, path(kDistill));
    pending_[kDistill] = sha256_hex(read_file(path(kDistill)));
    log().info("export: {} SFT pairs, {} RLVR problems", pairs.size(), rlvr.size());
}

void Pipeline::run_decontaminate()
{
    std::map<std::string, std::string> docs;
    for (auto const & p : read_records<TrainingPair>(path(kDHard))) {
        docs.emplace(p.problem_id, p.target_text);
    }
    for (auto const & r : parse_rlvr(read_file(path(kRlvr)))) {
        docs.emplace(r.problem_id, r.statement);
    }
    std::vector<Document> generated;
    for (auto const & [id, text] : docs) {
        generated.push_back({id, text});
    }
    std::vector<BenchmarkCorpus> benchmarks;
    for (auto const & f : config_.decontaminate_against) {
        benchmarks.push_back({f.filename().string(), load_documents(f)});
    }
    if (benchmarks.empty()) {
        log().warn("decontaminate: no benchmark corpora configured");
    }
    auto const report = scan(generated, benchmarks, config_.decontaminate_threshold);
    log().info("decontaminate: {} docs vs {} benchmark docs, global max {}, {} flagged", report.generated_docs,
               report.benchmark_docs, report.global_max, report.flagged.size());
    write_artifact(kContamination, report.to_json().dump(2) + "\n");
}

} // namespace quest
