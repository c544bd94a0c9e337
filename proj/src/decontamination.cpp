#include "quest/decontamination.hpp"

#include <algorithm>
#include <optional>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/parallel.hpp"

namespace quest {

namespace {

bool word_byte(unsigned char c) noexcept
{
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

std::size_t intersection_size(std::vector<std::uint64_t> const & a, std::vector<std::uint64_t> const & b)
{
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t n = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

json match_to_json(ContaminationMatch const & m)
{
    return json{{"doc_id", m.doc_id}, {"score", m.score}, {"benchmark", m.benchmark}, {"benchmark_doc", m.benchmark_doc}};
}

ContaminationMatch match_from_json(json const & j)
{
    return {j.at("doc_id").get<std::string>(), j.at("score").get<double>(), j.at("benchmark").get<std::string>(),
            j.at("benchmark_doc").get<std::string>()};
}

} // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto const c = static_cast<unsigned char>(ch);
        if (word_byte(c)) {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

std::uint64_t shingle_hash(std::span<std::string const> window)
{
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (auto const & tok : window) {
        h = mix64(h ^ fnv1a64(tok)) + 0x9e3779b97f4a7c15ULL;
    }
    return mix64(h ^ window.size());
}

NGramProfile make_profile(std::string doc_id, std::string_view text, std::size_t n)
{
    if (n == 0) {
        throw UsageError("shingle size must be positive");
    }
    NGramProfile p{std::move(doc_id), {}};
    auto const tokens = tokenize(text);
    if (tokens.size() >= n) {
        p.grams.reserve(tokens.size() - n + 1);
        std::span<std::string const> all(tokens);
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            p.grams.push_back(shingle_hash(all.subspan(i, n)));
        }
        std::sort(p.grams.begin(), p.grams.end());
        p.grams.erase(std::unique(p.grams.begin(), p.grams.end()), p.grams.end());
    }
    return p;
}

double jaccard_50gram(NGramProfile const & a, NGramProfile const & b)
{
    if (a.grams.empty() && b.grams.empty()) {
        return 0.0;
    }
    auto const inter = intersection_size(a.grams, b.grams);
    auto const uni = a.grams.size() + b.grams.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Document> load_documents(fs::path const & path)
{
    std::vector<Document> out;
    auto const records = read_jsonl(path);
    auto const stem = path.stem().string();
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto const & r = records[i];
        if (!r.is_object()) {
            throw FormatError(fmt::format("{}: record {} is not an object", path.string(), i + 1));
        }
        Document d;
        for (auto const * key : {"statement", "question", "problem", "text"}) {
            if (r.contains(key) && r[key].is_string()) {
                d.text = r[key].get<std::string>();
                break;
            }
        }
        if (d.text.empty()) {
            throw FormatError(fmt::format("{}: record {} has no statement/question/problem/text field", path.string(), i + 1));
        }
        for (auto const * key : {"id", "problem_id"}) {
            if (r.contains(key) && (r[key].is_string() || r[key].is_number())) {
                d.id = r[key].is_string() ? r[key].get<std::string>() : r[key].dump();
                break;
            }
        }
        if (d.id.empty()) {
            d.id = fmt::format("{}:{}", stem, i + 1);
        }
        out.push_back(std::move(d));
    }
    return out;
}

json ContaminationReport::to_json() const
{
    json per = json::array();
    for (auto const & m : per_doc) {
        per.push_back(match_to_json(m));
    }
    json fl = json::array();
    for (auto const & m : flagged) {
        fl.push_back(match_to_json(m));
    }
    return json{{"threshold", threshold},       {"shingle_size", shingle_size}, {"generated_docs", generated_docs},
                {"benchmark_docs", benchmark_docs}, {"global_max", global_max},   {"per_doc", per},
                {"flagged", fl}};
}

ContaminationReport ContaminationReport::from_json(json const & j)
{
    ContaminationReport r;
    r.threshold = j.at("threshold").get<double>();
    r.shingle_size = j.at("shingle_size").get<std::size_t>();
    r.generated_docs = j.at("generated_docs").get<std::size_t>();
    r.benchmark_docs = j.at("benchmark_docs").get<std::size_t>();
    r.global_max = j.at("global_max").get<double>();
    for (auto const & m : j.at("per_doc")) {
        r.per_doc.push_back(match_from_json(m));
    }
    for (auto const & m : j.at("flagged")) {
        r.flagged.push_back(match_from_json(m));
    }
    return r;
}

ContaminationReport scan(std::span<Document const> generated, std::span<BenchmarkCorpus const> benchmarks,
                         double threshold, std::size_t workers)
{
    if (workers == 0) {
        workers = std::max(1U, std::thread::hardware_concurrency());
    }
    struct BenchDoc
    {
        std::size_t corpus;
        std::string const * id;
    };
    std::vector<BenchDoc> bench;
    std::vector<Document const *> bench_src;
    for (std::size_t c = 0; c < benchmarks.size(); ++c) {
        for (auto const & d : benchmarks[c].docs) {
            bench.push_back({c, &d.id});
            bench_src.push_back(&d);
        }
    }

    std::vector<NGramProfile> bench_profiles(bench.size());
    parallel_for(bench.size(), workers,
                 [&](std::size_t i) { bench_profiles[i] = make_profile(bench_src[i]->id, bench_src[i]->text); });

    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> index;
    for (std::size_t i = 0; i < bench_profiles.size(); ++i) {
        for (auto g : bench_profiles[i].grams) {
            index[g].push_back(static_cast<std::uint32_t>(i));
        }
    }

    ContaminationReport report;
    report.threshold = threshold;
    report.generated_docs = generated.size();
    report.benchmark_docs = bench.size();
    report.per_doc.resize(generated.size());

    parallel_for(generated.size(), workers, [&](std::size_t gi) {
        auto const profile = make_profile(generated[gi].id, generated[gi].text);
        std::unordered_map<std::uint32_t, std::size_t> shared;
        for (auto g : profile.grams) {
            if (auto it = index.find(g); it != index.end()) {
                for (auto b : it->second) {
                    ++shared[b];
                }
            }
        }
        ContaminationMatch best{generated[gi].id, 0.0, {}, {}};
        std::optional<std::uint32_t> best_idx;
        for (auto const & [b, inter] : shared) {
            auto const uni = profile.grams.size() + bench_profiles[b].grams.size() - inter;
            double const s = static_cast<double>(inter) / static_cast<double>(uni);
            if (s > best.score || (s == best.score && best_idx && b < *best_idx)) {
                best.score = s;
                best_idx = b;
            }
        }
        if (best_idx) {
            best.benchmark = benchmarks[bench[*best_idx].corpus].name;
            best.benchmark_doc = *bench[*best_idx].id;
        }
        report.per_doc[gi] = std::move(best);
    });

    for (auto const & m : report.per_doc) {
        report.global_max = std::max(report.global_max, m.score);
        if (m.score > threshold) {
            report.flagged.push_back(m);
        }
    }
    return report;
}

} // namespace quest
