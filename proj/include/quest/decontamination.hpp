#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quest/io.hpp"

namespace quest {

inline constexpr std::size_t kShingleSize = 50;

/// Maximal runs of ASCII letters, digits and non-ASCII bytes, lowercased.
std::vector<std::string> tokenize(std::string_view text);

/// 64-bit hash of one token window.
std::uint64_t shingle_hash(std::span<std::string const> window);

struct NGramProfile
{
    std::string doc_id;
    std::vector<std::uint64_t> grams; // sorted, unique; empty iff fewer than n tokens
};

NGramProfile make_profile(std::string doc_id, std::string_view text, std::size_t n = kShingleSize);

/// |A ∩ B| / |A ∪ B| over shingle sets; 0 when both are empty.
double jaccard_50gram(NGramProfile const & a, NGramProfile const & b);

struct Document
{
    std::string id;
    std::string text;
};

/// Documents from a JSONL file. The text is taken from "statement",
/// "question", "problem" or "text"; the id from "id" or "problem_id", or
/// "<file stem>:<line>" when absent.
std::vector<Document> load_documents(fs::path const & path);

struct ContaminationMatch
{
    std::string doc_id;
    double score = 0.0;
    std::string benchmark;    // benchmark corpus name, empty when score is 0
    std::string benchmark_doc;
};

struct ContaminationReport
{
    double threshold = 0.0;
    std::size_t shingle_size = kShingleSize;
    std::size_t generated_docs = 0;
    std::size_t benchmark_docs = 0;
    double global_max = 0.0;
    std::vector<ContaminationMatch> per_doc; // generated order
    std::vector<ContaminationMatch> flagged; // score > threshold

    [[nodiscard]] json to_json() const;
    static ContaminationReport from_json(json const & j);
};

struct BenchmarkCorpus
{
    std::string name;
    std::vector<Document> docs;
};

/// Max score of each generated doc against every benchmark doc, through an
/// inverted index on shingle hashes. Ties in the best match go to the first
/// benchmark (then document) in input order.
ContaminationReport scan(std::span<Document const> generated, std::span<BenchmarkCorpus const> benchmarks,
                         double threshold = 0.0, std::size_t workers = 0);

} // namespace quest
