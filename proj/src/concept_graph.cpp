#include "quest/concept_graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>

#include <fmt/format.h>

#include "quest/error.hpp"
#include "quest/hashing.hpp"
#include "quest/logging.hpp"

namespace quest {

namespace {

constexpr std::string_view kGraphMagic = "quest-concept-graph";
constexpr int kGraphVersion = 1;

} // namespace

std::string_view to_string(WeightMode mode) noexcept
{
    return mode == WeightMode::CoOccurrence ? "co-occurrence" : "difficulty-aware";
}

WeightMode weight_mode_from_string(std::string_view s)
{
    if (s == "co-occurrence" || s == "cooccurrence") {
        return WeightMode::CoOccurrence;
    }
    if (s == "difficulty-aware") {
        return WeightMode::DifficultyAware;
    }
    throw UsageError(fmt::format("unknown weight mode '{}' (expected co-occurrence or difficulty-aware)", s));
}

void GraphParams::validate() const
{
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw UsageError(fmt::format("alpha must be in [0, 1], got {}", alpha));
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw UsageError(fmt::format("epsilon must be positive, got {}", epsilon));
    }
}

double EdgeStats::mean_difficulty() const noexcept
{
    return diff_count == 0 ? 0.0 : static_cast<double>(diff_sum) / static_cast<double>(diff_count);
}

double edge_weight(EdgeStats const & stats, GraphParams const & params)
{
    auto const freq = static_cast<double>(stats.freq);
    if (params.mode == WeightMode::CoOccurrence) {
        return std::log(freq + params.epsilon);
    }
    return std::log(params.alpha * freq + (1.0 - params.alpha) * stats.mean_difficulty() + params.epsilon);
}

ConceptGraph::ConceptGraph(std::vector<Concept> nodes, std::vector<Edge> edges, GraphParams params)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), params_(params)
{
    params_.validate();
    if (nodes_.empty()) {
        throw FormatError("concept graph has no nodes");
    }
    if (!std::is_sorted(nodes_.begin(), nodes_.end())
        || std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end()) {
        std::sort(nodes_.begin(), nodes_.end());
        if (std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end()) {
            throw FormatError("concept graph has duplicate nodes");
        }
        throw FormatError("concept graph nodes must be sorted");
    }
    auto const n = static_cast<NodeId>(nodes_.size());
    for (auto const & e : edges_) {
        if (e.u >= e.v || e.v >= n) {
            throw FormatError(fmt::format("invalid edge ({}, {})", e.u, e.v));
        }
        if (e.stats.freq < 1 || e.stats.diff_count > e.stats.freq
            || e.stats.diff_sum < static_cast<std::int64_t>(e.stats.diff_count)
            || e.stats.diff_sum > 5 * static_cast<std::int64_t>(e.stats.diff_count)) {
            throw FormatError(fmt::format("edge ({}, {}) has inconsistent statistics", e.u, e.v));
        }
    }
    std::sort(edges_.begin(), edges_.end(),
              [](Edge const & a, Edge const & b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
    for (std::size_t i = 1; i < edges_.size(); ++i) {
        if (edges_[i - 1].u == edges_[i].u && edges_[i - 1].v == edges_[i].v) {
            throw FormatError(fmt::format("duplicate edge ({}, {})", edges_[i].u, edges_[i].v));
        }
    }

    for (NodeId i = 0; i < n; ++i) {
        if (nodes_[i].kind == ConceptKind::Topic) {
            topics_.push_back(i);
        }
    }
    if (topics_.empty()) {
        throw FormatError("concept graph has no topic nodes");
    }

    std::vector<std::size_t> degree(n + 1, 0);
    for (auto const & e : edges_) {
        ++degree[e.u];
        ++degree[e.v];
    }
    adj_offsets_.assign(n + 1, 0);
    for (NodeId i = 0; i < n; ++i) {
        adj_offsets_[i + 1] = adj_offsets_[i] + degree[i];
    }
    adjacency_.resize(adj_offsets_[n]);
    std::vector<std::size_t> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
    for (std::size_t ei = 0; ei < edges_.size(); ++ei) {
        adjacency_[fill[edges_[ei].u]++] = Neighbor{edges_[ei].v, ei};
        adjacency_[fill[edges_[ei].v]++] = Neighbor{edges_[ei].u, ei};
    }
    for (NodeId i = 0; i < n; ++i) {
        std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i]),
                  adjacency_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i + 1]),
                  [](Neighbor const & a, Neighbor const & b) { return a.node < b.node; });
    }
}

ConceptGraph ConceptGraph::build(std::span<Problem const> problems, GraphParams params)
{
    params.validate();
    std::set<Concept> vocabulary;
    for (auto const & p : problems) {
        if (p.concepts) {
            auto all = p.concepts->all();
            vocabulary.insert(all.begin(), all.end());
        }
    }
    if (vocabulary.empty()) {
        throw FormatError("cannot build a concept graph from an empty concept vocabulary");
    }
    std::vector<Concept> nodes(vocabulary.begin(), vocabulary.end());
    auto index_of = [&](Concept const & c) {
        return static_cast<NodeId>(std::lower_bound(nodes.begin(), nodes.end(), c) - nodes.begin());
    };

    std::map<std::pair<NodeId, NodeId>, EdgeStats> stats;
    for (auto const & p : problems) {
        if (!p.concepts) {
            continue;
        }
        std::vector<NodeId> ids;
        for (auto const & c : p.concepts->all()) {
            ids.push_back(index_of(c));
        }
        // ids ascending since all() is sorted
        for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                auto & s = stats[{ids[i], ids[j]}];
                ++s.freq;
                if (p.difficulty_label) {
                    s.diff_sum += *p.difficulty_label;
                    ++s.diff_count;
                }
            }
        }
    }
    std::vector<Edge> edges;
    edges.reserve(stats.size());
    for (auto const & [key, s] : stats) {
        edges.push_back(Edge{key.first, key.second, s});
    }
    log().info("concept graph: {} nodes, {} edges, mode {}", nodes.size(), edges.size(), to_string(params.mode));
    return ConceptGraph(std::move(nodes), std::move(edges), params);
}

std::optional<NodeId> ConceptGraph::find(Concept const & c) const
{
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), c);
    if (it == nodes_.end() || *it != c) {
        return std::nullopt;
    }
    return static_cast<NodeId>(it - nodes_.begin());
}

std::span<Neighbor const> ConceptGraph::neighbors(NodeId u) const
{
    if (u >= nodes_.size()) {
        throw std::out_of_range(fmt::format("node {} out of range", u));
    }
    return std::span<Neighbor const>(adjacency_.data() + adj_offsets_[u], adj_offsets_[u + 1] - adj_offsets_[u]);
}

EdgeStats const * ConceptGraph::edge_stats(NodeId u, NodeId v) const
{
    auto const nbrs = neighbors(u);
    auto it = std::lower_bound(nbrs.begin(), nbrs.end(), v, [](Neighbor const & n, NodeId x) { return n.node < x; });
    if (it == nbrs.end() || it->node != v) {
        return nullptr;
    }
    return &edges_[it->edge].stats;
}

double ConceptGraph::weight(NodeId u, NodeId v) const
{
    auto const * s = edge_stats(u, v);
    if (!s) {
        throw std::out_of_range(fmt::format("no edge between {} and {}", u, v));
    }
    return edge_weight(*s, params_);
}

ConceptGraph ConceptGraph::with_params(GraphParams params) const
{
    return ConceptGraph(nodes_, edges_, params);
}

std::vector<Transition> transition_distribution(ConceptGraph const & graph, NodeId u)
{
    auto const nbrs = graph.neighbors(u);
    if (nbrs.empty()) {
        throw EmptyNeighborhoodError(fmt::format("concept '{}' has no neighbors", graph.nodes()[u].name));
    }
    std::vector<Transition> out;
    out.reserve(nbrs.size());
    double max_w = -std::numeric_limits<double>::infinity();
    for (auto const & n : nbrs) {
        double const w = edge_weight(graph.edges()[n.edge].stats, graph.params());
        out.push_back({n.node, w});
        max_w = std::max(max_w, w);
    }
    double total = 0.0;
    for (auto & t : out) {
        t.probability = std::exp(t.probability - max_w);
        total += t.probability;
    }
    for (auto & t : out) {
        t.probability /= total;
    }
    return out;
}

NodeId sample_next(ConceptGraph const & graph, NodeId u, RandomSource & rng)
{
    auto const dist = transition_distribution(graph, u);
    double const r = rng.uniform_real();
    double acc = 0.0;
    for (auto const & t : dist) {
        acc += t.probability;
        if (r < acc) {
            return t.node;
        }
    }
    return dist.back().node;
}

WalkSample sample_walk(ConceptGraph const & graph, RandomSource & rng, int max_steps, WalkLength length)
{
    if (max_steps < 0) {
        throw UsageError("max_steps must be non-negative");
    }
    auto const & roster = graph.topic_roster();
    NodeId current = roster[rng.uniform_index(roster.size())];
    int steps = max_steps;
    if (length == WalkLength::Uniform && max_steps > 0) {
        steps = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_steps)));
    }

    WalkSample sample;
    sample.start_topic = graph.nodes()[current];
    sample.path.push_back(sample.start_topic);
    for (int s = 0; s < steps; ++s) {
        if (graph.neighbors(current).empty()) {
            if (s == 0) {
                log().debug("walk start '{}' has no neighbors", sample.start_topic.name);
            }
            break;
        }
        current = sample_next(graph, current, rng);
        sample.path.push_back(graph.nodes()[current]);
    }
    sample.combination.insert(sample.path.begin(), sample.path.end());
    return sample;
}

std::string serialize_graph(ConceptGraph const & graph)
{
    std::string out;
    out += fmt::format("{} {}\n", kGraphMagic, kGraphVersion);
    out += fmt::format("mode {}\n", to_string(graph.params().mode));
    out += fmt::format("alpha {:a}\n", graph.params().alpha);
    out += fmt::format("epsilon {:a}\n", graph.params().epsilon);
    out += fmt::format("nodes {}\n", graph.nodes().size());
    for (auto const & c : graph.nodes()) {
        out += fmt::format("{} {}\n", c.kind == ConceptKind::Topic ? 't' : 'k', c.name);
    }
    out += fmt::format("edges {}\n", graph.edges().size());
    for (auto const & e : graph.edges()) {
        out += fmt::format("{} {} {} {} {}\n", e.u, e.v, e.stats.freq, e.stats.diff_sum, e.stats.diff_count);
    }
    out += fmt::format("end {}\n", sha256_hex(out));
    return out;
}

namespace {

class LineReader
{
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    std::optional<std::string_view> next()
    {
        if (pos_ >= text_.size()) {
            return std::nullopt;
        }
        auto const nl = text_.find('\n', pos_);
        if (nl == std::string_view::npos) {
            // a final line without newline is a truncated file
            return std::nullopt;
        }
        auto line = text_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        ++line_;
        return line;
    }

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 0;
};

std::string_view expect_key(LineReader & r, std::string_view key, std::string_view section)
{
    auto line = r.next();
    if (!line) {
        throw FormatError(fmt::format("graph file truncated in {} section", section), r.line() + 1);
    }
    if (!line->starts_with(key) || line->size() <= key.size() || (*line)[key.size()] != ' ') {
        throw FormatError(fmt::format("expected '{}' line in graph file", key), r.line());
    }
    return line->substr(key.size() + 1);
}

std::uint64_t parse_u64(std::string_view s, std::size_t line)
{
    std::uint64_t v = 0;
    auto const [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw FormatError(fmt::format("invalid integer '{}' in graph file", s), line);
    }
    return v;
}

double parse_hexfloat(std::string_view s, std::size_t line)
{
    std::string const buf(s);
    char * end = nullptr;
    double const v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || buf.empty()) {
        throw FormatError(fmt::format("invalid number '{}' in graph file", s), line);
    }
    return v;
}

} // namespace

ConceptGraph deserialize_graph(std::string_view text)
{
    LineReader r(text);
    auto header = r.next();
    if (!header || !header->starts_with(kGraphMagic)) {
        throw FormatError("not a concept graph file", 1);
    }
    auto const version = header->substr(kGraphMagic.size());
    if (version != fmt::format(" {}", kGraphVersion)) {
        throw FormatError(fmt::format("unsupported graph file version '{}'", version.substr(version.empty() ? 0 : 1)),
                          1);
    }

    GraphParams params;
    params.mode = weight_mode_from_string(expect_key(r, "mode", "header"));
    params.alpha = parse_hexfloat(expect_key(r, "alpha", "header"), r.line());
    params.epsilon = parse_hexfloat(expect_key(r, "epsilon", "header"), r.line());

    auto const node_count = parse_u64(expect_key(r, "nodes", "header"), r.line());
    std::vector<Concept> nodes;
    nodes.reserve(node_count);
    for (std::uint64_t i = 0; i < node_count; ++i) {
        auto line = r.next();
        if (!line) {
            throw FormatError("truncated node section", r.line() + 1);
        }
        if (line->size() < 3 || ((*line)[0] != 't' && (*line)[0] != 'k') || (*line)[1] != ' ') {
            throw FormatError("malformed node line", r.line());
        }
        nodes.push_back(Concept{(*line)[0] == 't' ? ConceptKind::Topic : ConceptKind::KnowledgePoint,
                                std::string(line->substr(2))});
    }

    auto const edge_count = parse_u64(expect_key(r, "edges", "node"), r.line());
    std::vector<Edge> edges;
    edges.reserve(edge_count);
    for (std::uint64_t i = 0; i < edge_count; ++i) {
        auto line = r.next();
        if (!line || line->starts_with("end ")) {
            throw FormatError(fmt::format("truncated edge section: expected {} edges, found {}", edge_count, i),
                              r.line() + 1);
        }
        std::array<std::string_view, 5> fields;
        std::size_t nf = 0;
        std::size_t pos = 0;
        while (pos <= line->size() && nf < fields.size() + 1) {
            auto const sp = line->find(' ', pos);
            auto const f = line->substr(pos, sp == std::string_view::npos ? std::string_view::npos : sp - pos);
            if (nf < fields.size()) {
                fields[nf] = f;
            }
            ++nf;
            if (sp == std::string_view::npos) {
                break;
            }
            pos = sp + 1;
        }
        if (nf != fields.size()) {
            throw FormatError("malformed edge line", r.line());
        }
        Edge e;
        e.u = static_cast<NodeId>(parse_u64(fields[0], r.line()));
        e.v = static_cast<NodeId>(parse_u64(fields[1], r.line()));
        e.stats.freq = parse_u64(fields[2], r.line());
        e.stats.diff_sum = static_cast<std::int64_t>(parse_u64(fields[3], r.line()));
        e.stats.diff_count = parse_u64(fields[4], r.line());
        edges.push_back(e);
    }

    auto const body_end = r.offset();
    auto trailer = r.next();
    if (!trailer || !trailer->starts_with("end ")) {
        throw FormatError("graph file missing end marker", r.line() + 1);
    }
    if (trailer->substr(4) != sha256_hex(text.substr(0, body_end))) {
        throw FormatError("graph file checksum mismatch (corrupted)", r.line());
    }
    if (r.offset() != text.size()) {
        throw FormatError("trailing data after graph end marker", r.line() + 1);
    }
    return ConceptGraph(std::move(nodes), std::move(edges), params);
}

void save_graph(ConceptGraph const & graph, fs::path const & path)
{
    write_file_atomic(path, serialize_graph(graph));
}

ConceptGraph load_graph(fs::path const & path)
{
    return deserialize_graph(read_file(path));
}

} // namespace quest
