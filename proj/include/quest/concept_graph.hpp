#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "quest/concept.hpp"
#include "quest/corpus.hpp"
#include "quest/io.hpp"
#include "quest/random.hpp"

namespace quest {

enum class WeightMode
{
    CoOccurrence,    // w = log(freq + eps)
    DifficultyAware, // w = log(alpha * freq + (1 - alpha) * diff + eps)
};

std::string_view to_string(WeightMode mode) noexcept;
WeightMode weight_mode_from_string(std::string_view s);

struct GraphParams
{
    WeightMode mode = WeightMode::DifficultyAware;
    double alpha = 0.2;
    double epsilon = 1.0;

    /// Throws UsageError unless 0 <= alpha <= 1 and epsilon > 0.
    void validate() const;

    friend bool operator==(GraphParams const &, GraphParams const &) = default;
};

/// Co-occurrence statistics of one unordered concept pair.
struct EdgeStats
{
    std::uint64_t freq = 0;       // problems containing both endpoints
    std::int64_t diff_sum = 0;    // sum of labels over labeled problems among them
    std::uint64_t diff_count = 0; // number of labeled problems among them

    /// Mean label of the labeled problems covering the edge; 0 when none are labeled.
    [[nodiscard]] double mean_difficulty() const noexcept;

    friend bool operator==(EdgeStats const &, EdgeStats const &) = default;
};

double edge_weight(EdgeStats const & stats, GraphParams const & params);

using NodeId = std::uint32_t;

struct Edge
{
    NodeId u = 0; // u < v
    NodeId v = 0;
    EdgeStats stats;

    friend bool operator==(Edge const &, Edge const &) = default;
};

struct Neighbor
{
    NodeId node;
    std::size_t edge;
};

class EmptyNeighborhoodError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Undirected concept co-occurrence graph. Nodes are sorted by Concept
/// order and edges by (u, v), so equal inputs give equal graphs.
class ConceptGraph
{
public:
    /// Validates every invariant; throws FormatError on violation.
    ConceptGraph(std::vector<Concept> nodes, std::vector<Edge> edges, GraphParams params);

    /// One edge per concept pair that co-occurs in at least one problem.
    /// Problems without concept sets are skipped.
    static ConceptGraph build(std::span<Problem const> problems, GraphParams params);

    [[nodiscard]] std::vector<Concept> const & nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::vector<Edge> const & edges() const noexcept { return edges_; }
    [[nodiscard]] GraphParams const & params() const noexcept { return params_; }
    [[nodiscard]] std::vector<NodeId> const & topic_roster() const noexcept { return topics_; }

    [[nodiscard]] std::optional<NodeId> find(Concept const & c) const;
    [[nodiscard]] std::span<Neighbor const> neighbors(NodeId u) const;
    [[nodiscard]] EdgeStats const * edge_stats(NodeId u, NodeId v) const;

    /// w(u, v) under the graph's params. Throws std::out_of_range if there is no edge.
    [[nodiscard]] double weight(NodeId u, NodeId v) const;

    /// Same structure, different weighting.
    [[nodiscard]] ConceptGraph with_params(GraphParams params) const;

    friend bool operator==(ConceptGraph const & a, ConceptGraph const & b)
    {
        return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.params_ == b.params_;
    }

private:
    std::vector<Concept> nodes_;
    std::vector<Edge> edges_;
    GraphParams params_;
    std::vector<NodeId> topics_;
    std::vector<std::size_t> adj_offsets_;
    std::vector<Neighbor> adjacency_;
};

struct Transition
{
    NodeId node;
    double probability;
};

/// Softmax over the weights of u's edges, ordered by neighbor id. Computed
/// with max-subtraction. Throws EmptyNeighborhoodError for isolated nodes.
std::vector<Transition> transition_distribution(ConceptGraph const & graph, NodeId u);

/// Draws the next node from transition_distribution(graph, u).
NodeId sample_next(ConceptGraph const & graph, NodeId u, RandomSource & rng);

enum class WalkLength
{
    Uniform, // L uniform on {1..max_steps}
    Fixed,   // L = max_steps
};

struct WalkSample
{
    Concept start_topic;
    std::vector<Concept> path; // path[0] == start_topic
    ConceptCombination combination;
};

/// Start uniformly on the topic roster and take up to L steps. A start with
/// no neighbors yields a single-node walk.
WalkSample sample_walk(ConceptGraph const & graph, RandomSource & rng, int max_steps = 6,
                       WalkLength length = WalkLength::Uniform);

/// Versioned text container; see docs/FORMATS.md.
std::string serialize_graph(ConceptGraph const & graph);
ConceptGraph deserialize_graph(std::string_view text);
void save_graph(ConceptGraph const & graph, fs::path const & path);
ConceptGraph load_graph(fs::path const & path);

} // namespace quest
