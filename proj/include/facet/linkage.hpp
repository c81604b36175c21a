#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "facet/types.hpp"

namespace facet {

struct JudgingPlan;

// Undirected graph with named nodes split into two sides (raters or batches
// on one side, comments on the other).
class LinkageGraph {
public:
    int add_node(const std::string& name, bool rater_side);
    void add_edge(int a, int b);

    int node_count() const noexcept { return static_cast<int>(adjacency_.size()); }
    std::size_t edge_count() const noexcept { return edges_; }
    const std::vector<int>& neighbours(int node) const { return adjacency_[static_cast<std::size_t>(node)]; }
    bool rater_side(int node) const { return side_[static_cast<std::size_t>(node)]; }
    const std::string& name(int node) const { return names_[static_cast<std::size_t>(node)]; }
    std::optional<int> find(const std::string& name, bool rater_side) const;

    // Raters linked whenever they share a comment.
    LinkageGraph rater_projection() const;

private:
    IdIndex rater_ids_;
    IdIndex comment_ids_;
    std::vector<int> rater_nodes_;
    std::vector<int> comment_nodes_;
    std::vector<std::vector<int>> adjacency_;
    std::vector<bool> side_;
    std::vector<std::string> names_;
    std::size_t edges_ = 0;
};

struct DistanceStats {
    int diameter = 0;
    double average_distance = 0.0;
    bool exact = true;  // false when estimated by double sweep and sampled sources
};

struct LinkageReport {
    int nodes = 0;
    std::size_t edges = 0;
    int rater_nodes = 0;
    int comment_nodes = 0;
    int connected_components = 0;
    std::vector<int> component_sizes;  // descending
    DistanceStats bipartite;           // over all reachable node pairs
    DistanceStats projection;          // rater-projection graph
};

// Component label per node, labels dense from 0 in discovery order.
std::vector<int> component_labels(const LinkageGraph& graph);

// Exact all-source BFS up to `exact_limit` nodes; above it, a double-sweep
// lower bound for the diameter and `sample_sources` seeded BFS sources for the
// mean distance.
DistanceStats distance_stats(const LinkageGraph& graph, std::uint64_t seed = 0, int exact_limit = 20000,
                             int sample_sources = 500);

LinkageReport linkage_analysis(const LinkageGraph& graph, std::uint64_t seed = 0);
LinkageReport linkage_analysis(const JudgingPlan& plan, std::uint64_t seed = 0);
LinkageReport linkage_analysis(const std::vector<Response>& responses, std::uint64_t seed = 0);

LinkageGraph plan_graph(const JudgingPlan& plan);
LinkageGraph response_graph(const std::vector<Response>& responses);

// Human-readable summary of a component split, used in refusal messages.
std::string describe_components(const LinkageGraph& graph, const std::vector<int>& labels);

}  // namespace facet
