#include "facet/linkage.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "facet/judging_plan.hpp"

namespace facet {

int LinkageGraph::add_node(const std::string& name, bool rater_side) {
    IdIndex& ids = rater_side ? rater_ids_ : comment_ids_;
    std::vector<int>& nodes = rater_side ? rater_nodes_ : comment_nodes_;
    const int local = ids.intern(name);
    if (static_cast<std::size_t>(local) < nodes.size()) return nodes[static_cast<std::size_t>(local)];
    const int node = node_count();
    nodes.push_back(node);
    adjacency_.emplace_back();
    side_.push_back(rater_side);
    names_.push_back(name);
    return node;
}

void LinkageGraph::add_edge(int a, int b) {
    auto& na = adjacency_[static_cast<std::size_t>(a)];
    if (std::find(na.begin(), na.end(), b) != na.end()) return;
    na.push_back(b);
    adjacency_[static_cast<std::size_t>(b)].push_back(a);
    ++edges_;
}

std::optional<int> LinkageGraph::find(const std::string& name, bool rater_side) const {
    const auto local = (rater_side ? rater_ids_ : comment_ids_).find(name);
    if (!local) return std::nullopt;
    return (rater_side ? rater_nodes_ : comment_nodes_)[static_cast<std::size_t>(*local)];
}

LinkageGraph LinkageGraph::rater_projection() const {
    LinkageGraph out;
    for (int node = 0; node < node_count(); ++node) {
        if (rater_side(node)) out.add_node(name(node), true);
    }
    std::set<std::pair<int, int>> seen;
    for (int node = 0; node < node_count(); ++node) {
        if (rater_side(node)) continue;
        const auto& raters = neighbours(node);
        for (std::size_t a = 0; a < raters.size(); ++a) {
            for (std::size_t b = a + 1; b < raters.size(); ++b) {
                const int u = *out.find(name(raters[a]), true);
                const int v = *out.find(name(raters[b]), true);
                if (seen.emplace(std::min(u, v), std::max(u, v)).second) {
                    out.adjacency_[static_cast<std::size_t>(u)].push_back(v);
                    out.adjacency_[static_cast<std::size_t>(v)].push_back(u);
                    ++out.edges_;
                }
            }
        }
    }
    return out;
}

std::vector<int> component_labels(const LinkageGraph& graph) {
    std::vector<int> labels(static_cast<std::size_t>(graph.node_count()), -1);
    int next = 0;
    std::vector<int> stack;
    for (int start = 0; start < graph.node_count(); ++start) {
        if (labels[static_cast<std::size_t>(start)] >= 0) continue;
        labels[static_cast<std::size_t>(start)] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : graph.neighbours(u)) {
                if (labels[static_cast<std::size_t>(v)] < 0) {
                    labels[static_cast<std::size_t>(v)] = next;
                    stack.push_back(v);
                }
            }
        }
        ++next;
    }
    return labels;
}

namespace {

// Distances from `source`; unreachable nodes hold -1.
void bfs(const LinkageGraph& graph, int source, std::vector<int>& dist, std::vector<int>& queue) {
    std::fill(dist.begin(), dist.end(), -1);
    queue.clear();
    dist[static_cast<std::size_t>(source)] = 0;
    queue.push_back(source);
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int u = queue[head];
        for (int v : graph.neighbours(u)) {
            if (dist[static_cast<std::size_t>(v)] < 0) {
                dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                queue.push_back(v);
            }
        }
    }
}

}  // namespace

DistanceStats distance_stats(const LinkageGraph& graph, std::uint64_t seed, int exact_limit, int sample_sources) {
    DistanceStats out;
    const int n = graph.node_count();
    if (n < 2) return out;
    std::vector<int> dist(static_cast<std::size_t>(n));
    std::vector<int> queue;
    queue.reserve(static_cast<std::size_t>(n));

    double total = 0.0;
    std::size_t pairs = 0;
    auto accumulate_from = [&](int source) {
        bfs(graph, source, dist, queue);
        int far = source;
        for (int v = 0; v < n; ++v) {
            const int d = dist[static_cast<std::size_t>(v)];
            if (d > 0) {
                total += d;
                ++pairs;
            }
            if (d > dist[static_cast<std::size_t>(far)]) far = v;
        }
        out.diameter = std::max(out.diameter, dist[static_cast<std::size_t>(far)]);
        return far;
    };

    if (n <= exact_limit) {
        for (int s = 0; s < n; ++s) accumulate_from(s);
    } else {
        out.exact = false;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> pick(0, n - 1);
        for (int k = 0; k < sample_sources; ++k) accumulate_from(pick(rng));
        // Double sweeps from a few random starts give a diameter lower bound.
        for (int k = 0; k < 4; ++k) {
            const int far = accumulate_from(pick(rng));
            accumulate_from(far);
        }
    }
    out.average_distance = pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
    return out;
}

LinkageReport linkage_analysis(const LinkageGraph& graph, std::uint64_t seed) {
    LinkageReport report;
    report.nodes = graph.node_count();
    report.edges = graph.edge_count();
    for (int v = 0; v < graph.node_count(); ++v) {
        (graph.rater_side(v) ? report.rater_nodes : report.comment_nodes)++;
    }
    const auto labels = component_labels(graph);
    report.connected_components = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    report.component_sizes.assign(static_cast<std::size_t>(report.connected_components), 0);
    for (int l : labels) ++report.component_sizes[static_cast<std::size_t>(l)];
    std::sort(report.component_sizes.rbegin(), report.component_sizes.rend());
    report.bipartite = distance_stats(graph, seed);
    report.projection = distance_stats(graph.rater_projection(), seed);
    return report;
}

LinkageGraph plan_graph(const JudgingPlan& plan) {
    LinkageGraph g;
    for (const auto& batch : plan.batches) {
        const int b = g.add_node(batch.id, true);
        for (const auto& c : batch.originals) g.add_edge(b, g.add_node(c, false));
        for (const auto& c : batch.references) g.add_edge(b, g.add_node(c, false));
    }
    return g;
}

LinkageGraph response_graph(const std::vector<Response>& responses) {
    LinkageGraph g;
    for (const auto& r : responses) {
        const int a = g.add_node(r.rater_id, true);
        g.add_edge(a, g.add_node(r.comment_id, false));
    }
    return g;
}

LinkageReport linkage_analysis(const JudgingPlan& plan, std::uint64_t seed) {
    return linkage_analysis(plan_graph(plan), seed);
}

LinkageReport linkage_analysis(const std::vector<Response>& responses, std::uint64_t seed) {
    return linkage_analysis(response_graph(responses), seed);
}

std::string describe_components(const LinkageGraph& graph, const std::vector<int>& labels) {
    const int count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<int>> members(static_cast<std::size_t>(count));
    for (int v = 0; v < graph.node_count(); ++v) members[static_cast<std::size_t>(labels[static_cast<std::size_t>(v)])].push_back(v);
    std::ostringstream os;
    for (int c = 0; c < count; ++c) {
        const auto& m = members[static_cast<std::size_t>(c)];
        int raters = 0;
        for (int v : m) raters += graph.rater_side(v) ? 1 : 0;
        os << "component " << c << ": " << m.size() << " nodes (" << raters << " rater-side), e.g.";
        for (std::size_t k = 0; k < std::min<std::size_t>(m.size(), 3); ++k) os << ' ' << graph.name(m[k]);
        os << '\n';
    }
    return os.str();
}

}  // namespace facet
