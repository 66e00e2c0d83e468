#include <algorithm>
#include <cmath>

#include "neurotrace/circuit.hpp"
#include "neurotrace/error.hpp"

namespace neurotrace {

namespace {

bool terminal_like(const NodeId& n) { return n == embedding_terminal() || n.site == Site::logit; }

void check_basis(const NodeScores& scores, Site basis) {
    for (const auto& [n, s] : scores) {
        if (n.site != basis) throw UsageError("circuit: node " + to_string(n) + " is not on the declared basis");
        if (!std::isfinite(s)) throw NumericalError("circuit: non-finite score at " + to_string(n));
    }
}

}  // namespace

int Circuit::size(const ModelConfig&) const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const NodeId& n) { return !terminal_like(n); }));
}

void Circuit::validate(const ModelConfig&) const {
    for (const NodeId& n : nodes) {
        if (!terminal_like(n) && n.site != basis) throw UsageError("circuit: node " + to_string(n) + " is off-basis");
    }
    for (const auto& [s, t] : edges) {
        if (!nodes.count(s) || !nodes.count(t)) throw UsageError("circuit: edge endpoint is not a member");
    }
}

void to_json(nlohmann::json& j, const Circuit& c) {
    std::vector<std::string> nodes, edges;
    for (const NodeId& n : c.nodes) nodes.push_back(to_string(n));
    for (const auto& [s, t] : c.edges) edges.push_back(to_string(s) + " -> " + to_string(t));
    j = {{"basis", std::string(site_name(c.basis))}, {"method", c.method}, {"nodes", nodes}, {"edges", edges}};
    if (c.k) j["k"] = *c.k;
    if (c.tau) j["tau"] = *c.tau;
    if (c.edge_fraction) j["edge_fraction"] = *c.edge_fraction;
}

Circuit select_topk(const NodeScores& scores, int k, ScoreTransform transform, Site basis) {
    check_basis(scores, basis);
    if (k < 0 || k > static_cast<int>(scores.size())) {
        throw UsageError("select_topk: k = " + std::to_string(k) + " outside [0, " + std::to_string(scores.size()) + "]");
    }
    std::vector<std::pair<NodeId, double>> ranked(scores.begin(), scores.end());
    const auto key = [&](double s) { return transform == ScoreTransform::absolute ? std::abs(s) : s; };
    std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) { return key(a.second) > key(b.second); });
    Circuit c;
    c.basis = basis;
    c.method = "topk";
    c.k = k;
    for (int i = 0; i < k; ++i) c.nodes.insert(ranked[i].first);
    return c;
}

Circuit select_threshold(const NodeScores& scores, double metric_total, double tau, Site basis,
                         const std::set<NodeId>& exclude) {
    check_basis(scores, basis);
    if (metric_total == 0.0) throw UsageError("select_threshold: metric value is 0");
    Circuit c;
    c.basis = basis;
    c.method = "threshold";
    c.tau = tau;
    const double cutoff = tau * std::abs(metric_total);
    for (const auto& [n, s] : scores) {
        if (exclude.count(n) || s == 0.0) continue;
        if (std::abs(s) >= cutoff) c.nodes.insert(n);
    }
    return c;
}

Circuit prune_edges_topk(const AttributionGraph& graph, int keep_edges, Site basis) {
    graph.validate();
    std::vector<std::pair<std::pair<NodeId, NodeId>, double>> ranked;
    for (const auto& [key, score] : graph.edges) {
        auto it = graph.flows.find(key);
        ranked.emplace_back(key, it == graph.flows.end() ? -1.0 : std::abs(it->second));
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    keep_edges = std::clamp(keep_edges, 0, static_cast<int>(ranked.size()));

    Circuit c;
    c.basis = basis;
    c.method = "edge_prune";
    for (const auto& [n, s] : graph.nodes) c.nodes.insert(n);
    for (int i = 0; i < keep_edges; ++i) c.edges.insert(ranked[i].first);

    for (bool changed = true; changed;) {
        changed = false;
        std::map<NodeId, int> in_deg, out_deg;
        for (const auto& [s, t] : c.edges) {
            ++out_deg[s];
            ++in_deg[t];
        }
        std::set<NodeId> drop;
        for (const NodeId& n : c.nodes) {
            if (terminal_like(n)) continue;
            if (!in_deg.count(n) || !out_deg.count(n)) drop.insert(n);
        }
        if (drop.empty()) break;
        changed = true;
        for (const NodeId& n : drop) c.nodes.erase(n);
        for (auto it = c.edges.begin(); it != c.edges.end();) {
            it = drop.count(it->first) || drop.count(it->second) ? c.edges.erase(it) : std::next(it);
        }
    }
    return c;
}

Circuit prune_edges(const AttributionGraph& graph, double keep_fraction, Site basis) {
    if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) throw UsageError("prune_edges: keep fraction outside [0, 1]");
    Circuit c = prune_edges_topk(
        graph, static_cast<int>(std::llround(keep_fraction * static_cast<double>(graph.edges.size()))), basis);
    c.edge_fraction = keep_fraction;
    return c;
}

}  // namespace neurotrace
