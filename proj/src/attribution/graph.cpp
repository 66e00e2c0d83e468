#include "neurotrace/attribution.hpp"
#include "neurotrace/error.hpp"

namespace neurotrace {

void AttributionGraph::validate() const {
    for (const auto& [key, score] : edges) {
        if (!nodes.count(key.first) || !nodes.count(key.second)) {
            throw UsageError("graph: edge " + to_string(key.first) + " -> " + to_string(key.second) +
                             " has an endpoint without a node score");
        }
    }
    for (const auto& [key, value] : flows) {
        if (!edges.count(key)) throw UsageError("graph: flow without an edge");
    }
}

void to_json(nlohmann::json& j, const AttributionGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [n, score] : g.nodes) {
        nodes.push_back({{"site", std::string(site_name(n.site))},
                         {"layer", n.layer},
                         {"pos", n.position},
                         {"unit", n.unit},
                         {"score", score}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [key, score] : g.edges) {
        auto it = g.flows.find(key);
        edges.push_back({{"src", to_string(key.first)},
                         {"dst", to_string(key.second)},
                         {"score", score},
                         {"flow", it == g.flows.end() ? nlohmann::json(nullptr) : nlohmann::json(it->second)}});
    }
    j = {{"method", g.method},     {"node_method", g.node_method}, {"steps", g.steps},
         {"baseline", g.baseline}, {"averaged", g.averaged},       {"examples", g.examples},
         {"nodes", nodes},         {"edges", edges},               {"skipped_flows", g.skipped_flows}};
}

void from_json(const nlohmann::json& j, AttributionGraph& g) {
    g = {};
    j.at("method").get_to(g.method);
    j.at("node_method").get_to(g.node_method);
    j.at("steps").get_to(g.steps);
    j.at("baseline").get_to(g.baseline);
    j.at("averaged").get_to(g.averaged);
    j.at("examples").get_to(g.examples);
    j.at("skipped_flows").get_to(g.skipped_flows);
    for (const auto& n : j.at("nodes")) {
        const NodeId id{parse_site(n.at("site").get<std::string>()), n.at("layer").get<int>(), n.at("pos").get<int>(),
                        n.at("unit").get<int>()};
        g.nodes[id] = n.at("score").get<double>();
    }
    for (const auto& e : j.at("edges")) {
        const std::pair key{parse_node(e.at("src").get<std::string>()), parse_node(e.at("dst").get<std::string>())};
        g.edges[key] = e.at("score").get<double>();
        if (!e.at("flow").is_null()) g.flows[key] = e.at("flow").get<double>();
    }
    g.validate();
}

AttributionGraph build_graph(const Weights& w, const AttributionInput& in, std::span<const NodeId> selected,
                             EdgeMethod method, int steps) {
    const ModelConfig& cfg = w.config;
    AttributionGraph g;
    g.method = method_name(method);
    g.steps = method == EdgeMethod::ig_inp ? steps : 1;
    g.baseline = in.counterfactual ? "counterfactual" : "zero";

    std::vector<double> node_scores;
    if (method == EdgeMethod::ig_inp) {
        g.node_method = method_name(NodeMethod::ig_activations);
        node_scores = ig_activations(w, in, selected, steps);
    } else {
        g.node_method = method_name(NodeMethod::relp);
        node_scores = relp_node(w, in, selected);
    }
    const ActivationCache clean = forward(w, in.x);
    const double metric_value = in.metric.value(clean.acts.logits);
    const double metric_delta =
        in.counterfactual ? metric_value - in.metric.value(forward(w, *in.counterfactual).acts.logits) : metric_value;

    const NodeId emb = embedding_terminal(), logit = logit_terminal(cfg, in.metric.row);
    for (std::size_t k = 0; k < selected.size(); ++k) g.nodes[selected[k]] = node_scores[k];
    g.nodes[emb] = metric_delta;
    g.nodes[logit] = metric_delta;

    std::vector<NodeId> sources{emb}, targets;
    sources.insert(sources.end(), selected.begin(), selected.end());
    targets.assign(selected.begin(), selected.end());
    targets.push_back(logit);
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (const NodeId& s : sources) {
        for (const NodeId& t : targets) {
            if (downstream(cfg, s, t)) pairs.emplace_back(s, t);
        }
    }
    const std::vector<double> scores = edge_scores(w, in.x, in.metric, method, pairs, steps);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        g.edges[pairs[k]] = scores[k];
        const NodeId& t = pairs[k].second;
        const double v_t = t == logit ? metric_value : clean.acts.at(t);
        if (auto f = flow(scores[k], g.nodes.at(t), v_t)) {
            g.flows[pairs[k]] = *f;
        } else {
            ++g.skipped_flows;
        }
    }
    return g;
}

AttributionGraph average_graphs(std::span<const AttributionGraph> graphs) {
    if (graphs.empty()) throw UsageError("average_graphs: no graphs");
    AttributionGraph out = graphs.front();
    out.averaged = true;
    out.examples = 0;
    out.skipped_flows = 0;
    std::map<std::pair<NodeId, NodeId>, int> flow_counts;
    for (auto& [k, v] : out.nodes) v = 0.0;
    for (auto& [k, v] : out.edges) v = 0.0;
    out.flows.clear();
    for (const AttributionGraph& g : graphs) {
        if (g.nodes.size() != out.nodes.size() || g.edges.size() != out.edges.size()) {
            throw UsageError("average_graphs: graphs have different node or edge sets");
        }
        out.examples += g.examples;
        out.skipped_flows += g.skipped_flows;
        for (const auto& [k, v] : g.nodes) out.nodes.at(k) += v;
        for (const auto& [k, v] : g.edges) out.edges.at(k) += v;
        for (const auto& [k, v] : g.flows) {
            out.flows[k] += v;
            ++flow_counts[k];
        }
    }
    const double n = static_cast<double>(graphs.size());
    for (auto& [k, v] : out.nodes) v /= n;
    for (auto& [k, v] : out.edges) v /= n;
    for (auto& [k, v] : out.flows) v /= flow_counts.at(k);
    return out;
}

}  // namespace neurotrace
