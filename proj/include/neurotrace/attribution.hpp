#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurotrace/forward.hpp"
#include "neurotrace/metric.hpp"

namespace neurotrace {

enum class NodeMethod { ig_activations, conductance, ig_inputs, relp };
enum class EdgeMethod { ig_inp, relp_direct, relp_total };

// per_node interpolates one target at a time. per_layer interpolates every
// node of a (site, layer) block together, one pass set per block.
enum class IgGrouping { per_node, per_layer };

const char* method_name(NodeMethod m);
const char* method_name(EdgeMethod m);
// Accepts the short CLI names (igact, igin, cond, relp) and the long ones.
NodeMethod parse_node_method(const std::string& name);
EdgeMethod parse_edge_method(const std::string& name);

struct AttributionInput {
    Tokens x;
    std::optional<Tokens> counterfactual;  // x'; empty means a zero baseline
    LinearMetric metric;
};

// Fixes the metric against the logits of a clean run on `x`.
LinearMetric resolve_on(const Weights& weights, const Tokens& x, const MetricSpec& spec);

// Node scores, one per target, in target order. Targets must be real nodes
// (no logit site, no kAllPositions). Throw UsageError for steps < 1.
std::vector<double> ig_activations(const Weights& weights, const AttributionInput& in, std::span<const NodeId> targets,
                                   int steps = 10, IgGrouping grouping = IgGrouping::per_node);
std::vector<double> conductance(const Weights& weights, const AttributionInput& in, std::span<const NodeId> targets,
                                int steps = 10);
std::vector<double> ig_inputs(const Weights& weights, const AttributionInput& in, std::span<const NodeId> targets,
                              int steps = 10);
std::vector<double> relp_node(const Weights& weights, const AttributionInput& in, std::span<const NodeId> targets);

struct NodeAttrOptions {
    NodeMethod method = NodeMethod::relp;
    int steps = 10;
    IgGrouping grouping = IgGrouping::per_node;
};

std::vector<double> attribute_nodes(const Weights& weights, const AttributionInput& in,
                                    std::span<const NodeId> targets, const NodeAttrOptions& options);

// Per-example scores for every example (row i = dataset[i]).
std::vector<std::vector<double>> attribute_each(const Weights& weights, std::span<const AttributionInput> dataset,
                                                std::span<const NodeId> targets, const NodeAttrOptions& options);

// Mean of per-example scores. Throws UsageError on an empty dataset.
std::vector<double> dataset_attr(const Weights& weights, std::span<const AttributionInput> dataset,
                                 std::span<const NodeId> targets, const NodeAttrOptions& options);

// Pseudo-nodes closing a graph. The embedding terminal stands for every
// embedding entry at once; the logit terminal is the metric itself.
NodeId embedding_terminal();
NodeId logit_terminal(const ModelConfig& config, int readout_row);
bool is_terminal(const ModelConfig& config, const NodeId& node);

// True when `t` can depend on `s`: topologically later, and a later
// position only if an attention block lies between them.
bool downstream(const ModelConfig& config, const NodeId& s, const NodeId& t);

// Edge scores for (source, target) pairs on a single input with a zero
// baseline for the source. Terminals are allowed; the logit terminal reads
// `metric`. Throws UsageError for pairs that are not downstream.
std::vector<double> edge_scores(const Weights& weights, const Tokens& x, const LinearMetric& metric,
                                EdgeMethod method, std::span<const std::pair<NodeId, NodeId>> pairs, int steps = 10);

double edge_attr(const Weights& weights, const Tokens& x, const LinearMetric& metric, EdgeMethod method,
                 const NodeId& source, const NodeId& target, int steps = 10);

// (edge / v_t) * node_t; absent when v_t == 0.
std::optional<double> flow(double edge, double node_target, double target_value);

struct AttributionGraph {
    std::string method;       // edge method
    std::string node_method;  // method behind node scores
    int steps = 0;
    std::string baseline = "zero";  // zero | counterfactual
    bool averaged = false;
    int examples = 1;

    std::map<NodeId, double> nodes;
    std::map<std::pair<NodeId, NodeId>, double> edges;
    std::map<std::pair<NodeId, NodeId>, double> flows;  // subset of edges
    int skipped_flows = 0;

    // Throws UsageError when an edge endpoint is missing from `nodes` or a
    // flow has no edge.
    void validate() const;
};

void to_json(nlohmann::json& j, const AttributionGraph& g);
void from_json(const nlohmann::json& j, AttributionGraph& g);

// Per-example graph over `selected` nodes plus both terminals: node scores
// from the method paired with `method` (RelP for relp_*, IG-activations for
// ig_inp), edges for every downstream pair, flows where defined.
AttributionGraph build_graph(const Weights& weights, const AttributionInput& in, std::span<const NodeId> selected,
                             EdgeMethod method, int steps = 10);

// Mean node and edge scores; a flow is averaged over the examples where it
// is defined. All graphs must share node and edge keys.
AttributionGraph average_graphs(std::span<const AttributionGraph> graphs);

}  // namespace neurotrace
