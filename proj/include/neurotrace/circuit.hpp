#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurotrace/attribution.hpp"

namespace neurotrace {

enum class ScoreTransform { signed_score, absolute };
enum class Ablation { mean, zero };

const char* ablation_name(Ablation a);
Ablation parse_ablation(const std::string& name);

using NodeScores = std::map<NodeId, double>;

struct Circuit {
    std::set<NodeId> nodes;  // basis nodes, plus terminals for edge circuits
    std::set<std::pair<NodeId, NodeId>> edges;
    Site basis = Site::mlp_act;
    std::string method;  // topk | threshold | edge_prune | custom
    std::optional<int> k;
    std::optional<double> tau;
    std::optional<double> edge_fraction;

    // Number of non-terminal nodes.
    int size(const ModelConfig& config) const;
    // Throws UsageError when a non-terminal node is off-basis or an edge
    // endpoint is not a member.
    void validate(const ModelConfig& config) const;
};

void to_json(nlohmann::json& j, const Circuit& c);

// k highest transformed scores; ties go to the smaller NodeId.
Circuit select_topk(const NodeScores& scores, int k, ScoreTransform transform, Site basis);

// Nonzero-score nodes with |score| >= tau * |metric_total|, after dropping
// `exclude`. Throws UsageError when metric_total is 0.
Circuit select_threshold(const NodeScores& scores, double metric_total, double tau, Site basis,
                         const std::set<NodeId>& exclude = {});

// Keeps the top `keep_fraction` of edges by |flow| (edges without a flow
// rank last), then repeatedly drops non-terminal nodes left without
// incoming or without outgoing edges.
Circuit prune_edges(const AttributionGraph& graph, double keep_fraction, Site basis);
Circuit prune_edges_topk(const AttributionGraph& graph, int keep_edges, Site basis);

// Metric on `x` with every basis node outside `keep` (all layers and
// positions) replaced by its mean or by zero.
double ablated_run(const Weights& weights, const Tokens& x, const std::set<NodeId>& keep, Site basis, Ablation ablation,
                   const SiteTensors* means, const LinearMetric& metric);
double ablated_run(const Weights& weights, const Tokens& x, const Circuit& circuit, Ablation ablation,
                   const SiteTensors* means, const LinearMetric& metric);

struct EvalReport {
    int circuit_size = 0;
    int basis_size = 0;
    Site basis = Site::mlp_act;
    Ablation ablation = Ablation::mean;
    std::vector<double> m_circuit;   // m(C, x)
    std::vector<double> m_model;     // m(M, x)
    std::vector<double> m_empty;     // m(empty, x)
    std::vector<double> m_without;   // m(M \ C, x)
    double faithfulness = 0.0;
    double completeness = 0.0;
    bool degenerate = false;  // |E[m(M) - m(empty)]| < 1e-9; ratios are NaN
};

void to_json(nlohmann::json& j, const EvalReport& r);

inline constexpr double kDegenerateDenominator = 1e-9;

// Ratio of dataset means: (E[num] - E[m_empty]) / (E[m_model] - E[m_empty]).
double faithfulness(const EvalReport& r);
double completeness(const EvalReport& r);

EvalReport evaluate(const Weights& weights, std::span<const AttributionInput> dataset, const Circuit& circuit,
                    Ablation ablation, const SiteTensors* means);

// Trapezoid integrals of f and |1 - f| over k, divided by the grid span.
// Throws UsageError unless k is strictly increasing inside [0, 1] with at
// least two points.
std::pair<double, double> cpr_cmd(std::span<const double> k, std::span<const double> faithfulness);

std::vector<double> default_k_grid();

struct SweepPoint {
    double k = 0.0;
    int size = 0;
    double faithfulness = 0.0;
    double completeness = 0.0;
    bool degenerate = false;
};

struct Sweep {
    std::vector<SweepPoint> points;
    double cpr = 0.0;
    double cmd = 0.0;
};

// Top-k circuits at size round(k * basis_size) for each grid fraction.
Sweep sweep_topk(const Weights& weights, std::span<const AttributionInput> dataset, const NodeScores& scores,
                 Site basis, std::span<const double> grid, Ablation ablation, const SiteTensors* means,
                 ScoreTransform transform = ScoreTransform::absolute);

std::string sweep_csv(const Sweep& sweep);

}  // namespace neurotrace
