#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurotrace/circuit.hpp"
#include "neurotrace/tasks.hpp"

namespace neurotrace {

// P[pos > neg] + P[pos == neg] / 2 via average ranks. Throws UsageError if
// either side is empty, NumericalError on non-finite scores.
double auroc(std::span<const double> positives, std::span<const double> negatives);

// Per-example scores with positions summed: rows[i][j] is unit j of
// example i; units carry position kAllPositions.
struct UnitScores {
    std::vector<NodeId> units;
    std::vector<std::vector<double>> rows;
};

UnitScores sum_over_positions(std::span<const NodeId> targets, const std::vector<std::vector<double>>& per_example);

// AUROC of every unit for examples whose label equals `cls` against the rest.
std::vector<double> auroc_by_unit(const UnitScores& scores, std::span<const std::string> labels, const std::string& cls);

struct FeatureRow {
    NodeId node;
    double auroc = 0.5;
    double in_class_pct = 0.0;   // mean in-class score, % of mean metric
    double out_class_pct = 0.0;
};

struct ClassReport {
    std::string cls;
    int positives = 0;
    int negatives = 0;
    std::vector<FeatureRow> features;  // by |auroc - 0.5|, descending
};

struct FeatureReport {
    std::string label;
    double hi = 0.8;
    double lo = 0.2;
    double mean_metric = 0.0;
    std::vector<ClassReport> classes;  // sorted by class value
};

// One report per class value (or only `only_class`). Units qualify with
// AUROC >= hi or <= lo.
FeatureReport find_features(const UnitScores& scores, std::span<const std::string> labels, const std::string& label,
                            double mean_metric, double hi = 0.8, double lo = 0.2,
                            const std::optional<std::string>& only_class = std::nullopt);

void to_json(nlohmann::json& j, const FeatureReport& r);
// class,node,auroc,in_class_pct,out_class_pct
std::string features_csv(const FeatureReport& r);

// Labels of `label` for every example; UsageError if any example lacks it.
std::vector<std::string> label_column(std::span<const Example> examples, const std::string& label);

struct SteerResult {
    Eigen::RowVectorXd logits;  // readout row
    Eigen::RowVectorXd probs;   // softmax of `logits`
    int top1 = 0;
};

// Forward with every node of `nodes` scaled by alpha. Nodes at kAllPositions
// expand to every position. Reads out the last row.
SteerResult steer(const Weights& weights, const Tokens& x, std::span<const NodeId> nodes, double alpha);

struct SteerRow {
    double alpha = 1.0;
    double p_target = 0.0;    // mean probability mass on the target tokens
    double p_original = 0.0;  // mean probability of each example's own answer
    int top1_token = 0;       // most frequent top-1 token (lowest id on ties)
    double top1_in_target = 0.0;  // fraction of examples whose top-1 is a target token
};

std::vector<SteerRow> steer_sweep(const Weights& weights, std::span<const Example> examples,
                                  std::span<const NodeId> nodes, std::span<const double> alphas,
                                  const std::vector<int>& target_tokens);
std::vector<double> default_alphas();  // 0, 0.25, ..., 2
// alpha,p_target,p_original,top1_token,top1_in_target
std::string steer_csv(const std::vector<SteerRow>& rows);

struct LayerHistogram {
    int k = 0;                // requested
    int used = 0;             // min(k, node count)
    std::vector<int> counts;  // indexed by layer, 0 .. L + 1
};

// Layer counts among the top-k nodes by |score| (ties by NodeId).
std::vector<LayerHistogram> layer_histogram(const ModelConfig& config, const NodeScores& scores,
                                            std::span<const int> ks);

}  // namespace neurotrace
