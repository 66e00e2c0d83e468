#pragma once

#include <string>
#include <vector>

#include "neurotrace/model.hpp"

namespace neurotrace {

enum class MetricKind { logit_diff, topk_logit_sum, single_logit };

struct MetricSpec {
    MetricKind kind = MetricKind::logit_diff;
    int target = 0;          // y
    int counterfactual = 1;  // y', logit_diff only
    int k = 5;               // topk_logit_sum only
    int position = -1;       // readout position; negative counts from the end

    static MetricSpec logit_diff(int target, int counterfactual) {
        return {MetricKind::logit_diff, target, counterfactual, 1, -1};
    }
    static MetricSpec single_logit(int target) { return {MetricKind::single_logit, target, target, 1, -1}; }
    static MetricSpec topk(int k) { return {MetricKind::topk_logit_sum, 0, 0, k, -1}; }

    void validate(int vocab_size) const;
};

// Every supported metric is a fixed linear read of one logit row. The top-k
// set is chosen once from the reference logits and then held fixed, so the
// metric stays linear under interventions.
struct LinearMetric {
    int row = 0;
    std::vector<std::pair<int, double>> coeffs;  // (vocab index, weight)

    double value(const Mat& logits) const;
    // d(metric)/d(logits), shaped like `logits`.
    Mat gradient(int seq_len, int vocab_size) const;
    LinearMetric negated() const;
};

LinearMetric resolve_metric(const MetricSpec& spec, const Mat& reference_logits);

const char* metric_name(MetricKind kind);
MetricKind parse_metric(const std::string& name);

}  // namespace neurotrace
