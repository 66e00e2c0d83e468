#include "neurotrace/metric.hpp"

#include <algorithm>
#include <numeric>

#include "neurotrace/error.hpp"

namespace neurotrace {

void MetricSpec::validate(int vocab_size) const {
    const auto in_vocab = [&](int tok) { return tok >= 0 && tok < vocab_size; };
    switch (kind) {
        case MetricKind::logit_diff:
            if (!in_vocab(target) || !in_vocab(counterfactual)) throw UsageError("metric: token out of vocabulary");
            if (target == counterfactual) throw UsageError("metric: logit_diff needs y != y'");
            break;
        case MetricKind::single_logit:
            if (!in_vocab(target)) throw UsageError("metric: token out of vocabulary");
            break;
        case MetricKind::topk_logit_sum:
            if (k < 1 || k > vocab_size) throw UsageError("metric: k must be in [1, vocab_size]");
            break;
    }
}

double LinearMetric::value(const Mat& logits) const {
    double total = 0.0;
    for (auto [tok, weight] : coeffs) total += weight * logits(row, tok);
    return total;
}

Mat LinearMetric::gradient(int seq_len, int vocab_size) const {
    Mat grad = Mat::Zero(seq_len, vocab_size);
    for (auto [tok, weight] : coeffs) grad(row, tok) += weight;
    return grad;
}

LinearMetric LinearMetric::negated() const {
    LinearMetric out = *this;
    for (auto& c : out.coeffs) c.second = -c.second;
    return out;
}

LinearMetric resolve_metric(const MetricSpec& spec, const Mat& logits) {
    const int vocab = static_cast<int>(logits.cols());
    const int seq_len = static_cast<int>(logits.rows());
    spec.validate(vocab);
    LinearMetric m;
    m.row = spec.position < 0 ? seq_len + spec.position : spec.position;
    if (m.row < 0 || m.row >= seq_len) throw UsageError("metric: readout position out of range");
    switch (spec.kind) {
        case MetricKind::logit_diff:
            m.coeffs = {{spec.target, 1.0}, {spec.counterfactual, -1.0}};
            break;
        case MetricKind::single_logit:
            m.coeffs = {{spec.target, 1.0}};
            break;
        case MetricKind::topk_logit_sum: {
            std::vector<int> order(vocab);
            std::iota(order.begin(), order.end(), 0);
            // Ties broken by token index so the set is deterministic.
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return logits(m.row, a) > logits(m.row, b); });
            order.resize(spec.k);
            std::sort(order.begin(), order.end());
            for (int tok : order) m.coeffs.emplace_back(tok, 1.0);
            break;
        }
    }
    return m;
}

const char* metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::logit_diff: return "logit_diff";
        case MetricKind::topk_logit_sum: return "topk_logit_sum";
        case MetricKind::single_logit: return "single_logit";
    }
    return "?";
}

MetricKind parse_metric(const std::string& name) {
    if (name == "logit_diff") return MetricKind::logit_diff;
    if (name == "topk_logit_sum" || name == "topk") return MetricKind::topk_logit_sum;
    if (name == "single_logit") return MetricKind::single_logit;
    throw UsageError("unknown metric '" + name + "'");
}

}  // namespace neurotrace
