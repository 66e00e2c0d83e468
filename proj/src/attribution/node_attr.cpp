#include <map>

#include "neurotrace/attribution.hpp"
#include "neurotrace/backward.hpp"
#include "neurotrace/error.hpp"
#include "neurotrace/parallel.hpp"

namespace neurotrace {

const char* method_name(NodeMethod m) {
    switch (m) {
        case NodeMethod::ig_activations: return "ig_activations";
        case NodeMethod::conductance: return "conductance";
        case NodeMethod::ig_inputs: return "ig_inputs";
        case NodeMethod::relp: return "relp";
    }
    return "?";
}

NodeMethod parse_node_method(const std::string& name) {
    if (name == "igact" || name == "ig_activations") return NodeMethod::ig_activations;
    if (name == "cond" || name == "conductance") return NodeMethod::conductance;
    if (name == "igin" || name == "ig_inputs") return NodeMethod::ig_inputs;
    if (name == "relp") return NodeMethod::relp;
    throw UsageError("unknown node attribution method '" + name + "'");
}

LinearMetric resolve_on(const Weights& weights, const Tokens& x, const MetricSpec& spec) {
    return resolve_metric(spec, forward(weights, x).acts.logits);
}

namespace {

void check_input(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets, int steps) {
    if (steps < 1) throw UsageError("attribution: steps must be >= 1");
    const int t = static_cast<int>(in.x.size());
    if (in.counterfactual && in.counterfactual->size() != in.x.size()) {
        throw UsageError("attribution: counterfactual length differs from input");
    }
    if (in.metric.row < 0 || in.metric.row >= t) throw UsageError("attribution: metric row out of range");
    for (const NodeId& n : targets) {
        if (n.site == Site::logit) throw UsageError("attribution: logit nodes cannot be attribution targets");
        validate_node(w.config, t, n);
    }
}

Mat embed(const Weights& w, const Tokens& x) {
    Mat e(x.size(), w.config.d_model);
    for (std::size_t j = 0; j < x.size(); ++j) e.row(j) = w.tok_embed.row(x[j]) + w.pos_embed.row(j);
    return e;
}

// Baseline activations: the counterfactual run, or all zeros.
SiteTensors baseline_acts(const Weights& w, const AttributionInput& in) {
    if (in.counterfactual) return forward(w, *in.counterfactual).acts;
    return SiteTensors::zeros(w.config, static_cast<int>(in.x.size()));
}

// Path point i of n. Endpoints are exact and a zero-length path stays put.
double lerp(double from, double to, int i, int n) {
    if (i == n) return to;
    return from + (static_cast<double>(i) / n) * (to - from);
}

Mat lerp(const Mat& from, const Mat& to, int i, int n) {
    if (i == n) return to;
    return from + (static_cast<double>(i) / n) * (to - from);
}

}  // namespace

std::vector<double> ig_activations(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets,
                                   int steps, IgGrouping grouping) {
    check_input(w, in, targets, steps);
    const SiteTensors clean = forward(w, in.x).acts;
    const SiteTensors base = baseline_acts(w, in);
    const Mat mg = in.metric.gradient(static_cast<int>(in.x.size()), w.config.vocab_size);
    std::vector<double> scores(targets.size(), 0.0);

    if (grouping == IgGrouping::per_node) {
        for (std::size_t k = 0; k < targets.size(); ++k) {
            const NodeId& t = targets[k];
            const double v = clean.at(t), v0 = base.at(t);
            double sum = 0.0;
            for (int i = 1; i <= steps; ++i) {
                const ActivationCache c = forward(w, in.x, Intervention().set(t, lerp(v0, v, i, steps)));
                sum += exact_backward(w, c, mg).at(t);
            }
            scores[k] = (v - v0) * (sum / steps);
        }
        return scores;
    }

    std::map<std::pair<Site, int>, std::vector<std::size_t>> blocks;
    for (std::size_t k = 0; k < targets.size(); ++k) blocks[{targets[k].site, targets[k].layer}].push_back(k);
    for (const auto& [key, members] : blocks) {
        const auto [site, layer] = key;
        const Mat& v = clean.site(site, layer);
        const Mat& v0 = base.site(site, layer);
        Mat sum = Mat::Zero(v.rows(), v.cols());
        for (int i = 1; i <= steps; ++i) {
            Intervention iv;
            for (Eigen::Index j = 0; j < v.rows(); ++j) {
                for (Eigen::Index u = 0; u < v.cols(); ++u) {
                    iv.set({site, layer, static_cast<int>(j), static_cast<int>(u)}, lerp(v0(j, u), v(j, u), i, steps));
                }
            }
            sum += exact_backward(w, forward(w, in.x, iv), mg).site(site, layer);
        }
        for (std::size_t k : members) {
            const NodeId& t = targets[k];
            scores[k] = (v(t.position, t.unit) - v0(t.position, t.unit)) * (sum(t.position, t.unit) / steps);
        }
    }
    return scores;
}

namespace {

// Values at every target on the input path x^(0..n) and exact metric
// gradients at x^(1..n), interpolating in embedding space.
struct InputPath {
    std::vector<std::vector<double>> values;  // [i][target], i = 0..n
    std::vector<std::vector<double>> grads;   // [i - 1][target], i = 1..n
};

InputPath input_path(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets, int steps) {
    const Mat e = embed(w, in.x);
    const Mat e0 = in.counterfactual ? embed(w, *in.counterfactual) : Mat::Zero(e.rows(), e.cols());
    const Mat mg = in.metric.gradient(static_cast<int>(in.x.size()), w.config.vocab_size);
    InputPath path;
    for (int i = 0; i <= steps; ++i) {
        const Mat point = lerp(e0, e, i, steps);
        const ActivationCache c = forward(w, in.x, {}, &point);
        std::vector<double> vals(targets.size());
        for (std::size_t k = 0; k < targets.size(); ++k) vals[k] = c.acts.at(targets[k]);
        path.values.push_back(std::move(vals));
        if (i == 0) continue;
        const SiteTensors g = exact_backward(w, c, mg);
        std::vector<double> gs(targets.size());
        for (std::size_t k = 0; k < targets.size(); ++k) gs[k] = g.at(targets[k]);
        path.grads.push_back(std::move(gs));
    }
    return path;
}

}  // namespace

std::vector<double> conductance(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets,
                                int steps) {
    check_input(w, in, targets, steps);
    const InputPath p = input_path(w, in, targets, steps);
    std::vector<double> scores(targets.size(), 0.0);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        for (int i = 1; i <= steps; ++i) scores[k] += p.grads[i - 1][k] * (p.values[i][k] - p.values[i - 1][k]);
    }
    return scores;
}

std::vector<double> ig_inputs(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets,
                              int steps) {
    check_input(w, in, targets, steps);
    const InputPath p = input_path(w, in, targets, steps);
    std::vector<double> scores(targets.size(), 0.0);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        double sum = 0.0;
        for (int i = 1; i <= steps; ++i) sum += p.grads[i - 1][k];
        scores[k] = (p.values[steps][k] - p.values[0][k]) * (sum / steps);
    }
    return scores;
}

std::vector<double> relp_node(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets) {
    check_input(w, in, targets, 1);
    const ActivationCache c = forward(w, in.x);
    const SiteTensors base = baseline_acts(w, in);
    const SiteTensors g =
        replacement_backward(w, c, in.metric.gradient(static_cast<int>(in.x.size()), w.config.vocab_size));
    std::vector<double> scores(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
        scores[k] = (c.acts.at(targets[k]) - base.at(targets[k])) * g.at(targets[k]);
    }
    return scores;
}

std::vector<double> attribute_nodes(const Weights& w, const AttributionInput& in, std::span<const NodeId> targets,
                                    const NodeAttrOptions& opt) {
    switch (opt.method) {
        case NodeMethod::ig_activations: return ig_activations(w, in, targets, opt.steps, opt.grouping);
        case NodeMethod::conductance: return conductance(w, in, targets, opt.steps);
        case NodeMethod::ig_inputs: return ig_inputs(w, in, targets, opt.steps);
        case NodeMethod::relp: return relp_node(w, in, targets);
    }
    throw UsageError("attribution: bad method");
}

std::vector<std::vector<double>> attribute_each(const Weights& w, std::span<const AttributionInput> dataset,
                                                std::span<const NodeId> targets, const NodeAttrOptions& opt) {
    std::vector<std::vector<double>> out(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t i) { out[i] = attribute_nodes(w, dataset[i], targets, opt); });
    return out;
}

std::vector<double> dataset_attr(const Weights& w, std::span<const AttributionInput> dataset,
                                 std::span<const NodeId> targets, const NodeAttrOptions& opt) {
    if (dataset.empty()) throw UsageError("dataset_attr: empty dataset");
    const auto each = attribute_each(w, dataset, targets, opt);
    std::vector<double> mean(targets.size(), 0.0);
    for (const auto& row : each) {
        for (std::size_t k = 0; k < row.size(); ++k) mean[k] += row[k];
    }
    for (double& m : mean) m /= static_cast<double>(dataset.size());
    return mean;
}

}  // namespace neurotrace
