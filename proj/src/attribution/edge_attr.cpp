#include <map>

#include "neurotrace/attribution.hpp"
#include "neurotrace/backward.hpp"
#include "neurotrace/error.hpp"

namespace neurotrace {

const char* method_name(EdgeMethod m) {
    switch (m) {
        case EdgeMethod::ig_inp: return "ig_inp";
        case EdgeMethod::relp_direct: return "relp_direct";
        case EdgeMethod::relp_total: return "relp_total";
    }
    return "?";
}

EdgeMethod parse_edge_method(const std::string& name) {
    if (name == "ig_inp" || name == "igin") return EdgeMethod::ig_inp;
    if (name == "relp_direct" || name == "relp") return EdgeMethod::relp_direct;
    if (name == "relp_total") return EdgeMethod::relp_total;
    throw UsageError("unknown edge attribution method '" + name + "'");
}

NodeId embedding_terminal() { return {Site::embedding, 0, kAllPositions, 0}; }

NodeId logit_terminal(const ModelConfig& config, int readout_row) {
    return {Site::logit, config.n_layers + 1, readout_row, 0};
}

bool is_terminal(const ModelConfig& config, const NodeId& node) {
    return node == embedding_terminal() || (node.site == Site::logit && node.layer == config.n_layers + 1 && node.unit == 0);
}

bool downstream(const ModelConfig& config, const NodeId& s, const NodeId& t) {
    if (s == t || s.site == Site::logit || t.site == Site::embedding) return false;
    if (s == embedding_terminal()) return true;
    if (!(s < t)) return false;
    if (t.position < s.position) return false;
    if (t.position == s.position) return true;
    // Crossing positions needs an attention block after s and at or before t.
    return s.layer + 1 <= std::min(t.layer, config.n_layers);
}

std::optional<double> flow(double edge, double node_target, double target_value) {
    if (target_value == 0.0) return std::nullopt;
    return edge / target_value * node_target;
}

namespace {

void check_pair(const ModelConfig& cfg, int seq_len, const LinearMetric& metric, const NodeId& s, const NodeId& t) {
    if (s == t) throw UsageError("edge: source equals target");
    if (s != embedding_terminal()) validate_node(cfg, seq_len, s);
    if (t == logit_terminal(cfg, metric.row)) {
        // ok
    } else {
        if (t.site == Site::logit) throw UsageError("edge: logit targets must be the metric terminal");
        validate_node(cfg, seq_len, t);
    }
    if (!downstream(cfg, s, t)) throw UsageError("edge: " + to_string(t) + " is not downstream of " + to_string(s));
}

SiteTensors target_seed(const Weights& w, const ActivationCache& c, const LinearMetric& metric, const NodeId& t) {
    if (t.site == Site::logit) return logit_seed(w, c, metric.gradient(c.seq_len(), w.config.vocab_size));
    SiteTensors seed = SiteTensors::zeros(w.config, c.seq_len());
    seed.at(t) = 1.0;
    return seed;
}

// Source value times the gradient it received; the embedding terminal sums
// over every embedding entry.
double credit(const SiteTensors& acts, const SiteTensors& grad, const NodeId& s) {
    if (s == embedding_terminal()) return acts.embedding.cwiseProduct(grad.embedding).sum();
    return acts.at(s) * grad.at(s);
}

}  // namespace

std::vector<double> edge_scores(const Weights& w, const Tokens& x, const LinearMetric& metric, EdgeMethod method,
                                std::span<const std::pair<NodeId, NodeId>> pairs, int steps) {
    const ModelConfig& cfg = w.config;
    const int seq_len = static_cast<int>(x.size());
    if (steps < 1) throw UsageError("edge: steps must be >= 1");
    for (const auto& [s, t] : pairs) check_pair(cfg, seq_len, metric, s, t);
    const ActivationCache clean = forward(w, x);
    std::vector<double> scores(pairs.size(), 0.0);

    if (method != EdgeMethod::ig_inp) {
        std::map<NodeId, std::vector<std::size_t>> by_target;
        for (std::size_t k = 0; k < pairs.size(); ++k) by_target[pairs[k].second].push_back(k);
        for (const auto& [t, members] : by_target) {
            BackwardOptions opt;
            opt.mode = BackwardMode::replacement;
            if (method == EdgeMethod::relp_direct) {
                opt.mlp_stop_grad = true;
                const bool own_mlp = t.site == Site::mlp_act || t.site == Site::mlp_out || t.site == Site::residual;
                opt.stop_grad_exempt_layer = own_mlp ? t.layer : 0;
            }
            const SiteTensors g = backward(w, clean, target_seed(w, clean, metric, t), opt);
            for (std::size_t k : members) scores[k] = credit(clean.acts, g, pairs[k].first);
        }
        return scores;
    }

    // IG over the source: do(v_s = (i/n) v_s(x)), exact gradients into s.
    std::map<NodeId, std::vector<std::size_t>> by_source;
    for (std::size_t k = 0; k < pairs.size(); ++k) by_source[pairs[k].first].push_back(k);
    const Mat e = clean.acts.embedding;
    for (const auto& [s, members] : by_source) {
        const bool emb = s == embedding_terminal();
        std::vector<SiteTensors> sums(members.size(), SiteTensors::zeros(cfg, seq_len));
        for (int i = 1; i <= steps; ++i) {
            const double alpha = static_cast<double>(i) / steps;
            ActivationCache c;
            if (emb) {
                const Mat point = alpha * e;
                c = forward(w, x, {}, &point);
            } else {
                c = forward(w, x, Intervention().set(s, alpha * clean.acts.at(s)));
            }
            for (std::size_t m = 0; m < members.size(); ++m) {
                const NodeId& t = pairs[members[m]].second;
                sums[m] += backward(w, c, target_seed(w, c, metric, t));
            }
        }
        for (std::size_t m = 0; m < members.size(); ++m) {
            sums[m] *= 1.0 / steps;
            scores[members[m]] = credit(clean.acts, sums[m], s);
        }
    }
    return scores;
}

double edge_attr(const Weights& w, const Tokens& x, const LinearMetric& metric, EdgeMethod method,
                 const NodeId& source, const NodeId& target, int steps) {
    const std::pair<NodeId, NodeId> pair{source, target};
    return edge_scores(w, x, metric, method, std::span(&pair, 1), steps).front();
}

}  // namespace neurotrace
