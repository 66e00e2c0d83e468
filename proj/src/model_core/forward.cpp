#include "neurotrace/forward.hpp"

#include <cmath>
#include <set>

#include "neurotrace/error.hpp"

namespace neurotrace {

SiteTensors SiteTensors::zeros(const ModelConfig& config, int seq_len) {
    SiteTensors t;
    t.embedding = Mat::Zero(seq_len, config.d_model);
    for (int l = 0; l < config.n_layers; ++l) {
        t.attn_out.push_back(Mat::Zero(seq_len, config.d_model));
        t.mlp_act.push_back(Mat::Zero(seq_len, config.d_ffn));
        t.mlp_out.push_back(Mat::Zero(seq_len, config.d_model));
        t.residual.push_back(Mat::Zero(seq_len, config.d_model));
    }
    t.logits = Mat::Zero(seq_len, config.vocab_size);
    return t;
}

Mat& SiteTensors::site(Site site, int layer) {
    switch (site) {
        case Site::embedding: return embedding;
        case Site::attn_out: return attn_out.at(layer - 1);
        case Site::mlp_act: return mlp_act.at(layer - 1);
        case Site::mlp_out: return mlp_out.at(layer - 1);
        case Site::residual: return residual.at(layer - 1);
        case Site::logit: return logits;
    }
    throw UsageError("bad site");
}

const Mat& SiteTensors::site(Site s, int layer) const { return const_cast<SiteTensors*>(this)->site(s, layer); }

SiteTensors& SiteTensors::operator+=(const SiteTensors& other) {
    for_each([&](Site s, int layer, Mat& m) { m += other.site(s, layer); });
    return *this;
}

SiteTensors& SiteTensors::operator*=(double scale) {
    for_each([&](Site, int, Mat& m) { m *= scale; });
    return *this;
}

bool SiteTensors::operator==(const SiteTensors& other) const {
    bool equal = attn_out.size() == other.attn_out.size();
    if (!equal) return false;
    for_each([&](Site s, int layer, const Mat& m) {
        const Mat& o = other.site(s, layer);
        equal = equal && m.rows() == o.rows() && m.cols() == o.cols() && m == o;
    });
    return equal;
}

void CutSet::cut(const NodeId& node) { nodes_[{node.site, node.layer}].emplace_back(node.position, node.unit); }

void CutSet::cut_site(Site site, int layer) { whole_[{site, layer}] = true; }

void CutSet::apply(Site site, int layer, Mat& grad) const {
    if (whole_.count({site, layer})) {
        grad.setZero();
        return;
    }
    auto it = nodes_.find({site, layer});
    if (it == nodes_.end()) return;
    for (auto [pos, unit] : it->second) grad(pos, unit) = 0.0;
}

namespace {

// out = x * inv_rms (per row) * gain.
void rms_norm(const Mat& x, const Vec& gain, const ModelConfig& config, Mat& out, Vec& inv) {
    const Eigen::Index t = x.rows();
    inv.resize(t);
    for (Eigen::Index j = 0; j < t; ++j) {
        inv(j) = config.rmsnorm ? 1.0 / std::sqrt(config.rms_eps + x.row(j).squaredNorm() / x.cols()) : 1.0;
    }
    out = inv.asDiagonal() * x * gain.asDiagonal();
}

void apply_edits(const std::map<std::pair<Site, int>, std::vector<Intervention::Edit>>& edits, Site site,
                 int layer, Mat& m) {
    auto it = edits.find({site, layer});
    if (it == edits.end()) return;
    for (const auto& e : it->second) {
        double& v = m(e.node.position, e.node.unit);
        v = e.mode == InterventionMode::set_value ? e.value : v * e.value;
    }
}

}  // namespace

ActivationCache forward(const Weights& w, std::span<const int> tokens, const Intervention& intervention,
                        const Mat* embedding) {
    const ModelConfig& cfg = w.config;
    const int t = static_cast<int>(tokens.size());
    if (t == 0) throw UsageError("forward: empty token sequence");
    if (t > cfg.max_seq_len) throw UsageError("forward: sequence longer than max_seq_len");
    for (int tok : tokens) {
        if (tok < 0 || tok >= cfg.vocab_size) throw UsageError("forward: token " + std::to_string(tok) + " out of vocabulary");
    }

    ActivationCache c;
    c.tokens.assign(tokens.begin(), tokens.end());
    std::set<NodeId> seen;
    for (const auto& e : intervention.edits) {
        validate_node(cfg, t, e.node);
        if (e.node.site == Site::logit) throw UsageError("forward: logits cannot be intervened on");
        if (!seen.insert(e.node).second) throw UsageError("forward: duplicate intervention on " + to_string(e.node));
        c.edits[{e.node.site, e.node.layer}].push_back(e);
    }

    c.acts = SiteTensors::zeros(cfg, t);
    SiteTensors& a = c.acts;
    if (embedding) {
        if (embedding->rows() != t || embedding->cols() != cfg.d_model) throw UsageError("forward: embedding shape mismatch");
        a.embedding = *embedding;
    } else {
        for (int j = 0; j < t; ++j) a.embedding.row(j) = w.tok_embed.row(tokens[j]) + w.pos_embed.row(j);
    }
    apply_edits(c.edits, Site::embedding, 0, a.embedding);

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
    c.layers.resize(cfg.n_layers);
    for (int i = 1; i <= cfg.n_layers; ++i) {
        const LayerWeights& lw = w.layers[i - 1];
        ActivationCache::Layer& lc = c.layers[i - 1];
        const Mat& resid_in = a.resid(i - 1);

        rms_norm(resid_in, lw.attn_norm, cfg, lc.attn_in, lc.attn_inv_rms);
        lc.query = lc.attn_in * lw.w_query;
        lc.key = lc.attn_in * lw.w_key;
        lc.value = lc.attn_in * lw.w_value;
        lc.mixed = Mat::Zero(t, cfg.d_model);
        lc.pattern.assign(cfg.n_heads, Mat::Zero(t, t));
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto q = lc.query.middleCols(h * cfg.d_head, cfg.d_head);
            const auto k = lc.key.middleCols(h * cfg.d_head, cfg.d_head);
            Mat& p = lc.pattern[h];
            for (int j = 0; j < t; ++j) {
                double max_score = -INFINITY;
                for (int s = 0; s <= j; ++s) {
                    p(j, s) = q.row(j).dot(k.row(s)) * scale;
                    max_score = std::max(max_score, p(j, s));
                }
                double total = 0.0;
                for (int s = 0; s <= j; ++s) {
                    p(j, s) = std::exp(p(j, s) - max_score);
                    total += p(j, s);
                }
                for (int s = 0; s <= j; ++s) p(j, s) /= total;
            }
            lc.mixed.middleCols(h * cfg.d_head, cfg.d_head) = p * lc.value.middleCols(h * cfg.d_head, cfg.d_head);
        }
        Mat& attn = a.attn_out[i - 1];
        attn = lc.mixed * lw.w_out;
        apply_edits(c.edits, Site::attn_out, i, attn);
        lc.resid_mid = resid_in + attn;

        rms_norm(lc.resid_mid, lw.mlp_norm, cfg, lc.mlp_in, lc.mlp_inv_rms);
        lc.gate = lc.mlp_in * lw.w_gate;
        lc.up = lc.mlp_in * lw.w_up;
        lc.gate_sigmoid = lc.gate.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        Mat& act = a.mlp_act[i - 1];
        act = lc.gate.cwiseProduct(lc.gate_sigmoid).cwiseProduct(lc.up);
        apply_edits(c.edits, Site::mlp_act, i, act);

        Mat& out = a.mlp_out[i - 1];
        out = act * lw.w_down;
        apply_edits(c.edits, Site::mlp_out, i, out);

        Mat& resid = a.residual[i - 1];
        resid = lc.resid_mid + out;
        apply_edits(c.edits, Site::residual, i, resid);
    }

    rms_norm(a.resid(cfg.n_layers), w.final_norm, cfg, c.final_in, c.final_inv_rms);
    a.logits = c.final_in * w.unembed;

    a.for_each([](Site s, int layer, const Mat& m) {
        if (!m.allFinite()) {
            throw NumericalError("forward: non-finite activation at " + std::string(site_name(s)) + " layer " +
                                 std::to_string(layer));
        }
    });
    return c;
}

SiteTensors mean_activations(const Weights& weights, std::span<const Tokens> dataset) {
    if (dataset.empty()) throw UsageError("mean_activations: empty dataset");
    const std::size_t len = dataset.front().size();
    for (const auto& x : dataset) {
        if (x.size() != len) throw UsageError("mean_activations: inputs have different lengths");
    }
    SiteTensors sum = SiteTensors::zeros(weights.config, static_cast<int>(len));
    for (const auto& x : dataset) sum += forward(weights, x).acts;
    sum *= 1.0 / static_cast<double>(dataset.size());
    return sum;
}

}  // namespace neurotrace
