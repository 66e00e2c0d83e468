#include "neurotrace/backward.hpp"

#include <cmath>

#include "neurotrace/error.hpp"

namespace neurotrace {

namespace {

struct Sweep {
    const Weights& w;
    const ActivationCache& c;
    const BackwardOptions& opt;
    bool exact() const { return opt.mode == BackwardMode::exact; }

    // Gradient that continues upstream of a node once its own gradient is final.
    Mat upstream(Site site, int layer, const Mat& grad) const {
        Mat up = grad;
        if (opt.cut) opt.cut->apply(site, layer, up);
        if (site == Site::mlp_act && !exact() && opt.mlp_stop_grad && layer != opt.stop_grad_exempt_layer) {
            up.setZero();
        }
        if (auto it = c.edits.find({site, layer}); it != c.edits.end()) {
            for (const auto& e : it->second) {
                double& g = up(e.node.position, e.node.unit);
                g = e.mode == InterventionMode::set_value ? 0.0 : g * e.value;
            }
        }
        return up;
    }

    // out = x * inv * gain; returns d/dx given d/dout.
    Mat norm_backward(const Mat& x, const Vec& inv, const Vec& gain, const Mat& dout, Vec* dgain) const {
        if (dgain) {
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                *dgain += (dout.row(j).cwiseProduct(x.row(j)) * inv(j)).transpose();
            }
        }
        Mat u = dout * gain.asDiagonal();
        Mat dx = inv.asDiagonal() * u;
        if (exact() && w.config.rmsnorm) {
            const double d = static_cast<double>(x.cols());
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                const double k = inv(j) * inv(j) * inv(j) / d * u.row(j).dot(x.row(j));
                dx.row(j) -= k * x.row(j);
            }
        }
        return dx;
    }
};

void check_compatible(const Weights& w, const ActivationCache& c) {
    const ModelConfig& cfg = w.config;
    const SiteTensors& a = c.acts;
    if (static_cast<int>(c.layers.size()) != cfg.n_layers || static_cast<int>(a.attn_out.size()) != cfg.n_layers ||
        a.embedding.cols() != cfg.d_model || a.logits.cols() != cfg.vocab_size ||
        (cfg.n_layers > 0 && a.mlp_act[0].cols() != cfg.d_ffn) || a.embedding.rows() != c.seq_len()) {
        throw UsageError("backward: activation cache does not match weights");
    }
}

}  // namespace

SiteTensors logit_seed(const Weights& weights, const ActivationCache& cache, const Mat& metric_grad) {
    SiteTensors seed = SiteTensors::zeros(weights.config, cache.seq_len());
    if (metric_grad.rows() != seed.logits.rows() || metric_grad.cols() != seed.logits.cols()) {
        throw UsageError("backward: metric gradient has the wrong shape");
    }
    seed.logits = metric_grad;
    return seed;
}

SiteTensors backward(const Weights& w, const ActivationCache& c, const SiteTensors& seed, const BackwardOptions& opt) {
    check_compatible(w, c);
    if (opt.weight_grads && opt.mode != BackwardMode::exact) {
        throw UsageError("backward: weight gradients require exact mode");
    }
    const ModelConfig& cfg = w.config;
    const int t = c.seq_len();
    const int n_layers = cfg.n_layers;
    Sweep s{w, c, opt};
    Weights* wg = opt.weight_grads;

    SiteTensors g = seed;
    if (g.seq_len() != t) throw UsageError("backward: seed has the wrong sequence length");

    // Unembedding and final norm.
    const Mat& final_resid = c.acts.resid(n_layers);
    if (wg) wg->unembed += c.final_in.transpose() * g.logits;
    Mat dfinal = g.logits * w.unembed.transpose();
    Mat& top = n_layers == 0 ? g.embedding : g.residual[n_layers - 1];
    top += s.norm_backward(final_resid, c.final_inv_rms, w.final_norm, dfinal, wg ? &wg->final_norm : nullptr);

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
    for (int i = n_layers; i >= 1; --i) {
        const LayerWeights& lw = w.layers[i - 1];
        const ActivationCache::Layer& lc = c.layers[i - 1];
        LayerWeights* lg = wg ? &wg->layers[i - 1] : nullptr;

        // r^(i) = resid_mid + m^(i)
        const Mat d_resid = s.upstream(Site::residual, i, g.residual[i - 1]);
        g.mlp_out[i - 1] += d_resid;
        Mat d_mid = d_resid;

        // m = h * W_down
        const Mat d_m = s.upstream(Site::mlp_out, i, g.mlp_out[i - 1]);
        if (lg) lg->w_down += c.acts.mlp_act[i - 1].transpose() * d_m;
        g.mlp_act[i - 1] += d_m * lw.w_down.transpose();

        // h = silu(gate) * up
        const Mat d_h = s.upstream(Site::mlp_act, i, g.mlp_act[i - 1]);
        Mat d_gate, d_up;
        if (s.exact()) {
            const Mat silu = lc.gate.cwiseProduct(lc.gate_sigmoid);
            const Mat dsilu = lc.gate_sigmoid.cwiseProduct(
                (1.0 + lc.gate.cwiseProduct((1.0 - lc.gate_sigmoid.array()).matrix()).array()).matrix());
            d_gate = d_h.cwiseProduct(lc.up).cwiseProduct(dsilu);
            d_up = d_h.cwiseProduct(silu);
        } else {
            const double factor = opt.half_rule ? 0.5 : 1.0;
            const Mat shared = factor * d_h.cwiseProduct(lc.gate_sigmoid);
            d_gate = shared.cwiseProduct(lc.up);
            d_up = shared.cwiseProduct(lc.gate);
        }
        if (lg) {
            lg->w_gate += lc.mlp_in.transpose() * d_gate;
            lg->w_up += lc.mlp_in.transpose() * d_up;
        }
        const Mat d_mlp_in = d_gate * lw.w_gate.transpose() + d_up * lw.w_up.transpose();
        d_mid += s.norm_backward(lc.resid_mid, lc.mlp_inv_rms, lw.mlp_norm, d_mlp_in, lg ? &lg->mlp_norm : nullptr);

        // resid_mid = r^(i-1) + a^(i)
        g.attn_out[i - 1] += d_mid;
        const Mat d_a = s.upstream(Site::attn_out, i, g.attn_out[i - 1]);
        if (lg) lg->w_out += lc.mixed.transpose() * d_a;
        const Mat d_mixed = d_a * lw.w_out.transpose();

        Mat d_value = Mat::Zero(t, cfg.d_model);
        Mat d_query = Mat::Zero(t, cfg.d_model);
        Mat d_key = Mat::Zero(t, cfg.d_model);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const Eigen::Index off = h * cfg.d_head;
            const Mat& p = lc.pattern[h];
            const auto dz = d_mixed.middleCols(off, cfg.d_head);
            d_value.middleCols(off, cfg.d_head) = p.transpose() * dz;
            if (!s.exact()) continue;
            const Mat dp = dz * lc.value.middleCols(off, cfg.d_head).transpose();
            Mat dscore = Mat::Zero(t, t);
            for (int j = 0; j < t; ++j) {
                double dot = 0.0;
                for (int k = 0; k <= j; ++k) dot += p(j, k) * dp(j, k);
                for (int k = 0; k <= j; ++k) dscore(j, k) = p(j, k) * (dp(j, k) - dot) * scale;
            }
            d_query.middleCols(off, cfg.d_head) = dscore * lc.key.middleCols(off, cfg.d_head);
            d_key.middleCols(off, cfg.d_head) = dscore.transpose() * lc.query.middleCols(off, cfg.d_head);
        }
        Mat d_attn_in = d_value * lw.w_value.transpose();
        if (s.exact()) {
            d_attn_in += d_query * lw.w_query.transpose();
            d_attn_in += d_key * lw.w_key.transpose();
        }
        if (lg) {
            lg->w_value += lc.attn_in.transpose() * d_value;
            lg->w_query += lc.attn_in.transpose() * d_query;
            lg->w_key += lc.attn_in.transpose() * d_key;
        }
        const Mat& resid_in = c.acts.resid(i - 1);
        Mat& below = i == 1 ? g.embedding : g.residual[i - 2];
        below += d_mid;
        below += s.norm_backward(resid_in, lc.attn_inv_rms, lw.attn_norm, d_attn_in, lg ? &lg->attn_norm : nullptr);
    }

    if (wg) {
        const Mat d_e = s.upstream(Site::embedding, 0, g.embedding);
        for (int j = 0; j < t; ++j) {
            wg->tok_embed.row(c.tokens[j]) += d_e.row(j);
            wg->pos_embed.row(j) += d_e.row(j);
        }
    }

    g.for_each([](Site site, int layer, const Mat& m) {
        if (!m.allFinite()) {
            throw NumericalError("backward: non-finite gradient at " + std::string(site_name(site)) + " layer " +
                                 std::to_string(layer));
        }
    });
    return g;
}

SiteTensors exact_backward(const Weights& weights, const ActivationCache& cache, const Mat& metric_grad,
                           const CutSet* cut) {
    BackwardOptions opt;
    opt.cut = cut;
    return backward(weights, cache, logit_seed(weights, cache, metric_grad), opt);
}

SiteTensors replacement_backward(const Weights& weights, const ActivationCache& cache, const Mat& metric_grad,
                                 const CutSet* cut, bool mlp_stop_grad, int stop_grad_exempt_layer) {
    BackwardOptions opt;
    opt.mode = BackwardMode::replacement;
    opt.cut = cut;
    opt.mlp_stop_grad = mlp_stop_grad;
    opt.stop_grad_exempt_layer = stop_grad_exempt_layer;
    return backward(weights, cache, logit_seed(weights, cache, metric_grad), opt);
}

Mat replacement_mlp(const Weights& weights, const ActivationCache& cache, int layer, const Mat& block_input) {
    if (layer < 1 || layer > weights.config.n_layers) throw UsageError("replacement_mlp: layer out of range");
    const LayerWeights& lw = weights.layers[layer - 1];
    const ActivationCache::Layer& lc = cache.layers[layer - 1];
    if (block_input.rows() != cache.seq_len() || block_input.cols() != weights.config.d_model) {
        throw UsageError("replacement_mlp: input has the wrong shape");
    }
    const Mat normed = lc.mlp_inv_rms.asDiagonal() * block_input * lw.mlp_norm.asDiagonal();
    const Mat gate = normed * lw.w_gate;
    const Mat up = normed * lw.w_up;
    return lc.gate_sigmoid.cwiseProduct(gate).cwiseProduct(up) * lw.w_down;
}

}  // namespace neurotrace
