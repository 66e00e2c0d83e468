#include "reference_model.hpp"

#include <cmath>

namespace reference {

using neurotrace::Site;

namespace {

Rows matmul(const Rows& x, const neurotrace::Mat& w) {
    Rows out(x.size(), std::vector<double>(w.cols(), 0.0));
    for (std::size_t j = 0; j < x.size(); ++j) {
        for (long o = 0; o < w.cols(); ++o) {
            double acc = 0.0;
            for (long i = 0; i < w.rows(); ++i) acc += x[j][i] * w(i, o);
            out[j][o] = acc;
        }
    }
    return out;
}

Rows rmsnorm(const Rows& x, const neurotrace::Vec& gain, const neurotrace::ModelConfig& cfg) {
    Rows out = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        double ms = 0.0;
        for (double v : x[j]) ms += v * v;
        ms /= static_cast<double>(x[j].size());
        const double inv = cfg.rmsnorm ? 1.0 / std::sqrt(ms + cfg.rms_eps) : 1.0;
        for (std::size_t u = 0; u < x[j].size(); ++u) out[j][u] = x[j][u] * inv * gain(u);
    }
    return out;
}

Rows add(const Rows& a, const Rows& b) {
    Rows out = a;
    for (std::size_t j = 0; j < a.size(); ++j) {
        for (std::size_t u = 0; u < a[j].size(); ++u) out[j][u] += b[j][u];
    }
    return out;
}

}  // namespace

Activations forward(const neurotrace::Weights& w, const std::vector<int>& tokens, const Hook& hook) {
    const auto& cfg = w.config;
    const std::size_t t = tokens.size();
    const auto run_hook = [&](Site s, int layer, Rows& r) {
        if (hook) hook(s, layer, r);
    };

    Activations act;
    act.embedding.assign(t, std::vector<double>(cfg.d_model));
    for (std::size_t j = 0; j < t; ++j) {
        for (int u = 0; u < cfg.d_model; ++u) act.embedding[j][u] = w.tok_embed(tokens[j], u) + w.pos_embed(j, u);
    }
    run_hook(Site::embedding, 0, act.embedding);

    Rows resid = act.embedding;
    for (int i = 1; i <= cfg.n_layers; ++i) {
        const auto& lw = w.layers[i - 1];
        const Rows x = rmsnorm(resid, lw.attn_norm, cfg);
        const Rows q = matmul(x, lw.w_query), k = matmul(x, lw.w_key), v = matmul(x, lw.w_value);
        Rows mixed(t, std::vector<double>(cfg.d_model, 0.0));
        for (int h = 0; h < cfg.n_heads; ++h) {
            const int off = h * cfg.d_head;
            for (std::size_t j = 0; j < t; ++j) {
                std::vector<double> score(j + 1);
                double mx = -1e300;
                for (std::size_t s = 0; s <= j; ++s) {
                    double dot = 0.0;
                    for (int d = 0; d < cfg.d_head; ++d) dot += q[j][off + d] * k[s][off + d];
                    score[s] = dot / std::sqrt(static_cast<double>(cfg.d_head));
                    mx = std::max(mx, score[s]);
                }
                double z = 0.0;
                for (double& sc : score) z += (sc = std::exp(sc - mx));
                for (std::size_t s = 0; s <= j; ++s) {
                    for (int d = 0; d < cfg.d_head; ++d) mixed[j][off + d] += score[s] / z * v[s][off + d];
                }
            }
        }
        Rows a = matmul(mixed, lw.w_out);
        run_hook(Site::attn_out, i, a);
        act.attn_out.push_back(a);
        const Rows mid = add(resid, a);

        const Rows x2 = rmsnorm(mid, lw.mlp_norm, cfg);
        const Rows gate = matmul(x2, lw.w_gate), up = matmul(x2, lw.w_up);
        Rows h(t, std::vector<double>(cfg.d_ffn));
        for (std::size_t j = 0; j < t; ++j) {
            for (int u = 0; u < cfg.d_ffn; ++u) {
                const double g = gate[j][u];
                h[j][u] = g / (1.0 + std::exp(-g)) * up[j][u];
            }
        }
        run_hook(Site::mlp_act, i, h);
        act.mlp_act.push_back(h);
        Rows m = matmul(h, lw.w_down);
        run_hook(Site::mlp_out, i, m);
        act.mlp_out.push_back(m);
        resid = add(mid, m);
        run_hook(Site::residual, i, resid);
        act.residual.push_back(resid);
    }
    act.logits = matmul(rmsnorm(resid, w.final_norm, cfg), w.unembed);
    return act;
}

}  // namespace reference
