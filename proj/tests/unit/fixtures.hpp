#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "neurotrace/model.hpp"

namespace fixtures {

inline neurotrace::ModelConfig small_config(int layers = 2, int vocab = 16) {
    neurotrace::ModelConfig c;
    c.n_layers = layers;
    c.d_model = 16;
    c.d_ffn = 32;
    c.n_heads = 2;
    c.d_head = 8;
    c.vocab_size = vocab;
    c.max_seq_len = 8;
    return c;
}

inline neurotrace::ModelConfig default_config(int vocab = 32) {
    neurotrace::ModelConfig c;  // 4 layers, d_model 64, d_ffn 256, 4 heads
    c.vocab_size = vocab;
    return c;
}

// Every nonlinearity has an input-independent multiplier: norms are plain
// gains, Q = K = 0 gives uniform causal attention, and W_gate = 0 makes the
// MLP output identically zero.
inline neurotrace::Weights linear_fixture(const neurotrace::ModelConfig& base, std::uint64_t seed) {
    neurotrace::ModelConfig c = base;
    c.rmsnorm = false;
    neurotrace::Weights w = neurotrace::init_weights(c, seed);
    for (auto& l : w.layers) {
        l.w_query.setZero();
        l.w_key.setZero();
        l.w_gate.setZero();
    }
    return w;
}

inline std::vector<int> random_tokens(int len, int vocab, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> dist(0, vocab - 1);
    std::vector<int> out(len);
    for (int& t : out) t = dist(gen);
    return out;
}

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace fixtures
