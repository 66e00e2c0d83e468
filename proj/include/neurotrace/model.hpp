#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace neurotrace {

// Rows are token positions throughout; projections are stored (in x out) so
// that a layer is `activations * W`.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct ModelConfig {
    int n_layers = 4;
    int d_model = 64;
    int d_ffn = 256;
    int n_heads = 4;
    int d_head = 16;
    int vocab_size = 32;
    int max_seq_len = 8;
    double rms_eps = 1e-5;
    // When false every RMSNorm becomes a plain gain (x * g). Only used to
    // build exactly linear fixtures.
    bool rmsnorm = true;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LayerWeights {
    Vec attn_norm;  // d_model
    Mat w_query;    // d_model x d_model
    Mat w_key;      // d_model x d_model
    Mat w_value;    // d_model x d_model
    Mat w_out;      // d_model x d_model
    Vec mlp_norm;   // d_model
    Mat w_gate;     // d_model x d_ffn
    Mat w_up;       // d_model x d_ffn
    Mat w_down;     // d_ffn x d_model
};

struct Weights {
    ModelConfig config;
    Mat tok_embed;  // vocab_size x d_model
    Mat pos_embed;  // max_seq_len x d_model
    std::vector<LayerWeights> layers;
    Vec final_norm;  // d_model
    Mat unembed;     // d_model x vocab_size

    // Zero-filled weights with every shape implied by `config`.
    static Weights zeros(const ModelConfig& config);

    // Shapes match the config and every entry is finite.
    void validate() const;

    // Visits (name, pointer, rows, cols) for every tensor in a fixed order.
    // Vectors report cols == 1.
    template <typename F>
    void for_each_tensor(F&& f);
    template <typename F>
    void for_each_tensor(F&& f) const;

    bool operator==(const Weights& other) const;
};

// Documented init, all from the "init" stream of `seed`:
//   embeddings ~ N(0, 1); Q/K/V/gate/up ~ N(0, 1/sqrt(fan_in));
//   out/down ~ N(0, 1/sqrt(fan_in * 2L)); unembed ~ N(0, 1/sqrt(d_model));
//   norm gains = 1.
Weights init_weights(const ModelConfig& config, std::uint64_t seed);

// Weights file: 8-byte little-endian header length, a JSON header
// {"config": ..., "tensors": [{"name", "shape", "offset"}]}, then raw
// little-endian float32 data, row-major. Offsets are relative to the data
// section.
void save_weights(const Weights& weights, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);

// Round every entry through float32 (what save/load does).
void round_to_float32(Weights& weights);

template <typename F>
void Weights::for_each_tensor(F&& f) {
    auto visit = [&](const std::string& name, auto& t) { f(name, t.data(), t.rows(), t.cols()); };
    visit("tok_embed", tok_embed);
    visit("pos_embed", pos_embed);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        const std::string p = "layers." + std::to_string(i + 1) + ".";
        visit(p + "attn_norm", l.attn_norm);
        visit(p + "w_query", l.w_query);
        visit(p + "w_key", l.w_key);
        visit(p + "w_value", l.w_value);
        visit(p + "w_out", l.w_out);
        visit(p + "mlp_norm", l.mlp_norm);
        visit(p + "w_gate", l.w_gate);
        visit(p + "w_up", l.w_up);
        visit(p + "w_down", l.w_down);
    }
    visit("final_norm", final_norm);
    visit("unembed", unembed);
}

template <typename F>
void Weights::for_each_tensor(F&& f) const {
    const_cast<Weights*>(this)->for_each_tensor(
        [&](const std::string& name, double* data, Eigen::Index rows, Eigen::Index cols) {
            f(name, static_cast<const double*>(data), rows, cols);
        });
}

}  // namespace neurotrace
