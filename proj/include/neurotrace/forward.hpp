#pragma once

#include <map>
#include <span>
#include <vector>

#include "neurotrace/model.hpp"
#include "neurotrace/node.hpp"

namespace neurotrace {

using Tokens = std::vector<int>;

// One T x width matrix per (site, layer) node address. Used for activations,
// gradients, means and dense attribution scores alike.
struct SiteTensors {
    Mat embedding;               // layer 0
    std::vector<Mat> attn_out;   // [layer - 1]
    std::vector<Mat> mlp_act;    // [layer - 1]
    std::vector<Mat> mlp_out;    // [layer - 1]
    std::vector<Mat> residual;   // [layer - 1]
    Mat logits;                  // layer L + 1

    static SiteTensors zeros(const ModelConfig& config, int seq_len);

    int seq_len() const { return static_cast<int>(embedding.rows()); }
    Mat& site(Site site, int layer);
    const Mat& site(Site site, int layer) const;
    double& at(const NodeId& node) { return site(node.site, node.layer)(node.position, node.unit); }
    double at(const NodeId& node) const { return site(node.site, node.layer)(node.position, node.unit); }

    // r^(i) with r^(0) = e.
    const Mat& resid(int layer) const { return layer == 0 ? embedding : residual[layer - 1]; }

    template <typename F>
    void for_each(F&& f);
    template <typename F>
    void for_each(F&& f) const;

    SiteTensors& operator+=(const SiteTensors& other);
    SiteTensors& operator*=(double scale);
    bool operator==(const SiteTensors& other) const;
};

// do-operator edits applied during a forward pass.
enum class InterventionMode { set_value, scale };

struct Intervention {
    struct Edit {
        NodeId node;
        InterventionMode mode = InterventionMode::set_value;
        double value = 0.0;  // the new value, or the scale factor
    };
    std::vector<Edit> edits;

    Intervention& set(const NodeId& node, double value) {
        edits.push_back({node, InterventionMode::set_value, value});
        return *this;
    }
    Intervention& scale(const NodeId& node, double factor) {
        edits.push_back({node, InterventionMode::scale, factor});
        return *this;
    }
    bool empty() const { return edits.empty(); }
};

// Nodes treated as leaves by a backward pass: their gradient is reported,
// but nothing flows upstream of them.
class CutSet {
public:
    void cut(const NodeId& node);
    void cut_site(Site site, int layer);  // every position and unit
    bool empty() const { return whole_.empty() && nodes_.empty(); }
    // Zeroes the cut entries of `grad` (a T x width block for site/layer).
    void apply(Site site, int layer, Mat& grad) const;

private:
    std::map<std::pair<Site, int>, bool> whole_;
    std::map<std::pair<Site, int>, std::vector<std::pair<int, int>>> nodes_;
};

// Everything one forward pass computed. Immutable once returned.
struct ActivationCache {
    struct Layer {
        Vec attn_inv_rms;   // T
        Mat attn_in;        // normed input to attention, T x d
        Mat query, key, value;
        std::vector<Mat> pattern;  // per head, T x T, causal softmax
        Mat mixed;          // concatenated head outputs before W_out, T x d
        Mat resid_mid;      // r^(i-1) + a^(i)
        Vec mlp_inv_rms;    // T
        Mat mlp_in;         // T x d
        Mat gate, up;       // T x f
        Mat gate_sigmoid;   // sigma(gate), T x f
    };

    Tokens tokens;
    SiteTensors acts;  // e, a, h, m, r, logits as used downstream
    std::vector<Layer> layers;
    Vec final_inv_rms;
    Mat final_in;
    // Edits applied during this pass, grouped per (site, layer).
    std::map<std::pair<Site, int>, std::vector<Intervention::Edit>> edits;

    int seq_len() const { return static_cast<int>(tokens.size()); }
};

// Throws UsageError for empty/oversized inputs, out-of-vocabulary tokens or
// invalid intervention nodes, NumericalError for non-finite activations.
// `embedding`, when given, replaces tok_embed + pos_embed (T x d_model);
// `tokens` then only fixes the length.
ActivationCache forward(const Weights& weights, std::span<const int> tokens,
                        const Intervention& intervention = {}, const Mat* embedding = nullptr);

// Per-node arithmetic mean of activations over equally long inputs.
SiteTensors mean_activations(const Weights& weights, std::span<const Tokens> dataset);

template <typename F>
void SiteTensors::for_each(F&& f) {
    f(Site::embedding, 0, embedding);
    for (std::size_t i = 0; i < attn_out.size(); ++i) {
        const int layer = static_cast<int>(i) + 1;
        f(Site::attn_out, layer, attn_out[i]);
        f(Site::mlp_act, layer, mlp_act[i]);
        f(Site::mlp_out, layer, mlp_out[i]);
        f(Site::residual, layer, residual[i]);
    }
    f(Site::logit, static_cast<int>(attn_out.size()) + 1, logits);
}

template <typename F>
void SiteTensors::for_each(F&& f) const {
    const_cast<SiteTensors*>(this)->for_each(
        [&](Site s, int layer, Mat& m) { f(s, layer, static_cast<const Mat&>(m)); });
}

}  // namespace neurotrace
