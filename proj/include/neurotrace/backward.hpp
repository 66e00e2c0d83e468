#pragma once

#include "neurotrace/forward.hpp"

namespace neurotrace {

enum class BackwardMode {
    exact,        // true gradients of the nonlinear model
    replacement,  // frozen norms, frozen attention patterns, x * Freeze(sigma(x)) SiLU
};

struct BackwardOptions {
    BackwardMode mode = BackwardMode::exact;
    const CutSet* cut = nullptr;
    // Replacement mode: scale the gradient into each factor of the gated-MLP
    // product by 1/2. Disabling it is for diagnostics only.
    bool half_rule = true;
    // Replacement mode: block upstream flow through every mlp_act site except
    // the one at `stop_grad_exempt_layer` (0 exempts none).
    bool mlp_stop_grad = false;
    int stop_grad_exempt_layer = 0;
    // Exact mode only: accumulate parameter gradients here (same shapes as the
    // model). Must be pre-sized, e.g. with Weights::zeros.
    Weights* weight_grads = nullptr;
};

// Reverse sweep over a cached forward pass. `seed` holds d(objective)/d(node)
// contributions injected at any site (usually only the logits). Returns the
// gradient of the objective with respect to every node, each node treated as
// a leaf: cut nodes and set_value interventions still report their own
// gradient but pass nothing upstream.
SiteTensors backward(const Weights& weights, const ActivationCache& cache, const SiteTensors& seed,
                     const BackwardOptions& options = {});

SiteTensors exact_backward(const Weights& weights, const ActivationCache& cache, const Mat& metric_grad,
                           const CutSet* cut = nullptr);

SiteTensors replacement_backward(const Weights& weights, const ActivationCache& cache, const Mat& metric_grad,
                                 const CutSet* cut = nullptr, bool mlp_stop_grad = false,
                                 int stop_grad_exempt_layer = 0);

// Seed tensor for `cache` holding `metric_grad` (T x vocab) at the logits.
SiteTensors logit_seed(const Weights& weights, const ActivationCache& cache, const Mat& metric_grad);

// The layer's MLP as the replacement model sees it: RMSNorm denominators and
// SiLU sigmoids frozen at the values stored in `cache`, evaluated on a new
// block input (T x d_model, in place of r^(i-1) + a^(i)).
Mat replacement_mlp(const Weights& weights, const ActivationCache& cache, int layer, const Mat& block_input);

}  // namespace neurotrace
