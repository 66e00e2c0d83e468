#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "neurotrace/model.hpp"
#include "neurotrace/tasks.hpp"

namespace neurotrace {

struct TrainConfig {
    double lr = 3e-3;
    int steps = 1500;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Stop early once train accuracy reaches this (checked every eval_every
    // steps). Values above 1 disable early stopping.
    double target_accuracy = 2.0;
    int eval_every = 100;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Documented budgets: agreement 300 steps (batch 32, lr 3e-3); addition
// 1500 steps (batch 64, lr 1e-3).
TrainConfig default_train_config(const TaskSpec& task);
// Default 4-layer model sized for the task's vocabulary and template.
ModelConfig task_model_config(const TaskSpec& task);

struct TrainResult {
    std::vector<double> losses;  // mean batch loss per step
    int steps_run = 0;
    double train_accuracy = 0.0;
};

// Cross-entropy on the answer token at the last position. Paired examples
// also train on their counterfactual. Batches are drawn with replacement from
// the "train" stream of config.seed.
TrainResult train(Weights& weights, std::span<const Example> dataset, const TrainConfig& config,
                  const std::function<void(int step, double loss)>& log = {});

// Mean loss and gradient over the given (tokens, answer) sequences; the
// gradient is written into `grads` (overwritten).
double loss_and_grad(const Weights& weights, std::span<const std::pair<Tokens, int>> batch, Weights* grads);

// Fraction of sequences (clean and counterfactual) whose top-1 prediction at
// the last position is the answer.
double accuracy(const Weights& weights, std::span<const Example> examples);

}  // namespace neurotrace
