#include "neurotrace/train.hpp"

#include <cmath>
#include <random>

#include "neurotrace/backward.hpp"
#include "neurotrace/error.hpp"
#include "neurotrace/forward.hpp"
#include "neurotrace/rng.hpp"

namespace neurotrace {

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("train: lr must be finite and >= 0");
    if (steps < 0) throw UsageError("train: steps must be >= 0");
    if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("train: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw UsageError("train: eps must be > 0");
    if (eval_every < 1) throw UsageError("train: eval_every must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lr", c.lr},       {"steps", c.steps}, {"batch_size", c.batch_size},
         {"seed", c.seed},   {"beta1", c.beta1}, {"beta2", c.beta2},
         {"eps", c.eps},     {"target_accuracy", c.target_accuracy}, {"eval_every", c.eval_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = {};
    c.lr = j.value("lr", c.lr);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.target_accuracy = j.value("target_accuracy", c.target_accuracy);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.validate();
}

TrainConfig default_train_config(const TaskSpec& task) {
    TrainConfig c;
    if (task.kind == TaskKind::agreement) {
        c.steps = 300;
        c.batch_size = 32;
        c.lr = 3e-3;
    } else {
        c.steps = 1500;
        c.batch_size = 64;
        c.lr = 1e-3;
    }
    c.seed = task.seed;
    return c;
}

ModelConfig task_model_config(const TaskSpec& task) {
    ModelConfig c;
    c.vocab_size = task.vocab_size();
    c.max_seq_len = task.template_length();
    return c;
}

double loss_and_grad(const Weights& w, std::span<const std::pair<Tokens, int>> batch, Weights* grads) {
    if (batch.empty()) throw UsageError("train: empty batch");
    if (grads) *grads = Weights::zeros(w.config);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    BackwardOptions opt;
    opt.weight_grads = grads;
    for (const auto& [tokens, answer] : batch) {
        const ActivationCache c = forward(w, tokens);
        const int t = c.seq_len();
        const Eigen::RowVectorXd row = c.acts.logits.row(t - 1);
        const double mx = row.maxCoeff();
        const Eigen::RowVectorXd ex = (row.array() - mx).exp().matrix();
        const double z = ex.sum();
        loss += (std::log(z) + mx - row(answer)) * inv_b;
        if (!grads) continue;
        SiteTensors seed = SiteTensors::zeros(w.config, t);
        seed.logits.row(t - 1) = ex / z * inv_b;
        seed.logits(t - 1, answer) -= inv_b;
        backward(w, c, seed, opt);
    }
    return loss;
}

double accuracy(const Weights& w, std::span<const Example> examples) {
    if (examples.empty()) throw UsageError("accuracy: empty dataset");
    int hits = 0, total = 0;
    const auto check = [&](const Tokens& x, int y) {
        const Mat logits = forward(w, x).acts.logits;
        Eigen::Index arg = 0;
        logits.row(logits.rows() - 1).maxCoeff(&arg);
        hits += arg == y;
        ++total;
    };
    for (const Example& e : examples) {
        check(e.tokens, e.answer);
        if (e.counterfactual) check(*e.counterfactual, e.counterfactual_answer);
    }
    return static_cast<double>(hits) / total;
}

TrainResult train(Weights& w, std::span<const Example> dataset, const TrainConfig& cfg,
                  const std::function<void(int, double)>& log) {
    cfg.validate();
    w.validate();
    if (dataset.empty()) throw UsageError("train: empty dataset");
    std::vector<std::pair<Tokens, int>> pool;
    for (const Example& e : dataset) {
        if (e.answer < 0 || e.answer >= w.config.vocab_size) throw UsageError("train: answer token out of range");
        pool.emplace_back(e.tokens, e.answer);
        if (e.counterfactual) pool.emplace_back(*e.counterfactual, e.counterfactual_answer);
    }

    auto gen = SeedSplitter(cfg.seed).stream("train");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    Weights m = Weights::zeros(w.config), v = Weights::zeros(w.config), g;
    std::vector<double*> wp, mp, vp, gp;
    std::vector<Eigen::Index> sizes;
    w.for_each_tensor([&](const std::string&, double* d, Eigen::Index r, Eigen::Index c) {
        wp.push_back(d);
        sizes.push_back(r * c);
    });
    m.for_each_tensor([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { mp.push_back(d); });
    v.for_each_tensor([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { vp.push_back(d); });

    TrainResult result;
    std::vector<std::pair<Tokens, int>> batch(cfg.batch_size);
    double b1t = 1.0, b2t = 1.0;
    for (int step = 1; step <= cfg.steps; ++step) {
        for (auto& item : batch) item = pool[pick(gen)];
        const double loss = loss_and_grad(w, batch, &g);
        if (!std::isfinite(loss)) {
            throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                                 " (lr " + std::to_string(cfg.lr) + "); lower the learning rate");
        }
        gp.clear();
        g.for_each_tensor([&](const std::string&, double* d, Eigen::Index, Eigen::Index) { gp.push_back(d); });
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for (std::size_t k = 0; k < wp.size(); ++k) {
            for (Eigen::Index i = 0; i < sizes[k]; ++i) {
                const double gi = gp[k][i];
                mp[k][i] = cfg.beta1 * mp[k][i] + (1.0 - cfg.beta1) * gi;
                vp[k][i] = cfg.beta2 * vp[k][i] + (1.0 - cfg.beta2) * gi * gi;
                const double mhat = mp[k][i] / (1.0 - b1t);
                const double vhat = vp[k][i] / (1.0 - b2t);
                wp[k][i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
        result.losses.push_back(loss);
        result.steps_run = step;
        if (log) log(step, loss);
        if (cfg.target_accuracy <= 1.0 && step % cfg.eval_every == 0) {
            result.train_accuracy = accuracy(w, dataset);
            if (result.train_accuracy >= cfg.target_accuracy) break;
        }
    }
    w.validate();
    result.train_accuracy = accuracy(w, dataset);
    return result;
}

}  // namespace neurotrace
