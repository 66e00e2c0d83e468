#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace neurotrace {

// Effective settings of one command. Precedence: flags, then the --config
// JSON file, then these defaults.
struct RunConfig {
    std::string command;
    std::string model;    // weights file
    std::string task = "agreement";
    std::string dataset;  // directory written by `gen`; replaces --task
    std::string method = "relp";
    std::string edge_method = "relp_direct";
    std::string metric = "auto";
    std::string basis = "mlp_act";
    std::string ablation = "mean";
    std::string means;    // means file; computed from the train split if empty
    bool paired = true;
    std::optional<int> steps;  // IG steps, or optimizer steps for `train`
    double tau = 0.005;
    int topk = 5;
    std::optional<double> edge_frac;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::vector<double> k_grid;
    int examples = 0;  // 0 = whole split
    int example = 0;
    std::string label = "mod10";
    std::string cls;
    double hi = 0.8;
    double lo = 0.2;
    std::vector<double> alphas;
    std::vector<std::string> nodes;
    // train
    std::optional<double> lr;
    std::optional<int> batch_size;
    nlohmann::json model_config = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Overlays keys present in `j` onto `c`.
void apply_json(const nlohmann::json& j, RunConfig& c);

// Command implementations. Each validates its inputs, writes its outputs
// into c.out atomically and echoes the effective config as config.json.
void cmd_gen(const RunConfig& c);
void cmd_train(const RunConfig& c);
void cmd_trace(const RunConfig& c);
void cmd_eval(const RunConfig& c);
void cmd_auroc(const RunConfig& c);
void cmd_steer(const RunConfig& c);

// Parses argv and dispatches. Returns 0 on success, 1 on numerical failure
// and 2 on usage or IO errors.
int run_cli(int argc, const char* const* argv);

}  // namespace neurotrace
