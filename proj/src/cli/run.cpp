#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "neurotrace/cli.hpp"
#include "neurotrace/error.hpp"
#include "neurotrace/io.hpp"

namespace neurotrace {

namespace {

// Flag values as parsed; only flags actually given are copied into the
// effective config.
struct Flags {
    RunConfig c;
    int steps = 0;
    double edge_frac = 0.0;
    std::uint64_t seed = 0;
    double lr = 0.0;
    int batch_size = 0;
    std::string config;
};

struct Binding {
    CLI::Option* option;
    std::function<void(RunConfig&, const Flags&)> copy;
};

class Builder {
public:
    Builder(CLI::App* sub, Flags& f, std::vector<Binding>& out) : sub_(sub), f_(f), out_(out) {}

    template <typename T>
    Builder& opt(const std::string& name, T RunConfig::*field, const std::string& help) {
        auto* o = sub_->add_option(name, f_.c.*field, help);
        out_.push_back({o, [field](RunConfig& c, const Flags& f) { c.*field = f.c.*field; }});
        return *this;
    }

    template <typename T, typename U>
    Builder& opt(const std::string& name, T Flags::*tmp, std::optional<U> RunConfig::*field, const std::string& help) {
        auto* o = sub_->add_option(name, f_.*tmp, help);
        out_.push_back({o, [tmp, field](RunConfig& c, const Flags& f) { c.*field = f.*tmp; }});
        return *this;
    }

    Builder& list(const std::string& name, std::vector<double> RunConfig::*field, const std::string& help) {
        auto* o = sub_->add_option(name, f_.c.*field, help)->delimiter(',');
        out_.push_back({o, [field](RunConfig& c, const Flags& f) { c.*field = f.c.*field; }});
        return *this;
    }

    Builder& common() {
        opt("--seed", &Flags::seed, &RunConfig::seed, "master seed (required)");
        opt("--out", &RunConfig::out, "output directory");
        auto* force = sub_->add_flag("--force", f_.c.force, "overwrite existing outputs");
        out_.push_back({force, [](RunConfig& c, const Flags& f) { c.force = f.c.force; }});
        sub_->add_option("--config", f_.config, "JSON config file; flags take precedence");
        opt("--task", &RunConfig::task, "agreement, agreement_simple, addition or a task JSON file");
        opt("--dataset", &RunConfig::dataset, "dataset directory written by `gen`");
        return *this;
    }

    Builder& model() {
        opt("--model", &RunConfig::model, "weights file");
        opt("--method", &RunConfig::method, "node attribution method: igact, igin, cond or relp");
        opt("--basis", &RunConfig::basis, "mlp_act, mlp_out, attn_out or residual");
        opt("--steps", &Flags::steps, &RunConfig::steps, "integration steps for IG-style methods");
        opt("--metric", &RunConfig::metric, "auto, logit_diff, single_logit (trace also: topk)");
        opt("--examples", &RunConfig::examples, "use the first N examples of the split (0 = all)");
        auto* paired = sub_->add_flag("--paired,!--unpaired", f_.c.paired,
                                      "counterfactual baseline (default) or zero baseline");
        out_.push_back({paired, [](RunConfig& c, const Flags& f) { c.paired = f.c.paired; }});
        return *this;
    }

private:
    CLI::App* sub_;
    Flags& f_;
    std::vector<Binding>& out_;
};

void dispatch(const RunConfig& c) {
    if (c.command == "gen") return cmd_gen(c);
    if (c.command == "train") return cmd_train(c);
    if (c.command == "trace") return cmd_trace(c);
    if (c.command == "eval") return cmd_eval(c);
    if (c.command == "auroc") return cmd_auroc(c);
    if (c.command == "steer") return cmd_steer(c);
    throw UsageError("unknown command " + c.command);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"neurotrace: attribution, circuit discovery and evaluation on toy transformers"};
    app.require_subcommand(1);
    Flags flags;
    std::map<CLI::App*, std::vector<Binding>> bindings;

    auto* gen = app.add_subcommand("gen", "generate a task dataset");
    Builder(gen, flags, bindings[gen]).common();

    auto* train = app.add_subcommand("train", "train a model on a task");
    Builder(train, flags, bindings[train])
        .common()
        .opt("--steps", &Flags::steps, &RunConfig::steps, "optimizer steps (default: the task's budget)")
        .opt("--lr", &Flags::lr, &RunConfig::lr, "Adam learning rate")
        .opt("--batch-size", &Flags::batch_size, &RunConfig::batch_size, "batch size");

    auto* trace = app.add_subcommand("trace", "build an attribution graph for eval examples");
    Builder(trace, flags, bindings[trace])
        .common()
        .model()
        .opt("--edge-method", &RunConfig::edge_method, "relp_direct, relp_total or ig_inp")
        .opt("--tau", &RunConfig::tau, "node threshold as a fraction of |metric|")
        .opt("--topk", &RunConfig::topk, "number of top logits in the default metric")
        .opt("--edge-frac", &Flags::edge_frac, &RunConfig::edge_frac, "keep this fraction of edges by |flow|")
        .opt("--example", &RunConfig::example, "first eval example to trace");

    auto* eval = app.add_subcommand("eval", "faithfulness/completeness sweep over circuit sizes");
    Builder(eval, flags, bindings[eval])
        .common()
        .model()
        .opt("--ablation", &RunConfig::ablation, "mean or zero")
        .opt("--means", &RunConfig::means, "means file (default: computed from the train split)")
        .list("--k-grid", &RunConfig::k_grid, "comma-separated circuit fractions");

    auto* auroc = app.add_subcommand("auroc", "find units predictive of a label");
    Builder(auroc, flags, bindings[auroc])
        .common()
        .model()
        .opt("--label", &RunConfig::label, "label name, e.g. mod10")
        .opt("--class", &RunConfig::cls, "only this class value")
        .opt("--hi", &RunConfig::hi, "report units with AUROC >= hi")
        .opt("--lo", &RunConfig::lo, "report units with AUROC <= lo");

    auto* steer = app.add_subcommand("steer", "scale units and record output probabilities");
    Builder(steer, flags, bindings[steer])
        .common()
        .model()
        .opt("--label", &RunConfig::label, "label name, e.g. mod10")
        .opt("--class", &RunConfig::cls, "target class value")
        .opt("--hi", &RunConfig::hi, "AUROC threshold for automatic node choice")
        .opt("--lo", &RunConfig::lo, "AUROC threshold for automatic node choice")
        .opt("--node", &RunConfig::nodes, "node to steer, e.g. mlp_act:2:*:17 (repeatable)")
        .list("--alphas", &RunConfig::alphas, "comma-separated scale factors");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        RunConfig c;
        c.command = sub->get_name();
        if (!flags.config.empty()) {
            if (!std::filesystem::exists(flags.config)) throw UsageError("config file " + flags.config + " not found");
            try {
                apply_json(nlohmann::json::parse(read_file(flags.config)), c);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("config file " + flags.config + ": " + e.what());
            }
        }
        for (const Binding& b : bindings[sub]) {
            if (b.option->count() > 0) b.copy(c, flags);
        }
        dispatch(c);
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace neurotrace
