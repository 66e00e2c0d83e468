#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "neurotrace/analysis.hpp"
#include "neurotrace/cli.hpp"
#include "neurotrace/error.hpp"
#include "neurotrace/io.hpp"
#include "neurotrace/train.hpp"

namespace fs = std::filesystem;

namespace neurotrace {

void to_json(nlohmann::json& j, const RunConfig& c) {
    const auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
    j = {{"command", c.command},   {"model", c.model},       {"task", c.task},
         {"dataset", c.dataset},   {"method", c.method},     {"edge_method", c.edge_method},
         {"metric", c.metric},     {"basis", c.basis},       {"ablation", c.ablation},
         {"means", c.means},       {"paired", c.paired},     {"steps", opt(c.steps)},
         {"tau", c.tau},           {"topk", c.topk},         {"edge_frac", opt(c.edge_frac)},
         {"seed", opt(c.seed)},    {"out", c.out},           {"k_grid", c.k_grid},
         {"examples", c.examples}, {"example", c.example},   {"label", c.label},
         {"class", c.cls},         {"hi", c.hi},             {"lo", c.lo},
         {"alphas", c.alphas},     {"nodes", c.nodes},       {"lr", opt(c.lr)},
         {"batch_size", opt(c.batch_size)}, {"model_config", c.model_config}};
}

void apply_json(const nlohmann::json& j, RunConfig& c) {
    if (!j.is_object()) throw UsageError("config: expected a JSON object");
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(field);
    };
    const auto get_opt = [&](const char* key, auto& field) {
        if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<typename std::decay_t<decltype(field)>::value_type>();
    };
    get("model", c.model);
    get("task", c.task);
    get("dataset", c.dataset);
    get("method", c.method);
    get("edge_method", c.edge_method);
    get("metric", c.metric);
    get("basis", c.basis);
    get("ablation", c.ablation);
    get("means", c.means);
    get("paired", c.paired);
    get_opt("steps", c.steps);
    get("tau", c.tau);
    get("topk", c.topk);
    get_opt("edge_frac", c.edge_frac);
    get_opt("seed", c.seed);
    get("out", c.out);
    get("force", c.force);
    get("k_grid", c.k_grid);
    get("examples", c.examples);
    get("example", c.example);
    get("label", c.label);
    get("class", c.cls);
    get("hi", c.hi);
    get("lo", c.lo);
    get("alphas", c.alphas);
    get("nodes", c.nodes);
    get_opt("lr", c.lr);
    get_opt("batch_size", c.batch_size);
    get("model_config", c.model_config);
}

namespace {

void log(const std::string& msg) { std::cerr << "neurotrace: " << msg << '\n'; }

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

// Output directory with collision checks; every write is atomic.
class Output {
public:
    Output(const RunConfig& c, std::vector<std::string> files) : dir_(c.out) {
        if (c.out.empty()) throw UsageError("--out is required");
        files.push_back("config.json");
        for (const auto& f : files) {
            if (fs::exists(dir_ / f) && !c.force) {
                throw UsageError((dir_ / f).string() + " exists (pass --force to overwrite)");
            }
        }
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw UsageError("cannot create " + dir_.string() + ": " + ec.message());
        write("config.json", nlohmann::json(c).dump(2) + "\n");
    }

    void write(const std::string& name, const std::string& text) const { write_file_atomic(dir_ / name, text); }
    void json(const std::string& name, const nlohmann::json& j) const { write(name, j.dump(2) + "\n"); }
    fs::path path(const std::string& name) const { return dir_ / name; }

private:
    fs::path dir_;
};

void require_seed(const RunConfig& c) {
    if (!c.seed) throw UsageError("--seed is required");
}

struct TaskData {
    TaskSpec spec;
    Dataset data;
};

TaskData load_task(const RunConfig& c) {
    TaskData t;
    if (!c.dataset.empty()) {
        const fs::path dir = c.dataset;
        if (!fs::is_directory(dir)) throw UsageError("dataset directory " + dir.string() + " not found");
        try {
            t.spec = nlohmann::json::parse(read_file(dir / "task.json")).get<TaskSpec>();
        } catch (const nlohmann::json::exception& e) {
            throw UsageError((dir / "task.json").string() + ": " + e.what());
        }
        t.data.train = read_jsonl(dir / "train.jsonl");
        t.data.eval = read_jsonl(dir / "eval.jsonl");
        return t;
    }
    t.spec = task_from_name(c.task);
    t.spec.seed = *c.seed;
    t.data = generate(t.spec);
    return t;
}

Weights load_model(const RunConfig& c, const TaskSpec& spec) {
    if (c.model.empty()) throw UsageError("--model is required");
    if (!fs::exists(c.model)) throw UsageError("model file " + c.model + " not found");
    Weights w = load_weights(c.model);
    if (w.config.vocab_size != spec.vocab_size() || w.config.max_seq_len < spec.template_length()) {
        throw UsageError("model " + c.model + " does not match the task vocabulary or template length");
    }
    return w;
}

std::span<const Example> limit(const std::vector<Example>& v, int n) {
    if (n < 0) throw UsageError("--examples must be >= 0");
    return std::span<const Example>(v).first(n == 0 ? v.size() : std::min<std::size_t>(n, v.size()));
}

Site parse_basis(const std::string& name) {
    const Site s = parse_site(name);
    if (s != Site::mlp_act && s != Site::mlp_out && s != Site::attn_out && s != Site::residual) {
        throw UsageError("--basis must be one of mlp_act, mlp_out, attn_out, residual");
    }
    return s;
}

NodeAttrOptions attr_options(const RunConfig& c) {
    NodeAttrOptions o;
    o.method = parse_node_method(c.method);
    o.steps = c.steps.value_or(10);
    // Grouped IG keeps full-basis sweeps tractable.
    o.grouping = IgGrouping::per_layer;
    return o;
}

std::vector<AttributionInput> task_inputs(const RunConfig& c, std::span<const Example> examples) {
    bool any_paired = false;
    for (const Example& e : examples) any_paired |= e.paired();
    if (c.metric != "auto" && c.metric != "logit_diff" && c.metric != "single_logit") {
        throw UsageError("--metric must be auto, logit_diff or single_logit here");
    }
    if (c.metric == "logit_diff" && !any_paired) throw UsageError("logit_diff needs a paired dataset");
    std::vector<AttributionInput> in = attribution_inputs(examples, c.paired);
    if (c.metric == "single_logit") {
        for (auto& i : in) i.metric.coeffs.resize(1);
    }
    return in;
}

// Mean of m(x) - m(x') (or m(x) with a zero baseline).
double mean_metric_delta(const Weights& w, std::span<const AttributionInput> inputs) {
    double total = 0.0;
    for (const auto& in : inputs) {
        total += in.metric.value(forward(w, in.x).acts.logits);
        if (in.counterfactual) total -= in.metric.value(forward(w, *in.counterfactual).acts.logits);
    }
    return total / static_cast<double>(inputs.size());
}

nlohmann::json means_to_json(const SiteTensors& m) {
    nlohmann::json sites = nlohmann::json::array();
    m.for_each([&](Site s, int layer, const Mat& t) {
        sites.push_back({{"site", std::string(site_name(s))},
                         {"layer", layer},
                         {"rows", t.rows()},
                         {"cols", t.cols()},
                         {"data", std::vector<double>(t.data(), t.data() + t.size())}});
    });
    return {{"seq_len", m.seq_len()}, {"sites", sites}};
}

SiteTensors means_from_json(const ModelConfig& cfg, const nlohmann::json& j) {
    SiteTensors m = SiteTensors::zeros(cfg, j.at("seq_len").get<int>());
    for (const auto& s : j.at("sites")) {
        Mat& t = m.site(parse_site(s.at("site").get<std::string>()), s.at("layer").get<int>());
        const auto data = s.at("data").get<std::vector<double>>();
        if (s.at("rows").get<Eigen::Index>() != t.rows() || s.at("cols").get<Eigen::Index>() != t.cols() ||
            static_cast<Eigen::Index>(data.size()) != t.size()) {
            throw UsageError("means file: shape mismatch");
        }
        std::copy(data.begin(), data.end(), t.data());
    }
    return m;
}

SiteTensors load_or_compute_means(const RunConfig& c, const Weights& w, const Dataset& d, const Output* out) {
    if (!c.means.empty()) {
        if (!fs::exists(c.means)) throw UsageError("means file " + c.means + " not found");
        try {
            return means_from_json(w.config, nlohmann::json::parse(read_file(c.means)));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("means file " + c.means + ": " + e.what());
        }
    }
    const SiteTensors m = mean_activations(w, all_inputs(d.train));
    if (out) out->json("means.json", means_to_json(m));
    return m;
}

NodeScores to_scores(std::span<const NodeId> nodes, const std::vector<double>& v) {
    NodeScores s;
    for (std::size_t i = 0; i < nodes.size(); ++i) s[nodes[i]] = v[i];
    return s;
}

FeatureReport run_features(const RunConfig& c, const Weights& w, std::span<const Example> examples,
                           const std::optional<std::string>& only_class) {
    const Site basis = parse_basis(c.basis);
    const auto inputs = task_inputs(c, examples);
    const std::vector<std::string> labels = label_column(examples, c.label);
    const auto targets = basis_nodes(w.config, static_cast<int>(examples.front().tokens.size()), basis);
    log("attributing " + std::to_string(inputs.size()) + " examples over " + std::to_string(targets.size()) + " nodes");
    const auto per_example = attribute_each(w, inputs, targets, attr_options(c));
    const UnitScores units = sum_over_positions(targets, per_example);
    return find_features(units, labels, c.label, mean_metric_delta(w, inputs), c.hi, c.lo, only_class);
}

}  // namespace

void cmd_gen(const RunConfig& c) {
    require_seed(c);
    const TaskData t = load_task(c);
    const Output out(c, {"task.json", "train.jsonl", "eval.jsonl", "symbols.json"});
    out.json("task.json", t.spec);
    write_jsonl(out.path("train.jsonl"), t.data.train);
    write_jsonl(out.path("eval.jsonl"), t.data.eval);
    out.json("symbols.json", symbol_table(t.spec));
    log("wrote " + std::to_string(t.data.train.size()) + " train and " + std::to_string(t.data.eval.size()) +
        " eval examples");
}

void cmd_train(const RunConfig& c) {
    require_seed(c);
    const TaskData t = load_task(c);
    TrainConfig tc = default_train_config(t.spec);
    tc.seed = *c.seed;
    if (c.steps) tc.steps = *c.steps;
    if (c.lr) tc.lr = *c.lr;
    if (c.batch_size) tc.batch_size = *c.batch_size;
    tc.validate();
    nlohmann::json mc = task_model_config(t.spec);
    mc.merge_patch(c.model_config);
    const ModelConfig cfg = mc.get<ModelConfig>();
    if (cfg.vocab_size != t.spec.vocab_size() || cfg.max_seq_len < t.spec.template_length()) {
        throw UsageError("model_config does not fit the task vocabulary or template length");
    }
    const Output out(c, {"model.bin", "loss.csv", "train.json"});

    Weights w = init_weights(cfg, *c.seed);
    const TrainResult r = train(w, t.data.train, tc, [](int step, double loss) {
        if (step % 100 == 0) log("step " + std::to_string(step) + " loss " + fmt(loss));
    });
    // Evaluate the weights as stored.
    round_to_float32(w);
    save_weights(w, out.path("model.bin"));
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < r.losses.size(); ++i) csv << i + 1 << ',' << r.losses[i] << '\n';
    out.write("loss.csv", csv.str());
    const double train_acc = accuracy(w, t.data.train), eval_acc = accuracy(w, t.data.eval);
    out.json("train.json", {{"task", t.spec},
                            {"model_config", cfg},
                            {"train_config", tc},
                            {"steps_run", r.steps_run},
                            {"final_loss", r.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.losses.back())},
                            {"train_accuracy", train_acc},
                            {"eval_accuracy", eval_acc}});
    log("train accuracy " + fmt(train_acc) + ", eval accuracy " + fmt(eval_acc));
}

void cmd_trace(const RunConfig& c) {
    require_seed(c);
    const TaskData t = load_task(c);
    const Weights w = load_model(c, t.spec);
    const Site basis = parse_basis(c.basis);
    const EdgeMethod edge_method = parse_edge_method(c.edge_method);
    if (!(c.tau >= 0.0)) throw UsageError("--tau must be >= 0");
    if (c.edge_frac && !(*c.edge_frac >= 0.0 && *c.edge_frac <= 1.0)) throw UsageError("--edge-frac outside [0, 1]");
    const int count = c.examples == 0 ? 1 : c.examples;
    if (c.example < 0 || count < 1 || c.example + count > static_cast<int>(t.data.eval.size())) {
        throw UsageError("--example/--examples outside the eval split");
    }
    std::vector<std::string> files = {"graph.json"};
    if (c.edge_frac) files.push_back("circuit.json");
    const Output out(c, files);

    std::vector<AttributionInput> inputs;
    for (int i = c.example; i < c.example + count; ++i) {
        const Example& e = t.data.eval[i];
        AttributionInput in;
        in.x = e.tokens;
        if (c.paired) in.counterfactual = e.counterfactual;
        const Mat logits = forward(w, e.tokens).acts.logits;
        MetricSpec spec;
        if (c.metric == "auto" || c.metric == "topk") {
            spec = MetricSpec::topk(c.topk);
        } else if (c.metric == "logit_diff") {
            if (!e.paired()) throw UsageError("logit_diff needs a paired dataset");
            spec = MetricSpec::logit_diff(e.answer, e.counterfactual_answer);
        } else if (c.metric == "single_logit") {
            spec = MetricSpec::single_logit(e.answer);
        } else {
            throw UsageError("--metric must be auto, topk, logit_diff or single_logit");
        }
        spec.validate(w.config.vocab_size);
        in.metric = resolve_metric(spec, logits);
        inputs.push_back(std::move(in));
    }

    const auto targets = basis_nodes(w.config, static_cast<int>(inputs.front().x.size()), basis);
    const NodeScores scores = to_scores(targets, dataset_attr(w, inputs, targets, attr_options(c)));
    const double m = mean_metric_delta(w, inputs);
    std::vector<NodeId> selected;
    if (m != 0.0) {
        const Circuit sel = select_threshold(scores, m, c.tau, basis);
        std::vector<std::pair<double, NodeId>> ranked;
        for (const NodeId& n : sel.nodes) ranked.emplace_back(-std::abs(scores.at(n)), n);
        std::stable_sort(ranked.begin(), ranked.end());
        constexpr std::size_t kMaxNodes = 1000;
        if (ranked.size() > kMaxNodes) ranked.resize(kMaxNodes);
        for (const auto& [s, n] : ranked) selected.push_back(n);
        std::sort(selected.begin(), selected.end());
    }
    log("selected " + std::to_string(selected.size()) + " nodes at tau " + fmt(c.tau));

    std::vector<AttributionGraph> graphs;
    for (const auto& in : inputs) graphs.push_back(build_graph(w, in, selected, edge_method, c.steps.value_or(10)));
    const AttributionGraph g = graphs.size() == 1 ? graphs.front() : average_graphs(graphs);
    // Compact: full-basis graphs run to hundreds of thousands of edges.
    out.write("graph.json", nlohmann::json(g).dump() + "\n");
    if (c.edge_frac) {
        const Circuit circuit = prune_edges(g, *c.edge_frac, basis);
        out.json("circuit.json", circuit);
        log("edge-pruned circuit keeps " + std::to_string(circuit.size(w.config)) + " nodes");
    }
}

void cmd_eval(const RunConfig& c) {
    require_seed(c);
    const TaskData t = load_task(c);
    const Weights w = load_model(c, t.spec);
    const Site basis = parse_basis(c.basis);
    const Ablation ablation = parse_ablation(c.ablation);
    const std::vector<double> grid = c.k_grid.empty() ? default_k_grid() : c.k_grid;
    std::vector<std::string> files = {"sweep.csv", "eval.json"};
    if (ablation == Ablation::mean && c.means.empty()) files.push_back("means.json");
    const Output out(c, files);

    std::optional<SiteTensors> means;
    if (ablation == Ablation::mean) means = load_or_compute_means(c, w, t.data, &out);
    // Scores are averaged over the train split; circuits are scored on eval.
    const auto train_in = task_inputs(c, limit(t.data.train, c.examples));
    const auto eval_in = task_inputs(c, t.data.eval);
    const auto targets = basis_nodes(w.config, static_cast<int>(train_in.front().x.size()), basis);
    log("attributing " + std::to_string(train_in.size()) + " examples over " + std::to_string(targets.size()) +
        " nodes with " + c.method);
    const NodeScores scores = to_scores(targets, dataset_attr(w, train_in, targets, attr_options(c)));
    const Sweep sweep = sweep_topk(w, eval_in, scores, basis, grid, ablation, means ? &*means : nullptr);

    out.write("sweep.csv", sweep_csv(sweep));
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : sweep.points) {
        points.push_back({{"k", p.k},
                          {"size", p.size},
                          {"faithfulness", num(p.faithfulness)},
                          {"completeness", num(p.completeness)},
                          {"degenerate", p.degenerate}});
    }
    out.json("eval.json", {{"method", method_name(parse_node_method(c.method))},
                           {"basis", std::string(site_name(basis))},
                           {"ablation", ablation_name(ablation)},
                           {"basis_size", targets.size()},
                           {"cpr", num(sweep.cpr)},
                           {"cmd", num(sweep.cmd)},
                           {"points", points}});
    log("CPR " + fmt(sweep.cpr) + ", CMD " + fmt(sweep.cmd));
}

void cmd_auroc(const RunConfig& c) {
    require_seed(c);
    const TaskData t = load_task(c);
    const Weights w = load_model(c, t.spec);
    const Output out(c, {"features.json", "features.csv"});
    const auto examples = limit(t.data.eval, c.examples);
    const FeatureReport r =
        run_features(c, w, examples, c.cls.empty() ? std::nullopt : std::optional<std::string>(c.cls));
    out.json("features.json", r);
    out.write("features.csv", features_csv(r));
    int with_hits = 0;
    for (const auto& cr : r.classes) with_hits += !cr.features.empty();
    log(std::to_string(with_hits) + " of " + std::to_string(r.classes.size()) + " classes have a unit past the thresholds");
}

void cmd_steer(const RunConfig& c) {
    require_seed(c);
    const TaskData t = load_task(c);
    const Weights w = load_model(c, t.spec);
    if (c.cls.empty()) throw UsageError("--class is required");
    const Output out(c, {"steer.csv", "steer.json"});
    const auto examples = limit(t.data.eval, c.examples);
    const std::vector<std::string> labels = label_column(examples, c.label);

    std::vector<NodeId> nodes;
    nlohmann::json source;
    if (!c.nodes.empty()) {
        for (const auto& s : c.nodes) nodes.push_back(parse_node(s));
        source = "flags";
    } else {
        const FeatureReport r = run_features(c, w, examples, c.cls);
        const auto& feats = r.classes.front().features;
        if (feats.empty()) throw UsageError("no unit passes the AUROC thresholds for class " + c.cls);
        nodes.push_back(feats.front().node);
        source = {{"auroc", feats.front().auroc}, {"label", c.label}, {"class", c.cls}};
    }
    std::set<int> target_tokens;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (labels[i] == c.cls) target_tokens.insert(examples[i].answer);
    }
    if (target_tokens.empty()) throw UsageError("class " + c.cls + " has no examples");
    const std::vector<double> alphas = c.alphas.empty() ? default_alphas() : c.alphas;
    const auto rows = steer_sweep(w, examples, nodes, alphas, {target_tokens.begin(), target_tokens.end()});
    out.write("steer.csv", steer_csv(rows));
    std::vector<std::string> names;
    for (const NodeId& n : nodes) names.push_back(to_string(n));
    out.json("steer.json", {{"nodes", names},
                            {"selected_by", source},
                            {"target_tokens", target_tokens},
                            {"alphas", alphas},
                            {"examples", examples.size()}});
}

}  // namespace neurotrace
