#include <cmath>
#include <limits>
#include <sstream>

#include "neurotrace/circuit.hpp"
#include "neurotrace/error.hpp"
#include "neurotrace/parallel.hpp"

namespace neurotrace {

const char* ablation_name(Ablation a) { return a == Ablation::mean ? "mean" : "zero"; }

Ablation parse_ablation(const std::string& name) {
    if (name == "mean") return Ablation::mean;
    if (name == "zero") return Ablation::zero;
    throw UsageError("unknown ablation '" + name + "'");
}

double ablated_run(const Weights& w, const Tokens& x, const std::set<NodeId>& keep, Site basis, Ablation ablation,
                   const SiteTensors* means, const LinearMetric& metric) {
    const int t = static_cast<int>(x.size());
    if (basis == Site::logit) throw UsageError("ablation: logits are not an ablation basis");
    if (ablation == Ablation::mean) {
        if (!means) throw UsageError("ablation: mean ablation needs mean activations");
        if (means->seq_len() != t) throw UsageError("ablation: means were computed for a different template length");
    }
    Intervention iv;
    const int width = site_width(w.config, basis);
    for (int layer : site_layers(w.config, basis)) {
        for (int pos = 0; pos < t; ++pos) {
            for (int unit = 0; unit < width; ++unit) {
                const NodeId n{basis, layer, pos, unit};
                if (keep.count(n)) continue;
                iv.set(n, ablation == Ablation::mean ? means->at(n) : 0.0);
            }
        }
    }
    return metric.value(forward(w, x, iv).acts.logits);
}

double ablated_run(const Weights& w, const Tokens& x, const Circuit& circuit, Ablation ablation,
                   const SiteTensors* means, const LinearMetric& metric) {
    circuit.validate(w.config);
    return ablated_run(w, x, circuit.nodes, circuit.basis, ablation, means, metric);
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double ratio(const EvalReport& r, const std::vector<double>& numerator) {
    const double base = mean_of(r.m_empty);
    const double den = mean_of(r.m_model) - base;
    if (std::abs(den) < kDegenerateDenominator) return std::numeric_limits<double>::quiet_NaN();
    return (mean_of(numerator) - base) / den;
}

}  // namespace

double faithfulness(const EvalReport& r) { return ratio(r, r.m_circuit); }
double completeness(const EvalReport& r) { return ratio(r, r.m_without); }

EvalReport evaluate(const Weights& w, std::span<const AttributionInput> dataset, const Circuit& circuit,
                    Ablation ablation, const SiteTensors* means) {
    if (dataset.empty()) throw UsageError("evaluate: empty dataset");
    circuit.validate(w.config);
    const int t = static_cast<int>(dataset.front().x.size());
    for (const auto& ex : dataset) {
        if (static_cast<int>(ex.x.size()) != t) throw UsageError("evaluate: examples have different lengths");
    }
    // Circuit members on the basis, and its complement within the basis.
    std::set<NodeId> members, complement;
    for (const NodeId& n : basis_nodes(w.config, t, circuit.basis)) {
        (circuit.nodes.count(n) ? members : complement).insert(n);
    }
    for (const NodeId& n : circuit.nodes) {
        if (n.site == circuit.basis && !members.count(n)) throw UsageError("evaluate: node " + to_string(n) + " out of range");
    }

    EvalReport r;
    r.basis = circuit.basis;
    r.ablation = ablation;
    r.circuit_size = static_cast<int>(members.size());
    r.basis_size = static_cast<int>(members.size() + complement.size());
    const std::size_t n = dataset.size();
    r.m_circuit.resize(n);
    r.m_model.resize(n);
    r.m_empty.resize(n);
    r.m_without.resize(n);
    const std::set<NodeId> none;
    parallel_for(n, [&](std::size_t i) {
        const auto& ex = dataset[i];
        r.m_model[i] = ex.metric.value(forward(w, ex.x).acts.logits);
        r.m_empty[i] = ablated_run(w, ex.x, none, circuit.basis, ablation, means, ex.metric);
        r.m_circuit[i] = complement.empty() ? r.m_model[i]
                                            : ablated_run(w, ex.x, members, circuit.basis, ablation, means, ex.metric);
        r.m_without[i] = members.empty() ? r.m_model[i]
                                         : ablated_run(w, ex.x, complement, circuit.basis, ablation, means, ex.metric);
    });
    r.faithfulness = faithfulness(r);
    r.completeness = completeness(r);
    r.degenerate = std::isnan(r.faithfulness);
    return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j = {{"circuit_size", r.circuit_size},
         {"basis_size", r.basis_size},
         {"basis", std::string(site_name(r.basis))},
         {"ablation", ablation_name(r.ablation)},
         {"faithfulness", num(r.faithfulness)},
         {"completeness", num(r.completeness)},
         {"degenerate", r.degenerate},
         {"m_circuit", r.m_circuit},
         {"m_model", r.m_model},
         {"m_empty", r.m_empty},
         {"m_without", r.m_without}};
}

std::pair<double, double> cpr_cmd(std::span<const double> k, std::span<const double> f) {
    if (k.size() != f.size()) throw UsageError("cpr_cmd: grid and sweep lengths differ");
    if (k.size() < 2) throw UsageError("cpr_cmd: need at least two grid points");
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (!(k[i] >= 0.0 && k[i] <= 1.0)) throw UsageError("cpr_cmd: k outside [0, 1]");
        if (i > 0 && !(k[i] > k[i - 1])) throw UsageError("cpr_cmd: k must be strictly increasing");
        if (!std::isfinite(f[i])) throw NumericalError("cpr_cmd: non-finite faithfulness");
    }
    double cpr = 0.0, cmd = 0.0;
    for (std::size_t i = 1; i < k.size(); ++i) {
        const double dk = k[i] - k[i - 1];
        cpr += dk * (f[i - 1] + f[i]) / 2.0;
        cmd += dk * (std::abs(1.0 - f[i - 1]) + std::abs(1.0 - f[i])) / 2.0;
    }
    const double span = k.back() - k.front();
    return {cpr / span, cmd / span};
}

std::vector<double> default_k_grid() {
    return {0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
}

Sweep sweep_topk(const Weights& w, std::span<const AttributionInput> dataset, const NodeScores& scores, Site basis,
                 std::span<const double> grid, Ablation ablation, const SiteTensors* means, ScoreTransform transform) {
    Sweep sweep;
    std::vector<double> ks, fs;
    for (double k : grid) {
        const int size = static_cast<int>(std::llround(k * static_cast<double>(scores.size())));
        const Circuit c = select_topk(scores, size, transform, basis);
        const EvalReport r = evaluate(w, dataset, c, ablation, means);
        sweep.points.push_back({k, size, r.faithfulness, r.completeness, r.degenerate});
        ks.push_back(k);
        fs.push_back(r.faithfulness);
    }
    if (ks.size() >= 2) std::tie(sweep.cpr, sweep.cmd) = cpr_cmd(ks, fs);
    return sweep;
}

std::string sweep_csv(const Sweep& sweep) {
    std::ostringstream out;
    out.precision(17);
    out << "k,size,faithfulness,completeness\n";
    for (const auto& p : sweep.points) {
        out << p.k << ',' << p.size << ',' << p.faithfulness << ',' << p.completeness << '\n';
    }
    return out.str();
}

}  // namespace neurotrace
