#include "neurotrace/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "neurotrace/error.hpp"
#include "neurotrace/parallel.hpp"

namespace neurotrace {

double auroc(std::span<const double> pos, std::span<const double> neg) {
    if (pos.empty() || neg.empty()) throw UsageError("auroc: class has no positives or no negatives");
    std::vector<std::pair<double, bool>> all;
    all.reserve(pos.size() + neg.size());
    for (double v : pos) all.emplace_back(v, true);
    for (double v : neg) all.emplace_back(v, false);
    for (const auto& [v, p] : all) {
        if (!std::isfinite(v)) throw NumericalError("auroc: non-finite score");
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
    // that it stays an integer.
    long long rank_sum2 = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const long long avg2 = static_cast<long long>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].second) rank_sum2 += avg2;
        }
        i = j;
    }
    const long long np = static_cast<long long>(pos.size()), nn = static_cast<long long>(neg.size());
    const long long u2 = rank_sum2 - np * (np + 1);
    return static_cast<double>(u2) / 2.0 / static_cast<double>(np * nn);
}

UnitScores sum_over_positions(std::span<const NodeId> targets, const std::vector<std::vector<double>>& per_example) {
    const auto unit_of = [](NodeId n) {
        n.position = kAllPositions;
        return n;
    };
    std::map<NodeId, std::size_t> column;
    for (const NodeId& n : targets) column.emplace(unit_of(n), 0);
    UnitScores out;
    for (auto& [u, c] : column) {
        c = out.units.size();
        out.units.push_back(u);
    }
    std::vector<std::size_t> col_of;
    for (const NodeId& n : targets) col_of.push_back(column.at(unit_of(n)));
    for (const auto& row : per_example) {
        if (row.size() != targets.size()) throw UsageError("sum_over_positions: row length differs from targets");
        std::vector<double> summed(out.units.size(), 0.0);
        for (std::size_t j = 0; j < row.size(); ++j) summed[col_of[j]] += row[j];
        out.rows.push_back(std::move(summed));
    }
    return out;
}

std::vector<double> auroc_by_unit(const UnitScores& scores, std::span<const std::string> labels, const std::string& cls) {
    if (labels.size() != scores.rows.size()) throw UsageError("auroc: label count differs from example count");
    std::vector<double> out(scores.units.size());
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < scores.units.size(); ++j) {
        pos.clear();
        neg.clear();
        for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == cls ? pos : neg).push_back(scores.rows[i][j]);
        out[j] = auroc(pos, neg);
    }
    return out;
}

std::vector<std::string> label_column(std::span<const Example> examples, const std::string& label) {
    std::vector<std::string> out;
    for (const Example& e : examples) {
        auto it = e.labels.find(label);
        if (it == e.labels.end()) throw UsageError("label '" + label + "' missing from dataset");
        out.push_back(it->second);
    }
    return out;
}

FeatureReport find_features(const UnitScores& scores, std::span<const std::string> labels, const std::string& label,
                            double mean_metric, double hi, double lo, const std::optional<std::string>& only_class) {
    if (labels.size() != scores.rows.size()) throw UsageError("find_features: label count differs from example count");
    FeatureReport report;
    report.label = label;
    report.hi = hi;
    report.lo = lo;
    report.mean_metric = mean_metric;
    std::set<std::string> classes(labels.begin(), labels.end());
    if (only_class) {
        if (!classes.count(*only_class)) throw UsageError("find_features: class '" + *only_class + "' not in dataset");
        classes = {*only_class};
    }
    report.classes.resize(classes.size());
    const std::vector<std::string> ordered(classes.begin(), classes.end());
    const double pct = mean_metric == 0.0 ? std::numeric_limits<double>::quiet_NaN() : 100.0 / mean_metric;
    parallel_for(ordered.size(), [&](std::size_t c) {
        ClassReport& cr = report.classes[c];
        cr.cls = ordered[c];
        const std::vector<double> au = auroc_by_unit(scores, labels, cr.cls);
        for (const std::string& l : labels) ++(l == cr.cls ? cr.positives : cr.negatives);
        for (std::size_t j = 0; j < scores.units.size(); ++j) {
            if (!(au[j] >= hi || au[j] <= lo)) continue;
            double in = 0.0, out = 0.0;
            for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == cr.cls ? in : out) += scores.rows[i][j];
            cr.features.push_back({scores.units[j], au[j], in / cr.positives * pct, out / cr.negatives * pct});
        }
        std::stable_sort(cr.features.begin(), cr.features.end(), [](const FeatureRow& a, const FeatureRow& b) {
            return std::abs(a.auroc - 0.5) > std::abs(b.auroc - 0.5);
        });
    });
    return report;
}

void to_json(nlohmann::json& j, const FeatureReport& r) {
    const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j = {{"label", r.label}, {"hi", r.hi}, {"lo", r.lo}, {"mean_metric", num(r.mean_metric)}, {"classes", nlohmann::json::array()}};
    for (const ClassReport& c : r.classes) {
        nlohmann::json feats = nlohmann::json::array();
        for (const FeatureRow& f : c.features) {
            feats.push_back({{"node", to_string(f.node)},
                             {"auroc", f.auroc},
                             {"in_class_pct", num(f.in_class_pct)},
                             {"out_class_pct", num(f.out_class_pct)}});
        }
        j["classes"].push_back(
            {{"class", c.cls}, {"positives", c.positives}, {"negatives", c.negatives}, {"features", feats}});
    }
}

std::string features_csv(const FeatureReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "class,node,auroc,in_class_pct,out_class_pct\n";
    for (const ClassReport& c : r.classes) {
        for (const FeatureRow& f : c.features) {
            out << c.cls << ',' << to_string(f.node) << ',' << f.auroc << ',' << f.in_class_pct << ','
                << f.out_class_pct << '\n';
        }
    }
    return out.str();
}

SteerResult steer(const Weights& w, const Tokens& x, std::span<const NodeId> nodes, double alpha) {
    if (nodes.empty()) throw UsageError("steer: empty node set");
    if (!std::isfinite(alpha)) throw UsageError("steer: alpha must be finite");
    Intervention iv;
    const int t = static_cast<int>(x.size());
    for (const NodeId& n : nodes) {
        if (n.site == Site::logit) throw UsageError("steer: cannot steer logits");
        if (n.position != kAllPositions) {
            iv.scale(n, alpha);
            continue;
        }
        for (int p = 0; p < t; ++p) iv.scale({n.site, n.layer, p, n.unit}, alpha);
    }
    const Mat logits = forward(w, x, iv).acts.logits;
    SteerResult r;
    r.logits = logits.row(t - 1);
    const double mx = r.logits.maxCoeff();
    r.probs = (r.logits.array() - mx).exp().matrix();
    r.probs /= r.probs.sum();
    Eigen::Index arg = 0;
    r.logits.maxCoeff(&arg);
    r.top1 = static_cast<int>(arg);
    return r;
}

std::vector<SteerRow> steer_sweep(const Weights& w, std::span<const Example> examples, std::span<const NodeId> nodes,
                                  std::span<const double> alphas, const std::vector<int>& target_tokens) {
    if (examples.empty()) throw UsageError("steer: no examples");
    const std::set<int> targets(target_tokens.begin(), target_tokens.end());
    for (int tok : targets) {
        if (tok < 0 || tok >= w.config.vocab_size) throw UsageError("steer: target token out of range");
    }
    std::vector<SteerRow> rows;
    for (double alpha : alphas) {
        std::vector<SteerResult> res(examples.size());
        parallel_for(examples.size(), [&](std::size_t i) { res[i] = steer(w, examples[i].tokens, nodes, alpha); });
        SteerRow row;
        row.alpha = alpha;
        std::map<int, int> votes;
        for (std::size_t i = 0; i < res.size(); ++i) {
            for (int tok : targets) row.p_target += res[i].probs(tok);
            row.p_original += res[i].probs(examples[i].answer);
            ++votes[res[i].top1];
            row.top1_in_target += targets.count(res[i].top1);
        }
        const double n = static_cast<double>(res.size());
        row.p_target /= n;
        row.p_original /= n;
        row.top1_in_target /= n;
        row.top1_token = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                             return a.second < b.second;
                         })->first;
        rows.push_back(row);
    }
    return rows;
}

std::vector<double> default_alphas() {
    std::vector<double> out;
    for (int i = 0; i <= 8; ++i) out.push_back(0.25 * i);
    return out;
}

std::string steer_csv(const std::vector<SteerRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "alpha,p_target,p_original,top1_token,top1_in_target\n";
    for (const SteerRow& r : rows) {
        out << r.alpha << ',' << r.p_target << ',' << r.p_original << ',' << r.top1_token << ',' << r.top1_in_target
            << '\n';
    }
    return out.str();
}

std::vector<LayerHistogram> layer_histogram(const ModelConfig& config, const NodeScores& scores,
                                            std::span<const int> ks) {
    std::vector<std::pair<NodeId, double>> ranked(scores.begin(), scores.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.second) > std::abs(b.second); });
    std::vector<LayerHistogram> out;
    for (int k : ks) {
        if (k < 0) throw UsageError("layer_histogram: k must be >= 0");
        LayerHistogram h;
        h.k = k;
        h.used = std::min(k, static_cast<int>(ranked.size()));
        h.counts.assign(config.n_layers + 2, 0);
        for (int i = 0; i < h.used; ++i) {
            const int layer = ranked[i].first.layer;
            if (layer < 0 || layer > config.n_layers + 1) throw UsageError("layer_histogram: layer out of range");
            ++h.counts[layer];
        }
        out.push_back(std::move(h));
    }
    return out;
}

}  // namespace neurotrace
