#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "neurotrace/analysis.hpp"
#include "neurotrace/error.hpp"

using namespace neurotrace;

namespace {

double brute_force_auroc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0.0;
    for (double p : pos) {
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::vector<double> draw(std::mt19937_64& gen, int n, bool coarse) {
    std::vector<double> v(n);
    std::uniform_real_distribution<double> cont(-3.0, 3.0);
    std::uniform_int_distribution<int> grid(-4, 4);
    for (double& x : v) x = coarse ? grid(gen) : cont(gen);
    return v;
}

}  // namespace

TEST(Auroc, MatchesPairCountingOn100Instances) {
    std::mt19937_64 gen(11);
    for (int inst = 0; inst < 100; ++inst) {
        const int np = 1 + static_cast<int>(gen() % 40), nn = 1 + static_cast<int>(gen() % 40);
        const bool coarse = inst % 2 == 0;  // many ties
        const auto pos = draw(gen, np, coarse), neg = draw(gen, nn, coarse);
        EXPECT_EQ(auroc(pos, neg), brute_force_auroc(pos, neg)) << "instance " << inst;
    }
}

TEST(Auroc, EdgeValues) {
    const std::vector<double> same(10, 1.5);
    EXPECT_EQ(auroc(same, same), 0.5);
    EXPECT_EQ(auroc(std::vector<double>{3, 4, 5}, std::vector<double>{0, 1, 2}), 1.0);
    EXPECT_EQ(auroc(std::vector<double>{0, 1}, std::vector<double>{2, 3}), 0.0);
    EXPECT_THROW(auroc(std::vector<double>{}, same), UsageError);
    EXPECT_THROW(auroc(same, std::vector<double>{}), UsageError);
    EXPECT_THROW(auroc(std::vector<double>{NAN}, same), NumericalError);
}

TEST(Auroc, InvariantUnderIncreasingMapsAndNegation) {
    std::mt19937_64 gen(12);
    for (int inst = 0; inst < 20; ++inst) {
        auto pos = draw(gen, 30, inst % 2 == 0), neg = draw(gen, 25, inst % 2 == 0);
        const double a = auroc(pos, neg);
        const auto map = [](std::vector<double> v, auto f) {
            for (double& x : v) x = f(x);
            return v;
        };
        const auto ex = [](double x) { return std::exp(x); };
        const auto affine = [](double x) { return 2.0 * x + 3.0; };
        const auto neg_f = [](double x) { return -x; };
        EXPECT_EQ(auroc(map(pos, ex), map(neg, ex)), a);
        EXPECT_EQ(auroc(map(pos, affine), map(neg, affine)), a);
        EXPECT_NEAR(auroc(map(pos, neg_f), map(neg, neg_f)), 1.0 - a, 1e-15);
    }
}

TEST(Features, SumOverPositionsGroupsUnits) {
    const std::vector<NodeId> targets = {{Site::mlp_act, 1, 0, 3}, {Site::mlp_act, 1, 1, 3}, {Site::mlp_act, 2, 0, 0}};
    const UnitScores s = sum_over_positions(targets, {{1.0, 2.0, 5.0}, {-1.0, 0.5, 0.0}});
    ASSERT_EQ(s.units.size(), 2u);
    EXPECT_EQ(s.units[0], (NodeId{Site::mlp_act, 1, kAllPositions, 3}));
    EXPECT_EQ(s.rows[0], (std::vector<double>{3.0, 5.0}));
    EXPECT_EQ(s.rows[1], (std::vector<double>{-0.5, 0.0}));
}

TEST(Features, PlantedFeatureIsTheOnlyHit) {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    UnitScores s;
    for (int u = 0; u < 20; ++u) s.units.push_back({Site::mlp_act, 1 + u % 2, kAllPositions, u});
    std::vector<std::string> labels;
    for (int i = 0; i < 60; ++i) {
        const std::string cls = std::to_string(i % 3);
        labels.push_back(cls);
        std::vector<double> row(20);
        for (double& x : row) x = 0.01 * noise(gen);
        row[7] = cls == "1" ? 10.0 + noise(gen) : noise(gen) - 10.0;  // planted for class 1
        s.rows.push_back(row);
    }
    const FeatureReport r = find_features(s, labels, "cls", 2.0, 0.999, 0.001, std::string("1"));
    ASSERT_EQ(r.classes.size(), 1u);
    const ClassReport& c = r.classes[0];
    EXPECT_EQ(c.positives, 20);
    EXPECT_EQ(c.negatives, 40);
    ASSERT_EQ(c.features.size(), 1u);
    EXPECT_EQ(c.features[0].node, s.units[7]);
    EXPECT_EQ(c.features[0].auroc, 1.0);
    double in = 0.0;
    for (int i = 0; i < 60; ++i) {
        if (labels[i] == "1") in += s.rows[i][7];
    }
    EXPECT_NEAR(c.features[0].in_class_pct, 100.0 * (in / 20) / 2.0, 1e-12);
    EXPECT_GT(c.features[0].in_class_pct, 0.0);
    EXPECT_LT(c.features[0].out_class_pct, 0.0);

    const FeatureReport all = find_features(s, labels, "cls", 2.0, 0.5, 0.5);
    ASSERT_EQ(all.classes.size(), 3u);
    for (const ClassReport& cr : all.classes) {
        EXPECT_EQ(cr.features.size(), 20u);
        for (std::size_t i = 1; i < cr.features.size(); ++i) {
            EXPECT_GE(std::abs(cr.features[i - 1].auroc - 0.5), std::abs(cr.features[i].auroc - 0.5));
        }
    }
    EXPECT_THROW(find_features(s, labels, "cls", 2.0, 0.8, 0.2, std::string("9")), UsageError);
}

TEST(Steer, IdentityAndZeroAblation) {
    const ModelConfig cfg = fixtures::small_config(2);
    const Weights w = init_weights(cfg, 4);
    const Tokens x = {1, 4, 2, 7, 3};
    const std::vector<NodeId> nodes = {{Site::mlp_act, 1, kAllPositions, 2}, {Site::mlp_act, 2, 3, 5}};
    const Mat plain = forward(w, x).acts.logits;
    const SteerResult one = steer(w, x, nodes, 1.0);
    EXPECT_TRUE(one.logits == Eigen::RowVectorXd(plain.row(4)));

    Intervention zero;
    for (int p = 0; p < 5; ++p) zero.set({Site::mlp_act, 1, p, 2}, 0.0);
    zero.set({Site::mlp_act, 2, 3, 5}, 0.0);
    const Mat ablated = forward(w, x, zero).acts.logits;
    EXPECT_TRUE(steer(w, x, nodes, 0.0).logits == Eigen::RowVectorXd(ablated.row(4)));

    const SteerResult big = steer(w, x, nodes, 3.0);
    EXPECT_NEAR(big.probs.sum(), 1.0, 1e-12);
    Eigen::Index arg;
    big.logits.maxCoeff(&arg);
    EXPECT_EQ(big.top1, arg);
    EXPECT_THROW(steer(w, x, {}, 1.0), UsageError);
}

TEST(Steer, NoHiddenStateBetweenCalls) {
    const ModelConfig cfg = fixtures::small_config(2);
    const Weights w = init_weights(cfg, 4);
    AttributionInput in;
    in.x = {1, 4, 2, 7};
    in.metric = {3, {{2, 1.0}, {5, -1.0}}};
    const auto targets = basis_nodes(cfg, 4, Site::mlp_act);
    const auto before = relp_node(w, in, targets);
    const std::vector<NodeId> nodes = {targets[0]};
    steer(w, in.x, nodes, 1.0);
    steer(w, in.x, nodes, 2.5);
    EXPECT_EQ(relp_node(w, in, targets), before);
}

TEST(Steer, SweepRowsFollowTheGrid) {
    const ModelConfig cfg = fixtures::small_config(2);
    const Weights w = init_weights(cfg, 4);
    std::vector<Example> ex(3);
    ex[0].tokens = {1, 2, 3};
    ex[0].answer = 4;
    ex[1].tokens = {3, 2, 1};
    ex[1].answer = 5;
    ex[2].tokens = {0, 0, 1};
    ex[2].answer = 4;
    const std::vector<NodeId> nodes = {{Site::mlp_act, 2, kAllPositions, 1}};
    const auto alphas = default_alphas();
    ASSERT_EQ(alphas.size(), 9u);
    EXPECT_EQ(alphas.front(), 0.0);
    EXPECT_EQ(alphas.back(), 2.0);
    const auto rows = steer_sweep(w, ex, nodes, alphas, {4, 5});
    ASSERT_EQ(rows.size(), 9u);
    double p_orig = 0.0, p_target = 0.0;
    for (const Example& e : ex) {
        const SteerResult r = steer(w, e.tokens, nodes, 1.0);
        p_orig += r.probs(e.answer) / 3.0;
        p_target += (r.probs(4) + r.probs(5)) / 3.0;
    }
    EXPECT_EQ(rows[4].alpha, 1.0);
    EXPECT_NEAR(rows[4].p_original, p_orig, 1e-15);
    EXPECT_NEAR(rows[4].p_target, p_target, 1e-15);
    const std::string csv = steer_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,p_target,p_original,top1_token,top1_in_target");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
}

TEST(LayerHistogram, SingleLayerAndClamping) {
    const ModelConfig cfg = fixtures::small_config(3);
    NodeScores scores;
    for (int u = 0; u < 12; ++u) scores[{Site::mlp_act, 2, 0, u}] = u - 6.0;
    const std::vector<int> ks = {5, 100};
    const auto h = layer_histogram(cfg, scores, ks);
    ASSERT_EQ(h.size(), 2u);
    EXPECT_EQ(h[0].used, 5);
    EXPECT_EQ(h[0].counts, (std::vector<int>{0, 0, 5, 0, 0}));
    EXPECT_EQ(h[1].used, 12);
    EXPECT_EQ(h[1].counts[2], 12);
}

TEST(LayerHistogram, UniformScoresMatchSortOracle) {
    const ModelConfig cfg = fixtures::small_config(3);
    NodeScores scores;
    for (int layer = 3; layer >= 1; --layer) {
        for (int u = 0; u < 4; ++u) scores[{Site::mlp_out, layer, 1, u}] = 1.0;
    }
    // Equal |score|: the first k in NodeId order win.
    std::vector<NodeId> order;
    for (const auto& [n, s] : scores) order.push_back(n);
    std::sort(order.begin(), order.end());
    for (int k : {1, 5, 9}) {
        std::vector<int> expect(5, 0);
        for (int i = 0; i < k; ++i) ++expect[order[i].layer];
        const std::vector<int> ks = {k};
        EXPECT_EQ(layer_histogram(cfg, scores, ks)[0].counts, expect) << "k = " << k;
    }
}
