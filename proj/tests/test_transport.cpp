#include <doctest.h>

#include <cmath>

#include "fairitr/dataset.hpp"
#include "fairitr/metrics.hpp"
#include "fairitr/transport.hpp"
#include "oracles.hpp"

using namespace fairitr;

namespace {

// Scorer f(x, s) = x1, rigged through the linear-kernel primal cache.
DecisionModel coordinate_scorer(std::size_t n_groups) {
    DecisionModel model;
    model.kernel = {KernelKind::linear, 1.0};
    model.scaler.mean = {0.0};
    model.scaler.scale = {1.0};
    for (std::size_t s = 0; s < n_groups; ++s) model.groups.push_back(std::to_string(s));
    model.primal.assign(1 + n_groups, 0.0);
    model.primal[0] = 1.0;
    return model;
}

GroupDistributions manual_dists(std::vector<std::vector<double>> values, double sigma = 0.0) {
    GroupDistributions dists;
    std::size_t total = 0;
    for (std::size_t s = 0; s < values.size(); ++s) {
        dists.groups.push_back(std::to_string(s));
        std::sort(values[s].begin(), values[s].end());
        total += values[s].size();
    }
    for (const auto& v : values)
        dists.freq.push_back(static_cast<double>(v.size()) / static_cast<double>(total));
    dists.values = std::move(values);
    dists.sigma = sigma;
    return dists;
}

CateModel constant_tau(double tau, std::size_t n_groups) {
    CateModel model;
    model.tau_head.kernel = {KernelKind::linear, 1.0};
    model.tau_head.scaler.mean = {0.0};
    model.tau_head.scaler.scale = {1.0};
    for (std::size_t s = 0; s < n_groups; ++s) model.tau_head.groups.push_back(std::to_string(s));
    model.tau_head.intercept = tau;
    return model;
}

TargetDataset single_group_target(const std::vector<double>& xs) {
    TargetDataset target(1, {"0"});
    for (double x : xs) target.add_row({x}, 0);
    return target;
}

} // namespace

TEST_CASE("build: sorting, frequencies, empty-group error") {
    const auto model = coordinate_scorer(1);
    const auto dists =
        build_group_distributions(model, single_group_target({3.0, 1.0, 2.0}), 0.0, RngSeed{1});
    CHECK(dists.values[0] == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(dists.freq[0] == 1.0);

    TargetDataset two(1, {"0", "1"});
    two.add_row({1.0}, 0);
    CHECK_THROWS_WITH_AS(build_group_distributions(coordinate_scorer(2), two, 0.0, RngSeed{1}),
                         doctest::Contains("group '1'"), BuildError);
}

TEST_CASE("build: group frequencies come from integer counts") {
    TargetDataset target(1, {"0", "1"});
    for (int i = 0; i < 30; ++i) target.add_row({static_cast<double>(i)}, 0);
    for (int i = 0; i < 70; ++i) target.add_row({static_cast<double>(i)}, 1);
    const auto dists = build_group_distributions(coordinate_scorer(2), target, 0.0, RngSeed{2});
    CHECK(dists.freq[0] == doctest::Approx(0.3));
    CHECK(dists.freq[1] == doctest::Approx(0.7));
    CHECK(dists.freq[0] + dists.freq[1] == 1.0);
}

TEST_CASE("build: jitter separates duplicate scores") {
    const auto dists = build_group_distributions(
        coordinate_scorer(1), single_group_target({2.0, 2.0, 2.0, 2.0}), 0.1, RngSeed{3});
    for (std::size_t i = 1; i < dists.values[0].size(); ++i)
        CHECK(dists.values[0][i] != dists.values[0][i - 1]);
    for (double v : dists.values[0]) {
        CHECK(v >= 1.9);
        CHECK(v <= 2.1);
    }
}

TEST_CASE("ecdf: strict-< convention") {
    const auto dists = manual_dists({{1.0, 2.0, 3.0}});
    CHECK(ecdf(dists, 0, 2.5) == doctest::Approx(2.0 / 3.0));
    CHECK(ecdf(dists, 0, 0.5) == 0.0);
    CHECK(ecdf(dists, 0, 9.0) == 1.0);
    CHECK(ecdf(dists, 0, 2.0) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(ecdf(dists, 1, 0.0), std::domain_error);
}

TEST_CASE("quantile: order-statistic closed form") {
    const auto dists = manual_dists({{1.0, 2.0, 3.0}});
    CHECK(quantile(dists, 0, 0.5) == 2.0);
    CHECK(quantile(dists, 0, 0.0) == 1.0);
    CHECK(quantile(dists, 0, 1.0) == 3.0);
    CHECK(quantile(dists, 0, 2.0 / 3.0) == 2.0);
    CHECK_THROWS_AS(quantile(dists, 0, -0.1), std::domain_error);
    CHECK_THROWS_AS(quantile(dists, 0, 1.1), std::domain_error);
}

TEST_CASE("ecdf/quantile closed forms agree with counting and bisection oracles") {
    Rng rng(RngSeed{5});
    for (int inst = 0; inst < 200; ++inst) {
        const int n = 1 + static_cast<int>(rng.uniform() * 12);
        std::vector<double> vals(n);
        for (auto& v : vals) v = std::floor(rng.uniform(-5.0, 5.0) * 4.0) / 4.0;
        auto dists = manual_dists({vals});
        for (int probe = 0; probe < 20; ++probe) {
            const double t = rng.uniform(-6.0, 6.0);
            CHECK(ecdf(dists, 0, t) == oracle::ecdf_count(dists.values[0], t));
            const double u = rng.uniform();
            CHECK(quantile(dists, 0, u) == oracle::quantile_inf(dists.values[0], u));
        }
        CHECK(quantile(dists, 0, 0.0) == oracle::quantile_inf(dists.values[0], 0.0));
        CHECK(quantile(dists, 0, 1.0) == oracle::quantile_inf(dists.values[0], 1.0));
    }
}

TEST_CASE("fair_from_value: worked two-group example") {
    const auto dists = manual_dists({{1.0, 3.0}, {2.0, 4.0}});
    const double g = fair_from_value(dists, 0, 3.0, 1, Rng(RngSeed{0}));
    CHECK(g == doctest::Approx(1.5));
}

TEST_CASE("fair_score: single group is near-identity at sample points") {
    const std::vector<double> xs{-1.0, -0.25, 0.4, 1.3, 2.0};
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(1);
    const double sigma = 0.01;
    policy.dists = build_group_distributions(policy.base, single_group_target(xs), sigma, RngSeed{7});
    policy.m = 8;
    double max_gap = 0.0;
    const auto& v = policy.dists.values[0];
    for (std::size_t i = 1; i < v.size(); ++i) max_gap = std::max(max_gap, v[i] - v[i - 1]);
    for (double x : xs) {
        const double g = fair_score(policy, std::vector<double>{x}, 0);
        CHECK(std::abs(g - x) <= sigma + max_gap + 1e-12);
    }
}

TEST_CASE("fair_score: nondecreasing in the base score when sigma is zero") {
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(2);
    TargetDataset target(1, {"0", "1"});
    Rng rng(RngSeed{8});
    for (int i = 0; i < 40; ++i) target.add_row({rng.uniform(-3.0, 3.0)}, i % 2);
    policy.dists = build_group_distributions(policy.base, target, 0.0, RngSeed{9});
    policy.m = 1;
    double prev = -1e300;
    for (double x = -4.0; x <= 4.0; x += 0.05) {
        const double g = fair_score(policy, std::vector<double>{x}, 0);
        CHECK(g >= prev);
        prev = g;
    }
}

TEST_CASE("fair_score: deterministic replay for the same evaluation point") {
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(1);
    policy.dists =
        build_group_distributions(policy.base, single_group_target({0.0, 1.0, 2.0, 3.0}), 0.5,
                                  RngSeed{10});
    policy.m = 16;
    policy.eval_seed = 4;
    const std::vector<double> x{1.37};
    CHECK(fair_score(policy, x, 0) == fair_score(policy, x, 0));
}

TEST_CASE("tradeoff_score: collapses to fair score at alpha zero and tau zero") {
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(1);
    policy.dists =
        build_group_distributions(policy.base, single_group_target({0.0, 1.0, 2.0}), 0.0, RngSeed{11});
    policy.m = 1;
    const std::vector<double> x{1.6};
    const double fair = fair_score(policy, x, 0);

    policy.alpha = 0.0;
    policy.cate = constant_tau(3.0, 1);
    CHECK(tradeoff_score(policy, x, 0) == fair);

    policy.alpha = 2.5;
    policy.cate = constant_tau(0.0, 1);
    CHECK(tradeoff_score(policy, x, 0) == fair);
}

TEST_CASE("tradeoff_score: half weight at alpha = ln2/|tau|") {
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(1);
    policy.dists =
        build_group_distributions(policy.base, single_group_target({0.0, 1.0, 2.0}), 0.0, RngSeed{12});
    policy.m = 1;
    policy.cate = constant_tau(2.0, 1);
    policy.alpha = std::log(2.0) / 2.0;
    const std::vector<double> x{1.6};
    const double fair = fair_score(policy, x, 0);
    const double f = score(policy.base, x, 0);
    CHECK(tradeoff_score(policy, x, 0) == doctest::Approx(0.5 * f + 0.5 * fair).epsilon(1e-12));
}

TEST_CASE("tradeoff policy validation") {
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(1);
    policy.dists =
        build_group_distributions(policy.base, single_group_target({0.0, 1.0}), 0.0, RngSeed{13});
    policy.alpha = 1.0;  // no CATE model attached
    CHECK_THROWS_AS(policy.validate(), std::invalid_argument);
    policy.alpha = -0.5;
    CHECK_THROWS_AS(policy.validate(), std::invalid_argument);
}

TEST_CASE("wasserstein2_1d: frozen examples and grid oracle") {
    CHECK(wasserstein2_1d(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{1.0, 2.0, 3.0}) ==
          0.0);
    CHECK(wasserstein2_1d(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 1.0}) ==
          doctest::Approx(1.0));
    CHECK(wasserstein2_1d(std::vector<double>{1.0, 3.0}, std::vector<double>{2.0, 4.0}) ==
          doctest::Approx(1.0));
    CHECK_THROWS_AS(wasserstein2_1d(std::vector<double>{}, std::vector<double>{1.0}),
                    std::domain_error);

    Rng rng(RngSeed{14});
    for (int inst = 0; inst < 50; ++inst) {
        const int na = 1 + static_cast<int>(rng.uniform() * 7);
        const int nb = 1 + static_cast<int>(rng.uniform() * 7);
        std::vector<double> a(na), b(nb);
        for (auto& v : a) v = rng.uniform(-3.0, 3.0);
        for (auto& v : b) v = rng.uniform(-3.0, 3.0);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        const double exact = wasserstein2_1d(a, b);
        const double grid = std::sqrt(oracle::w2_grid(a, b, static_cast<std::size_t>(na) * nb * 64));
        CHECK(exact == doctest::Approx(grid).epsilon(1e-6));
    }
}

TEST_CASE("barycenter: equal-size two-group transport hits order-statistic midpoints") {
    Rng rng(RngSeed{15});
    for (int inst = 0; inst < 100; ++inst) {
        const int n = 2 + static_cast<int>(rng.uniform() * 5);
        std::vector<double> a(n), b(n);
        for (auto& v : a) v = rng.uniform(-3.0, 3.0);
        for (auto& v : b) v = rng.uniform(-3.0, 3.0);
        const auto dists = manual_dists({a, b});
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        for (int k = 1; k <= n; ++k) {
            // evaluating group 0 at its k-th order statistic lands on the
            // (k-1)-th midpoint, with the bottom midpoint doubled (strict-<)
            const int idx = std::max(k - 1, 1);
            const double expected = 0.5 * a[idx - 1] + 0.5 * b[idx - 1];
            const double got = fair_from_value(dists, 0, a[static_cast<std::size_t>(k - 1)], 1,
                                               Rng(RngSeed{0}));
            CHECK(got == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("barycenter: quantile-average minimizes the weighted W2 objective") {
    Rng rng(RngSeed{16});
    for (int inst = 0; inst < 25; ++inst) {
        const int n = 2 + static_cast<int>(rng.uniform() * 4);
        std::vector<double> a(n), b(n);
        for (auto& v : a) v = rng.uniform(-3.0, 3.0);
        for (auto& v : b) v = rng.uniform(-3.0, 3.0);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<double> bary(n);
        for (int k = 0; k < n; ++k) bary[k] = 0.5 * a[k] + 0.5 * b[k];
        auto objective = [&](const std::vector<double>& cand) {
            const double wa = wasserstein2_1d(a, cand);
            const double wb = wasserstein2_1d(b, cand);
            return 0.5 * wa * wa + 0.5 * wb * wb;
        };
        const double at_bary = objective(bary);
        for (int cand_i = 0; cand_i < 200; ++cand_i) {
            std::vector<double> cand(n);
            for (auto& v : cand) v = rng.uniform(-4.0, 4.0);
            std::sort(cand.begin(), cand.end());
            CHECK(objective(cand) >= at_bary - 1e-12);
        }
        for (int pert = 0; pert < 50; ++pert) {
            std::vector<double> cand = bary;
            cand[static_cast<std::size_t>(rng.uniform() * n)] += rng.uniform(-0.2, 0.2);
            std::sort(cand.begin(), cand.end());
            CHECK(objective(cand) >= at_bary - 1e-12);
        }
    }
}

TEST_CASE("tradeoff_score: large alpha recovers the base policy sign") {
    TradeoffPolicy policy;
    policy.base = coordinate_scorer(1);
    TargetDataset target(1, {"0"});
    Rng rng(RngSeed{42});
    for (int i = 0; i < 60; ++i) target.add_row({rng.uniform(-3.0, 3.0)}, 0);
    policy.dists = build_group_distributions(policy.base, target, 0.0, RngSeed{43});
    policy.m = 1;
    policy.cate = constant_tau(0.5, 1);
    policy.alpha = 1000.0;
    for (double x = -2.9; x <= 2.9; x += 0.37) {
        if (std::abs(x) < 1e-6) continue;
        const std::vector<double> pt{x};
        CHECK(sgn(tradeoff_score(policy, pt, 0)) == sgn(score(policy.base, pt, 0)));
    }
}

TEST_CASE("fair_score: jitter-count sensitivity stays below 1e-2") {
    LabeledDataset train = generate_experiment(1, 400, RngSeed{300});
    const auto prop = fit_propensity(train, 1e-3, 0.05);
    const auto base = fit_owl(train, {KernelKind::linear, 1.0}, 1e-2, prop);
    const auto test = generate_experiment(1, 400, RngSeed{301});
    const auto scores = score_all(base, train);
    double mean = 0.0, var = 0.0;
    for (double v : scores) mean += v;
    mean /= static_cast<double>(scores.size());
    for (double v : scores) var += (v - mean) * (v - mean);
    const double sigma = 0.5 * std::sqrt(var / scores.size()) / std::sqrt(400.0);
    const auto dists = build_group_distributions(base, to_target(test), sigma, RngSeed{302});

    double worst = 0.0;
    Rng key(RngSeed{303});
    for (std::size_t i = 0; i < 50; ++i) {
        const double raw = score(base, test.x(i), test.s(i));
        const double lo = fair_from_value(dists, test.s(i), raw, 20, key.substream(i));
        const double hi = fair_from_value(dists, test.s(i), raw, 200, key.substream(i));
        worst = std::max(worst, std::abs(lo - hi));
    }
    CHECK(worst <= 1e-2);
}
