#include <doctest.h>

#include <cmath>

#include "fairitr/cate.hpp"
#include "fairitr/metrics.hpp"
#include "fairitr/dataset.hpp"
#include "fairitr/rng.hpp"
#include "oracles.hpp"

using namespace fairitr;

namespace {

LabeledDataset additive_effect(double effect, int n, std::uint64_t seed, double noise = 1.0) {
    LabeledDataset data(1, {"0"});
    Rng rng(RngSeed{seed});
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform(-2.0, 2.0);
        const int a = rng.bernoulli(0.5) ? 1 : -1;
        const double w01 = a == 1 ? 1.0 : 0.0;
        data.add_row({x}, 0, a, effect * w01 + x + noise * rng.normal());
    }
    return data;
}

} // namespace

TEST_CASE("rlearner: constant treatment effect is recovered") {
    const auto train = additive_effect(1.0, 2000, 71);
    const auto model = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 5);
    Rng rng(RngSeed{72});
    double mean = 0.0;
    const int trials = 500;
    for (int i = 0; i < trials; ++i)
        mean += cate_tau(model, std::vector<double>{rng.uniform(-2.0, 2.0)}, 0);
    mean /= trials;
    CHECK(mean > 0.9);
    CHECK(mean < 1.1);
}

TEST_CASE("rlearner: null effect stays near zero") {
    const auto train = additive_effect(0.0, 2000, 73);
    const auto model = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 5);
    Rng rng(RngSeed{74});
    double mean_abs = 0.0;
    const int trials = 500;
    for (int i = 0; i < trials; ++i)
        mean_abs += std::abs(cate_tau(model, std::vector<double>{rng.uniform(-2.0, 2.0)}, 0));
    mean_abs /= trials;
    CHECK(mean_abs <= 0.1);
}

TEST_CASE("rlearner: experiment 1 effect is tracked closely") {
    const auto train = generate_experiment(1, 2000, RngSeed{75});
    const auto model = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 5);
    const auto test = generate_experiment(1, 10000, RngSeed{76});
    std::vector<double> est(test.n()), truth(test.n());
    for (std::size_t i = 0; i < test.n(); ++i) {
        est[i] = cate_tau(model, test.x(i), test.s(i));
        truth[i] = experiment_tau(1, test.x(i), test.s(i));
        // tau*(x, s) = 2(x1 + x2) - 10(1 - s) for experiment 1
        const double closed = 2.0 * (test.x(i)[0] + test.x(i)[1]) - 10.0 * (1.0 - test.s(i));
        CHECK(truth[i] == doctest::Approx(closed).epsilon(1e-12));
    }
    double me = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        me += est[i];
        mt += truth[i];
    }
    me /= static_cast<double>(est.size());
    mt /= static_cast<double>(truth.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        sxy += (est[i] - me) * (truth[i] - mt);
        sxx += (est[i] - me) * (est[i] - me);
        syy += (truth[i] - mt) * (truth[i] - mt);
    }
    CHECK(sxy / std::sqrt(sxx * syy) >= 0.9);
}

TEST_CASE("rlearner: matches the two-arm regression difference on randomized data") {
    LabeledDataset train(2, {"0"});
    Rng rng(RngSeed{77});
    for (int i = 0; i < 2000; ++i) {
        const double x1 = rng.uniform(-2.0, 2.0);
        const double x2 = rng.uniform(-2.0, 2.0);
        const int a = rng.bernoulli(0.5) ? 1 : -1;
        const double w01 = a == 1 ? 1.0 : 0.0;
        train.add_row({x1, x2}, 0, a, (0.5 + 0.3 * x1) * w01 + x2 + 0.5 * rng.normal());
    }
    const auto rl = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 5);
    const auto ql = fit_qlearning(train, {KernelKind::linear, 1.0}, 1e-2);
    double rmse = 0.0;
    const int trials = 400;
    Rng probe(RngSeed{78});
    for (int i = 0; i < trials; ++i) {
        std::vector<double> x{probe.uniform(-2.0, 2.0), probe.uniform(-2.0, 2.0)};
        const double dif = cate_tau(rl, x, 0) - score(ql, x, 0);
        rmse += dif * dif;
    }
    CHECK(std::sqrt(rmse / trials) <= 0.1);
}

TEST_CASE("rlearner: fold with a single arm is a fit error") {
    LabeledDataset data(1, {"0"});
    Rng rng(RngSeed{79});
    for (int i = 0; i < 30; ++i) data.add_row({rng.uniform(-1.0, 1.0)}, 0, -1, rng.normal());
    data.add_row({0.5}, 0, 1, 1.0);  // single treated row cannot reach every fold
    CHECK_THROWS_AS(fit_rlearner(data, {KernelKind::linear, 1.0}, 1e-2, 5), FitError);
}

TEST_CASE("rlearner: analytic gradient matches central differences") {
    const auto train = generate_experiment(1, 60, RngSeed{80});
    auto [prob, folds] = make_rlearner_problem(train, {KernelKind::linear, 1.0}, 1e-2, 3);
    auto value = [&prob](std::span<const double> c, double b) { return prob.value(c, b); };
    Rng rng(RngSeed{81});
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> c(train.n());
        for (auto& v : c) v = rng.uniform(-0.3, 0.3);
        const double b = rng.uniform(-0.5, 0.5);
        std::vector<double> gc;
        double gb = 0.0;
        prob.gradient(c, b, gc, gb);
        for (std::size_t coord : {std::size_t{2}, std::size_t{31}}) {
            const double fd = oracle::central_diff(value, c, b, coord, false, 1e-5);
            CHECK(gc[coord] == doctest::Approx(fd).epsilon(1e-4));
        }
        const double fd_b = oracle::central_diff(value, c, b, 0, true, 1e-5);
        CHECK(gb == doctest::Approx(fd_b).epsilon(1e-4));
    }
}

TEST_CASE("weight: closed-form values and monotonicity") {
    CateModel constant_tau;
    constant_tau.tau_head.kernel = {KernelKind::linear, 1.0};
    constant_tau.tau_head.scaler.mean = {0.0};
    constant_tau.tau_head.scaler.scale = {1.0};
    constant_tau.tau_head.groups = {"0"};
    constant_tau.tau_head.intercept = std::log(2.0);

    const std::vector<double> x{0.3};
    CHECK(weight(constant_tau, x, 0, 0.0) == doctest::Approx(0.0));
    CHECK(weight(constant_tau, x, 0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(weight(constant_tau, x, 0, -0.1), std::domain_error);

    double prev = -1.0;
    for (double alpha : {0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0}) {
        const double w = weight(constant_tau, x, 0, alpha);
        CHECK(w >= prev);
        CHECK(w >= 0.0);
        CHECK(w < 1.0);
        prev = w;
    }
    CHECK(weight(constant_tau, x, 0, 1000.0) == doctest::Approx(1.0).epsilon(1e-6));

    SUBCASE("zero effect pins the weight at zero for every alpha") {
        constant_tau.tau_head.intercept = 0.0;
        for (double alpha : {0.0, 1.0, 50.0}) CHECK(weight(constant_tau, x, 0, alpha) == 0.0);
    }
}
