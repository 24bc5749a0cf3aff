#include <doctest.h>

#include <cmath>

#include "fairitr/dataset.hpp"
#include "fairitr/solver.hpp"
#include "fairitr/transport.hpp"

using namespace fairitr;

TEST_CASE("surrogate_h: values and asymptotes") {
    CHECK(surrogate_h(1, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(surrogate_h(-1, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    double prev = surrogate_h(1, 0.0);
    for (double u : {1.0, 5.0, 20.0, 50.0}) {
        const double h = surrogate_h(1, u);
        CHECK(h < prev);
        prev = h;
    }
    CHECK(surrogate_h(1, 50.0) < 1e-12);
    CHECK(surrogate_h(-1, 50.0) == doctest::Approx(50.0).epsilon(1e-10));
    CHECK(std::isfinite(surrogate_h(1, -700.0)));
    CHECK(std::isfinite(surrogate_h(-1, 700.0)));
}

TEST_CASE("surrogate_H: branch values and continuity at zero") {
    SurrogateParams p{100.0, 100.0};
    CHECK(surrogate_H(p, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(surrogate_H(p, -1e-300) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(surrogate_H(p, 10.0) == doctest::Approx(1.0249791874789399).epsilon(1e-12));
    CHECK(surrogate_H(p, -0.01) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("surrogate_H: dominance, monotonicity, differentiability condition") {
    Rng rng(RngSeed{101});
    for (int trial = 0; trial < 1000; ++trial) {
        SurrogateParams p{rng.uniform(1.0, 1000.0), rng.uniform(1.0, 1000.0)};
        const double u = rng.uniform(-50.0, 50.0);
        const double hu = surrogate_H(p, u);
        CHECK(hu >= (u >= 0.0 ? 1.0 : 0.0));
        const double u2 = u + rng.uniform(0.0, 10.0);
        CHECK(surrogate_H(p, u2) >= hu);

        // one-sided difference quotients at zero approach gamma and 1/(4 beta)
        const double eps = 1e-9;
        const double left = (surrogate_H(p, 0.0) - surrogate_H(p, -eps)) / eps;
        const double right = (surrogate_H(p, eps) - surrogate_H(p, 0.0)) / eps;
        CHECK(left == doctest::Approx(p.gamma).epsilon(1e-4));
        CHECK(right == doctest::Approx(1.0 / (4.0 * p.beta)).epsilon(1e-4));
    }
    CHECK(SurrogateParams{100.0, 1.0 / 400.0}.differentiable_at_zero());
    CHECK_FALSE(SurrogateParams{100.0, 100.0}.differentiable_at_zero());
}

TEST_CASE("surrogate_h is Fisher-consistent on two-point problems") {
    Rng rng(RngSeed{102});
    for (int trial = 0; trial < 200; ++trial) {
        const double wp = rng.uniform(0.05, 2.0);
        double wm = rng.uniform(0.05, 2.0);
        if (std::abs(wp - wm) < 1e-3) wm += 0.01;
        double best_u = 0.0, best_val = 1e300;
        for (double u = -8.0; u <= 8.0; u += 1e-3) {
            const double val = wp * surrogate_h(1, u) + wm * surrogate_h(-1, u);
            if (val < best_val) {
                best_val = val;
                best_u = u;
            }
        }
        CHECK(sgn(best_u) == sgn(wp - wm));
    }
}

TEST_CASE("isres: constrained and unconstrained 1-d optima") {
    IsresConfig config;
    config.lower = {0.0};
    config.upper = {10.0};
    config.max_evaluations = 4000;
    config.seed = 11;
    auto objective = [](std::span<const double> v) { return (v[0] - 1.0) * (v[0] - 1.0); };

    SUBCASE("alpha <= 0.5 active constraint") {
        std::vector<std::function<double(std::span<const double>)>> cons{
            [](std::span<const double> v) { return v[0] - 0.5; }};
        const auto res = isres_minimize(objective, cons, config);
        CHECK(res.feasible);
        CHECK(res.x[0] == doctest::Approx(0.5).epsilon(1e-3));
    }
    SUBCASE("unconstrained") {
        const auto res = isres_minimize(objective, {}, config);
        CHECK(res.feasible);
        CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("isres: 2-d sphere with a linear constraint lands on the KKT point") {
    IsresConfig config;
    config.lower = {-2.0, -2.0};
    config.upper = {2.0, 2.0};
    config.max_evaluations = 20000;
    config.seed = 12;
    auto objective = [](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; };
    std::vector<std::function<double(std::span<const double>)>> cons{
        [](std::span<const double> v) { return 1.0 - v[0] - v[1]; }};
    const auto res = isres_minimize(objective, cons, config);
    CHECK(res.feasible);
    CHECK(res.x[0] == doctest::Approx(0.5).epsilon(1e-2));
    CHECK(res.x[1] == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("isres: identical seeds give identical answers; bad config throws") {
    IsresConfig config;
    config.lower = {0.0};
    config.upper = {10.0};
    config.max_evaluations = 1500;
    config.seed = 13;
    auto objective = [](std::span<const double> v) { return std::cos(3.0 * v[0]) + 0.1 * v[0]; };
    const auto r1 = isres_minimize(objective, {}, config);
    const auto r2 = isres_minimize(objective, {}, config);
    CHECK(r1.x[0] == r2.x[0]);
    CHECK(r1.value == r2.value);

    IsresConfig bad = config;
    bad.population = 2;
    CHECK_THROWS_AS(isres_minimize(objective, {}, bad), std::invalid_argument);
    bad = config;
    bad.lower = {1.0};
    bad.upper = {1.0};
    CHECK_THROWS_AS(isres_minimize(objective, {}, bad), std::invalid_argument);
}

TEST_CASE("isres: non-finite candidates are discarded, not returned") {
    IsresConfig config;
    config.lower = {0.0};
    config.upper = {4.0};
    config.max_evaluations = 2000;
    config.seed = 14;
    auto objective = [](std::span<const double> v) {
        if (v[0] < 1.0) return std::numeric_limits<double>::quiet_NaN();
        return (v[0] - 2.0) * (v[0] - 2.0);
    };
    const auto res = isres_minimize(objective, {}, config);
    CHECK(res.discarded > 0);
    CHECK(res.x[0] == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("surrogate_grid: shapes and validation") {
    CHECK(surrogate_grid("coarse").size() == 100);
    CHECK(surrogate_grid("paper").size() == 91 * 91);
    CHECK(surrogate_grid("coarse").front().beta == 100.0);
    CHECK(surrogate_grid("coarse").back().gamma == 1000.0);
    CHECK_THROWS_AS(surrogate_grid("fine"), std::invalid_argument);
}

TEST_CASE("select_alpha: plumbing on a small training set") {
    const auto train = generate_experiment(1, 200, RngSeed{103});
    const auto prop = fit_propensity(train, 1e-3, 0.05);
    const auto base = fit_owl(train, {KernelKind::linear, 1.0}, 1e-2, prop);
    const auto cate = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 5);
    const auto dists = build_group_distributions(base, to_target(train), 0.05, RngSeed{104});

    IsresConfig config;
    config.max_evaluations = 400;
    config.seed = 7;
    const std::vector<SurrogateParams> grid{{500.0, 500.0}};

    const auto sel = select_alpha(train, base, dists, cate, prop, 0.5, grid, config, 8, 3);
    CHECK(sel.trace.size() == 1);
    CHECK(sel.alpha_hat >= 0.0);
    CHECK(sel.alpha_hat <= 10.0);
    CHECK(sel.slack.size() == 2);  // two ordered pairs for two groups
    if (sel.feasible) {
        for (const auto& ps : sel.slack) {
            CHECK(ps.surrogate <= 0.0);
            CHECK(ps.indicator <= 0.0);  // H-dominance makes the surrogate conservative
        }
    }
    const auto sel2 = select_alpha(train, base, dists, cate, prop, 0.5, grid, config, 8, 3);
    CHECK(sel.alpha_hat == sel2.alpha_hat);

    CHECK_THROWS_AS(select_alpha(train, base, dists, cate, prop, 0.5, {}, config, 8, 3),
                    std::domain_error);
    CHECK_THROWS_AS(select_alpha(train, base, dists, cate, prop, 1.5, grid, config, 8, 3),
                    std::invalid_argument);
}

TEST_CASE("select_alpha: perfect parity floor is infeasible and falls back to alpha zero") {
    // H(u) + H(-u) > 1 pointwise, so at rho = 1 the two ordered-pair
    // constraints cannot hold together; the selection must return the fair
    // policy with the infeasibility flag.
    const auto train = generate_experiment(1, 150, RngSeed{111});
    const auto prop = fit_propensity(train, 1e-3, 0.05);
    const auto base = fit_owl(train, {KernelKind::linear, 1.0}, 1e-2, prop);
    const auto cate = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 5);
    const auto dists = build_group_distributions(base, to_target(train), 0.02, RngSeed{112});
    IsresConfig config;
    config.max_evaluations = 300;
    config.seed = 5;
    const std::vector<SurrogateParams> grid{{100.0, 100.0}, {1000.0, 1000.0}};
    const auto sel = select_alpha(train, base, dists, cate, prop, 1.0, grid, config, 8, 3);
    CHECK_FALSE(sel.feasible);
    CHECK(sel.alpha_hat == 0.0);
    for (const auto& cell : sel.trace) CHECK_FALSE(cell.feasible);
}

TEST_CASE("select_alpha: the full 91x91 grid enumerates deterministically") {
    const auto train = generate_experiment(1, 80, RngSeed{121});
    const auto prop = fit_propensity(train, 1e-3, 0.05);
    const auto base = fit_owl(train, {KernelKind::linear, 1.0}, 1e-2, prop);
    const auto cate = fit_rlearner(train, {KernelKind::linear, 1.0}, 1e-2, 4);
    const auto dists = build_group_distributions(base, to_target(train), 0.02, RngSeed{122});
    IsresConfig config;
    config.max_evaluations = 40;  // smoke-test budget per cell
    config.seed = 9;
    const auto grid = surrogate_grid("paper");
    const auto sel = select_alpha(train, base, dists, cate, prop, 0.6, grid, config, 4, 7);
    CHECK(sel.trace.size() == grid.size());
    const auto sel2 = select_alpha(train, base, dists, cate, prop, 0.6, grid, config, 4, 7);
    CHECK(sel.alpha_hat == sel2.alpha_hat);
    CHECK(sel.beta == sel2.beta);
    CHECK(sel.gamma == sel2.gamma);
}
