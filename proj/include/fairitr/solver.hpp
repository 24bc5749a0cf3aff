// Copyright 2026 the fairitr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairitr/cate.hpp"
#include "fairitr/dataset.hpp"
#include "fairitr/metrics.hpp"
#include "fairitr/nuisance.hpp"
#include "fairitr/rng.hpp"
#include "fairitr/transport.hpp"
#include "fairitr/util.hpp"

namespace fairitr {

// ---------------------------------------------------------------------------
// Surrogate losses
// ---------------------------------------------------------------------------

/// Binomial-deviance surrogate for the 0-1 policy loss:
/// h(a, u) = -((a+1)/2) u + log(1 + e^u), convex and differentiable in u.
inline double surrogate_h(int a, double u) {
    const double y = a == 1 ? 1.0 : 0.0;
    return -y * u + std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

/// Smoothness parameters of the indicator surrogate H. The two one-sided
/// derivatives at zero (1/(4 beta) from the right, gamma from the left)
/// coincide exactly when gamma = 1/(4 beta).
struct SurrogateParams {
    double beta = 100.0;
    double gamma = 100.0;

    void validate() const {
        if (!(beta > 0.0) || !(gamma > 0.0))
            throw std::invalid_argument("SurrogateParams: beta and gamma must be positive");
    }
    bool differentiable_at_zero() const { return std::abs(gamma - 1.0 / (4.0 * beta)) <= 1e-12; }
};

/// Smooth upper bound of the indicator I(u >= 0):
/// H(u) = 1/2 + 1/(1 + e^{-u/beta}) for u >= 0 and 1/(1 - gamma u) for u < 0.
/// Monotone, continuous, H(0) = 1.
inline double surrogate_H(const SurrogateParams& p, double u) {
    if (u >= 0.0) return 0.5 + 1.0 / (1.0 + std::exp(-u / p.beta));
    return 1.0 / (1.0 - p.gamma * u);
}

// ---------------------------------------------------------------------------
// ISRES: improved stochastic ranking evolution strategy
// ---------------------------------------------------------------------------

struct IsresConfig {
    int population = 0;  // 0 selects 20*(dim+1) capped at 60
    int max_evaluations = 2000;
    std::vector<double> lower;
    std::vector<double> upper;
    double ranking_pressure = 0.45;    // P_f: probability of objective-based swaps
    double learning_rate_scale = 1.0;  // scales tau = c/sqrt(2 sqrt(n)), tau' = c/sqrt(2n)
    std::uint64_t seed = 0;
};

struct IsresResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    bool feasible = false;
    int evaluations = 0;
    int discarded = 0;  // candidates with non-finite objective
};

namespace detail {

inline constexpr std::uint64_t stream_isres = 0x49535245ULL;
inline constexpr double isres_diff_variation = 0.85;  // differential variation coefficient
inline constexpr double isres_smoothing = 0.2;        // step-size exponential smoothing

} // namespace detail

/// (mu, lambda) evolution strategy with log-normal step-size self-adaptation,
/// differential variation toward the best ranked parent, and stochastic
/// ranking for constraint handling (Runarsson & Yao, 2005). Constraints are
/// feasible at values <= 0; the penalty is the sum of squared violations.
/// Returns the best feasible point seen, or the least-violating point
/// flagged infeasible when nothing feasible was ever evaluated.
inline IsresResult isres_minimize(const std::function<double(std::span<const double>)>& objective,
                                  const std::vector<std::function<double(std::span<const double>)>>&
                                      constraints,
                                  const IsresConfig& config) {
    const std::size_t dim = config.lower.size();
    if (dim == 0 || config.upper.size() != dim)
        throw std::invalid_argument("isres_minimize: bounds must be non-empty and consistent");
    for (std::size_t j = 0; j < dim; ++j)
        if (!(config.lower[j] < config.upper[j]) || !std::isfinite(config.lower[j]) ||
            !std::isfinite(config.upper[j]))
            throw std::invalid_argument("isres_minimize: need finite lower < upper bounds");
    if (!(config.ranking_pressure > 0.0 && config.ranking_pressure < 1.0))
        throw std::invalid_argument("isres_minimize: ranking pressure must be in (0,1)");
    int lambda = config.population;
    if (lambda == 0) lambda = std::min<int>(20 * (static_cast<int>(dim) + 1), 60);
    if (lambda < 4) throw std::invalid_argument("isres_minimize: population must be >= 4");
    const int mu = std::max(1, lambda / 7);

    const double nd = static_cast<double>(dim);
    const double tau = config.learning_rate_scale / std::sqrt(2.0 * std::sqrt(nd));
    const double tau_prime = config.learning_rate_scale / std::sqrt(2.0 * nd);

    Rng rng = Rng(RngSeed{config.seed}).substream(detail::stream_isres);

    std::vector<std::vector<double>> xs(lambda, std::vector<double>(dim));
    std::vector<std::vector<double>> sigmas(lambda, std::vector<double>(dim));
    for (int i = 0; i < lambda; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            xs[i][j] = rng.uniform(config.lower[j], config.upper[j]);
            sigmas[i][j] = (config.upper[j] - config.lower[j]) / std::sqrt(nd);
        }

    IsresResult best;
    double best_violation = std::numeric_limits<double>::infinity();
    std::vector<double> fvals(lambda), viols(lambda);

    auto evaluate_all = [&]() {
        for (int i = 0; i < lambda; ++i) {
            double f = objective(xs[i]);
            if (!std::isfinite(f)) {
                ++best.discarded;
                f = std::numeric_limits<double>::max();
            }
            double viol = 0.0;
            for (const auto& g : constraints) {
                const double gv = g(xs[i]);
                const double over = std::isfinite(gv) ? std::max(0.0, gv)
                                                      : std::numeric_limits<double>::max();
                viol += over * over;
            }
            fvals[i] = f;
            viols[i] = viol;
            ++best.evaluations;
            if (viol == 0.0) {
                if (!best.feasible || f < best.value) {
                    best.feasible = true;
                    best.value = f;
                    best.x = xs[i];
                }
            } else if (!best.feasible &&
                       (viol < best_violation || (viol == best_violation && f < best.value))) {
                best_violation = viol;
                best.value = f;
                best.x = xs[i];
            }
        }
    };

    evaluate_all();
    while (best.evaluations < config.max_evaluations) {
        // stochastic ranking: bubble passes that swap on objective with
        // probability P_f (always when both candidates are feasible), and on
        // constraint violation otherwise
        std::vector<int> order(lambda);
        for (int i = 0; i < lambda; ++i) order[i] = i;
        for (int sweep = 0; sweep < lambda; ++sweep) {
            bool swapped = false;
            for (int j = 0; j + 1 < lambda; ++j) {
                const int a = order[j], b = order[j + 1];
                const bool by_objective =
                    (viols[a] == 0.0 && viols[b] == 0.0) || rng.uniform() < config.ranking_pressure;
                const bool swap = by_objective ? fvals[a] > fvals[b] : viols[a] > viols[b];
                if (swap) {
                    std::swap(order[j], order[j + 1]);
                    swapped = true;
                }
            }
            if (!swapped) break;
        }

        std::vector<std::vector<double>> nxs(lambda, std::vector<double>(dim));
        std::vector<std::vector<double>> nsigmas(lambda, std::vector<double>(dim));
        for (int i = 0; i < lambda; ++i) {
            if (i < mu - 1) {
                // differential variation: move ranked parent i toward the best
                const auto& xi = xs[order[i]];
                const auto& xbest = xs[order[0]];
                const auto& xnext = xs[order[i + 1]];
                for (std::size_t j = 0; j < dim; ++j) {
                    double v = xi[j] + detail::isres_diff_variation * (xbest[j] - xnext[j]);
                    nxs[i][j] = std::clamp(v, config.lower[j], config.upper[j]);
                    nsigmas[i][j] = sigmas[order[i]][j];
                }
            } else {
                const int k = order[i % mu];
                const double global = rng.normal();
                for (std::size_t j = 0; j < dim; ++j) {
                    double step = sigmas[k][j] * std::exp(tau_prime * global + tau * rng.normal());
                    step = std::min(step, config.upper[j] - config.lower[j]);
                    double v = xs[k][j] + step * rng.normal();
                    for (int retry = 0; retry < 10 && (v < config.lower[j] || v > config.upper[j]);
                         ++retry)
                        v = xs[k][j] + step * rng.normal();
                    nxs[i][j] = std::clamp(v, config.lower[j], config.upper[j]);
                    nsigmas[i][j] =
                        sigmas[k][j] + detail::isres_smoothing * (step - sigmas[k][j]);
                }
            }
        }
        xs = std::move(nxs);
        sigmas = std::move(nsigmas);
        evaluate_all();
    }
    return best;
}

// ---------------------------------------------------------------------------
// Alpha selection (surrogate IPW risk under smoothed DI constraints)
// ---------------------------------------------------------------------------

struct GridCellResult {
    double beta = 0.0;
    double gamma = 0.0;
    double alpha = 0.0;
    double value_hat = 0.0;   // training IPW value of g_alpha at the cell optimum
    double max_slack = 0.0;   // largest surrogate constraint value at the optimum
    bool feasible = false;
};

struct PairSlack {
    std::string s;        // group whose negative rate enters
    std::string s_prime;  // group whose positive rate enters
    double surrogate = 0.0;
    double indicator = 0.0;
};

struct AlphaSelection {
    double alpha_hat = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double value_hat = 0.0;
    bool feasible = false;
    std::vector<PairSlack> slack;        // at alpha_hat, for the chosen cell
    std::vector<GridCellResult> trace;   // one record per grid cell
};

/// beta/gamma grids named by the computational recipe: "paper" is the full
/// {100+10j : 0<=j<=90} grid, "coarse" the {100+100j : 0<=j<=9} subgrid.
inline std::vector<SurrogateParams> surrogate_grid(const std::string& name) {
    std::vector<double> vals;
    if (name == "paper")
        for (int j = 0; j <= 90; ++j) vals.push_back(100.0 + 10.0 * j);
    else if (name == "coarse")
        for (int j = 0; j <= 9; ++j) vals.push_back(100.0 + 100.0 * j);
    else
        throw std::invalid_argument("surrogate_grid: unknown grid '" + name + "'");
    std::vector<SurrogateParams> grid;
    for (double b : vals)
        for (double g : vals) grid.push_back({b, g});
    return grid;
}

namespace detail {

inline constexpr std::uint64_t stream_select_alpha = 0x53454C41ULL;

// Training-row caches shared by every candidate alpha. Scores are
// standardized to unit spread before entering h and H: the indicator
// constraint and the sign policy are scale-invariant, while the surrogate
// tightness is not -- the (beta, gamma) grid presumes scores of order one,
// and H(u/c) still dominates I(u > 0), so the conservative direction of the
// relaxation is preserved for any positive c.
struct AlphaEvalData {
    std::vector<double> fhat;     // base scores
    std::vector<double> ghat;     // transported fair scores
    std::vector<double> abs_tau;  // |tau_hat|
    std::vector<double> ipw_h;    // shifted reward over received-arm propensity
    std::vector<double> ipw_v;    // raw reward over received-arm propensity
    std::vector<int> a;
    std::vector<int> s;
    std::vector<std::size_t> group_n;
    std::size_t n_groups = 0;
    double score_scale = 1.0;  // 1 / sd of the base training scores

    std::size_t n() const { return fhat.size(); }
};

// Memoized per-alpha evaluation of the surrogate risk and the per-group
// H sums; the objective and every constraint callback share one compute.
struct AlphaEvaluator {
    const AlphaEvalData* data = nullptr;
    SurrogateParams params;
    double cached_alpha = std::numeric_limits<double>::quiet_NaN();
    double objective = 0.0;
    std::vector<double> sum_h_pos;  // sum over group of H(g_alpha)
    std::vector<double> sum_h_neg;  // sum over group of H(-g_alpha)
    std::vector<double> scores;

    void ensure(double alpha) {
        if (alpha == cached_alpha) return;
        const auto& d = *data;
        const std::size_t n = d.n();
        scores.resize(n);
        sum_h_pos.assign(d.n_groups, 0.0);
        sum_h_neg.assign(d.n_groups, 0.0);
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weight_from_tau(d.abs_tau[i], alpha);
            const double u = w * d.fhat[i] + (1.0 - w) * d.ghat[i];
            scores[i] = u;
            obj += d.ipw_h[i] * surrogate_h(d.a[i], u);
            const double us = u * d.score_scale;  // constraints only; I(u>0) is scale-free
            sum_h_pos[static_cast<std::size_t>(d.s[i])] += surrogate_H(params, us);
            sum_h_neg[static_cast<std::size_t>(d.s[i])] += surrogate_H(params, -us);
        }
        objective = obj / static_cast<double>(n);
        cached_alpha = alpha;
    }

    double constraint(double alpha, std::size_t s, std::size_t s_prime, double rho) {
        ensure(alpha);
        return rho * sum_h_pos[s_prime] / static_cast<double>(data->group_n[s_prime]) +
               sum_h_neg[s] / static_cast<double>(data->group_n[s]) - 1.0;
    }

    double value_hat(double alpha) {
        ensure(alpha);
        double acc = 0.0;
        for (std::size_t i = 0; i < data->n(); ++i)
            if (data->a[i] == sgn(scores[i])) acc += data->ipw_v[i];
        return acc / static_cast<double>(data->n());
    }

    double indicator_constraint(double alpha, std::size_t s, std::size_t s_prime, double rho) {
        ensure(alpha);
        std::vector<double> pos(data->n_groups, 0.0), neg(data->n_groups, 0.0);
        for (std::size_t i = 0; i < data->n(); ++i) {
            if (scores[i] > 0.0)
                pos[static_cast<std::size_t>(data->s[i])] += 1.0;
            else
                neg[static_cast<std::size_t>(data->s[i])] += 1.0;
        }
        return rho * pos[s_prime] / static_cast<double>(data->group_n[s_prime]) +
               neg[s] / static_cast<double>(data->group_n[s]) - 1.0;
    }
};

} // namespace detail

/// Solve, for each (beta, gamma) grid cell, the 1-D constrained problem
///   min_alpha (1/n) sum_i Rshift_i/(A_i pihat_i + (1-A_i)/2) h(A_i, g_alpha_i)
///   s.t.  rho/n_s' sum_{S=s'} H(g_alpha) + 1/n_s sum_{S=s} H(-g_alpha) - 1 <= 0
/// for every ordered group pair s != s', by ISRES; then pick the cell whose
/// optimum maximizes the training IPW value of g_alpha. Rewards are shifted
/// nonnegative with the same rule as the OWL fit. When no cell admits a
/// feasible alpha the selection falls back to alpha = 0 (the fair policy),
/// flagged infeasible.
inline AlphaSelection select_alpha(const LabeledDataset& train, const DecisionModel& base,
                                   const GroupDistributions& dists, const CateModel& cate,
                                   const PropensityModel& prop, double rho,
                                   const std::vector<SurrogateParams>& grid, IsresConfig config,
                                   int m = 20, std::uint64_t eval_seed = 0, int threads = 1) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("select_alpha: rho outside [0,1]");
    if (grid.empty()) throw std::domain_error("select_alpha: empty (beta,gamma) grid");
    for (const auto& p : grid) p.validate();
    if (config.lower.empty()) {
        config.lower = {0.0};
        config.upper = {10.0};
    }
    if (config.lower.size() != 1 || config.upper.size() != 1)
        throw std::invalid_argument("select_alpha: alpha search is one-dimensional");

    const std::size_t n = train.n();
    detail::AlphaEvalData data;
    data.fhat = score_all(base, train);
    data.n_groups = train.groups().size();
    data.group_n.assign(data.n_groups, 0);
    data.ghat.resize(n);
    data.abs_tau.resize(n);
    data.ipw_h.resize(n);
    data.ipw_v.resize(n);
    data.a = train.treatments();
    data.s = train.group_ids();

    double rmin = std::numeric_limits<double>::infinity();
    double rmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        rmin = std::min(rmin, train.r(i));
        rmax = std::max(rmax, train.r(i));
    }
    const double offset = 0.01 * (rmax - rmin);
    Rng eval_rng = Rng(RngSeed{eval_seed}).substream(detail::stream_eval_jitter);
    for (std::size_t i = 0; i < n; ++i) {
        data.group_n[static_cast<std::size_t>(train.s(i))]++;
        data.ghat[i] = fair_from_value(dists, train.s(i), data.fhat[i], m,
                                       eval_rng.substream(point_key(train.x(i), train.s(i))));
        data.abs_tau[i] = std::abs(cate_tau(cate, train.x(i), train.s(i)));
        const double denom = train.a(i) * prop.prob_treat(train.x(i), train.s(i)) +
                             (1.0 - train.a(i)) / 2.0;
        data.ipw_h[i] = (train.r(i) - rmin + offset) / denom;
        data.ipw_v[i] = train.r(i) / denom;
    }
    for (std::size_t s = 0; s < data.n_groups; ++s)
        if (data.group_n[s] == 0)
            throw std::domain_error("select_alpha: group '" + train.groups()[s] +
                                    "' has no training rows");
    {
        double mean = 0.0;
        for (double v : data.fhat) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : data.fhat) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        // target spread 2.5: balances the positive-branch slack (~u/4beta)
        // against the negative-branch slack (~1/(gamma|u|)) over the grid, so
        // every cell's surrogate constraint sits close to the indicator one
        data.score_scale = sd > 1e-12 ? 2.5 / sd : 1.0;
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t s = 0; s < data.n_groups; ++s)
        for (std::size_t sp = 0; sp < data.n_groups; ++sp)
            if (s != sp) pairs.emplace_back(s, sp);

    Rng cell_seeds = Rng(RngSeed{config.seed}).substream(detail::stream_select_alpha);
    auto run_cell = [&](std::size_t cell) {
        detail::AlphaEvaluator eval;
        eval.data = &data;
        eval.params = grid[cell];
        auto objective = [&eval](std::span<const double> v) {
            eval.ensure(v[0]);
            return eval.objective;
        };
        std::vector<std::function<double(std::span<const double>)>> cons;
        const double rho_local = rho;
        for (auto [s, sp] : pairs)
            cons.push_back([&eval, s = s, sp = sp, rho_local](std::span<const double> v) {
                return eval.constraint(v[0], s, sp, rho_local);
            });
        IsresConfig cell_config = config;
        cell_config.seed = cell_seeds.substream(cell).next_u64();
        const IsresResult res = isres_minimize(objective, cons, cell_config);

        GridCellResult out;
        out.beta = grid[cell].beta;
        out.gamma = grid[cell].gamma;
        out.alpha = res.x.empty() ? 0.0 : res.x[0];
        out.feasible = res.feasible;
        out.value_hat = eval.value_hat(out.alpha);
        double worst = -std::numeric_limits<double>::infinity();
        for (auto [s, sp] : pairs) worst = std::max(worst, eval.constraint(out.alpha, s, sp, rho));
        out.max_slack = worst;
        return out;
    };

    AlphaSelection sel;
    sel.trace = parallel_map(grid.size(), threads, run_cell);

    std::size_t chosen = grid.size();
    for (std::size_t cell = 0; cell < grid.size(); ++cell) {
        const auto& cr = sel.trace[cell];
        if (!cr.feasible) continue;
        if (chosen == grid.size() || cr.value_hat > sel.trace[chosen].value_hat) chosen = cell;
    }

    detail::AlphaEvaluator eval;
    eval.data = &data;
    if (chosen < grid.size()) {
        const auto& cr = sel.trace[chosen];
        sel.alpha_hat = cr.alpha;
        sel.beta = cr.beta;
        sel.gamma = cr.gamma;
        sel.value_hat = cr.value_hat;
        sel.feasible = true;
        eval.params = grid[chosen];
    } else {
        sel.alpha_hat = 0.0;
        sel.beta = grid[0].beta;
        sel.gamma = grid[0].gamma;
        sel.feasible = false;
        eval.params = grid[0];
        sel.value_hat = eval.value_hat(0.0);
    }
    for (auto [s, sp] : pairs) {
        PairSlack ps;
        ps.s = train.groups()[s];
        ps.s_prime = train.groups()[sp];
        ps.surrogate = eval.constraint(sel.alpha_hat, s, sp, rho);
        ps.indicator = eval.indicator_constraint(sel.alpha_hat, s, sp, rho);
        sel.slack.push_back(ps);
    }
    return sel;
}

} // namespace fairitr
