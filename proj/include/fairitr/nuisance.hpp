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
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairitr/dataset.hpp"
#include "fairitr/kernels.hpp"
#include "fairitr/linalg.hpp"

namespace fairitr {

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Propensity score
// ---------------------------------------------------------------------------

/// Ridge logistic regression of I(A=1) on (1, x, one-hot(s)); predictions are
/// clipped into [tau_floor, 1 - tau_floor] so positivity holds by fiat.
struct PropensityModel {
    std::vector<double> coefficients;  // intercept, covariates, group effects
    std::size_t d = 0;
    std::size_t n_groups = 0;
    double tau_floor = 0.05;

    double linear_score(std::span<const double> x, int s) const {
        if (x.size() != d) throw std::invalid_argument("PropensityModel: dimension mismatch");
        detail::check_group_index(s, n_groups, "PropensityModel");
        double u = coefficients[0];
        for (std::size_t j = 0; j < d; ++j) u += coefficients[1 + j] * x[j];
        u += coefficients[1 + d + static_cast<std::size_t>(s)];
        return u;
    }

    /// P(A = 1 | x, s), clipped.
    double prob_treat(std::span<const double> x, int s) const {
        return std::clamp(sigmoid(linear_score(x, s)), tau_floor, 1.0 - tau_floor);
    }

    /// P(A = a | x, s) for a in {-1,+1}.
    double prob_of(int a, std::span<const double> x, int s) const {
        const double p = prob_treat(x, s);
        return a == 1 ? p : 1.0 - p;
    }
};

inline PropensityModel fit_propensity(const LabeledDataset& train, double ridge,
                                      double tau_floor) {
    if (!(tau_floor > 0.0 && tau_floor < 0.5))
        throw std::invalid_argument("fit_propensity: tau_floor must be in (0, 0.5)");
    if (ridge < 0.0) throw std::invalid_argument("fit_propensity: ridge must be nonnegative");
    const std::size_t n = train.n(), d = train.d(), g = train.groups().size();
    bool any_pos = false, any_neg = false;
    for (std::size_t i = 0; i < n; ++i) (train.a(i) == 1 ? any_pos : any_neg) = true;
    if (!any_pos || !any_neg) throw FitError("fit_propensity: both treatments must be present");

    const std::size_t p = 1 + d + g;
    Matrix feats(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = feats.row(i);
        row[0] = 1.0;
        for (std::size_t j = 0; j < d; ++j) row[1 + j] = train.x(i)[j];
        row[1 + d + static_cast<std::size_t>(train.s(i))] = 1.0;
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = train.a(i) == 1 ? 1.0 : 0.0;

    std::vector<double> beta(p, 0.0);
    auto objective = [&](const std::vector<double>& b) {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = dot(feats.row(i), b);
            obj += std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))) - y[i] * u;
        }
        for (std::size_t j = 1; j < p; ++j) obj += 0.5 * ridge * b[j] * b[j];
        return obj;
    };
    double obj = objective(beta);
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<double> grad(p, 0.0);
        Matrix hess(p, p);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = feats.row(i);
            const double pr = sigmoid(dot(row, beta));
            const double resid = pr - y[i];
            const double curv = std::max(pr * (1.0 - pr), 1e-12);
            for (std::size_t j = 0; j < p; ++j) {
                grad[j] += resid * row[j];
                for (std::size_t k = 0; k <= j; ++k) hess(j, k) += curv * row[j] * row[k];
            }
        }
        for (std::size_t j = 1; j < p; ++j) grad[j] += ridge * beta[j];
        for (std::size_t j = 1; j < p; ++j) hess(j, j) += ridge;
        hess(0, 0) += 1e-10;
        double gmax = 0.0;
        for (double v : grad) gmax = std::max(gmax, std::abs(v));
        if (gmax <= 1e-10) break;
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t k = j + 1; k < p; ++k) hess(j, k) = hess(k, j);
        std::vector<double> step = grad;
        if (!cholesky(hess)) throw FitError("fit_propensity: singular Newton system");
        cholesky_solve(hess, step);
        double t = 1.0;
        for (int half = 0; half < 60; ++half) {
            std::vector<double> cand = beta;
            for (std::size_t j = 0; j < p; ++j) cand[j] -= t * step[j];
            const double cand_obj = objective(cand);
            if (cand_obj <= obj + 1e-12 * (1.0 + std::abs(obj))) {
                beta = std::move(cand);
                obj = cand_obj;
                break;
            }
            t *= 0.5;
        }
    }
    return PropensityModel{std::move(beta), d, g, tau_floor};
}

// ---------------------------------------------------------------------------
// Decision models (kernel expansions)
// ---------------------------------------------------------------------------

/// A fitted scorer f(x, s) = sum_j dual_j K(z, z_j) + intercept over scaled
/// (x, one-hot(s)) features. Linear kernels cache the collapsed weight
/// vector so scoring is O(d).
struct DecisionModel {
    KernelSpec kernel;
    FeatureScaler scaler;
    std::vector<std::string> groups;
    std::vector<std::vector<double>> support_x;
    std::vector<int> support_s;
    std::vector<double> dual;
    double intercept = 0.0;

    std::vector<double> primal;  // linear kernel cache; rebuilt by finalize()

    std::size_t d() const { return scaler.mean.size(); }

    void finalize() {
        primal.clear();
        if (kernel.kind != KernelKind::linear || support_x.empty()) return;
        primal.assign(d() + groups.size(), 0.0);
        for (std::size_t j = 0; j < support_x.size(); ++j) {
            auto z = scaler.features(support_x[j], support_s[j], groups.size());
            for (std::size_t k = 0; k < z.size(); ++k) primal[k] += dual[j] * z[k];
        }
    }
};

inline double score(const DecisionModel& model, std::span<const double> x, int s) {
    if (x.size() != model.d()) throw std::invalid_argument("score: covariate dimension mismatch");
    detail::check_group_index(s, model.groups.size(), "score");
    const auto z = model.scaler.features(x, s, model.groups.size());
    if (model.kernel.kind == KernelKind::linear && !model.primal.empty())
        return dot(model.primal, z) + model.intercept;
    double acc = model.intercept;
    for (std::size_t j = 0; j < model.support_x.size(); ++j) {
        const auto zj = model.scaler.features(model.support_x[j], model.support_s[j],
                                              model.groups.size());
        acc += model.dual[j] * kernel_eval(model.kernel, z, zj);
    }
    return acc;
}

template <typename Dataset>
inline std::vector<double> score_all(const DecisionModel& model, const Dataset& data) {
    std::vector<double> out(data.n());
    if (model.kernel.kind == KernelKind::gaussian && !model.support_x.empty()) {
        // materialize support features once
        Matrix sup(model.support_x.size(), model.d() + model.groups.size());
        for (std::size_t j = 0; j < model.support_x.size(); ++j) {
            auto z = model.scaler.features(model.support_x[j], model.support_s[j],
                                           model.groups.size());
            std::copy(z.begin(), z.end(), sup.row(j).begin());
        }
        for (std::size_t i = 0; i < data.n(); ++i) {
            const auto z = model.scaler.features(data.x(i), data.s(i), model.groups.size());
            double acc = model.intercept;
            for (std::size_t j = 0; j < sup.rows(); ++j)
                acc += model.dual[j] * kernel_eval(model.kernel, z, sup.row(j));
            out[i] = acc;
        }
        return out;
    }
    for (std::size_t i = 0; i < data.n(); ++i) out[i] = score(model, data.x(i), data.s(i));
    return out;
}

// ---------------------------------------------------------------------------
// Weighted kernel ridge with an unpenalized intercept
// ---------------------------------------------------------------------------

namespace detail {

/// Minimize sum_i w_i (z_i - (Kc)_i - b)^2 + penalty * c'Kc over (c, b),
/// via the substitution c = sqrt(W) v which turns the stationarity system
/// into one SPD solve: (sqrt(W) K sqrt(W) + penalty I) v = sqrt(W)(z - b 1),
/// with b chosen so sqrt(W)1 . v = 0.
struct WkrrSolution {
    std::vector<double> dual;
    double intercept = 0.0;
};

inline WkrrSolution solve_wkrr(const Matrix& k, std::span<const double> z,
                               std::span<const double> w, double penalty,
                               bool fit_intercept = true) {
    const std::size_t n = k.rows();
    if (!(penalty > 0.0)) throw std::invalid_argument("solve_wkrr: penalty must be positive");
    std::vector<double> sw(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
            throw FitError("solve_wkrr: weights must be finite and nonnegative");
        sw[i] = std::sqrt(w[i]);
        any = any || w[i] > 0.0;
    }
    WkrrSolution out;
    out.dual.assign(n, 0.0);
    if (!any) return out;

    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = sw[i] * k(i, j) * sw[j];
            a(i, j) = v;
            a(j, i) = v;
        }
        a(i, i) += penalty;
    }
    if (!cholesky(a)) throw FitError("solve_wkrr: system not positive definite");

    std::vector<double> v1(n), v2(n);
    for (std::size_t i = 0; i < n; ++i) {
        v1[i] = sw[i] * z[i];
        v2[i] = sw[i];
    }
    cholesky_solve(a, v1);
    if (!fit_intercept) {
        for (std::size_t i = 0; i < n; ++i) out.dual[i] = sw[i] * v1[i];
        return out;
    }
    cholesky_solve(a, v2);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += sw[i] * v1[i];
        den += sw[i] * v2[i];
    }
    out.intercept = den > 0.0 ? num / den : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.dual[i] = sw[i] * (v1[i] - out.intercept * v2[i]);
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Q-learning
// ---------------------------------------------------------------------------

/// Kernel ridge regression of the reward within each arm; the returned scorer
/// is the fitted arm difference E[R|x,s,A=1] - E[R|x,s,A=-1], represented as
/// one expansion over the union of both arms' support points.
inline DecisionModel fit_qlearning(const LabeledDataset& train, KernelSpec kernel, double ridge) {
    kernel.validate();
    if (!(ridge > 0.0)) throw std::invalid_argument("fit_qlearning: ridge must be positive");
    const FeatureScaler scaler = FeatureScaler::fit(train);

    DecisionModel model;
    model.kernel = kernel;
    model.scaler = scaler;
    model.groups = train.groups();

    for (int arm : {1, -1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < train.n(); ++i)
            if (train.a(i) == arm) idx.push_back(i);
        if (idx.size() < 2)
            throw FitError("fit_qlearning: treatment arm " + std::to_string(arm) +
                           " has fewer than 2 rows");
        Matrix feats(idx.size(), train.d() + train.groups().size());
        std::vector<double> y(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto z = scaler.features(train.x(idx[r]), train.s(idx[r]), train.groups().size());
            std::copy(z.begin(), z.end(), feats.row(r).begin());
            y[r] = train.r(idx[r]);
        }
        const Matrix k = gram_matrix(kernel, feats);
        std::vector<double> ones(idx.size(), 1.0);
        auto sol = detail::solve_wkrr(k, y, ones, static_cast<double>(idx.size()) * ridge);
        const double sign = arm == 1 ? 1.0 : -1.0;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            model.support_x.emplace_back(train.x(idx[r]).begin(), train.x(idx[r]).end());
            model.support_s.push_back(train.s(idx[r]));
            model.dual.push_back(sign * sol.dual[r]);
        }
        model.intercept += sign * sol.intercept;
    }
    model.finalize();
    return model;
}

// ---------------------------------------------------------------------------
// Outcome-weighted learning with the binomial-deviance surrogate
// ---------------------------------------------------------------------------

/// Penalized OWL objective over the dual parametrization; exposed so the
/// optimum and the gradient can be checked independently.
struct OwlProblem {
    Matrix k;                 // gram matrix over training features
    std::vector<double> w;    // nonnegative IPW-shifted reward weights
    std::vector<double> y;    // (A+1)/2
    double lambda = 0.0;

    std::size_t n() const { return w.size(); }

    double value(std::span<const double> c, double b) const {
        const std::size_t m = n();
        double obj = 0.0;
        const std::vector<double> kc = matvec(k, c);
        for (std::size_t i = 0; i < m; ++i) {
            const double u = kc[i] + b;
            obj += w[i] * (std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))) - y[i] * u);
        }
        obj /= static_cast<double>(m);
        double quad = 0.0;
        for (std::size_t i = 0; i < m; ++i) quad += c[i] * kc[i];
        return obj + lambda * quad;
    }

    void gradient(std::span<const double> c, double b, std::vector<double>& gc, double& gb) const {
        const std::size_t m = n();
        const std::vector<double> kc = matvec(k, c);
        std::vector<double> e(m);
        gb = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double si = w[i] / static_cast<double>(m) * (sigmoid(kc[i] + b) - y[i]);
            e[i] = si + 2.0 * lambda * c[i];
            gb += si;
        }
        gc = matvec(k, e);
    }
};

inline OwlProblem make_owl_problem(const LabeledDataset& train, KernelSpec kernel, double ridge,
                                   const PropensityModel& prop) {
    kernel.validate();
    if (!(ridge > 0.0)) throw std::invalid_argument("fit_owl: ridge must be positive");
    const std::size_t n = train.n();
    if (n < 2) throw std::invalid_argument("fit_owl: need at least 2 rows");

    double rmin = std::numeric_limits<double>::infinity();
    double rmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        rmin = std::min(rmin, train.r(i));
        rmax = std::max(rmax, train.r(i));
    }
    const double offset = 0.01 * (rmax - rmin);

    OwlProblem prob;
    prob.lambda = ridge;
    prob.w.resize(n);
    prob.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double shifted = train.r(i) - rmin + offset;
        prob.w[i] = shifted / prop.prob_of(train.a(i), train.x(i), train.s(i));
        if (!std::isfinite(prob.w[i]) || prob.w[i] < 0.0)
            throw FitError("fit_owl: non-finite or negative weight at row " + std::to_string(i));
        prob.y[i] = train.a(i) == 1 ? 1.0 : 0.0;
    }
    const FeatureScaler scaler = FeatureScaler::fit(train);
    prob.k = gram_matrix(kernel, feature_matrix(scaler, train));
    return prob;
}

/// Weighted-deviance OWL: minimize (1/n) sum_i W_i h(A_i, f(X_i,S_i)) +
/// ridge ||f||^2 with W_i = shifted reward over propensity of the received
/// arm. Full-batch Newton (IRLS) with step halving, run to max-norm gradient
/// below 1e-9.
inline DecisionModel fit_owl(const LabeledDataset& train, KernelSpec kernel, double ridge,
                             const PropensityModel& prop) {
    OwlProblem prob = make_owl_problem(train, kernel, ridge, prop);
    const std::size_t n = prob.n();

    std::vector<double> c(n, 0.0);
    double b = 0.0;
    bool all_zero = true;
    for (double wi : prob.w) all_zero = all_zero && wi == 0.0;

    if (!all_zero) {
        double obj = prob.value(c, b);
        for (int iter = 0; iter < 100; ++iter) {
            const std::vector<double> kc = matvec(prob.k, c);
            std::vector<double> grad_c;
            double grad_b = 0.0;
            prob.gradient(c, b, grad_c, grad_b);
            double gmax = std::abs(grad_b);
            for (double v : grad_c) gmax = std::max(gmax, std::abs(v));
            if (gmax <= 1e-9) break;

            std::vector<double> curv(n), z(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double u = kc[i] + b;
                const double p = sigmoid(u);
                const double si = prob.w[i] / static_cast<double>(n) * (p - prob.y[i]);
                curv[i] = std::max(prob.w[i] / static_cast<double>(n) * p * (1.0 - p), 1e-14);
                z[i] = u - si / curv[i];
            }
            auto sol = detail::solve_wkrr(prob.k, z, curv, 2.0 * prob.lambda);
            double t = 1.0;
            for (int half = 0; half < 60; ++half) {
                std::vector<double> cand(n);
                for (std::size_t i = 0; i < n; ++i) cand[i] = c[i] + t * (sol.dual[i] - c[i]);
                const double cand_b = b + t * (sol.intercept - b);
                const double cand_obj = prob.value(cand, cand_b);
                if (cand_obj <= obj + 1e-12 * (1.0 + std::abs(obj))) {
                    c = std::move(cand);
                    b = cand_b;
                    obj = cand_obj;
                    break;
                }
                t *= 0.5;
            }
        }
    }

    DecisionModel model;
    model.kernel = kernel;
    model.scaler = FeatureScaler::fit(train);
    model.groups = train.groups();
    model.support_x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        model.support_x.emplace_back(train.x(i).begin(), train.x(i).end());
        model.support_s.push_back(train.s(i));
    }
    model.dual = std::move(c);
    model.intercept = all_zero ? 0.0 : b;
    model.finalize();
    return model;
}

} // namespace fairitr
