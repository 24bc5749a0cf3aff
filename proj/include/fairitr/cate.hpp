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

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairitr/dataset.hpp"
#include "fairitr/nuisance.hpp"

namespace fairitr {

/// Cross-fitted R-learner estimate of the conditional average treatment
/// effect tau(x, s) = E[R(1) - R(-1) | x, s]. The effect head is a kernel
/// ridge expansion fitted on pseudo-residuals.
struct CateModel {
    DecisionModel tau_head;
    std::vector<int> fold_of;  // cross-fitting fold per training row
};

inline double cate_tau(const CateModel& model, std::span<const double> x, int s) {
    return score(model.tau_head, x, s);
}

/// Self-adjusted trade-off weight w(x, s; alpha) = 1 - exp(-alpha |tau(x,s)|).
/// Nondecreasing in alpha and in |tau|, and kept strictly below 1 even where
/// the exponential underflows, so the fair score always retains some share.
inline double weight_from_tau(double tau, double alpha) {
    if (alpha < 0.0) throw std::domain_error("weight: alpha must be nonnegative");
    const double w = -std::expm1(-alpha * std::abs(tau));
    return std::min(w, 0x1.fffffffffffffp-1);
}

inline double weight(const CateModel& model, std::span<const double> x, int s, double alpha) {
    return weight_from_tau(cate_tau(model, x, s), alpha);
}

/// The R-learner head objective after nuisance cross-fitting:
/// (1/n) sum_i (yres_i - t_i f(x_i))^2 + lambda ||f||^2 with
/// yres = R - mhat and t = W - ehat, W = (A+1)/2.
struct RlearnerProblem {
    Matrix k;
    std::vector<double> yres;
    std::vector<double> t;
    double lambda = 0.0;

    std::size_t n() const { return t.size(); }

    double value(std::span<const double> c, double b) const {
        const std::size_t m = n();
        const std::vector<double> kc = matvec(k, c);
        double obj = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double resid = yres[i] - t[i] * (kc[i] + b);
            obj += resid * resid;
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
            const double ei = -2.0 / static_cast<double>(m) * t[i] * (yres[i] - t[i] * (kc[i] + b));
            e[i] = ei + 2.0 * lambda * c[i];
            gb += ei;
        }
        gc = matvec(k, e);
    }
};

namespace detail {

inline constexpr std::uint64_t stream_rlearner_folds = 0x524C464CULL;

// Stratified-by-arm fold assignment; deterministic for a given dataset shape.
inline std::vector<int> assign_folds(const LabeledDataset& train, int folds) {
    std::vector<int> fold_of(train.n(), -1);
    Rng rng = Rng(RngSeed{0x52464F4C44535446ULL}).substream(stream_rlearner_folds);
    for (int arm : {1, -1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < train.n(); ++i)
            if (train.a(i) == arm) idx.push_back(i);
        Rng arm_rng = rng.substream(arm == 1 ? 1 : 2);
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(arm_rng.uniform() * static_cast<double>(i));
            if (j >= i) j = i - 1;
            std::swap(idx[i - 1], idx[j]);
        }
        for (std::size_t r = 0; r < idx.size(); ++r)
            fold_of[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
    }
    return fold_of;
}

inline LabeledDataset rows_subset(const LabeledDataset& data, const std::vector<std::size_t>& idx) {
    LabeledDataset out(data.d(), data.groups());
    for (std::size_t i : idx)
        out.add_row(std::vector<double>(data.x(i).begin(), data.x(i).end()), data.s(i), data.a(i),
                    data.r(i));
    return out;
}

} // namespace detail

/// Assemble the cross-fitted pseudo-residual problem. Fold k's residuals use
/// the outcome regression and propensity trained on the other folds; the
/// propensity clip keeps |t_i| bounded away from zero.
inline std::pair<RlearnerProblem, std::vector<int>> make_rlearner_problem(
    const LabeledDataset& train, KernelSpec kernel, double ridge, int folds) {
    kernel.validate();
    if (folds < 2) throw std::invalid_argument("fit_rlearner: folds must be >= 2");
    if (!(ridge > 0.0)) throw std::invalid_argument("fit_rlearner: ridge must be positive");
    const std::size_t n = train.n();
    const std::vector<int> fold_of = detail::assign_folds(train, folds);

    RlearnerProblem prob;
    prob.lambda = ridge;
    prob.yres.assign(n, 0.0);
    prob.t.assign(n, 0.0);

    for (int k = 0; k < folds; ++k) {
        std::vector<std::size_t> in_fold, out_fold;
        for (std::size_t i = 0; i < n; ++i)
            (fold_of[i] == k ? in_fold : out_fold).push_back(i);
        if (in_fold.empty()) continue;
        bool pos = false, neg = false;
        for (std::size_t i : in_fold) (train.a(i) == 1 ? pos : neg) = true;
        if (!pos || !neg)
            throw FitError("fit_rlearner: fold " + std::to_string(k) + " has a single arm");

        const LabeledDataset sub = detail::rows_subset(train, out_fold);
        const PropensityModel ehat = fit_propensity(sub, 1e-3, 0.05);

        // outcome regression mhat on the complement
        Matrix feats(sub.n(), sub.d() + sub.groups().size());
        const FeatureScaler sc = FeatureScaler::fit(sub);
        std::vector<double> y(sub.n());
        for (std::size_t r = 0; r < sub.n(); ++r) {
            auto z = sc.features(sub.x(r), sub.s(r), sub.groups().size());
            std::copy(z.begin(), z.end(), feats.row(r).begin());
            y[r] = sub.r(r);
        }
        const Matrix gram = gram_matrix(kernel, feats);
        std::vector<double> ones(sub.n(), 1.0);
        auto msol = detail::solve_wkrr(gram, y, ones, static_cast<double>(sub.n()) * ridge);

        for (std::size_t i : in_fold) {
            const auto z = sc.features(train.x(i), train.s(i), train.groups().size());
            double mhat = msol.intercept;
            for (std::size_t r = 0; r < sub.n(); ++r)
                mhat += msol.dual[r] * kernel_eval(kernel, z, feats.row(r));
            const double w01 = train.a(i) == 1 ? 1.0 : 0.0;
            prob.yres[i] = train.r(i) - mhat;
            prob.t[i] = w01 - ehat.prob_treat(train.x(i), train.s(i));
        }
    }

    const FeatureScaler head_sc = FeatureScaler::fit(train);
    prob.k = gram_matrix(kernel, feature_matrix(head_sc, train));
    return {std::move(prob), fold_of};
}

/// Two-stage R-learner: cross-fitted nuisances, then a kernel ridge fit of
/// the treatment-effect head on the pseudo-residuals.
inline CateModel fit_rlearner(const LabeledDataset& train, KernelSpec kernel, double ridge,
                              int folds) {
    auto [prob, fold_of] = make_rlearner_problem(train, kernel, ridge, folds);
    const std::size_t n = prob.n();

    // (yres - t u)^2 = t^2 (yres/t - u)^2, and |t| > 0 by the propensity clip.
    // The head is a pure penalized expansion: no free intercept, so the ridge
    // controls the whole scale of tau_hat (group offsets live in the one-hot
    // coordinates and are shrunk like every other direction).
    std::vector<double> wts(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        wts[i] = prob.t[i] * prob.t[i];
        z[i] = prob.yres[i] / prob.t[i];
    }
    auto sol =
        detail::solve_wkrr(prob.k, z, wts, static_cast<double>(n) * prob.lambda, false);

    CateModel model;
    model.fold_of = std::move(fold_of);
    model.tau_head.kernel = kernel;
    model.tau_head.scaler = FeatureScaler::fit(train);
    model.tau_head.groups = train.groups();
    for (std::size_t i = 0; i < n; ++i) {
        model.tau_head.support_x.emplace_back(train.x(i).begin(), train.x(i).end());
        model.tau_head.support_s.push_back(train.s(i));
    }
    model.tau_head.dual = std::move(sol.dual);
    model.tau_head.intercept = sol.intercept;
    model.tau_head.finalize();
    return model;
}

} // namespace fairitr
