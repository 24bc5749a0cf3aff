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
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairitr {

/// sgn(u) = 2 I(u > 0) - 1; ties go to -1.
inline int sgn(double u) { return u > 0.0 ? 1 : -1; }

struct DiResult {
    double value = 1.0;
    bool degenerate = false;  // every group had a zero positive rate
};

/// Disparate impact: min over ordered group pairs of the positive-rate ratio
/// P(score > 0 | s) / P(score > 0 | s'). All-zero rates are reported as 1
/// with the degenerate flag instead of 0/0.
inline DiResult estimate_di(std::span<const double> scores, std::span<const int> groups,
                            std::size_t n_groups) {
    if (scores.size() != groups.size() || scores.empty())
        throw std::invalid_argument("estimate_di: bad inputs");
    std::vector<double> pos(n_groups, 0.0), count(n_groups, 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto s = static_cast<std::size_t>(groups[i]);
        if (s >= n_groups) throw std::domain_error("estimate_di: group index out of range");
        count[s] += 1.0;
        if (scores[i] > 0.0) pos[s] += 1.0;
    }
    std::vector<double> rate(n_groups);
    for (std::size_t s = 0; s < n_groups; ++s) {
        if (count[s] == 0.0) throw std::domain_error("estimate_di: empty group " + std::to_string(s));
        rate[s] = pos[s] / count[s];
    }
    const bool all_zero = std::all_of(rate.begin(), rate.end(), [](double r) { return r == 0.0; });
    if (all_zero) return {1.0, true};
    double di = 1.0;
    for (std::size_t s = 0; s < n_groups; ++s)
        for (std::size_t sp = 0; sp < n_groups; ++sp) {
            if (s == sp) continue;
            if (rate[sp] == 0.0) continue;  // the reversed pair contributes the 0
            di = std::min(di, rate[s] / rate[sp]);
        }
    return {di, false};
}

/// Per-group positive-decision rates, for reporting.
inline std::vector<double> positive_rates(std::span<const double> scores,
                                          std::span<const int> groups, std::size_t n_groups) {
    std::vector<double> pos(n_groups, 0.0), count(n_groups, 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        count[static_cast<std::size_t>(groups[i])] += 1.0;
        if (scores[i] > 0.0) pos[static_cast<std::size_t>(groups[i])] += 1.0;
    }
    std::vector<double> rate(n_groups, 0.0);
    for (std::size_t s = 0; s < n_groups; ++s) rate[s] = count[s] > 0.0 ? pos[s] / count[s] : 0.0;
    return rate;
}

/// Inverse-propensity-weighted value estimate:
/// (1/n) sum_i r_i I(a_i = sgn(score_i)) / (a_i pihat_i + (1 - a_i)/2).
/// The denominator equals the estimated probability of the received arm.
inline double estimate_value(std::span<const double> scores, std::span<const int> a,
                             std::span<const double> r, std::span<const double> pihat) {
    const std::size_t n = scores.size();
    if (a.size() != n || r.size() != n || pihat.size() != n || n == 0)
        throw std::invalid_argument("estimate_value: bad inputs");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(pihat[i] > 0.0 && pihat[i] < 1.0))
            throw std::domain_error("estimate_value: propensity outside (0,1)");
        if (a[i] != sgn(scores[i])) continue;
        acc += r[i] / (a[i] * pihat[i] + (1.0 - a[i]) / 2.0);
    }
    return acc / static_cast<double>(n);
}

/// Largest two-sample Kolmogorov-Smirnov statistic over group pairs.
inline double ks_disparity(std::span<const double> scores, std::span<const int> groups,
                           std::size_t n_groups) {
    if (scores.size() != groups.size() || scores.empty())
        throw std::invalid_argument("ks_disparity: bad inputs");
    std::vector<std::vector<double>> per_group(n_groups);
    for (std::size_t i = 0; i < scores.size(); ++i)
        per_group[static_cast<std::size_t>(groups[i])].push_back(scores[i]);
    for (std::size_t s = 0; s < n_groups; ++s) {
        if (per_group[s].empty())
            throw std::domain_error("ks_disparity: empty group " + std::to_string(s));
        std::sort(per_group[s].begin(), per_group[s].end());
    }
    double worst = 0.0;
    for (std::size_t s = 0; s < n_groups; ++s)
        for (std::size_t sp = s + 1; sp < n_groups; ++sp) {
            const auto& u = per_group[s];
            const auto& v = per_group[sp];
            std::size_t iu = 0, iv = 0;
            double ks = 0.0;
            while (iu < u.size() && iv < v.size()) {
                const double t = std::min(u[iu], v[iv]);
                while (iu < u.size() && u[iu] <= t) ++iu;
                while (iv < v.size() && v[iv] <= t) ++iv;
                ks = std::max(ks, std::abs(static_cast<double>(iu) / static_cast<double>(u.size()) -
                                           static_cast<double>(iv) / static_cast<double>(v.size())));
            }
            worst = std::max(worst, ks);
        }
    return worst;
}

/// Simulation-only diagnostic: mean |tau*| over the rows where the policy
/// score disagrees in sign with the true optimal score (f* score <= 0 region).
inline double oracle_value_loss(std::span<const double> scores, std::span<const double> fstar,
                                std::span<const double> taustar) {
    const std::size_t n = scores.size();
    if (fstar.size() != n || taustar.size() != n || n == 0)
        throw std::invalid_argument("oracle_value_loss: bad inputs");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (fstar[i] * scores[i] <= 0.0) acc += std::abs(taustar[i]);
    return acc / static_cast<double>(n);
}

/// Spearman rank correlation with average ranks for ties; used for the
/// monotone-trend diagnostics on the alpha curves.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (y.size() != n || n < 2) throw std::invalid_argument("spearman: bad inputs");
    auto ranks = [](std::span<const double> v) {
        const std::size_t m = v.size();
        std::vector<std::size_t> ord(m);
        std::iota(ord.begin(), ord.end(), std::size_t{0});
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(m, 0.0);
        std::size_t i = 0;
        while (i < m) {
            std::size_t j = i;
            while (j + 1 < m && v[ord[j + 1]] == v[ord[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[ord[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Fairness/value audit summary for one policy on one dataset.
struct FairnessReport {
    std::string policy;
    double di = 1.0;
    bool di_degenerate = false;
    double value = 0.0;
    double ks = 0.0;
    std::map<std::string, double> positive_rate;
    std::map<std::string, std::size_t> group_n;
};

} // namespace fairitr
