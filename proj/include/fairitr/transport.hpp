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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairitr/cate.hpp"
#include "fairitr/dataset.hpp"
#include "fairitr/nuisance.hpp"
#include "fairitr/rng.hpp"

namespace fairitr {

struct BuildError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-group sorted jittered score samples with empirical frequencies; the
/// substrate for the one-dimensional barycenter transport. The group CDF is
/// the strict-< empirical CDF of the stored values, and the quantile function
/// is its generalized inverse inf{y : F(y) >= u}.
struct GroupDistributions {
    std::vector<std::string> groups;
    std::vector<std::vector<double>> values;  // sorted ascending per group
    std::vector<double> freq;                 // N_s / N, from integer counts
    double sigma = 0.0;
    std::uint64_t jitter_seed = 0;

    std::size_t n_groups() const { return groups.size(); }
    std::size_t total() const {
        std::size_t t = 0;
        for (const auto& v : values) t += v.size();
        return t;
    }
};

namespace detail {

inline constexpr std::uint64_t stream_build_jitter = 0x4A495454ULL;
inline constexpr std::uint64_t stream_eval_jitter = 0x45564A54ULL;

inline void check_dist_group(const GroupDistributions& d, int s) {
    if (s < 0 || static_cast<std::size_t>(s) >= d.n_groups())
        throw std::domain_error("transport: unknown group index " + std::to_string(s));
}

} // namespace detail

/// Score every target row with the base model, add one Uniform(-sigma, sigma)
/// jitter per row (its own substream, so the draw is independent of N), and
/// collect the per-group sorted samples and frequencies.
inline GroupDistributions build_group_distributions(const DecisionModel& base,
                                                    const TargetDataset& target, double sigma,
                                                    RngSeed seed) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("build_group_distributions: sigma < 0");
    GroupDistributions dists;
    dists.groups = target.groups();
    dists.sigma = sigma;
    dists.jitter_seed = seed.value;
    dists.values.resize(target.groups().size());

    const std::vector<double> raw = score_all(base, target);
    Rng rng = Rng(seed).substream(detail::stream_build_jitter);
    for (std::size_t i = 0; i < target.n(); ++i) {
        const double eps =
            sigma > 0.0 ? rng.substream(static_cast<std::uint64_t>(i)).uniform(-sigma, sigma) : 0.0;
        dists.values[static_cast<std::size_t>(target.s(i))].push_back(raw[i] + eps);
    }
    for (std::size_t s = 0; s < dists.values.size(); ++s) {
        if (dists.values[s].empty())
            throw BuildError("build_group_distributions: group '" + dists.groups[s] +
                             "' has no rows");
        std::sort(dists.values[s].begin(), dists.values[s].end());
    }
    const double total = static_cast<double>(target.n());
    dists.freq.resize(dists.values.size());
    for (std::size_t s = 0; s < dists.values.size(); ++s)
        dists.freq[s] = static_cast<double>(dists.values[s].size()) / total;
    return dists;
}

/// Strict-< empirical CDF: (1/N_s) #{ i : v_i < t }.
inline double ecdf(const GroupDistributions& dists, int s, double t) {
    detail::check_dist_group(dists, s);
    const auto& v = dists.values[static_cast<std::size_t>(s)];
    const auto below = std::lower_bound(v.begin(), v.end(), t) - v.begin();
    return static_cast<double>(below) / static_cast<double>(v.size());
}

/// Empirical quantile inf{y : F(y) >= u}. Under the strict-< CDF this is the
/// order statistic v_(ceil(u N)) with v_(0) := v_(1).
inline double quantile(const GroupDistributions& dists, int s, double u) {
    detail::check_dist_group(dists, s);
    if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("quantile: u outside [0,1]");
    const auto& v = dists.values[static_cast<std::size_t>(s)];
    const double n = static_cast<double>(v.size());
    auto idx = static_cast<std::ptrdiff_t>(std::ceil(u * n));
    if (idx < 1) idx = 1;
    if (idx > static_cast<std::ptrdiff_t>(v.size())) idx = static_cast<std::ptrdiff_t>(v.size());
    return v[static_cast<std::size_t>(idx - 1)];
}

/// Barycenter transform of one raw score: average over m evaluation jitters
/// of (sum_s' p_s' Q_s') applied at F_s(raw + eps). The jitters come from the
/// caller-provided stream so audits replay exactly.
inline double fair_from_value(const GroupDistributions& dists, int s, double raw, int m,
                              Rng jitter_rng) {
    detail::check_dist_group(dists, s);
    if (m < 1) throw std::invalid_argument("fair_from_value: m must be >= 1");
    double acc = 0.0;
    for (int l = 0; l < m; ++l) {
        const double eps = dists.sigma > 0.0 ? jitter_rng.uniform(-dists.sigma, dists.sigma) : 0.0;
        double u = ecdf(dists, s, raw + eps);
        u = std::clamp(u, 0.0, 1.0);
        double bary = 0.0;
        for (std::size_t sp = 0; sp < dists.n_groups(); ++sp)
            bary += dists.freq[sp] * quantile(dists, static_cast<int>(sp), u);
        acc += bary;
    }
    return acc / static_cast<double>(m);
}

/// The composite policy: base scorer f, its transported fair version g, and
/// the alpha-level blend g_alpha = w f + (1-w) g with w = 1 - exp(-alpha|tau|).
/// The CATE model may be omitted while alpha stays 0 (the pure fair policy).
struct TradeoffPolicy {
    DecisionModel base;
    GroupDistributions dists;
    std::optional<CateModel> cate;
    double alpha = 0.0;
    int m = 20;
    std::uint64_t eval_seed = 0;

    void validate() const {
        if (alpha < 0.0) throw std::invalid_argument("TradeoffPolicy: alpha must be >= 0");
        if (m < 1) throw std::invalid_argument("TradeoffPolicy: m must be >= 1");
        if (alpha > 0.0 && !cate)
            throw std::invalid_argument("TradeoffPolicy: alpha > 0 requires a CATE model");
    }
};

inline Rng eval_jitter_stream(const TradeoffPolicy& policy, std::span<const double> x, int s) {
    return Rng(RngSeed{policy.eval_seed})
        .substream(detail::stream_eval_jitter)
        .substream(point_key(x, s));
}

/// Fair decision score g(x, s): deterministic given the policy, since the
/// evaluation jitters are keyed by (eval seed, x, s).
inline double fair_score(const TradeoffPolicy& policy, std::span<const double> x, int s) {
    policy.validate();
    const double raw = score(policy.base, x, s);
    return fair_from_value(policy.dists, s, raw, policy.m, eval_jitter_stream(policy, x, s));
}

/// Alpha-level trade-off score g_alpha(x, s).
inline double tradeoff_score(const TradeoffPolicy& policy, std::span<const double> x, int s) {
    policy.validate();
    const double raw = score(policy.base, x, s);
    const double fair =
        fair_from_value(policy.dists, s, raw, policy.m, eval_jitter_stream(policy, x, s));
    if (policy.alpha == 0.0) return fair;
    const double w = weight(*policy.cate, x, s, policy.alpha);
    return w * raw + (1.0 - w) * fair;
}

/// Wasserstein-2 distance between two empirical distributions given as sorted
/// samples: the exact integral of the squared quantile difference over the
/// common refinement of both quantile grids. For equal lengths this reduces
/// to sqrt(mean of squared differences of paired order statistics).
inline double wasserstein2_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::domain_error("wasserstein2_1d: empty sample");
    if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end()))
        throw std::domain_error("wasserstein2_1d: inputs must be sorted");
    const std::size_t na = a.size(), nb = b.size();
    std::size_t ia = 0, ib = 0;
    double u_prev = 0.0, acc = 0.0;
    while (ia < na && ib < nb) {
        const double next_a = static_cast<double>(ia + 1) / static_cast<double>(na);
        const double next_b = static_cast<double>(ib + 1) / static_cast<double>(nb);
        const double u_next = std::min(next_a, next_b);
        const double dif = a[ia] - b[ib];
        acc += (u_next - u_prev) * dif * dif;
        if (next_a <= u_next) ++ia;
        if (next_b <= u_next) ++ib;
        u_prev = u_next;
    }
    return std::sqrt(std::max(acc, 0.0));
}

} // namespace fairitr
