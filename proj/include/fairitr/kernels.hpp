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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairitr/dataset.hpp"
#include "fairitr/linalg.hpp"

namespace fairitr {

enum class KernelKind { linear, gaussian };

struct KernelSpec {
    KernelKind kind = KernelKind::linear;
    double bandwidth = 1.0;  // gaussian only; must be > 0

    void validate() const {
        if (kind == KernelKind::gaussian && !(bandwidth > 0.0))
            throw std::invalid_argument("KernelSpec: bandwidth must be positive");
    }
};

inline std::string to_string(KernelKind k) { return k == KernelKind::linear ? "linear" : "gaussian"; }

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "linear") return KernelKind::linear;
    if (s == "gaussian") return KernelKind::gaussian;
    throw std::invalid_argument("unknown kernel kind '" + s + "'");
}

/// Per-coordinate standardization of the covariates, fit on training data.
/// The group one-hot block is appended unscaled after the covariates.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> scale;  // 1/sd, with sd floored to keep constants finite

    static FeatureScaler fit(const LabeledDataset& data) {
        const std::size_t d = data.d(), n = data.n();
        FeatureScaler sc;
        sc.mean.assign(d, 0.0);
        sc.scale.assign(d, 1.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) sc.mean[j] += data.x(i)[j];
        for (std::size_t j = 0; j < d; ++j) sc.mean[j] /= static_cast<double>(n);
        std::vector<double> var(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = data.x(i)[j] - sc.mean[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(n));
            sc.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
        return sc;
    }

    /// Scaled covariates followed by the group one-hot block.
    std::vector<double> features(std::span<const double> x, int s, std::size_t n_groups) const {
        if (x.size() != mean.size())
            throw std::invalid_argument("FeatureScaler: covariate dimension mismatch");
        std::vector<double> z(mean.size() + n_groups, 0.0);
        for (std::size_t j = 0; j < mean.size(); ++j) z[j] = (x[j] - mean[j]) * scale[j];
        z[mean.size() + static_cast<std::size_t>(s)] = 1.0;
        return z;
    }
};

inline double kernel_eval(const KernelSpec& spec, std::span<const double> a,
                          std::span<const double> b) {
    if (spec.kind == KernelKind::linear) return dot(a, b);
    double sq = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double dif = a[j] - b[j];
        sq += dif * dif;
    }
    return std::exp(-sq / (2.0 * spec.bandwidth * spec.bandwidth));
}

inline Matrix gram_matrix(const KernelSpec& spec, const Matrix& feats) {
    const std::size_t n = feats.rows();
    Matrix k(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = kernel_eval(spec, feats.row(i), feats.row(j));
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

inline Matrix feature_matrix(const FeatureScaler& sc, const LabeledDataset& data) {
    Matrix feats(data.n(), data.d() + data.groups().size());
    for (std::size_t i = 0; i < data.n(); ++i) {
        auto z = sc.features(data.x(i), data.s(i), data.groups().size());
        std::copy(z.begin(), z.end(), feats.row(i).begin());
    }
    return feats;
}

/// Median pairwise distance over scaled features; the usual default for a
/// gaussian bandwidth. Caps the pair count at ~2e5 by deterministic striding.
inline double median_bandwidth(const LabeledDataset& data) {
    const FeatureScaler sc = FeatureScaler::fit(data);
    const Matrix feats = feature_matrix(sc, data);
    const std::size_t n = feats.rows();
    if (n < 2) return 1.0;
    const std::size_t total = n * (n - 1) / 2;
    const std::size_t stride = std::max<std::size_t>(1, total / 200000);
    std::vector<double> dists;
    dists.reserve(total / stride + 1);
    std::size_t counter = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (counter++ % stride != 0) continue;
            double sq = 0.0;
            auto ri = feats.row(i), rj = feats.row(j);
            for (std::size_t k = 0; k < feats.cols(); ++k) {
                const double dif = ri[k] - rj[k];
                sq += dif * dif;
            }
            dists.push_back(std::sqrt(sq));
        }
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    return med > 1e-12 ? med : 1.0;
}

} // namespace fairitr
