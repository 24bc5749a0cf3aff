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
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairitr {

/// Dense row-major matrix; just enough for the kernel solves in this library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline std::vector<double> matvec(const Matrix& m, std::span<const double> v) {
    if (v.size() != m.cols()) throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) acc += r[j] * v[j];
        out[i] = acc;
    }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// In-place Cholesky factorization of a symmetric positive-definite matrix
/// (lower triangle). Returns false when a pivot degenerates.
inline bool cholesky(Matrix& a) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) return false;
        const double root = std::sqrt(diag);
        a(j, j) = root;
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = a(i, j);
            const auto ri = a.row(i);
            const auto rj = a.row(j);
            for (std::size_t k = 0; k < j; ++k) acc -= ri[k] * rj[k];
            a(i, j) = acc / root;
        }
    }
    return true;
}

/// Solve L L^T x = b given the factor from cholesky(); b is overwritten.
inline void cholesky_solve(const Matrix& l, std::span<double> b) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = b[i];
        const auto ri = l.row(i);
        for (std::size_t k = 0; k < i; ++k) acc -= ri[k] * b[k];
        b[i] = acc / ri[i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= l(k, i) * b[k];
        b[i] = acc / l(i, i);
    }
}

} // namespace fairitr
