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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include "fairitr/rng.hpp"

namespace fairitr {

/// Raised by CSV ingestion with the offending row/column in the message.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One observation. Treatment is -1/+1 when present; reward is "larger is
/// better". Group labels are opaque strings; datasets map them to dense
/// indices.
struct SampleRow {
    std::vector<double> x;
    std::string group;
    std::optional<int> treatment;
    std::optional<double> reward;
};

namespace detail {

inline void check_group_index(int s, std::size_t n_groups, const char* what) {
    if (s < 0 || static_cast<std::size_t>(s) >= n_groups)
        throw std::invalid_argument(std::string(what) + ": unknown group index " +
                                    std::to_string(s));
}

} // namespace detail

/// Training/evaluation data: covariates, group index, treatment in {-1,+1},
/// reward. Immutable after construction; all rows have the declared dimension.
class LabeledDataset {
public:
    LabeledDataset(std::size_t d, std::vector<std::string> groups) : d_(d), groups_(std::move(groups)) {}

    void add_row(std::vector<double> x, int s, int a, double r) {
        if (x.size() != d_) throw std::invalid_argument("LabeledDataset: covariate dimension mismatch");
        detail::check_group_index(s, groups_.size(), "LabeledDataset");
        if (a != -1 && a != 1) throw std::invalid_argument("LabeledDataset: treatment must be -1 or +1");
        x_.push_back(std::move(x));
        s_.push_back(s);
        a_.push_back(a);
        r_.push_back(r);
    }

    std::size_t n() const { return x_.size(); }
    std::size_t d() const { return d_; }
    const std::vector<std::string>& groups() const { return groups_; }
    int group_index(const std::string& label) const {
        auto it = std::find(groups_.begin(), groups_.end(), label);
        return it == groups_.end() ? -1 : static_cast<int>(it - groups_.begin());
    }

    std::span<const double> x(std::size_t i) const { return x_[i]; }
    int s(std::size_t i) const { return s_[i]; }
    int a(std::size_t i) const { return a_[i]; }
    double r(std::size_t i) const { return r_[i]; }

    const std::vector<int>& treatments() const { return a_; }
    const std::vector<int>& group_ids() const { return s_; }
    const std::vector<double>& rewards() const { return r_; }

    SampleRow row(std::size_t i) const { return {x_[i], groups_[s_[i]], a_[i], r_[i]}; }

private:
    std::size_t d_;
    std::vector<std::string> groups_;
    std::vector<std::vector<double>> x_;
    std::vector<int> s_;
    std::vector<int> a_;
    std::vector<double> r_;
};

/// Deployment-side data: covariates and group only.
class TargetDataset {
public:
    TargetDataset(std::size_t d, std::vector<std::string> groups) : d_(d), groups_(std::move(groups)) {}

    void add_row(std::vector<double> x, int s) {
        if (x.size() != d_) throw std::invalid_argument("TargetDataset: covariate dimension mismatch");
        detail::check_group_index(s, groups_.size(), "TargetDataset");
        x_.push_back(std::move(x));
        s_.push_back(s);
    }

    std::size_t n() const { return x_.size(); }
    std::size_t d() const { return d_; }
    const std::vector<std::string>& groups() const { return groups_; }
    std::span<const double> x(std::size_t i) const { return x_[i]; }
    int s(std::size_t i) const { return s_[i]; }
    const std::vector<int>& group_ids() const { return s_; }

private:
    std::size_t d_;
    std::vector<std::string> groups_;
    std::vector<std::vector<double>> x_;
    std::vector<int> s_;
};

/// Covariate-only view of a labeled dataset (test sets double as the
/// transport target set).
inline TargetDataset to_target(const LabeledDataset& data) {
    TargetDataset out(data.d(), data.groups());
    for (std::size_t i = 0; i < data.n(); ++i)
        out.add_row(std::vector<double>(data.x(i).begin(), data.x(i).end()), data.s(i));
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Mean reward surface for the four experiment scenarios (20 covariates,
/// group s in {0,1}, treatment a in {-1,+1}).
inline double experiment_r0(int id, std::span<const double> x, int s, int a) {
    const double ind_a1 = a == 1 ? 1.0 : 0.0;
    const double ind_am1 = a == -1 ? 1.0 : 0.0;
    switch (id) {
    case 1:
        return 10.0 + x[0] + x[1] + 0.25 * x[2] +
               (x[0] + x[1] - 10.0 * (1.0 - s) * ind_a1) * a;
    case 2:
        return 10.0 + (0.1 * x[0] * x[0] - x[1] - 10.0 * (1.0 - s) * ind_a1) * a;
    case 3:
        return 0.1 * (-3.0 - 5.0 * x[0] - x[1] * x[1]) *
                   (5.0 * x[0] + x[1] * x[1] - 20.0 - 10.0 * s * ind_am1) * a +
               10.0;
    case 4:
        return (-0.5 * x[0] * x[0] * x[0] + std::log(x[1] * x[1] + 1.0) + 2.0 * x[2] -
                0.5 * (x[3] + x[4]) * (x[3] + x[4]) - 5.0) * a +
               (10.0 * s * ind_a1) * a + 20.0;
    default:
        throw std::domain_error("experiment_r0: id must be in 1..4");
    }
}

/// True conditional average treatment effect for an experiment scenario.
inline double experiment_tau(int id, std::span<const double> x, int s) {
    return experiment_r0(id, x, s, 1) - experiment_r0(id, x, s, -1);
}

/// Mean reward surface of the admission example (3 covariates).
inline double motivating_r0(std::span<const double> x, int s, int a) {
    const double ind_a1 = a == 1 ? 1.0 : 0.0;
    return 10.0 + x[2] * x[2] + (x[0] + x[1] - 10.0 * (1.0 - s) * ind_a1) * a;
}

inline double motivating_tau(std::span<const double> x, int s) {
    return motivating_r0(x, s, 1) - motivating_r0(x, s, -1);
}

namespace detail {

// Row i draws, in order: x_1..x_d, treatment, group, reward noise -- each row
// from its own substream so draws are independent of n.
inline constexpr std::uint64_t stream_experiment = 0x45585031ULL;  // "EXP1" area
inline constexpr std::uint64_t stream_motivating = 0x4D4F5456ULL;
inline constexpr std::uint64_t stream_lookalike = 0x4C4F4F4BULL;
inline constexpr std::uint64_t stream_split = 0x53504C54ULL;

} // namespace detail

/// Draw one of the four simulation scenarios: 20 i.i.d. Uniform(-5,5)
/// covariates, randomized treatment, group ~ Bernoulli(p(X1)/(p(X1)+p(X2)))
/// with p the logistic function, reward = experiment_r0 + N(0,1) noise.
inline LabeledDataset generate_experiment(int id, int n, RngSeed seed) {
    if (id < 1 || id > 4) throw std::domain_error("generate_experiment: id must be in 1..4");
    if (n < 1) throw std::invalid_argument("generate_experiment: n must be positive");
    const std::size_t d = 20;
    LabeledDataset data(d, {"0", "1"});
    Rng base = Rng(seed).substream(detail::stream_experiment).substream(static_cast<std::uint64_t>(id));
    for (int i = 0; i < n; ++i) {
        Rng row = base.substream(static_cast<std::uint64_t>(i));
        std::vector<double> x(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = row.uniform(-5.0, 5.0);
        const int a = row.bernoulli(0.5) ? 1 : -1;
        const double p0 = sigmoid(x[0]) / (sigmoid(x[0]) + sigmoid(x[1]));
        const int s = row.bernoulli(p0) ? 1 : 0;
        const double r = experiment_r0(id, x, s, a) + row.normal();
        data.add_row(std::move(x), s, a, r);
    }
    return data;
}

/// Admission example: 3 Uniform(-5,5) covariates, treatment and group both
/// Bernoulli(0.5), reward = motivating_r0 + N(0,1).
inline LabeledDataset generate_motivating(int n, RngSeed seed) {
    if (n < 1) throw std::invalid_argument("generate_motivating: n must be positive");
    const std::size_t d = 3;
    LabeledDataset data(d, {"0", "1"});
    Rng base = Rng(seed).substream(detail::stream_motivating);
    for (int i = 0; i < n; ++i) {
        Rng row = base.substream(static_cast<std::uint64_t>(i));
        std::vector<double> x(d);
        for (std::size_t j = 0; j < d; ++j) x[j] = row.uniform(-5.0, 5.0);
        const int a = row.bernoulli(0.5) ? 1 : -1;
        const int s = row.bernoulli(0.5) ? 1 : 0;
        const double r = motivating_r0(x, s, a) + row.normal();
        data.add_row(std::move(x), s, a, r);
    }
    return data;
}

/// Success probability of the entrepreneurship-program lookalike: binary
/// 0/100 reward, two standardized covariates (interview score, school rank).
/// The treatment lifts success mostly for group "1" and for high interview
/// scores, so a value-maximizing rule admits group "0" far less often.
inline double lookalike_success_prob(std::span<const double> x, int s, int a) {
    const double lift = a == 1 ? 0.9 * (x[0] + 2.0 * s - 1.0) : 0.0;
    return sigmoid(0.6 * x[0] + 0.3 * x[1] + lift);
}

inline double lookalike_tau(std::span<const double> x, int s) {
    return 100.0 * (lookalike_success_prob(x, s, 1) - lookalike_success_prob(x, s, -1));
}

/// Synthetic stand-in for the entrepreneurship-program data: default call
/// sites use n=335 with the observed 89/246 group imbalance and a 179/335
/// admission rate.
inline LabeledDataset generate_lookalike(int n, RngSeed seed) {
    if (n < 1) throw std::invalid_argument("generate_lookalike: n must be positive");
    LabeledDataset data(2, {"0", "1"});
    Rng base = Rng(seed).substream(detail::stream_lookalike);
    for (int i = 0; i < n; ++i) {
        Rng row = base.substream(static_cast<std::uint64_t>(i));
        std::vector<double> x{row.uniform(-2.0, 2.0), row.uniform(-2.0, 2.0)};
        const int a = row.bernoulli(179.0 / 335.0) ? 1 : -1;
        const int s = row.bernoulli(246.0 / 335.0) ? 1 : 0;
        const double r = row.bernoulli(lookalike_success_prob(x, s, a)) ? 100.0 : 0.0;
        data.add_row(std::move(x), s, a, r);
    }
    return data;
}

/// Disjoint uniformly random partition with floor(fraction*n) rows in the
/// first part; original row order is preserved within each part.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data,
                                                       double fraction, RngSeed seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split: fraction must be in (0,1)");
    const std::size_t n = data.n();
    const std::size_t k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (k < 1 || n - k < 1) throw std::invalid_argument("split: degenerate part sizes");

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng(seed).substream(detail::stream_split);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        if (j >= i) j = i - 1;
        std::swap(idx[i - 1], idx[j]);
    }
    std::vector<bool> first(n, false);
    for (std::size_t i = 0; i < k; ++i) first[idx[i]] = true;

    LabeledDataset a(data.d(), data.groups()), b(data.d(), data.groups());
    for (std::size_t i = 0; i < n; ++i) {
        auto xv = std::vector<double>(data.x(i).begin(), data.x(i).end());
        if (first[i])
            a.add_row(std::move(xv), data.s(i), data.a(i), data.r(i));
        else
            b.add_row(std::move(xv), data.s(i), data.a(i), data.r(i));
    }
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Column mapping for CSV files. Treatment/reward are optional; leaving them
/// out yields a TargetDataset. Treatment codes are user-declared strings
/// (e.g. "0"/"1") recoded to -1/+1.
struct CsvSchema {
    std::vector<std::string> covariates;
    std::string group;
    struct Treatment {
        std::string column;
        std::string positive;
        std::string negative;
    };
    std::optional<Treatment> treatment;
    std::optional<std::string> reward;
    char delimiter = ',';
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) out.push_back(cell);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& cell, std::size_t line_no, const std::string& col) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw IngestError("csv: unparseable number in row " + std::to_string(line_no) +
                          ", column '" + col + "': '" + cell + "'");
    return v;
}

inline std::size_t column_of(const std::vector<std::string>& header, const std::string& name,
                             const std::string& path) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw IngestError("csv: file '" + path + "' is missing declared column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

} // namespace detail

/// Parse a delimited file per the schema. Group labels are collected and
/// ordered lexicographically, so the mapping to dense indices does not depend
/// on row order. Returns a LabeledDataset when the schema declares both
/// treatment and reward columns, a TargetDataset otherwise.
inline std::variant<LabeledDataset, TargetDataset> load_csv(const std::string& path,
                                                            const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IngestError("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IngestError("csv: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_line(line, schema.delimiter);

    std::vector<std::size_t> xcols;
    for (const auto& c : schema.covariates) xcols.push_back(detail::column_of(header, c, path));
    const std::size_t scol = detail::column_of(header, schema.group, path);
    const bool labeled = schema.treatment.has_value() && schema.reward.has_value();
    std::size_t acol = 0, rcol = 0;
    if (schema.treatment) acol = detail::column_of(header, schema.treatment->column, path);
    if (schema.reward) rcol = detail::column_of(header, *schema.reward, path);

    std::vector<SampleRow> rows;
    std::vector<std::string> groups;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_line(line, schema.delimiter);
        if (cells.size() != header.size())
            throw IngestError("csv: row " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(header.size()));
        SampleRow row;
        for (std::size_t j = 0; j < xcols.size(); ++j)
            row.x.push_back(detail::parse_double(cells[xcols[j]], line_no, schema.covariates[j]));
        row.group = cells[scol];
        if (std::find(groups.begin(), groups.end(), row.group) == groups.end())
            groups.push_back(row.group);
        if (schema.treatment) {
            const std::string& code = cells[acol];
            if (code == schema.treatment->positive)
                row.treatment = 1;
            else if (code == schema.treatment->negative)
                row.treatment = -1;
            else
                throw IngestError("csv: unknown treatment code in row " + std::to_string(line_no) +
                                  ", column '" + schema.treatment->column + "': '" + code + "'");
        }
        if (schema.reward) row.reward = detail::parse_double(cells[rcol], line_no, *schema.reward);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IngestError("csv: '" + path + "' has no data rows");
    std::sort(groups.begin(), groups.end());

    if (labeled) {
        LabeledDataset data(schema.covariates.size(), groups);
        for (auto& row : rows)
            data.add_row(std::move(row.x), data.group_index(row.group), *row.treatment, *row.reward);
        return data;
    }
    TargetDataset data(schema.covariates.size(), groups);
    for (auto& row : rows) {
        int s = static_cast<int>(std::find(groups.begin(), groups.end(), row.group) - groups.begin());
        data.add_row(std::move(row.x), s);
    }
    return data;
}

namespace detail {

inline void append_double(std::string& out, double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
    out.append(buf, res.ptr);
}

} // namespace detail

/// Write a dataset with canonical header x1..xd,s[,a,r]; numbers use the
/// shortest round-trip decimal form so load_csv reproduces them bit-exactly.
inline void write_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestError("csv: cannot write '" + path + "'");
    std::string buf;
    for (std::size_t j = 0; j < data.d(); ++j) buf += "x" + std::to_string(j + 1) + ",";
    buf += "s,a,r\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (double v : data.x(i)) {
            detail::append_double(buf, v);
            buf += ',';
        }
        buf += data.groups()[data.s(i)] + "," + std::to_string(data.a(i)) + ",";
        detail::append_double(buf, data.r(i));
        buf += '\n';
    }
    out << buf;
}

inline void write_csv(const TargetDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestError("csv: cannot write '" + path + "'");
    std::string buf;
    for (std::size_t j = 0; j < data.d(); ++j) buf += "x" + std::to_string(j + 1) + ",";
    buf += "s\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (double v : data.x(i)) {
            detail::append_double(buf, v);
            buf += ',';
        }
        buf += data.groups()[data.s(i)] + "\n";
    }
    out << buf;
}

/// Schema matching write_csv output.
inline CsvSchema canonical_schema(std::size_t d, bool labeled) {
    CsvSchema schema;
    for (std::size_t j = 0; j < d; ++j) schema.covariates.push_back("x" + std::to_string(j + 1));
    schema.group = "s";
    if (labeled) {
        schema.treatment = CsvSchema::Treatment{"a", "1", "-1"};
        schema.reward = "r";
    }
    return schema;
}

} // namespace fairitr
