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

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fairitr/cate.hpp"
#include "fairitr/dataset.hpp"
#include "fairitr/metrics.hpp"
#include "fairitr/nuisance.hpp"
#include "fairitr/serialize.hpp"
#include "fairitr/solver.hpp"
#include "fairitr/svg.hpp"
#include "fairitr/transport.hpp"
#include "fairitr/util.hpp"

namespace fairitr {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct LearnerOptions {
    std::string kernel = "auto";  // auto: linear for experiment 1, gaussian otherwise
    double bandwidth = 0.0;       // <= 0: median pairwise distance heuristic
    double ridge = 0.0;           // <= 0: 5-fold cross-validated IPW value
    double cate_ridge = 0.0;      // <= 0: 5-fold held-out R-objective
    double prop_ridge = 1e-3;
    double tau_floor = 0.05;
    int rl_folds = 5;
};

struct ExperimentConfig {
    int experiment = 1;  // 1..4; 0 for CSV-driven runs
    int n_train = 500;
    int n_test = 500;
    int replicates = 20;
    LearnerOptions learner;
    double sigma_scale = 0.5;     // sigma = scale * sd(train scores) / sqrt(n_train)
    double sigma_override = -1.0; // >= 0 overrides the rule
    int m = 20;
    std::vector<double> alpha_grid;  // empty: 0, 0.01, ..., 1
    std::vector<double> rho_list{0.8};
    std::string grid = "coarse";  // or "paper"
    IsresConfig solver;           // bounds default to alpha in [0, 10]
    std::uint64_t master_seed = 1;
    int threads = 1;
};

inline std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 100; ++i) grid.push_back(static_cast<double>(i) / 100.0);
    return grid;
}

namespace detail {

inline constexpr std::uint64_t stream_replicates = 0x52455053ULL;
inline constexpr std::uint64_t stream_cv_folds = 0x43564644ULL;

struct ReplicateSeeds {
    RngSeed train, test, dists_train, dists_test, eval, solver, cv;
};

inline ReplicateSeeds replicate_seeds(std::uint64_t master, std::size_t rep) {
    Rng stream = Rng(RngSeed{master}).substream(stream_replicates).substream(rep);
    auto draw = [&stream](std::uint64_t tag) { return RngSeed{stream.substream(tag).next_u64()}; };
    return {draw(1), draw(2), draw(3), draw(4), draw(5), draw(6), draw(7)};
}

inline std::vector<int> cv_fold_assignment(std::size_t n, int folds, RngSeed seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng = Rng(seed).substream(stream_cv_folds);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
        if (j >= i) j = i - 1;
        std::swap(idx[i - 1], idx[j]);
    }
    std::vector<int> fold(n);
    for (std::size_t r = 0; r < n; ++r) fold[idx[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
    return fold;
}

inline std::vector<double> propensity_on(const PropensityModel& prop, const LabeledDataset& data) {
    std::vector<double> p(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) p[i] = prop.prob_treat(data.x(i), data.s(i));
    return p;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Model fitting with default tuning
// ---------------------------------------------------------------------------

inline KernelSpec resolve_kernel(const LearnerOptions& opts, const LabeledDataset& train,
                                 int experiment) {
    KernelKind kind;
    if (opts.kernel == "auto")
        kind = experiment == 1 ? KernelKind::linear : KernelKind::gaussian;
    else
        kind = kernel_kind_from_string(opts.kernel);
    KernelSpec spec{kind, 1.0};
    if (kind == KernelKind::gaussian)
        spec.bandwidth = opts.bandwidth > 0.0 ? opts.bandwidth : median_bandwidth(train);
    return spec;
}

inline const std::vector<double>& ridge_search_grid() {
    static const std::vector<double> grid{10.0, 1.0, 0.1, 0.01, 0.001};
    return grid;
}

/// Pick the OWL ridge by 5-fold cross-validated IPW value (ties prefer the
/// stronger penalty, which comes first in the search grid).
inline double cv_ridge_owl(const LabeledDataset& train, const KernelSpec& kernel,
                           const PropensityModel& prop, RngSeed seed) {
    const int folds = 5;
    const auto fold_of = detail::cv_fold_assignment(train.n(), folds, seed);
    double best_ridge = ridge_search_grid().front();
    double best_value = -std::numeric_limits<double>::infinity();
    for (double ridge : ridge_search_grid()) {
        double total = 0.0;
        bool ok = true;
        for (int k = 0; k < folds && ok; ++k) {
            std::vector<std::size_t> in_fold, out_fold;
            for (std::size_t i = 0; i < train.n(); ++i)
                (fold_of[i] == k ? in_fold : out_fold).push_back(i);
            if (in_fold.empty() || out_fold.size() < 2) continue;
            LabeledDataset sub(train.d(), train.groups());
            for (std::size_t i : out_fold)
                sub.add_row(std::vector<double>(train.x(i).begin(), train.x(i).end()), train.s(i),
                            train.a(i), train.r(i));
            bool pos = false, neg = false;
            for (std::size_t i = 0; i < sub.n(); ++i) (sub.a(i) == 1 ? pos : neg) = true;
            if (!pos || !neg) {
                ok = false;
                break;
            }
            const auto model = fit_owl(sub, kernel, ridge, prop);
            std::vector<double> scores, r, pihat;
            std::vector<int> a;
            for (std::size_t i : in_fold) {
                scores.push_back(score(model, train.x(i), train.s(i)));
                a.push_back(train.a(i));
                r.push_back(train.r(i));
                pihat.push_back(prop.prob_treat(train.x(i), train.s(i)));
            }
            total += estimate_value(scores, a, r, pihat);
        }
        if (ok && total > best_value) {
            best_value = total;
            best_ridge = ridge;
        }
    }
    return best_ridge;
}

/// Pick the R-learner ridge by the held-out pseudo-residual objective.
inline double cv_ridge_rlearner(const LabeledDataset& train, const KernelSpec& kernel, int rl_folds,
                                RngSeed seed) {
    const int folds = 5;
    const auto fold_of = detail::cv_fold_assignment(train.n(), folds, seed);
    double best_ridge = ridge_search_grid().front();
    double best_loss = std::numeric_limits<double>::infinity();
    for (double ridge : ridge_search_grid()) {
        auto [prob, rl_fold_of] = make_rlearner_problem(train, kernel, ridge, rl_folds);
        double loss = 0.0;
        for (int k = 0; k < folds; ++k) {
            std::vector<std::size_t> in_fold, out_fold;
            for (std::size_t i = 0; i < train.n(); ++i)
                (fold_of[i] == k ? in_fold : out_fold).push_back(i);
            if (in_fold.empty() || out_fold.empty()) continue;
            // head fit on the out-fold rows of the precomputed pseudo data
            Matrix gram(out_fold.size(), out_fold.size());
            for (std::size_t r = 0; r < out_fold.size(); ++r)
                for (std::size_t c = 0; c <= r; ++c) {
                    const double v = prob.k(out_fold[r], out_fold[c]);
                    gram(r, c) = v;
                    gram(c, r) = v;
                }
            std::vector<double> w(out_fold.size()), z(out_fold.size());
            for (std::size_t r = 0; r < out_fold.size(); ++r) {
                const double t = prob.t[out_fold[r]];
                w[r] = t * t;
                z[r] = prob.yres[out_fold[r]] / t;
            }
            auto sol = detail::solve_wkrr(gram, z, w,
                                          static_cast<double>(out_fold.size()) * ridge, false);
            for (std::size_t i : in_fold) {
                double f = sol.intercept;
                for (std::size_t r = 0; r < out_fold.size(); ++r)
                    f += sol.dual[r] * prob.k(i, out_fold[r]);
                const double resid = prob.yres[i] - prob.t[i] * f;
                loss += resid * resid;
            }
        }
        if (loss < best_loss) {
            best_loss = loss;
            best_ridge = ridge;
        }
    }
    return best_ridge;
}

struct FittedPipeline {
    PropensityModel prop;
    DecisionModel base;
    std::optional<CateModel> cate;
    KernelSpec kernel;
    double ridge = 0.0;
    double cate_ridge = 0.0;
    double sigma = 0.0;
};

inline double sigma_rule(const ExperimentConfig& config, const DecisionModel& base,
                         const LabeledDataset& train) {
    if (config.sigma_override >= 0.0) return config.sigma_override;
    const auto scores = score_all(base, train);
    double mean = 0.0;
    for (double v : scores) mean += v;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double v : scores) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(scores.size()));
    return config.sigma_scale * sd / std::sqrt(static_cast<double>(train.n()));
}

inline FittedPipeline fit_pipeline(const LabeledDataset& train, const ExperimentConfig& config,
                                   bool need_cate, RngSeed cv_seed) {
    FittedPipeline fit;
    fit.prop = fit_propensity(train, config.learner.prop_ridge, config.learner.tau_floor);
    fit.kernel = resolve_kernel(config.learner, train, config.experiment);
    fit.ridge = config.learner.ridge > 0.0 ? config.learner.ridge
                                           : cv_ridge_owl(train, fit.kernel, fit.prop, cv_seed);
    fit.base = fit_owl(train, fit.kernel, fit.ridge, fit.prop);
    if (need_cate) {
        fit.cate_ridge = config.learner.cate_ridge > 0.0
                             ? config.learner.cate_ridge
                             : cv_ridge_rlearner(train, fit.kernel, config.learner.rl_folds, cv_seed);
        fit.cate = fit_rlearner(train, fit.kernel, fit.cate_ridge, config.learner.rl_folds);
    }
    fit.sigma = sigma_rule(config, fit.base, train);
    return fit;
}

// ---------------------------------------------------------------------------
// Replicated trade-off sweeps over the alpha grid
// ---------------------------------------------------------------------------

struct CurveRecord {
    double alpha = 0.0;
    double di_base_mean = 0.0, di_base_se = 0.0, ev_base_mean = 0.0, ev_base_se = 0.0;
    double di_fair_mean = 0.0, di_fair_se = 0.0, ev_fair_mean = 0.0, ev_fair_se = 0.0;
    double di_tradeoff_mean = 0.0, di_tradeoff_se = 0.0;
    double ev_tradeoff_mean = 0.0, ev_tradeoff_se = 0.0;
};

struct ReplicateCurves {
    std::vector<double> di_tradeoff, ev_tradeoff;  // one per alpha grid point
    double di_base = 0.0, ev_base = 0.0, di_fair = 0.0, ev_fair = 0.0;
    FairnessReport report_base, report_fair;
};

namespace detail {

// Per-row caches on the evaluation set: base score, transported fair score,
// |tau|, and the pieces of the two value estimators.
struct EvalCache {
    std::vector<double> f, g, atau, pihat;
    std::vector<int> s, a;
    std::vector<double> r;
    const LabeledDataset* data = nullptr;
    int experiment = 0;

    double value_of(const std::vector<double>& scores) const {
        if (experiment >= 1) {
            // oracle: execute the rule against the known reward surface
            double acc = 0.0;
            for (std::size_t i = 0; i < scores.size(); ++i)
                acc += experiment_r0(experiment, data->x(i), data->s(i), sgn(scores[i]));
            return acc / static_cast<double>(scores.size());
        }
        return estimate_value(scores, a, r, pihat);
    }
};

inline EvalCache make_eval_cache(const LabeledDataset& eval_data, const FittedPipeline& fit,
                                 const GroupDistributions& dists, int m, RngSeed eval_seed,
                                 int experiment) {
    EvalCache cache;
    cache.data = &eval_data;
    cache.experiment = experiment;
    cache.f = score_all(fit.base, eval_data);
    cache.g.resize(eval_data.n());
    cache.s = eval_data.group_ids();
    cache.a = eval_data.treatments();
    cache.r = eval_data.rewards();
    cache.pihat = propensity_on(fit.prop, eval_data);
    Rng eval_rng = Rng(eval_seed).substream(detail::stream_eval_jitter);
    for (std::size_t i = 0; i < eval_data.n(); ++i)
        cache.g[i] = fair_from_value(dists, eval_data.s(i), cache.f[i], m,
                                     eval_rng.substream(point_key(eval_data.x(i), eval_data.s(i))));
    if (fit.cate) {
        cache.atau.resize(eval_data.n());
        for (std::size_t i = 0; i < eval_data.n(); ++i)
            cache.atau[i] = std::abs(cate_tau(*fit.cate, eval_data.x(i), eval_data.s(i)));
    }
    return cache;
}

inline std::vector<double> blend_scores(const EvalCache& cache, double alpha) {
    std::vector<double> u(cache.f.size());
    for (std::size_t i = 0; i < cache.f.size(); ++i) {
        const double w = alpha == 0.0 ? 0.0 : weight_from_tau(cache.atau[i], alpha);
        u[i] = w * cache.f[i] + (1.0 - w) * cache.g[i];
    }
    return u;
}

inline FairnessReport policy_report(const std::string& name, const std::vector<double>& scores,
                                    const EvalCache& cache,
                                    const std::vector<std::string>& groups) {
    FairnessReport report;
    report.policy = name;
    const auto di = estimate_di(scores, cache.s, groups.size());
    report.di = di.value;
    report.di_degenerate = di.degenerate;
    report.ks = ks_disparity(scores, cache.s, groups.size());
    report.value = cache.value_of(scores);
    const auto rates = positive_rates(scores, cache.s, groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        report.positive_rate[groups[g]] = rates[g];
        std::size_t count = 0;
        for (int si : cache.s)
            if (static_cast<std::size_t>(si) == g) ++count;
        report.group_n[groups[g]] = count;
    }
    return report;
}

} // namespace detail

inline LabeledDataset generate_for(const ExperimentConfig& config, int n, RngSeed seed) {
    return generate_experiment(config.experiment, n, seed);
}

/// One replication of the simulation protocol: generate train/test, fit the
/// pipeline, transport on the test covariates (the target set), and sweep the
/// alpha grid. The CATE stage is skipped when the grid never leaves zero.
inline ReplicateCurves run_replicate(const ExperimentConfig& config, std::size_t rep) {
    const auto seeds = detail::replicate_seeds(config.master_seed, rep);
    const auto alpha_grid = config.alpha_grid.empty() ? default_alpha_grid() : config.alpha_grid;
    bool need_cate = false;
    for (double a : alpha_grid) need_cate = need_cate || a > 0.0;

    const LabeledDataset train = generate_for(config, config.n_train, seeds.train);
    const LabeledDataset test = generate_for(config, config.n_test, seeds.test);
    const FittedPipeline fit = fit_pipeline(train, config, need_cate, seeds.cv);
    const GroupDistributions dists =
        build_group_distributions(fit.base, to_target(test), fit.sigma, seeds.dists_test);
    const auto cache =
        detail::make_eval_cache(test, fit, dists, config.m, seeds.eval, config.experiment);

    ReplicateCurves out;
    out.report_base = detail::policy_report("base", cache.f, cache, test.groups());
    out.report_fair = detail::policy_report("fair", cache.g, cache, test.groups());
    out.di_base = out.report_base.di;
    out.ev_base = out.report_base.value;
    out.di_fair = out.report_fair.di;
    out.ev_fair = out.report_fair.value;
    for (double alpha : alpha_grid) {
        const auto scores = alpha == 0.0 ? cache.g : detail::blend_scores(cache, alpha);
        out.di_tradeoff.push_back(estimate_di(scores, cache.s, test.groups().size()).value);
        out.ev_tradeoff.push_back(cache.value_of(scores));
    }
    return out;
}

namespace detail {

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

inline MeanSe summarize(const std::vector<double>& v) {
    MeanSe out;
    for (double x : v) out.mean += x;
    out.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return out;
}

} // namespace detail

inline std::vector<CurveRecord> aggregate_curves(const std::vector<ReplicateCurves>& reps,
                                                 const std::vector<double>& alpha_grid) {
    std::vector<CurveRecord> records;
    auto collect = [&reps](auto member) {
        std::vector<double> v;
        for (const auto& r : reps) v.push_back(member(r));
        return v;
    };
    const auto di_base = detail::summarize(collect([](const ReplicateCurves& r) { return r.di_base; }));
    const auto ev_base = detail::summarize(collect([](const ReplicateCurves& r) { return r.ev_base; }));
    const auto di_fair = detail::summarize(collect([](const ReplicateCurves& r) { return r.di_fair; }));
    const auto ev_fair = detail::summarize(collect([](const ReplicateCurves& r) { return r.ev_fair; }));
    for (std::size_t k = 0; k < alpha_grid.size(); ++k) {
        std::vector<double> di, ev;
        for (const auto& r : reps) {
            di.push_back(r.di_tradeoff[k]);
            ev.push_back(r.ev_tradeoff[k]);
        }
        const auto di_s = detail::summarize(di);
        const auto ev_s = detail::summarize(ev);
        CurveRecord rec;
        rec.alpha = alpha_grid[k];
        rec.di_base_mean = di_base.mean;
        rec.di_base_se = di_base.se;
        rec.ev_base_mean = ev_base.mean;
        rec.ev_base_se = ev_base.se;
        rec.di_fair_mean = di_fair.mean;
        rec.di_fair_se = di_fair.se;
        rec.ev_fair_mean = ev_fair.mean;
        rec.ev_fair_se = ev_fair.se;
        rec.di_tradeoff_mean = di_s.mean;
        rec.di_tradeoff_se = di_s.se;
        rec.ev_tradeoff_mean = ev_s.mean;
        rec.ev_tradeoff_se = ev_s.se;
        records.push_back(rec);
    }
    return records;
}

inline std::vector<ReplicateCurves> run_replicates(const ExperimentConfig& config) {
    return parallel_map(static_cast<std::size_t>(config.replicates), config.threads,
                        [&config](std::size_t rep) { return run_replicate(config, rep); });
}

// ---------------------------------------------------------------------------
// Replicated alpha-selection study (the table1.csv rows)
// ---------------------------------------------------------------------------

struct Table1Row {
    std::string experiment;
    double rho = 0.0;
    double alpha_mean = 0.0, alpha_se = 0.0;
    double edi_mean = 0.0, edi_se = 0.0;
    double ev_mean = 0.0, ev_se = 0.0;
    double feasible_frac = 0.0;
};

struct Table1CellDetail {
    std::size_t replicate = 0;
    double rho = 0.0;
    AlphaSelection selection;
    double edi = 0.0;
    double ev = 0.0;
};

struct Table1Output {
    std::vector<Table1Row> rows;
    std::vector<Table1CellDetail> cells;  // every (replicate, rho) run
};

/// Per replicate: fit once, select alpha per rho on the training set
/// (transport distributions from the training rows, as the selection
/// procedure prescribes), then score the held-out test set with transport
/// distributions built on the test covariates.
inline Table1Output run_table1(const ExperimentConfig& config) {
    const auto& rhos = config.rho_list;
    const auto grid = surrogate_grid(config.grid);

    struct RepResult {
        std::vector<Table1CellDetail> cells;
    };
    auto run_one = [&](std::size_t rep) {
        const auto seeds = detail::replicate_seeds(config.master_seed, rep);
        const LabeledDataset train = generate_for(config, config.n_train, seeds.train);
        const LabeledDataset test = generate_for(config, config.n_test, seeds.test);
        const FittedPipeline fit = fit_pipeline(train, config, true, seeds.cv);
        const GroupDistributions train_dists =
            build_group_distributions(fit.base, to_target(train), fit.sigma, seeds.dists_train);
        const GroupDistributions test_dists =
            build_group_distributions(fit.base, to_target(test), fit.sigma, seeds.dists_test);
        const auto cache =
            detail::make_eval_cache(test, fit, test_dists, config.m, seeds.eval, config.experiment);

        RepResult out;
        for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
            IsresConfig solver = config.solver;
            solver.seed = Rng(seeds.solver).substream(ri).next_u64();
            Table1CellDetail cell;
            cell.replicate = rep;
            cell.rho = rhos[ri];
            cell.selection = select_alpha(train, fit.base, train_dists, *fit.cate, fit.prop,
                                          rhos[ri], grid, solver, config.m, seeds.eval.value);
            const auto scores = cell.selection.alpha_hat == 0.0
                                    ? cache.g
                                    : detail::blend_scores(cache, cell.selection.alpha_hat);
            cell.edi = estimate_di(scores, cache.s, test.groups().size()).value;
            cell.ev = cache.value_of(scores);
            out.cells.push_back(std::move(cell));
        }
        return out;
    };

    const auto reps = parallel_map(static_cast<std::size_t>(config.replicates), config.threads,
                                   run_one);

    Table1Output out;
    for (const auto& r : reps)
        for (const auto& cell : r.cells) out.cells.push_back(cell);
    for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
        std::vector<double> alphas, edis, evs;
        double feasible = 0.0;
        for (const auto& cell : out.cells) {
            if (cell.rho != rhos[ri]) continue;
            alphas.push_back(cell.selection.alpha_hat);
            edis.push_back(cell.edi);
            evs.push_back(cell.ev);
            if (cell.selection.feasible) feasible += 1.0;
        }
        const auto a = detail::summarize(alphas);
        const auto e = detail::summarize(edis);
        const auto v = detail::summarize(evs);
        Table1Row row;
        row.experiment = "experiment-" + std::to_string(config.experiment);
        row.rho = rhos[ri];
        row.alpha_mean = a.mean;
        row.alpha_se = a.se;
        row.edi_mean = e.mean;
        row.edi_se = e.se;
        row.ev_mean = v.mean;
        row.ev_se = v.se;
        row.feasible_frac = feasible / static_cast<double>(alphas.size());
        out.rows.push_back(row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

namespace detail {

inline void append_num(std::string& out, double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

} // namespace detail

inline std::string curves_csv(const std::vector<CurveRecord>& records) {
    std::string out =
        "alpha,di_base_mean,di_base_se,ev_base_mean,ev_base_se,"
        "di_fair_mean,di_fair_se,ev_fair_mean,ev_fair_se,"
        "di_tradeoff_mean,di_tradeoff_se,ev_tradeoff_mean,ev_tradeoff_se\n";
    for (const auto& r : records) {
        const double cols[] = {r.alpha,          r.di_base_mean,     r.di_base_se,
                               r.ev_base_mean,   r.ev_base_se,       r.di_fair_mean,
                               r.di_fair_se,     r.ev_fair_mean,     r.ev_fair_se,
                               r.di_tradeoff_mean, r.di_tradeoff_se, r.ev_tradeoff_mean,
                               r.ev_tradeoff_se};
        for (std::size_t i = 0; i < std::size(cols); ++i) {
            if (i) out += ',';
            detail::append_num(out, cols[i]);
        }
        out += '\n';
    }
    return out;
}

inline std::string table1_csv(const std::vector<Table1Row>& rows) {
    std::string out =
        "experiment,rho,alpha_hat_mean,alpha_hat_se,edi_mean,edi_se,ev_mean,ev_se,feasible_frac\n";
    for (const auto& r : rows) {
        out += r.experiment;
        for (double v : {r.rho, r.alpha_mean, r.alpha_se, r.edi_mean, r.edi_se, r.ev_mean, r.ev_se,
                         r.feasible_frac}) {
            out += ',';
            detail::append_num(out, v);
        }
        out += '\n';
    }
    return out;
}

inline std::string curves_svg(const std::vector<CurveRecord>& records) {
    svg::Panel di_panel{"Disparate impact vs alpha", "alpha", "estimated DI", {}};
    svg::Panel ev_panel{"Value vs alpha", "alpha", "estimated value", {}};
    svg::Series di_fair{"fair", "#1b7837", {}, {}}, di_base{"base", "#2166ac", {}, {}},
        di_trade{"trade-off", "#b2182b", {}, {}};
    svg::Series ev_fair = di_fair, ev_base = di_base, ev_trade = di_trade;
    for (const auto& r : records) {
        di_fair.x.push_back(r.alpha);
        di_fair.y.push_back(r.di_fair_mean);
        di_base.x.push_back(r.alpha);
        di_base.y.push_back(r.di_base_mean);
        di_trade.x.push_back(r.alpha);
        di_trade.y.push_back(r.di_tradeoff_mean);
        ev_fair.x.push_back(r.alpha);
        ev_fair.y.push_back(r.ev_fair_mean);
        ev_base.x.push_back(r.alpha);
        ev_base.y.push_back(r.ev_base_mean);
        ev_trade.x.push_back(r.alpha);
        ev_trade.y.push_back(r.ev_tradeoff_mean);
    }
    di_panel.series = {di_fair, di_base, di_trade};
    ev_panel.series = {ev_fair, ev_base, ev_trade};
    return svg::render({di_panel, ev_panel});
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["n_train"] = c.n_train;
    j["n_test"] = c.n_test;
    j["replicates"] = c.replicates;
    j["kernel"] = c.learner.kernel;
    j["bandwidth"] = c.learner.bandwidth;
    j["ridge"] = c.learner.ridge;
    j["cate_ridge"] = c.learner.cate_ridge;
    j["prop_ridge"] = c.learner.prop_ridge;
    j["tau_floor"] = c.learner.tau_floor;
    j["rl_folds"] = c.learner.rl_folds;
    j["sigma_scale"] = c.sigma_scale;
    j["sigma_override"] = c.sigma_override;
    j["m"] = c.m;
    j["grid"] = c.grid;
    j["rho_list"] = c.rho_list;
    j["master_seed"] = c.master_seed;
    j["solver_max_evaluations"] = c.solver.max_evaluations;
    return j;
}

// ---------------------------------------------------------------------------
// Generic CSV audit (the tabular-data workflow)
// ---------------------------------------------------------------------------

struct AuditResult {
    FairnessReport base, fair, tradeoff;
    AlphaSelection selection;
    std::vector<CurveRecord> curve;
    ModelBundle models;
    GroupDistributions target_dists;
    double sigma = 0.0;
    bool target_labeled = false;
    std::string value_source;  // "target-ipw" or "train-ipw"
};

namespace detail {

// Load the target file with the training schema, tolerating files without
// the treatment/reward columns. Rows are remapped onto the training group
// index space; an unknown target label is an error naming it.
struct LoadedTarget {
    TargetDataset target;
    std::optional<LabeledDataset> labeled;
};

inline LoadedTarget load_target(const std::string& path, const CsvSchema& schema,
                                const std::vector<std::string>& train_groups) {
    std::ifstream in(path);
    if (!in) throw IngestError("csv: cannot open '" + path + "'");
    std::string header_line;
    if (!std::getline(in, header_line)) throw IngestError("csv: '" + path + "' is empty");
    if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
    const auto header = split_line(header_line, schema.delimiter);
    auto has = [&header](const std::string& col) {
        return std::find(header.begin(), header.end(), col) != header.end();
    };
    CsvSchema effective = schema;
    const bool labeled = schema.treatment && schema.reward && has(schema.treatment->column) &&
                         has(*schema.reward);
    if (!labeled) {
        effective.treatment.reset();
        effective.reward.reset();
    }
    auto loaded = load_csv(path, effective);

    LoadedTarget out{TargetDataset(schema.covariates.size(), train_groups), std::nullopt};
    auto remap = [&train_groups, &path](const std::string& label) {
        const auto it = std::find(train_groups.begin(), train_groups.end(), label);
        if (it == train_groups.end())
            throw IngestError("audit: target file '" + path + "' contains unknown group '" +
                              label + "'");
        return static_cast<int>(it - train_groups.begin());
    };
    if (labeled) {
        const auto& data = std::get<LabeledDataset>(loaded);
        LabeledDataset relabeled(data.d(), train_groups);
        for (std::size_t i = 0; i < data.n(); ++i) {
            const int s = remap(data.groups()[data.s(i)]);
            relabeled.add_row(std::vector<double>(data.x(i).begin(), data.x(i).end()), s, data.a(i),
                              data.r(i));
            out.target.add_row(std::vector<double>(data.x(i).begin(), data.x(i).end()), s);
        }
        out.labeled = std::move(relabeled);
    } else {
        const auto& data = std::get<TargetDataset>(loaded);
        for (std::size_t i = 0; i < data.n(); ++i)
            out.target.add_row(std::vector<double>(data.x(i).begin(), data.x(i).end()),
                               remap(data.groups()[data.s(i)]));
    }
    return out;
}

} // namespace detail

/// Full workflow on user data: fit (or reuse) models on the labeled training
/// file, select alpha at the requested rho on the training set, transport and
/// audit on the target file. When the target carries treatment/reward columns
/// the reported values are target-side IPW estimates; otherwise they are
/// training-set IPW values.
inline AuditResult audit_csv(const std::string& train_path, const std::string& target_path,
                             const CsvSchema& schema, double rho, const ExperimentConfig& config,
                             std::optional<ModelBundle> reuse = std::nullopt) {
    if (!schema.treatment || !schema.reward)
        throw IngestError("audit: schema must declare treatment and reward columns for training");
    auto train_loaded = load_csv(train_path, schema);
    if (!std::holds_alternative<LabeledDataset>(train_loaded))
        throw IngestError("audit: training file must contain treatment and reward columns");
    const auto& train = std::get<LabeledDataset>(train_loaded);
    const auto target = detail::load_target(target_path, schema, train.groups());

    const auto seeds = detail::replicate_seeds(config.master_seed, 0);
    ExperimentConfig cfg = config;
    cfg.experiment = 0;  // CSV mode: IPW values, gaussian default kernel

    AuditResult out;
    if (reuse) {
        out.models = std::move(*reuse);
        if (!out.models.cate) throw IngestError("audit: reused model bundle lacks the CATE stage");
    } else {
        const FittedPipeline fit = fit_pipeline(train, cfg, true, seeds.cv);
        out.models = ModelBundle{fit.prop, fit.base, fit.cate};
    }
    FittedPipeline fit;
    fit.prop = out.models.propensity;
    fit.base = out.models.base;
    fit.cate = out.models.cate;
    fit.sigma = sigma_rule(cfg, fit.base, train);
    out.sigma = fit.sigma;

    const GroupDistributions train_dists =
        build_group_distributions(fit.base, to_target(train), fit.sigma, seeds.dists_train);
    out.target_dists =
        build_group_distributions(fit.base, target.target, fit.sigma, seeds.dists_test);

    IsresConfig solver = cfg.solver;
    solver.seed = Rng(seeds.solver).next_u64();
    out.selection = select_alpha(train, fit.base, train_dists, *fit.cate, fit.prop, rho,
                                 surrogate_grid(cfg.grid), solver, cfg.m, seeds.eval.value);

    out.target_labeled = target.labeled.has_value();
    out.value_source = out.target_labeled ? "target-ipw" : "train-ipw";

    // evaluation caches: target side when labeled, training side otherwise
    const LabeledDataset& eval_data = out.target_labeled ? *target.labeled : train;
    const GroupDistributions& eval_dists = out.target_labeled ? out.target_dists : train_dists;
    const auto cache = detail::make_eval_cache(eval_data, fit, eval_dists, cfg.m, seeds.eval, 0);

    // DI and KS always come from the target file
    std::vector<double> f_target, g_target, atau_target;
    {
        const auto& t = target.target;
        f_target = score_all(fit.base, t);
        g_target.resize(t.n());
        atau_target.resize(t.n());
        Rng eval_rng = Rng(seeds.eval).substream(detail::stream_eval_jitter);
        for (std::size_t i = 0; i < t.n(); ++i) {
            g_target[i] = fair_from_value(out.target_dists, t.s(i), f_target[i], cfg.m,
                                          eval_rng.substream(point_key(t.x(i), t.s(i))));
            atau_target[i] = std::abs(cate_tau(*fit.cate, t.x(i), t.s(i)));
        }
    }
    auto target_scores = [&](double alpha) {
        std::vector<double> u(f_target.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double w = alpha == 0.0 ? 0.0 : weight_from_tau(atau_target[i], alpha);
            u[i] = w * f_target[i] + (1.0 - w) * g_target[i];
        }
        return u;
    };

    const auto& groups = train.groups();
    const auto& tgroups = target.target.group_ids();
    auto make_report = [&](const std::string& name, double alpha) {
        const auto scores_t = target_scores(alpha);
        FairnessReport rep;
        rep.policy = name;
        const auto di = estimate_di(scores_t, tgroups, groups.size());
        rep.di = di.value;
        rep.di_degenerate = di.degenerate;
        rep.ks = ks_disparity(scores_t, tgroups, groups.size());
        rep.value = cache.value_of(alpha == 0.0 ? cache.g : detail::blend_scores(cache, alpha));
        const auto rates = positive_rates(scores_t, tgroups, groups.size());
        for (std::size_t g = 0; g < groups.size(); ++g) {
            rep.positive_rate[groups[g]] = rates[g];
            std::size_t count = 0;
            for (int si : tgroups)
                if (static_cast<std::size_t>(si) == g) ++count;
            rep.group_n[groups[g]] = count;
        }
        return rep;
    };

    // base report: alpha -> infinity limit is the base scorer itself
    {
        FairnessReport rep;
        rep.policy = "base";
        const auto di = estimate_di(f_target, tgroups, groups.size());
        rep.di = di.value;
        rep.di_degenerate = di.degenerate;
        rep.ks = ks_disparity(f_target, tgroups, groups.size());
        rep.value = cache.value_of(cache.f);
        const auto rates = positive_rates(f_target, tgroups, groups.size());
        for (std::size_t g = 0; g < groups.size(); ++g) rep.positive_rate[groups[g]] = rates[g];
        out.base = rep;
    }
    out.fair = make_report("fair", 0.0);
    out.tradeoff = make_report("tradeoff", out.selection.alpha_hat);

    const auto alpha_grid = cfg.alpha_grid.empty() ? default_alpha_grid() : cfg.alpha_grid;
    for (double alpha : alpha_grid) {
        const auto scores_t = target_scores(alpha);
        CurveRecord rec;
        rec.alpha = alpha;
        rec.di_base_mean = out.base.di;
        rec.ev_base_mean = out.base.value;
        rec.di_fair_mean = out.fair.di;
        rec.ev_fair_mean = out.fair.value;
        rec.di_tradeoff_mean = estimate_di(scores_t, tgroups, groups.size()).value;
        rec.ev_tradeoff_mean =
            cache.value_of(alpha == 0.0 ? cache.g : detail::blend_scores(cache, alpha));
        out.curve.push_back(rec);
    }
    return out;
}

} // namespace fairitr
