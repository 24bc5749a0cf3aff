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

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "fairitr/harness.hpp"
#include "fairitr/serialize.hpp"

namespace fs = std::filesystem;
using namespace fairitr;

namespace {

struct CliOptions {
    int experiment = 1;
    std::string experiment_name;  // generate: also "motivating" / "lookalike"
    std::string train_path, target_path, schema_path, model_path, out_dir = ".";
    std::string kernel = "auto";
    std::string grid = "coarse";
    std::string alpha_grid_spec;
    std::string sigma_rule = "auto";
    std::vector<double> rho_list;
    double rho = 0.8;
    double bandwidth = 0.0, ridge = 0.0, cate_ridge = 0.0;
    int m = 20, replicates = 20, n_train = 500, n_test = 500, n_generate = 335;
    int threads = 0;
    int solver_evals = 2000;
    std::uint64_t seed = 1;
    bool no_table = false;
};

std::vector<double> parse_alpha_grid(const std::string& spec) {
    if (spec.empty()) return default_alpha_grid();
    std::vector<double> grid;
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
        const auto colon2 = spec.find(':', colon + 1);
        if (colon2 == std::string::npos)
            throw CLI::ValidationError("--alpha-grid", "expected start:stop:step or a comma list");
        const double start = std::stod(spec.substr(0, colon));
        const double stop = std::stod(spec.substr(colon + 1, colon2 - colon - 1));
        const double step = std::stod(spec.substr(colon2 + 1));
        if (step <= 0.0 || stop < start)
            throw CLI::ValidationError("--alpha-grid", "need step > 0 and stop >= start");
        for (double a = start; a <= stop + 1e-12; a += step) grid.push_back(a);
        return grid;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(std::stod(item));
    if (grid.empty()) throw CLI::ValidationError("--alpha-grid", "empty grid");
    return grid;
}

ExperimentConfig build_config(const CliOptions& cli) {
    ExperimentConfig config;
    config.experiment = cli.experiment;
    config.n_train = cli.n_train;
    config.n_test = cli.n_test;
    config.replicates = cli.replicates;
    config.learner.kernel = cli.kernel;
    config.learner.bandwidth = cli.bandwidth;
    config.learner.ridge = cli.ridge;
    config.learner.cate_ridge = cli.cate_ridge;
    config.m = cli.m;
    config.alpha_grid = parse_alpha_grid(cli.alpha_grid_spec);
    if (!cli.rho_list.empty()) config.rho_list = cli.rho_list;
    config.grid = cli.grid;
    config.solver.max_evaluations = cli.solver_evals;
    config.master_seed = cli.seed;
    config.threads = cli.threads > 0 ? cli.threads : default_threads();
    if (cli.sigma_rule != "auto") {
        try {
            config.sigma_override = std::stod(cli.sigma_rule);
        } catch (const std::exception&) {
            throw CLI::ValidationError("--sigma-rule", "expected 'auto' or a nonnegative number");
        }
        if (config.sigma_override < 0.0)
            throw CLI::ValidationError("--sigma-rule", "sigma must be nonnegative");
    }
    return config;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");
}

int cmd_simulate(const CliOptions& cli) {
    if (cli.experiment < 1 || cli.experiment > 4) {
        std::cerr << "error: unknown experiment " << cli.experiment << " (expected 1..4)\n";
        return 2;
    }
    const ExperimentConfig config = build_config(cli);
    ensure_out_dir(cli.out_dir);

    const auto alpha_grid = config.alpha_grid;
    const auto reps = run_replicates(config);
    const auto curves = aggregate_curves(reps, alpha_grid);

    Table1Output table;
    if (!cli.no_table) table = run_table1(config);

    json report;
    report["mode"] = "simulate";
    report["config"] = config_to_json(config);
    {
        json policies;
        const auto& first = curves.front();
        policies["base"] = {{"di_mean", first.di_base_mean},
                            {"di_se", first.di_base_se},
                            {"ev_mean", first.ev_base_mean},
                            {"ev_se", first.ev_base_se}};
        policies["fair"] = {{"di_mean", first.di_fair_mean},
                            {"di_se", first.di_fair_se},
                            {"ev_mean", first.ev_fair_mean},
                            {"ev_se", first.ev_fair_se}};
        report["policies"] = policies;
    }
    {
        json rows = json::array();
        for (const auto& row : table.rows)
            rows.push_back(json{{"experiment", row.experiment},
                                {"rho", row.rho},
                                {"alpha_hat_mean", row.alpha_mean},
                                {"alpha_hat_se", row.alpha_se},
                                {"edi_mean", row.edi_mean},
                                {"edi_se", row.edi_se},
                                {"ev_mean", row.ev_mean},
                                {"ev_se", row.ev_se},
                                {"feasible_frac", row.feasible_frac}});
        report["table1"] = rows;
    }

    write_text_file(cli.out_dir + "/curves.csv", curves_csv(curves));
    write_text_file(cli.out_dir + "/table1.csv", table1_csv(table.rows));
    write_text_file(cli.out_dir + "/plot.svg", curves_svg(curves));
    write_json_file(cli.out_dir + "/report.json", report);
    std::cout << "wrote " << cli.out_dir << "/{curves.csv, table1.csv, plot.svg, report.json}\n";
    return 0;
}

LabeledDataset load_train(const CliOptions& cli, const CsvSchema& schema) {
    auto loaded = load_csv(cli.train_path, schema);
    if (!std::holds_alternative<LabeledDataset>(loaded))
        throw IngestError("training file must declare treatment and reward columns");
    return std::get<LabeledDataset>(std::move(loaded));
}

int cmd_fit(const CliOptions& cli) {
    const CsvSchema schema = load_schema(cli.schema_path);
    const auto train = load_train(cli, schema);
    ExperimentConfig config = build_config(cli);
    config.experiment = 0;
    const auto seeds = fairitr::detail::replicate_seeds(config.master_seed, 0);
    const FittedPipeline fit = fit_pipeline(train, config, true, seeds.cv);
    ensure_out_dir(cli.out_dir);
    write_json_file(cli.out_dir + "/model.json",
                    bundle_to_json(ModelBundle{fit.prop, fit.base, fit.cate}));
    std::cout << "wrote " << cli.out_dir << "/model.json\n";
    return 0;
}

std::optional<ModelBundle> maybe_load_bundle(const CliOptions& cli) {
    if (cli.model_path.empty()) return std::nullopt;
    std::ifstream in(cli.model_path);
    if (!in) throw IngestError("cannot open model file '" + cli.model_path + "'");
    json j;
    in >> j;
    return bundle_from_json(j);
}

int cmd_audit(const CliOptions& cli) {
    const CsvSchema schema = load_schema(cli.schema_path);
    const ExperimentConfig config = build_config(cli);
    const auto result =
        audit_csv(cli.train_path, cli.target_path, schema, cli.rho, config, maybe_load_bundle(cli));
    ensure_out_dir(cli.out_dir);

    json report;
    report["mode"] = "audit";
    report["rho"] = cli.rho;
    report["sigma"] = result.sigma;
    report["value_source"] = result.value_source;
    report["target_labeled"] = result.target_labeled;
    report["reports"] = json::array({report_to_json(result.base), report_to_json(result.fair),
                                     report_to_json(result.tradeoff)});
    report["selection"] = selection_to_json(result.selection);

    write_json_file(cli.out_dir + "/report.json", report);
    write_json_file(cli.out_dir + "/selection.json", selection_to_json(result.selection));
    write_json_file(cli.out_dir + "/distributions.json", dists_to_json(result.target_dists));
    write_text_file(cli.out_dir + "/curves.csv", curves_csv(result.curve));
    write_text_file(cli.out_dir + "/plot.svg", curves_svg(result.curve));
    if (cli.model_path.empty())
        write_json_file(cli.out_dir + "/model.json", bundle_to_json(result.models));
    std::cout << "wrote " << cli.out_dir
              << "/{report.json, selection.json, distributions.json, curves.csv, plot.svg}\n";
    return 0;
}

int cmd_select_alpha(const CliOptions& cli) {
    const CsvSchema schema = load_schema(cli.schema_path);
    const auto train = load_train(cli, schema);
    ExperimentConfig config = build_config(cli);
    config.experiment = 0;
    const auto seeds = fairitr::detail::replicate_seeds(config.master_seed, 0);

    FittedPipeline fit;
    if (auto bundle = maybe_load_bundle(cli)) {
        if (!bundle->cate) throw IngestError("model bundle lacks the CATE stage");
        fit.prop = bundle->propensity;
        fit.base = bundle->base;
        fit.cate = bundle->cate;
    } else {
        fit = fit_pipeline(train, config, true, seeds.cv);
    }
    fit.sigma = sigma_rule(config, fit.base, train);

    const auto train_dists =
        build_group_distributions(fit.base, to_target(train), fit.sigma, seeds.dists_train);
    IsresConfig solver = config.solver;
    solver.seed = Rng(seeds.solver).next_u64();
    const auto selection = select_alpha(train, fit.base, train_dists, *fit.cate, fit.prop, cli.rho,
                                        surrogate_grid(config.grid), solver, config.m,
                                        seeds.eval.value);
    ensure_out_dir(cli.out_dir);
    write_json_file(cli.out_dir + "/selection.json", selection_to_json(selection));
    std::cout << "wrote " << cli.out_dir << "/selection.json (alpha_hat=" << selection.alpha_hat
              << ", feasible=" << (selection.feasible ? "yes" : "no") << ")\n";
    return 0;
}

int cmd_generate(const CliOptions& cli) {
    LabeledDataset data = [&]() {
        if (cli.experiment_name == "motivating")
            return generate_motivating(cli.n_generate, RngSeed{cli.seed});
        if (cli.experiment_name == "lookalike")
            return generate_lookalike(cli.n_generate, RngSeed{cli.seed});
        const int id = std::stoi(cli.experiment_name);
        return generate_experiment(id, cli.n_generate, RngSeed{cli.seed});
    }();
    ensure_out_dir(cli.out_dir);
    write_csv(data, cli.out_dir + "/data.csv");
    write_json_file(cli.out_dir + "/schema.json", schema_to_json(canonical_schema(data.d(), true)));
    std::cout << "wrote " << cli.out_dir << "/{data.csv, schema.json} (" << data.n() << " rows)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairitr: demographic-parity post-processing for individualized treatment rules"};
    app.require_subcommand(1);
    CliOptions cli;

    auto add_learner_flags = [&cli](CLI::App* cmd) {
        cmd->add_option("--kernel", cli.kernel, "auto|linear|gaussian")->capture_default_str();
        cmd->add_option("--bandwidth", cli.bandwidth, "gaussian bandwidth (0: median heuristic)");
        cmd->add_option("--ridge", cli.ridge, "base learner ridge (0: cross-validated)");
        cmd->add_option("--cate-ridge", cli.cate_ridge, "effect head ridge (0: cross-validated)");
        cmd->add_option("--m", cli.m, "evaluation jitter count")->capture_default_str();
        cmd->add_option("--sigma-rule", cli.sigma_rule, "'auto' or an explicit jitter half-width")
            ->capture_default_str();
        cmd->add_option("--grid", cli.grid, "surrogate grid: coarse|paper")->capture_default_str();
        cmd->add_option("--solver-evals", cli.solver_evals, "ISRES evaluations per grid cell")
            ->capture_default_str();
        cmd->add_option("--alpha-grid", cli.alpha_grid_spec,
                        "alpha sweep: start:stop:step or comma list");
        cmd->add_option("--seed", cli.seed, "master seed")->capture_default_str();
        cmd->add_option("--threads", cli.threads, "worker threads (0: hardware)");
        cmd->add_option("--out", cli.out_dir, "output directory")->capture_default_str();
    };

    auto* simulate = app.add_subcommand("simulate", "replicated simulation study");
    simulate->add_option("--experiment", cli.experiment, "scenario id (1..4)")->required();
    simulate->add_option("--replicates", cli.replicates, "replicate count")->capture_default_str();
    simulate->add_option("--n-train", cli.n_train, "training sample size")->capture_default_str();
    simulate->add_option("--n-test", cli.n_test, "testing sample size")->capture_default_str();
    simulate->add_option("--rho", cli.rho_list, "fairness floors for the alpha-selection table");
    simulate->add_flag("--no-table", cli.no_table, "skip the alpha-selection table");
    add_learner_flags(simulate);

    auto* fit = app.add_subcommand("fit", "fit models on a labeled CSV");
    fit->add_option("--train", cli.train_path, "training CSV")->required();
    fit->add_option("--schema", cli.schema_path, "schema JSON")->required();
    add_learner_flags(fit);

    auto* audit = app.add_subcommand("audit", "audit a target CSV with a fairness floor");
    audit->add_option("--train", cli.train_path, "training CSV")->required();
    audit->add_option("--target", cli.target_path, "target CSV")->required();
    audit->add_option("--schema", cli.schema_path, "schema JSON")->required();
    audit->add_option("--rho", cli.rho, "disparate impact floor")->capture_default_str();
    audit->add_option("--model", cli.model_path, "reuse a saved model.json");
    add_learner_flags(audit);

    auto* select = app.add_subcommand("select-alpha", "tune alpha on a labeled CSV");
    select->add_option("--train", cli.train_path, "training CSV")->required();
    select->add_option("--schema", cli.schema_path, "schema JSON")->required();
    select->add_option("--rho", cli.rho, "disparate impact floor")->capture_default_str();
    select->add_option("--model", cli.model_path, "reuse a saved model.json");
    add_learner_flags(select);

    auto* generate = app.add_subcommand("generate", "write a synthetic dataset as CSV");
    generate->add_option("--experiment", cli.experiment_name, "1..4, motivating, or lookalike")
        ->required();
    generate->add_option("--n", cli.n_generate, "row count")->capture_default_str();
    generate->add_option("--seed", cli.seed, "generator seed")->capture_default_str();
    generate->add_option("--out", cli.out_dir, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(simulate)) return cmd_simulate(cli);
        if (app.got_subcommand(fit)) return cmd_fit(cli);
        if (app.got_subcommand(audit)) return cmd_audit(cli);
        if (app.got_subcommand(select)) return cmd_select_alpha(cli);
        if (app.got_subcommand(generate)) return cmd_generate(cli);
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
