#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include "mortcast/errors.hpp"
#include "mortcast/experiment.hpp"
#include "mortcast/hmd.hpp"
#include "mortcast/model.hpp"
#include "mortcast/text.hpp"

namespace {

constexpr int kExitClean = 0;
constexpr int kExitFailedCells = 1;
constexpr int kExitConfigError = 2;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw mortcast::MissingData("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Accepts CLI-style hyphenated model names alongside the canonical
/// underscored ones.
mortcast::ModelKind model_from_cli(std::string name) {
    for (char& c : name)
        if (c == '-') c = '_';
    return mortcast::model_from_name(name);
}

struct BacktestArgs {
    std::string config_path;
    std::string countries;
    std::string models;
    std::string data_dir;
    std::string output_dir;
    bool synthetic = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = -1;
    int holdout = -1;
    int n_sims = -1;
};

int run_backtest(const BacktestArgs& args) {
    mortcast::ExperimentConfig config =
        mortcast::parse_config(args.config_path.empty() ? "" : read_text_file(args.config_path));
    if (!args.countries.empty()) {
        config.countries.clear();
        for (const std::string& c : mortcast::split(args.countries, ','))
            if (!c.empty()) config.countries.push_back(c);
    }
    if (!args.models.empty()) {
        config.models.clear();
        for (const std::string& m : mortcast::split(args.models, ','))
            if (!m.empty()) config.models.push_back(model_from_cli(m));
    }
    if (!args.data_dir.empty()) config.data_dir = args.data_dir;
    if (!args.output_dir.empty()) config.output_dir = args.output_dir;
    if (args.synthetic) config.synthetic = true;
    if (args.seed_set) config.seed = args.seed;
    if (args.jobs >= 0) config.jobs = args.jobs;
    if (args.holdout > 0) config.holdout = args.holdout;
    if (args.n_sims > 0) config.n_sims = args.n_sims;

    const mortcast::ExperimentResult result = mortcast::run_experiment(config);
    std::size_t failed = 0;
    std::set<std::string> diagnostics;
    for (const mortcast::BacktestCell& cell : result.cells)
        if (cell.failed) {
            ++failed;
            diagnostics.insert(cell.country + " " + cell.sex + " " +
                               std::string(mortcast::model_name(cell.model)) + " " +
                               std::string(mortcast::strategy_name(cell.strategy)) + ": " +
                               cell.failure);
        }
    for (const std::string& d : diagnostics) std::cerr << "failed: " << d << "\n";
    std::cout << result.cells.size() << " cells computed, " << failed << " failed\n";
    std::cout << result.winners_text;
    if (!config.output_dir.empty())
        std::cout << "artifacts written to " << config.output_dir << "\n";
    return result.any_failed ? kExitFailedCells : kExitClean;
}

struct FitArgs {
    std::string model = "lc_poisson";
    std::string country;
    std::string sex = "F";
    std::string data_dir;
    std::string range = "full";
    std::string out_path;
    bool synthetic = false;
    int start_year = 1950;
    int last_year = -1;
    std::uint64_t seed = 1;
};

int run_fit(const FitArgs& args) {
    mortcast::ExperimentConfig config;
    config.countries = {args.country};
    config.data_dir = args.data_dir;
    config.synthetic = args.synthetic;
    config.start_year = args.start_year;
    config.seed = args.seed;
    if (args.last_year > 0) config.last_year[args.country] = args.last_year;

    const mortcast::Sex sex = mortcast::sex_from_code(args.sex);
    mortcast::MortalitySurface surface =
        mortcast::load_country_surface(config, args.country, sex);
    const mortcast::Strategy strategy = args.range == "partial"
                                            ? mortcast::Strategy::PartialFit
                                            : mortcast::Strategy::FullFitThenTruncate;
    if (args.range == "partial")
        surface = mortcast::truncate_ages(surface, mortcast::retiree_range());
    else if (args.range != "full")
        throw mortcast::ConfigInvalid("range must be 'full' or 'partial'");

    const mortcast::ModelSpec spec =
        mortcast::model_spec_for(model_from_cli(args.model), strategy);
    const mortcast::FittedModel fitted = mortcast::fit(spec, surface);
    const std::string text = mortcast::serialize_fitted_model(fitted);
    if (args.out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out) throw mortcast::IoError("cannot write " + args.out_path);
        out << text;
    }
    std::cerr << (fitted.converged ? "converged" : "NOT converged") << " after "
              << fitted.loglik_trace.size() - 1 << " cycles\n";
    return kExitClean;
}

struct ReportArgs {
    std::string from;
    int horizon = 1;
    std::string metric = "mape";
    std::string sexes = "F,M";
};

int run_report(const ReportArgs& args) {
    const std::vector<mortcast::BacktestCell> cells =
        mortcast::parse_cells(read_text_file(args.from));
    for (const std::string& sex : mortcast::split(args.sexes, ',')) {
        if (sex.empty()) continue;
        const mortcast::ReportTable table =
            mortcast::build_table(cells, args.metric, args.horizon, sex);
        if (table.row_labels.empty()) {
            std::cout << "no cells for metric " << args.metric << " at horizon "
                      << args.horizon << ", sex " << sex << "\n";
            continue;
        }
        std::cout << mortcast::render_table(table) << "\n";
    }
    return kExitClean;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"retiree mortality forecasting: model backtests and reports"};
    app.require_subcommand(1);

    BacktestArgs backtest_args;
    CLI::App* backtest = app.add_subcommand(
        "backtest", "run the expanding-window backtest grid and write reports");
    backtest->add_option("--config", backtest_args.config_path, "key=value config file");
    backtest->add_option("--countries", backtest_args.countries, "comma-separated country codes");
    backtest->add_option("--models", backtest_args.models, "comma-separated model names");
    backtest->add_option("--data-dir", backtest_args.data_dir, "directory with HMD-style files");
    backtest->add_option("--output-dir", backtest_args.output_dir, "directory for artifacts");
    backtest->add_flag("--synthetic", backtest_args.synthetic,
                       "generate surfaces instead of reading data files");
    backtest->add_option("--seed", backtest_args.seed, "base simulation seed")
        ->each([&backtest_args](const std::string&) { backtest_args.seed_set = true; });
    backtest->add_option("--jobs", backtest_args.jobs, "worker threads (0 = hardware)");
    backtest->add_option("--holdout", backtest_args.holdout, "held-out years");
    backtest->add_option("--n-sims", backtest_args.n_sims, "simulated paths per forecast");

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "fit one model and print its parameters");
    fit->add_option("--model", fit_args.model, "model name (e.g. lc-poisson, plat)");
    fit->add_option("--country", fit_args.country, "country code")->required();
    fit->add_option("--sex", fit_args.sex, "F or M");
    fit->add_option("--data-dir", fit_args.data_dir, "directory with HMD-style files");
    fit->add_option("--range", fit_args.range, "age range: full (0..100+) or partial (60..100+)");
    fit->add_option("--out", fit_args.out_path, "write parameters to a file instead of stdout");
    fit->add_flag("--synthetic", fit_args.synthetic, "fit a generated surface");
    fit->add_option("--start-year", fit_args.start_year, "first training year");
    fit->add_option("--last-year", fit_args.last_year, "final training year");
    fit->add_option("--seed", fit_args.seed, "seed for synthetic surfaces");

    ReportArgs report_args;
    CLI::App* report = app.add_subcommand("report", "render tables from a cells CSV");
    report->add_option("--from", report_args.from, "cells.csv produced by backtest")->required();
    report->add_option("--horizon", report_args.horizon, "forecast horizon to tabulate");
    report->add_option("--metric", report_args.metric, "mape, rmspe, or interval_score");
    report->add_option("--sexes", report_args.sexes, "comma-separated sex codes");

    try {
        app.parse(argc, argv);
        if (backtest->parsed()) return run_backtest(backtest_args);
        if (fit->parsed()) return run_fit(fit_args);
        if (report->parsed()) return run_report(report_args);
        return kExitConfigError;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitClean : kExitConfigError;
    } catch (const mortcast::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
}
