#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mortcast/backtest.hpp"
#include "mortcast/model.hpp"
#include "mortcast/surface.hpp"

namespace mortcast {

/// The 19-country grid with each country's default final data year.
const std::vector<std::pair<std::string, int>>& default_country_years();

struct ExperimentConfig {
    std::string data_dir;                 // falls back to $MORTCAST_DATA_DIR
    std::string output_dir;               // empty: no artifacts written
    std::vector<std::string> countries;   // default: the 19-country grid
    std::vector<Sex> sexes = {Sex::Female, Sex::Male};
    std::vector<ModelKind> models = {ModelKind::LcPoisson, ModelKind::LcGaussian,
                                     ModelKind::LcGaussian2, ModelKind::Apc, ModelKind::Plat};
    int holdout = 30;
    double alpha = 0.2;
    int n_sims = 5000;
    std::uint64_t seed = 1;
    int start_year = 1950;
    bool rmspe_outside_root = false;
    bool synthetic = false;               // generate surfaces instead of reading files
    int jobs = 0;                         // worker threads; 0 = hardware default
    std::map<std::string, int> last_year; // per-country override of the final year
};

/// Flat key=value text (# comments, blank lines ignored).  Recognized keys:
/// data_dir, output_dir, countries, sexes, models, holdout, alpha, n_sims,
/// seed, start_year, rmspe_outside_root, synthetic, jobs, and per-country
/// last_year.CODE overrides.  Unknown keys throw ConfigInvalid.
ExperimentConfig parse_config(std::string_view text);

/// Throws ConfigInvalid when invariants are violated (holdout >= 1,
/// n_sims >= 100, alpha in (0,1), countries/sexes/models non-empty).
void validate_config(const ExperimentConfig& config);

/// Final data year for one country: explicit override, else the grid
/// default, else the latest year present in the data.
int last_year_for(const ExperimentConfig& config, const std::string& country);

/// Loads (or synthesizes) one country-sex surface and prepares it for
/// backtesting: restrict to start_year..last_year, aggregate ages to 100+,
/// repair non-positive rates.  Real data expects
/// <data_dir>/<COUNTRY>.Mx_1x1.txt plus optional .Deaths_1x1 / .Exposures_1x1
/// siblings; a missing rates file throws MissingData naming the path.
MortalitySurface load_country_surface(const ExperimentConfig& config,
                                      const std::string& country, Sex sex);

/// Per-model-and-strategy backtest spec; Plat drops its kinked period term
/// on the retiree range (2 period terms) and keeps 3 on the full range.
ModelSpec model_spec_for(ModelKind kind, Strategy strategy);

/// One metric table at one horizon for one sex: rows per country, columns
/// per (model, strategy) with the full range first, a mean row across
/// countries, and the per-row argmin marked in the text rendering.
struct ReportTable {
    std::string metric; // mape | rmspe | interval_score
    int horizon = 1;
    std::string sex;    // F | M
    std::vector<std::string> row_labels;
    std::vector<std::string> column_labels; // "<model>/<strategy>"
    Eigen::MatrixXd values;                 // rows x columns, NaN for failed cells
    Eigen::VectorXd mean_row;               // column means over countries
    std::vector<int> row_argmin;            // -1 when a row has no finite value

    void recompute_summary();               // refreshes mean_row and row_argmin
};

ReportTable build_table(const std::vector<BacktestCell>& cells, const std::string& metric,
                        int horizon, const std::string& sex);

/// Fixed two-decimal aligned text with '*' on each row's minimum.
std::string render_table(const ReportTable& table);

/// Full-precision CSV that parses back to the identical in-memory table.
std::string table_to_csv(const ReportTable& table);
ReportTable table_from_csv(std::string_view text);

/// Strategy comparison per (sex, model): mean error across countries under
/// each strategy; ties go to the full-range strategy with a flag.
struct StrategyVerdict {
    std::string sex;
    ModelKind model = ModelKind::LcPoisson;
    Strategy winner = Strategy::FullFitThenTruncate;
    double partial_mean = 0.0;
    double full_mean = 0.0;
    bool tie = false;
};

std::vector<StrategyVerdict> summarize_strategy_winner(const std::vector<BacktestCell>& cells,
                                                       const std::string& metric, int horizon);

/// Writes one data CSV and one gnuplot script per table (bar chart of the
/// mean row).  Deterministic bytes; an empty table throws IoError.
std::vector<std::string> emit_plot_script(const std::vector<ReportTable>& tables,
                                          const std::string& output_dir);

struct ExperimentResult {
    std::vector<BacktestCell> cells;
    std::vector<ReportTable> tables; // horizons {1, holdout} x metrics x sexes
    std::vector<StrategyVerdict> verdicts; // h=1, then h=holdout, per metric
    std::string winners_text;
    bool any_failed = false;
};

/// Runs the full grid (country x sex x model x strategy) on a worker pool;
/// results are deterministic for a given (config, seed) regardless of the
/// thread schedule.  When output_dir is set, writes cells.csv, per-table
/// CSV/text, plot scripts, and winners.txt.
ExperimentResult run_experiment(const ExperimentConfig& config);

} // namespace mortcast
