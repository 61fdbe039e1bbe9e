#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mortcast/forecast.hpp"
#include "mortcast/model.hpp"
#include "mortcast/surface.hpp"

namespace mortcast {

/// How the retiree-age forecasts are produced: fit directly on the truncated
/// 60..100+ surface, or fit on the full age range and truncate the forecasts
/// afterwards.
enum class Strategy { PartialFit, FullFitThenTruncate };

std::string_view strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);

/// Pooled accuracy of one (model, strategy, horizon) combination.  Metrics
/// are on the reported scale: mape/rmspe in percent, interval score already
/// multiplied by 100.  Failed cells carry NaN metrics and a diagnostic.
struct BacktestCell {
    std::string country;
    std::string sex;
    ModelKind model = ModelKind::LcPoisson;
    Strategy strategy = Strategy::PartialFit;
    int horizon = 0;
    double mape = 0.0;
    double rmspe = 0.0;
    double mean_interval_score = 0.0;
    int n_origins = 0;
    bool failed = false;
    std::string failure;
};

struct BacktestConfig {
    ModelSpec spec;
    Strategy strategy = Strategy::PartialFit;
    int holdout = 30;
    double alpha = 0.2;
    int n_sims = 5000;
    std::uint64_t seed = 0;
    bool rmspe_outside_root = false;
};

/// Produces retiree-age forecasts from one training surface; the default
/// fits `spec` and simulates.  Injectable so the backtest mechanics can be
/// exercised with deterministic stubs.
using ForecastFn =
    std::function<ForecastResult(const ModelSpec& spec, const MortalitySurface& training,
                                 int horizons, double alpha, int n_sims, std::uint64_t seed)>;

ForecastFn default_forecast_fn();

/// Per-origin simulation seed: folds the cell labels into the base seed so
/// every (country, sex, model, strategy, origin) draws an independent stream
/// regardless of execution order.
std::uint64_t cell_seed(std::uint64_t base, std::string_view country, std::string_view sex,
                        ModelKind model, Strategy strategy, int origin);

/// Expanding-window backtest.  Origin o (0-based) trains on the first
/// T - holdout + o years and forecasts the remaining holdout - o, so horizon
/// h pools holdout - h + 1 forecast columns against the held-out rates over
/// the 60..100+ evaluation ages.  Returns one cell per horizon 1..holdout.
/// A fit or forecast failure at some origin marks every horizon that pools
/// that origin as failed instead of aborting.
std::vector<BacktestCell> expanding_window_backtest(const MortalitySurface& surface,
                                                    const BacktestConfig& config);
std::vector<BacktestCell> expanding_window_backtest(const MortalitySurface& surface,
                                                    const BacktestConfig& config,
                                                    const ForecastFn& forecast);

/// Long-format CSV `country,sex,model,strategy,horizon,metric,value,
/// n_origins,failed` with one row per metric; values round-trip bit-exactly.
std::string serialize_cells(const std::vector<BacktestCell>& cells);
std::vector<BacktestCell> parse_cells(std::string_view text);

} // namespace mortcast
