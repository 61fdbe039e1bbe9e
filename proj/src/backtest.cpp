#include "mortcast/backtest.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "mortcast/errors.hpp"
#include "mortcast/hmd.hpp"
#include "mortcast/metrics.hpp"
#include "mortcast/rng.hpp"
#include "mortcast/text.hpp"

namespace mortcast {

std::string_view strategy_name(Strategy s) {
    return s == Strategy::PartialFit ? "partial" : "full";
}

Strategy strategy_from_name(std::string_view name) {
    if (name == "partial") return Strategy::PartialFit;
    if (name == "full") return Strategy::FullFitThenTruncate;
    throw ConfigInvalid("unknown strategy: " + std::string(name));
}

ForecastFn default_forecast_fn() {
    return [](const ModelSpec& spec, const MortalitySurface& training, int horizons,
              double alpha, int n_sims, std::uint64_t seed) {
        const FittedModel fitted = fit(spec, training);
        return make_forecast(fitted, horizons, alpha, n_sims, seed);
    };
}

std::uint64_t cell_seed(std::uint64_t base, std::string_view country, std::string_view sex,
                        ModelKind model, Strategy strategy, int origin) {
    return derive_seed(base, {hash_bytes(country), hash_bytes(sex),
                              hash_bytes(model_name(model)), hash_bytes(strategy_name(strategy)),
                              static_cast<std::uint64_t>(origin)});
}

namespace {

/// First n_years columns of the surface; the repair log keeps only entries
/// inside the kept window.
MortalitySurface first_years(const MortalitySurface& surface, int n_years) {
    MortalitySurface out = surface;
    out.years.assign(surface.years.begin(), surface.years.begin() + n_years);
    out.rates = surface.rates.leftCols(n_years);
    if (surface.deaths) out.deaths = surface.deaths->leftCols(n_years);
    if (surface.exposures) out.exposures = surface.exposures->leftCols(n_years);
    out.repairs.clear();
    const int last = out.years.back();
    for (const RateRepair& r : surface.repairs)
        if (r.year <= last) out.repairs.push_back(r);
    return out;
}

std::vector<int> eval_rows(const std::vector<int>& have, const std::vector<int>& want) {
    std::vector<int> rows;
    rows.reserve(want.size());
    for (int age : want) {
        int found = -1;
        for (std::size_t i = 0; i < have.size(); ++i)
            if (have[i] == age) {
                found = static_cast<int>(i);
                break;
            }
        if (found < 0)
            throw DimMismatch("forecast is missing evaluation age " + std::to_string(age));
        rows.push_back(found);
    }
    return rows;
}

struct HorizonPool {
    Eigen::MatrixXd actual, point, lower, upper;
};

} // namespace

std::vector<BacktestCell> expanding_window_backtest(const MortalitySurface& surface,
                                                    const BacktestConfig& config) {
    return expanding_window_backtest(surface, config, default_forecast_fn());
}

std::vector<BacktestCell> expanding_window_backtest(const MortalitySurface& surface,
                                                    const BacktestConfig& config,
                                                    const ForecastFn& forecast) {
    if (config.holdout < 1) throw BadDims("holdout must be at least 1");
    const int T = surface.n_years();
    if (T < config.holdout + 10)
        throw BadDims("surface has " + std::to_string(T) + " years; need at least " +
                      std::to_string(config.holdout + 10));

    const MortalitySurface eval_surface = truncate_ages(surface, retiree_range());
    const std::vector<int>& eval_ages = eval_surface.ages;
    const auto p = static_cast<Eigen::Index>(eval_ages.size());

    // Training surfaces share the age range across origins; only the year
    // window grows.
    const MortalitySurface fit_base =
        config.strategy == Strategy::PartialFit ? eval_surface : surface;

    std::vector<HorizonPool> pools(static_cast<std::size_t>(config.holdout));
    for (int h = 1; h <= config.holdout; ++h) {
        HorizonPool& pool = pools[static_cast<std::size_t>(h - 1)];
        const Eigen::Index cols = config.holdout - h + 1;
        pool.actual.resize(p, cols);
        pool.point.resize(p, cols);
        pool.lower.resize(p, cols);
        pool.upper.resize(p, cols);
    }
    std::map<int, std::string> failures; // origin -> diagnostic

    for (int origin = 0; origin < config.holdout; ++origin) {
        const int n_train = T - config.holdout + origin;
        const int horizons = config.holdout - origin;
        const std::uint64_t seed = cell_seed(config.seed, surface.country,
                                             std::string(1, sex_code(surface.sex)),
                                             config.spec.kind, config.strategy, origin);
        ForecastResult fc;
        try {
            fc = forecast(config.spec, first_years(fit_base, n_train), horizons, config.alpha,
                          config.n_sims, seed);
        } catch (const Error& e) {
            failures.emplace(origin, e.what());
            continue;
        }
        const std::vector<int> rows = eval_rows(fc.ages, eval_ages);

        for (int h = 1; h <= horizons; ++h) {
            HorizonPool& pool = pools[static_cast<std::size_t>(h - 1)];
            const Eigen::Index col = origin;
            const Eigen::Index year_col = n_train + h - 1;
            for (Eigen::Index x = 0; x < p; ++x) {
                pool.actual(x, col) = eval_surface.rates(x, year_col);
                pool.point(x, col) = fc.point(rows[static_cast<std::size_t>(x)], h - 1);
                pool.lower(x, col) = fc.lower(rows[static_cast<std::size_t>(x)], h - 1);
                pool.upper(x, col) = fc.upper(rows[static_cast<std::size_t>(x)], h - 1);
            }
        }
    }

    std::vector<BacktestCell> cells;
    cells.reserve(static_cast<std::size_t>(config.holdout));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int h = 1; h <= config.holdout; ++h) {
        BacktestCell cell;
        cell.country = surface.country;
        cell.sex = std::string(1, sex_code(surface.sex));
        cell.model = config.spec.kind;
        cell.strategy = config.strategy;
        cell.horizon = h;
        cell.n_origins = config.holdout - h + 1;
        for (const auto& [origin, message] : failures)
            if (origin <= config.holdout - h && !cell.failed) {
                cell.failed = true;
                cell.failure = "origin " + std::to_string(origin) + ": " + message;
            }
        if (cell.failed) {
            cell.mape = cell.rmspe = cell.mean_interval_score = nan;
        } else {
            const HorizonPool& pool = pools[static_cast<std::size_t>(h - 1)];
            cell.mape = mape(pool.actual, pool.point);
            cell.rmspe = rmspe(pool.actual, pool.point, config.rmspe_outside_root);
            cell.mean_interval_score =
                100.0 * mean_interval_score(pool.lower, pool.upper, pool.actual, config.alpha);
        }
        cells.push_back(std::move(cell));
    }
    return cells;
}

std::string serialize_cells(const std::vector<BacktestCell>& cells) {
    std::string out = "country,sex,model,strategy,horizon,metric,value,n_origins,failed\n";
    for (const BacktestCell& cell : cells) {
        const std::string prefix = cell.country + ',' + cell.sex + ',' +
                                   std::string(model_name(cell.model)) + ',' +
                                   std::string(strategy_name(cell.strategy)) + ',' +
                                   std::to_string(cell.horizon) + ',';
        const std::string suffix = ',' + std::to_string(cell.n_origins) + ',' +
                                   (cell.failed ? "1" : "0") + '\n';
        out += prefix + "mape," + format_double(cell.mape) + suffix;
        out += prefix + "rmspe," + format_double(cell.rmspe) + suffix;
        out += prefix + "interval_score," + format_double(cell.mean_interval_score) + suffix;
    }
    return out;
}

std::vector<BacktestCell> parse_cells(std::string_view text) {
    std::vector<BacktestCell> cells;
    std::map<std::string, std::size_t> index;
    std::istringstream in{std::string(text)};
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
        const std::string_view t = trim(line);
        if (t.empty()) continue;
        if (!saw_header) {
            if (t != "country,sex,model,strategy,horizon,metric,value,n_origins,failed")
                throw MalformedRow("unexpected cells header: " + std::string(t));
            saw_header = true;
            continue;
        }
        const std::vector<std::string> f = split(t, ',');
        if (f.size() != 9) throw MalformedRow("expected 9 fields: " + std::string(t));
        const std::string key = f[0] + '|' + f[1] + '|' + f[2] + '|' + f[3] + '|' + f[4];
        auto [it, fresh] = index.emplace(key, cells.size());
        if (fresh) {
            BacktestCell cell;
            cell.country = f[0];
            cell.sex = f[1];
            cell.model = model_from_name(f[2]);
            cell.strategy = strategy_from_name(f[3]);
            cell.horizon = std::stoi(f[4]);
            cells.push_back(std::move(cell));
        }
        BacktestCell& cell = cells[it->second];
        const double value = std::strtod(f[6].c_str(), nullptr);
        if (f[5] == "mape")
            cell.mape = value;
        else if (f[5] == "rmspe")
            cell.rmspe = value;
        else if (f[5] == "interval_score")
            cell.mean_interval_score = value;
        else
            throw MalformedRow("unknown metric: " + f[5]);
        cell.n_origins = std::stoi(f[7]);
        if (f[8] == "1")
            cell.failed = true;
        else if (f[8] != "0")
            throw MalformedRow("failed flag must be 0 or 1: " + std::string(t));
    }
    if (!saw_header) throw EmptyInput("no cells CSV header found");
    return cells;
}

} // namespace mortcast
