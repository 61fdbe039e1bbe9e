#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mortcast/model.hpp"
#include "mortcast/rng.hpp"

namespace mortcast {

/// Simulated central rates, sim-major: entry (sim, age, h) is the rate for
/// that age at horizon h+1.
struct SampleCube {
    std::size_t n_sims = 0;
    std::size_t n_ages = 0;
    std::size_t n_horizons = 0;
    std::vector<double> data;

    double& at(std::size_t sim, std::size_t age, std::size_t h) {
        return data[(sim * n_ages + age) * n_horizons + h];
    }
    double at(std::size_t sim, std::size_t age, std::size_t h) const {
        return data[(sim * n_ages + age) * n_horizons + h];
    }
};

/// Supplies the normal-variate stream for one simulation index; lets tests
/// inject a fixed stream in place of the seeded default generator.
using StreamFactory = std::function<std::unique_ptr<NormalSource>(std::uint64_t sim)>;

/// Simulates future central rates from a converged fit.
///
/// Each period index follows an independent random walk with drift fitted to
/// its in-sample values; the cohort effect (APC/Plat) follows a random walk
/// with drift fitted to the estimated-cohort sequence.  Cohorts past the last
/// estimated one take the projected path even when a pinned thin-cohort value
/// exists in the fit.  Paths use the closed form
///     k_{T+h} = k_T + h*drift + sigma * (z_1 + ... + z_h),
/// so zero-sigma components reproduce the drift line exactly.
///
/// Each simulation consumes its variates in a fixed order: for h = 1..H the
/// innovations of every period index (component-minor), then the cohort-path
/// innovations.  The seeded overload derives one stream per simulation from
/// (seed, sim), making parallel and serial execution identical.
SampleCube simulate_paths(const FittedModel& fitted, int horizons, int n_sims,
                          std::uint64_t seed);
SampleCube simulate_paths(const FittedModel& fitted, int horizons, int n_sims,
                          const StreamFactory& streams);

struct ForecastResult {
    std::string model;
    std::vector<int> ages;
    int horizons = 0;          // columns cover 1..horizons
    Eigen::MatrixXd point;     // n_ages x horizons, simulation medians
    Eigen::MatrixXd lower;     // alpha/2 predictive quantile
    Eigen::MatrixXd upper;     // 1 - alpha/2 predictive quantile
    double alpha = 0.2;
    int n_sims = 0;
    std::uint64_t seed = 0;
};

/// Point forecasts and symmetric prediction intervals from one simulated
/// sample: per age and horizon the point is the median and the bounds are
/// the empirical alpha/2 and 1-alpha/2 quantiles (linear interpolation
/// between order statistics).
ForecastResult make_forecast(const FittedModel& fitted, int horizons, double alpha,
                             int n_sims, std::uint64_t seed);

/// CSV rows `age,horizon,point,lower,upper` behind a metadata line carrying
/// the model name, alpha, n_sims, seed, and generator name.
std::string serialize_forecast(const ForecastResult& fc);

} // namespace mortcast
