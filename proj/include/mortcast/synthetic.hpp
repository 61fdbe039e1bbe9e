#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>

#include "mortcast/surface.hpp"

namespace mortcast {

/// Generating parameters for a synthetic country: true log-rates follow
/// alpha_x + beta_x * kappa_t on ages 0..110+ and deaths are Poisson draws
/// against a flat exposure level.
struct SyntheticTruth {
    std::string country = "SY1";
    Sex sex = Sex::Female;
    int first_year = 1950;
    int last_year = 2016;
    Eigen::VectorXd alpha; // 111 ages
    Eigen::VectorXd beta;  // 111 ages, nonnegative
    Eigen::VectorXd kappa; // one per year
    double exposure_level = 1e5;

    Eigen::MatrixXd true_rates() const;
};

/// Plausible default truth: Gompertz old-age slope with an infant hump,
/// young-age-loaded beta, and a declining kappa with a mild cycle so the
/// innovation variance is positive.
SyntheticTruth default_synthetic_truth(std::string country = "SY1", Sex sex = Sex::Female,
                                       int last_year = 2016);

/// Simulates the full surface: deaths ~ Poisson(exposure * true rate) drawn
/// deterministically from the seed, rates = deaths / exposure.  Throws
/// BadTruth when the parameters are inconsistent or non-finite.
MortalitySurface generate_synthetic_country(const SyntheticTruth& truth, std::uint64_t seed);

/// CSV bundle `param,index,value` mirroring the fitted-model format so
/// recovery tests can compare against the generating values.
std::string serialize_truth(const SyntheticTruth& truth);
SyntheticTruth parse_truth(std::string_view text);

} // namespace mortcast
