#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "mortcast/errors.hpp"

namespace mortcast {

/// Random walk with drift fitted to an index series.
struct RwdParams {
    double drift = 0.0;
    double sigma = 0.0;
    double last_value = 0.0;
    int last_index = 0;
};

/// Fits drift = mean first difference = (s_T - s_1)/(T-1) and sigma = the
/// unbiased standard deviation of the differences about the drift
/// (denominator T-2).  last_index labels the final observation (a year or
/// a cohort), so projections step from there.
inline RwdParams estimate_rwd(const Eigen::VectorXd& series, int last_index) {
    const auto n = series.size();
    if (n < 3) throw TooShort("random walk estimation needs at least 3 observations");
    RwdParams out;
    out.drift = (series(n - 1) - series(0)) / static_cast<double>(n - 1);
    double ss = 0.0;
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double d = series(i + 1) - series(i) - out.drift;
        ss += d * d;
    }
    out.sigma = std::sqrt(ss / static_cast<double>(n - 2));
    out.last_value = series(n - 1);
    out.last_index = last_index;
    return out;
}

/// Random walk with drift over the estimated cohort-effect sequence; used
/// to project gamma for cohorts that first appear in the forecast years.
inline RwdParams forecast_cohort_series(const Eigen::VectorXd& gamma, int last_cohort) {
    if (gamma.size() < 3) throw TooShort("cohort projection needs at least 3 estimated cohorts");
    return estimate_rwd(gamma, last_cohort);
}

} // namespace mortcast
