#pragma once

#include <Eigen/Dense>

namespace mortcast {

/// Mean absolute percentage error over a pooled age x origin grid:
/// (1/(p*n)) sum |(m - mhat)/m| * 100.  Actual values must be positive.
double mape(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted);

/// Root mean squared percentage error.  The default places the factor 100
/// inside the square root, sqrt(mean(((m - mhat)/m)^2 * 100)); passing
/// outside_root=true uses the conventional sqrt(mean(ratio^2)) * 100.
double rmspe(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted,
             bool outside_root = false);

/// Interval score for a central (1-alpha) interval:
/// (ub-lb) + (2/alpha)(lb-y) if y < lb, + (2/alpha)(y-ub) if y > ub.
double interval_score(double lb, double ub, double y, double alpha);

/// Mean of interval_score over matching grids of bounds and outcomes.
double mean_interval_score(const Eigen::MatrixXd& lb, const Eigen::MatrixXd& ub,
                           const Eigen::MatrixXd& y, double alpha);

} // namespace mortcast
