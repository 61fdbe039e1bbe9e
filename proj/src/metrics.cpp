#include "mortcast/metrics.hpp"

#include <cmath>

#include "mortcast/errors.hpp"

namespace mortcast {

namespace {

void check_dims(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimMismatch(std::string(what) + ": shapes differ");
    if (a.size() == 0) throw DimMismatch(std::string(what) + ": empty input");
}

void check_positive(const Eigen::MatrixXd& actual, const char* what) {
    for (Eigen::Index j = 0; j < actual.cols(); ++j)
        for (Eigen::Index i = 0; i < actual.rows(); ++i)
            if (!(actual(i, j) > 0.0))
                throw ZeroActual(std::string(what) + ": actual value must be positive");
}

} // namespace

double mape(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted) {
    check_dims(actual, predicted, "mape");
    check_positive(actual, "mape");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < actual.cols(); ++j)
        for (Eigen::Index i = 0; i < actual.rows(); ++i)
            sum += std::abs((actual(i, j) - predicted(i, j)) / actual(i, j));
    return sum / static_cast<double>(actual.size()) * 100.0;
}

double rmspe(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& predicted,
             bool outside_root) {
    check_dims(actual, predicted, "rmspe");
    check_positive(actual, "rmspe");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < actual.cols(); ++j)
        for (Eigen::Index i = 0; i < actual.rows(); ++i) {
            const double r = (actual(i, j) - predicted(i, j)) / actual(i, j);
            sum += r * r;
        }
    const double mean = sum / static_cast<double>(actual.size());
    return outside_root ? std::sqrt(mean) * 100.0 : std::sqrt(mean * 100.0);
}

double interval_score(double lb, double ub, double y, double alpha) {
    if (!(lb <= ub)) throw InvertedBounds("interval_score: lb > ub");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigInvalid("interval_score: alpha must lie in (0,1)");
    double score = ub - lb;
    if (y < lb) score += 2.0 / alpha * (lb - y);
    if (y > ub) score += 2.0 / alpha * (y - ub);
    return score;
}

double mean_interval_score(const Eigen::MatrixXd& lb, const Eigen::MatrixXd& ub,
                           const Eigen::MatrixXd& y, double alpha) {
    check_dims(lb, ub, "mean_interval_score");
    check_dims(lb, y, "mean_interval_score");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < lb.cols(); ++j)
        for (Eigen::Index i = 0; i < lb.rows(); ++i)
            sum += interval_score(lb(i, j), ub(i, j), y(i, j), alpha);
    return sum / static_cast<double>(lb.size());
}

} // namespace mortcast
