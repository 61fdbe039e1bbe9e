#include "mortcast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mortcast/errors.hpp"
#include "mortcast/rwd.hpp"
#include "mortcast/text.hpp"

namespace mortcast {

namespace {

struct PathSetup {
    std::vector<RwdParams> kappa_rwd;       // one per period component
    bool cohort = false;
    RwdParams gamma_rwd;                    // valid only when cohort
    int last_estimated_cohort = 0;
    int n_projected = 0;                    // cohorts past the last estimated one
};

PathSetup prepare_paths(const FittedModel& fitted, int horizons) {
    PathSetup setup;
    const int last_year = fitted.years.back();
    for (const Eigen::VectorXd& k : fitted.kappa)
        setup.kappa_rwd.push_back(estimate_rwd(k, last_year));

    setup.cohort = has_cohort_term(fitted.spec.kind);
    if (setup.cohort) {
        std::vector<double> estimated;
        for (std::size_t i = 0; i < fitted.cohorts.size(); ++i)
            if (fitted.gamma_estimated[i]) {
                estimated.push_back(fitted.gamma(static_cast<Eigen::Index>(i)));
                setup.last_estimated_cohort = fitted.cohorts[i];
            }
        Eigen::VectorXd series =
            Eigen::Map<const Eigen::VectorXd>(estimated.data(), static_cast<Eigen::Index>(estimated.size()));
        setup.gamma_rwd = forecast_cohort_series(series, setup.last_estimated_cohort);
        const int max_cohort = last_year + horizons - fitted.ages.front();
        setup.n_projected = std::max(0, max_cohort - setup.last_estimated_cohort);
    }
    return setup;
}

double forecast_log_rate(const FittedModel& fitted, int age_idx,
                         const std::vector<double>& k_values, double gamma_value) {
    double eta = fitted.alpha(age_idx);
    if (!fitted.beta.empty()) {
        for (std::size_t j = 0; j < fitted.beta.size(); ++j)
            eta += fitted.beta[j](age_idx) * k_values[j];
    } else {
        for (std::size_t j = 0; j < k_values.size(); ++j)
            eta += fitted.period_weight(static_cast<int>(j), age_idx) * k_values[j];
    }
    return eta + gamma_value;
}

void check_simulation_args(const FittedModel& fitted, int horizons, int n_sims) {
    if (!fitted.converged) throw NotConverged("cannot forecast from a non-converged fit");
    if (horizons < 1) throw BadDims("horizons must be at least 1");
    if (n_sims < 100) throw BadDims("need at least 100 simulations");
    if (fitted.years.size() < 3) throw TooShort("period-index projection needs at least 3 years");
}

/// Quantile of a sorted sample with linear interpolation between order
/// statistics (position p*(n-1)).
double sorted_quantile(const std::vector<double>& sorted, double p) {
    const auto n = sorted.size();
    const double g = p * static_cast<double>(n - 1);
    const auto i = static_cast<std::size_t>(g);
    if (i + 1 >= n) return sorted.back();
    const double frac = g - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

} // namespace

SampleCube simulate_paths(const FittedModel& fitted, int horizons, int n_sims,
                          std::uint64_t seed) {
    return simulate_paths(fitted, horizons, n_sims, StreamFactory([seed](std::uint64_t sim) {
        return std::make_unique<BoxMullerStream>(derive_seed(seed, {sim}));
    }));
}

SampleCube simulate_paths(const FittedModel& fitted, int horizons, int n_sims,
                          const StreamFactory& streams) {
    check_simulation_args(fitted, horizons, n_sims);
    const PathSetup setup = prepare_paths(fitted, horizons);

    const auto p = static_cast<std::size_t>(fitted.n_ages());
    const auto H = static_cast<std::size_t>(horizons);
    const std::size_t n_k = fitted.kappa.size();
    const int last_year = fitted.years.back();

    SampleCube cube;
    cube.n_sims = static_cast<std::size_t>(n_sims);
    cube.n_ages = p;
    cube.n_horizons = H;
    cube.data.resize(cube.n_sims * p * H);

    std::vector<double> k_values(n_k);
    Eigen::MatrixXd k_path(static_cast<Eigen::Index>(n_k), static_cast<Eigen::Index>(H));
    Eigen::VectorXd gamma_path(setup.n_projected);

    for (std::size_t sim = 0; sim < cube.n_sims; ++sim) {
        const std::unique_ptr<NormalSource> z = streams(sim);

        std::vector<double> k_cum(n_k, 0.0);
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t j = 0; j < n_k; ++j) {
                k_cum[j] += z->next();
                const RwdParams& rw = setup.kappa_rwd[j];
                k_path(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(h)) =
                    rw.last_value + static_cast<double>(h + 1) * rw.drift + rw.sigma * k_cum[j];
            }

        double gamma_cum = 0.0;
        for (int j = 0; j < setup.n_projected; ++j) {
            gamma_cum += z->next();
            gamma_path(j) = setup.gamma_rwd.last_value +
                            static_cast<double>(j + 1) * setup.gamma_rwd.drift +
                            setup.gamma_rwd.sigma * gamma_cum;
        }

        for (std::size_t x = 0; x < p; ++x)
            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t j = 0; j < n_k; ++j)
                    k_values[j] = k_path(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(h));
                double gamma_value = 0.0;
                if (setup.cohort) {
                    const int cohort = last_year + static_cast<int>(h + 1) -
                                       fitted.ages[static_cast<std::size_t>(x)];
                    gamma_value = cohort <= setup.last_estimated_cohort
                                      ? fitted.gamma(fitted.cohort_index(cohort))
                                      : gamma_path(cohort - setup.last_estimated_cohort - 1);
                }
                cube.at(sim, x, h) = std::exp(
                    forecast_log_rate(fitted, static_cast<int>(x), k_values, gamma_value));
            }
    }
    return cube;
}

ForecastResult make_forecast(const FittedModel& fitted, int horizons, double alpha,
                             int n_sims, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw BadDims("alpha must lie in (0,1)");
    const SampleCube cube = simulate_paths(fitted, horizons, n_sims, seed);

    ForecastResult fc;
    fc.model = std::string(model_name(fitted.spec.kind));
    fc.ages = fitted.ages;
    fc.horizons = horizons;
    fc.alpha = alpha;
    fc.n_sims = n_sims;
    fc.seed = seed;
    fc.point.resize(static_cast<Eigen::Index>(cube.n_ages), horizons);
    fc.lower.resize(static_cast<Eigen::Index>(cube.n_ages), horizons);
    fc.upper.resize(static_cast<Eigen::Index>(cube.n_ages), horizons);

    std::vector<double> sample(cube.n_sims);
    for (std::size_t x = 0; x < cube.n_ages; ++x)
        for (std::size_t h = 0; h < cube.n_horizons; ++h) {
            for (std::size_t sim = 0; sim < cube.n_sims; ++sim)
                sample[sim] = cube.at(sim, x, h);
            std::sort(sample.begin(), sample.end());
            const auto xi = static_cast<Eigen::Index>(x);
            const auto hi = static_cast<Eigen::Index>(h);
            fc.lower(xi, hi) = sorted_quantile(sample, alpha / 2.0);
            fc.point(xi, hi) = sorted_quantile(sample, 0.5);
            fc.upper(xi, hi) = sorted_quantile(sample, 1.0 - alpha / 2.0);
        }
    return fc;
}

std::string serialize_forecast(const ForecastResult& fc) {
    std::string out;
    out += "# model=" + fc.model + " alpha=" + format_double(fc.alpha) +
           " n_sims=" + std::to_string(fc.n_sims) + " seed=" + std::to_string(fc.seed) +
           " generator=" + std::string(kNormalGeneratorName) + "\n";
    out += "age,horizon,point,lower,upper\n";
    for (Eigen::Index x = 0; x < fc.point.rows(); ++x)
        for (int h = 0; h < fc.horizons; ++h) {
            out += std::to_string(fc.ages[static_cast<std::size_t>(x)]);
            out += ',';
            out += std::to_string(h + 1);
            out += ',';
            out += format_double(fc.point(x, h));
            out += ',';
            out += format_double(fc.lower(x, h));
            out += ',';
            out += format_double(fc.upper(x, h));
            out += '\n';
        }
    return out;
}

} // namespace mortcast
