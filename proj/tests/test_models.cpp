#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "mortcast/errors.hpp"
#include "mortcast/model.hpp"
#include "mortcast/surface.hpp"

using namespace mortcast;

namespace {

double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    return (got - want).norm() / std::max(want.norm(), 1e-12);
}

MortalitySurface surface_from_log_rates(std::vector<int> ages, std::vector<int> years,
                                        const Eigen::MatrixXd& logm) {
    MortalitySurface s;
    s.country = "SYN";
    s.sex = Sex::Female;
    s.ages = std::move(ages);
    s.years = std::move(years);
    s.open_top = false;
    s.rates = logm.array().exp().matrix();
    return s;
}

// Exact Poisson mean surface: deaths = exposure * exp(eta), rates = D/E.
MortalitySurface surface_from_counts(std::vector<int> ages, std::vector<int> years,
                                     const Eigen::MatrixXd& eta, double exposure) {
    MortalitySurface s;
    s.country = "SYN";
    s.sex = Sex::Female;
    s.ages = std::move(ages);
    s.years = std::move(years);
    s.open_top = false;
    s.exposures =
        Eigen::MatrixXd::Constant(eta.rows(), eta.cols(), exposure);
    s.deaths = exposure * eta.array().exp().matrix();
    s.rates = s.deaths->cwiseQuotient(*s.exposures);
    return s;
}

std::vector<int> iota_vec(int first, int count) {
    std::vector<int> v(count);
    std::iota(v.begin(), v.end(), first);
    return v;
}

void check_monotone_trace(const FittedModel& m) {
    for (std::size_t i = 1; i < m.loglik_trace.size(); ++i)
        REQUIRE(m.loglik_trace[i] >= m.loglik_trace[i - 1] - 1e-9);
}

void check_lc_normalization(const FittedModel& m) {
    for (const auto& b : m.beta) REQUIRE(std::abs(b.sum() - 1.0) < 1e-10);
    for (const auto& k : m.kappa) REQUIRE(std::abs(k.sum()) < 1e-10 * (1.0 + k.norm()));
}

// Sums over the estimated cohorts, where the constraints are imposed.
void check_cohort_constraints(const FittedModel& m, bool quadratic) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, scale = 0.0;
    for (std::size_t c = 0; c < m.cohorts.size(); ++c) {
        if (!m.gamma_estimated[c]) continue;
        const double g = m.gamma(static_cast<int>(c));
        s0 += g;
        s1 += m.cohorts[c] * g;
        s2 += static_cast<double>(m.cohorts[c]) * m.cohorts[c] * g;
        scale = std::max(scale, std::abs(g));
    }
    const double tol = 1e-8 * std::max(1.0, scale) * 4e6;
    REQUIRE(std::abs(s0) < 1e-8 * std::max(1.0, scale) * 2e3);
    REQUIRE(std::abs(s1) < tol);
    if (quadratic) REQUIRE(std::abs(s2) < tol * 2e3);
}

} // namespace

TEST_CASE("LC-Gaussian on a constant surface gives flat loadings and zero index") {
    const int p = 5, n = 6;
    Eigen::MatrixXd logm(p, n);
    for (int x = 0; x < p; ++x) logm.row(x).setConstant(-4.0 + 0.1 * x);
    const auto s = surface_from_log_rates(iota_vec(60, p), iota_vec(2000, n), logm);
    const auto m = fit_lc_gaussian(s, 1);
    REQUIRE(m.converged);
    for (int x = 0; x < p; ++x) {
        REQUIRE(m.alpha(x) == Catch::Approx(-4.0 + 0.1 * x).margin(1e-12));
        REQUIRE(m.beta[0](x) == Catch::Approx(1.0 / p).margin(1e-12));
    }
    REQUIRE(m.kappa[0].cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("LC-Gaussian recovers an exact two-factor structure") {
    // Hand-built orthonormal factors with known singular values 2 and 0.5.
    Eigen::VectorXd u1(6), u2(6), v1(5), v2(5);
    u1 << 3, 2, 1, 1, 2, 3;
    u2 << 1, -1, -1, -1, -1, 1;
    v1 << -2, -1, 0, 1, 2;
    v2 << 2, -1, -2, -1, 2;
    u1.normalize();
    u2.normalize();
    v1.normalize();
    v2.normalize();
    const double s1 = 2.0, s2 = 0.5;

    Eigen::VectorXd a(6);
    for (int x = 0; x < 6; ++x) a(x) = -4.0 - 0.05 * x;
    const Eigen::MatrixXd centered = s1 * u1 * v1.transpose() + s2 * u2 * v2.transpose();
    const Eigen::MatrixXd logm = a.replicate(1, 5) + centered;
    const auto s = surface_from_log_rates(iota_vec(60, 6), iota_vec(2000, 5), logm);

    SECTION("two components reproduce the surface exactly") {
        const auto m = fit_lc_gaussian(s, 2);
        REQUIRE(m.beta.size() == 2);
        check_lc_normalization(m);
        REQUIRE(m.sigma2 * 30.0 < 1e-18);
        REQUIRE((m.fitted_log_rates() - logm).cwiseAbs().maxCoeff() < 1e-10);
        // component recovery up to the declared normalization
        REQUIRE(rel_err(m.beta[0], u1 / u1.sum()) < 1e-10);
        REQUIRE(rel_err(m.kappa[0], s1 * u1.sum() * v1) < 1e-10);
        REQUIRE(rel_err(m.beta[1], u2 / u2.sum()) < 1e-10);
        REQUIRE(rel_err(m.kappa[1], s2 * u2.sum() * v2) < 1e-10);
    }

    SECTION("one component leaves exactly the second singular value squared") {
        const auto m = fit_lc_gaussian(s, 1);
        REQUIRE(m.beta.size() == 1);
        REQUIRE(m.sigma2 * 30.0 == Catch::Approx(s2 * s2).epsilon(1e-10));
    }
}

TEST_CASE("LC-Poisson recovers a noiseless generating model") {
    const int p = 10, n = 15;
    Eigen::VectorXd a(p), b(p), k(n);
    for (int x = 0; x < p; ++x) {
        a(x) = -4.5 + 0.08 * x;
        b(x) = 1.0 + 0.15 * (x - 4.5);
    }
    b /= b.sum();
    for (int t = 0; t < n; ++t) k(t) = 3.0 - 6.0 * t / (n - 1.0);
    k.array() -= k.mean();

    const Eigen::MatrixXd eta = a.replicate(1, n) + b * k.transpose();
    const auto s = surface_from_counts(iota_vec(60, p), iota_vec(1990, n), eta, 1e5);
    ModelSpec spec;
    spec.kind = ModelKind::LcPoisson;
    const auto m = fit(spec, s);

    REQUIRE(m.converged);
    check_monotone_trace(m);
    check_lc_normalization(m);
    REQUIRE(rel_err(m.alpha, a) < 1e-4);
    REQUIRE(rel_err(m.beta[0], b) < 1e-4);
    REQUIRE(rel_err(m.kappa[0], k) < 1e-4);
    // objective is log-likelihood minus its saturated bound, so 0 at a perfect
    // fit; the upper slack absorbs summation noise across the 775 cells
    REQUIRE(m.loglik_trace.back() > -1e-6);
    REQUIRE(m.loglik_trace.back() <= 1e-8);
}

TEST_CASE("LC-Poisson fitted deaths honor the score equations") {
    const int p = 8, n = 12;
    Eigen::VectorXd a(p), k(n);
    for (int x = 0; x < p; ++x) a(x) = -4.0 + 0.1 * x;
    for (int t = 0; t < n; ++t) k(t) = 1.0 - 2.0 * t / (n - 1.0);
    k.array() -= k.mean();
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(p, 1.0 / p);

    const Eigen::MatrixXd eta = a.replicate(1, n) + b * k.transpose();
    auto s = surface_from_counts(iota_vec(60, p), iota_vec(2000, n), eta, 1e5);
    (*s.deaths)(3, 5) += 10.0; // break the exact structure
    s.rates = s.deaths->cwiseQuotient(*s.exposures);

    ModelSpec spec;
    spec.kind = ModelKind::LcPoisson;
    const auto m = fit(spec, s);
    REQUIRE(m.converged);

    const Eigen::MatrixXd fitted_deaths =
        s.exposures->cwiseProduct(m.fitted_log_rates().array().exp().matrix());
    // age totals match exactly at the optimum (score in alpha)
    for (int x = 0; x < p; ++x)
        REQUIRE(fitted_deaths.row(x).sum() ==
                Catch::Approx(s.deaths->row(x).sum()).epsilon(1e-8));
    // year totals match to high accuracy (score in kappa, near-uniform loading)
    for (int t = 0; t < n; ++t)
        REQUIRE(fitted_deaths.col(t).sum() ==
                Catch::Approx(s.deaths->col(t).sum()).epsilon(1e-6));
}

TEST_CASE("Poisson fits reject unusable surfaces") {
    const int p = 4, n = 5;
    const Eigen::MatrixXd eta = Eigen::MatrixXd::Constant(p, n, -4.0);
    auto s = surface_from_counts(iota_vec(60, p), iota_vec(2000, n), eta, 1e4);

    SECTION("deaths with zero exposure") {
        (*s.exposures)(1, 1) = 0.0;
        ModelSpec spec;
        spec.kind = ModelKind::LcPoisson;
        REQUIRE_THROWS_AS(fit(spec, s), NonFiniteObjective);
    }

    SECTION("missing exposures entirely") {
        s.exposures.reset();
        s.deaths.reset();
        ModelSpec spec;
        spec.kind = ModelKind::Apc;
        REQUIRE_THROWS_AS(fit(spec, s), MissingCounts);
    }

    SECTION("too few years") {
        MortalitySurface tiny;
        tiny.ages = iota_vec(60, 4);
        tiny.years = iota_vec(2000, 2);
        tiny.rates = Eigen::MatrixXd::Constant(4, 2, 0.01);
        ModelSpec spec;
        spec.kind = ModelKind::LcGaussian;
        REQUIRE_THROWS_AS(fit(spec, tiny), DegenerateSurface);
    }

    SECTION("unclean rates") {
        s.rates(0, 0) = 0.0;
        ModelSpec spec;
        spec.kind = ModelKind::LcGaussian;
        REQUIRE_THROWS_AS(fit(spec, s), DegenerateSurface);
    }
}

TEST_CASE("fit synthesizes deaths from rates when only exposures are present") {
    const int p = 6, n = 10;
    Eigen::VectorXd a(p), k(n);
    for (int x = 0; x < p; ++x) a(x) = -4.0 + 0.12 * x;
    for (int t = 0; t < n; ++t) k(t) = 0.8 - 1.6 * t / (n - 1.0);
    k.array() -= k.mean();
    const Eigen::MatrixXd eta =
        a.replicate(1, n) + Eigen::VectorXd::Constant(p, 1.0 / p) * k.transpose();
    auto s = surface_from_counts(iota_vec(60, p), iota_vec(2000, n), eta, 1e5);

    ModelSpec spec;
    spec.kind = ModelKind::LcPoisson;
    const auto with_deaths = fit(spec, s);
    auto no_deaths = s;
    no_deaths.deaths.reset();
    const auto synthesized = fit(spec, no_deaths);
    REQUIRE(with_deaths.alpha == synthesized.alpha);
    REQUIRE(with_deaths.kappa[0] == synthesized.kappa[0]);
}

namespace {

// Cohort truth: nonzero on the well-observed cohorts, zero on the thin
// corners, and orthogonal to the constraint polynomials over the estimated
// set so the fitted rotation has nothing to remove.
Eigen::VectorXd make_gamma(const std::vector<int>& cohorts, const std::vector<char>& estimated,
                           bool quadratic) {
    const int n = static_cast<int>(cohorts.size());
    std::vector<int> est;
    for (int c = 0; c < n; ++c)
        if (estimated[c]) est.push_back(c);
    double cbar = 0.0;
    for (int c : est) cbar += cohorts[c];
    cbar /= static_cast<double>(est.size());

    Eigen::VectorXd raw = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < est.size(); ++i)
        raw(est[i]) = 0.05 * std::sin(0.9 * (cohorts[est[i]] - cbar));

    const int cols = quadratic ? 3 : 2;
    Eigen::MatrixXd X(static_cast<int>(est.size()), cols);
    Eigen::VectorXd y(static_cast<int>(est.size()));
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double u = cohorts[est[i]] - cbar;
        X(static_cast<int>(i), 0) = 1.0;
        X(static_cast<int>(i), 1) = u;
        if (quadratic) X(static_cast<int>(i), 2) = u * u;
        y(static_cast<int>(i)) = raw(est[i]);
    }
    const Eigen::VectorXd psi = X.colPivHouseholderQr().solve(y);
    for (std::size_t i = 0; i < est.size(); ++i) {
        const double u = cohorts[est[i]] - cbar;
        double trend = psi(0) + psi(1) * u;
        if (quadratic) trend += psi(2) * u * u;
        raw(est[i]) -= trend;
    }
    return raw;
}

std::vector<char> cohort_mask(const std::vector<int>& ages, const std::vector<int>& years,
                              int min_cells) {
    const int first = years.front() - ages.back();
    const int last = years.back() - ages.front();
    std::vector<int> counts(last - first + 1, 0);
    for (int year : years)
        for (int age : ages) ++counts[year - age - first];
    std::vector<char> mask(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) mask[i] = counts[i] >= min_cells ? 1 : 0;
    return mask;
}

} // namespace

TEST_CASE("APC recovers a noiseless cohort model and honors its constraints") {
    const auto ages = iota_vec(60, 16);
    const auto years = iota_vec(1990, 20);
    const int p = 16, n = 20;

    Eigen::VectorXd a(p), k(n);
    for (int x = 0; x < p; ++x) a(x) = -4.6 + 0.09 * x;
    for (int t = 0; t < n; ++t) k(t) = 0.5 - 1.0 * t / (n - 1.0);
    k.array() -= k.mean();

    const auto mask = cohort_mask(ages, years, 5);
    std::vector<int> cohorts;
    for (int c = years.front() - ages.back(); c <= years.back() - ages.front(); ++c)
        cohorts.push_back(c);
    const Eigen::VectorXd gamma = make_gamma(cohorts, mask, false);

    Eigen::MatrixXd eta(p, n);
    for (int t = 0; t < n; ++t)
        for (int x = 0; x < p; ++x)
            eta(x, t) = a(x) + k(t) + gamma(years[t] - ages[x] - cohorts.front());
    const auto s = surface_from_counts(ages, years, eta, 1e6);

    ModelSpec spec;
    spec.kind = ModelKind::Apc;
    const auto m = fit(spec, s);
    REQUIRE(m.converged);
    check_monotone_trace(m);
    check_cohort_constraints(m, false);
    REQUIRE(m.cohorts == cohorts);
    REQUIRE(m.gamma_estimated == mask);

    REQUIRE(rel_err(m.alpha, a) < 1e-3);
    REQUIRE(rel_err(m.kappa[0], k) < 1e-3);
    Eigen::VectorXd gamma_est_true = gamma, gamma_est_fit = m.gamma;
    for (std::size_t c = 0; c < cohorts.size(); ++c)
        if (!mask[c]) gamma_est_true(c) = gamma_est_fit(c) = 0.0;
    REQUIRE(rel_err(gamma_est_fit, gamma_est_true) < 2e-3);
    REQUIRE((m.fitted_log_rates() - eta).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("APC with no cohort signal shrinks gamma to zero") {
    const auto ages = iota_vec(60, 12);
    const auto years = iota_vec(1995, 15);
    Eigen::VectorXd a(12), k(15);
    for (int x = 0; x < 12; ++x) a(x) = -4.2 + 0.1 * x;
    for (int t = 0; t < 15; ++t) k(t) = 0.6 - 1.2 * t / 14.0;
    k.array() -= k.mean();
    Eigen::MatrixXd eta(12, 15);
    for (int t = 0; t < 15; ++t)
        for (int x = 0; x < 12; ++x) eta(x, t) = a(x) + k(t);
    const auto s = surface_from_counts(ages, years, eta, 1e6);

    ModelSpec spec;
    spec.kind = ModelKind::Apc;
    const auto m = fit(spec, s);
    REQUIRE(m.converged);
    REQUIRE(m.gamma.cwiseAbs().maxCoeff() < 1e-3);
    REQUIRE(rel_err(m.alpha, a) < 1e-3);
}

TEST_CASE("Plat recovers a noiseless three-term model") {
    const auto ages = iota_vec(50, 31);
    const auto years = iota_vec(1985, 25);
    const int p = 31, n = 25;
    const double xbar = 65.0;

    Eigen::VectorXd a(p), k1(n), k2(n), k3(n);
    for (int x = 0; x < p; ++x) a(x) = -5.5 + 0.07 * x;
    for (int t = 0; t < n; ++t) {
        k1(t) = 0.4 - 0.8 * t / (n - 1.0);
        k2(t) = 0.01 * std::sin(1.7 * t);
        k3(t) = 0.008 * std::cos(2.3 * t);
    }
    k1.array() -= k1.mean();
    k2.array() -= k2.mean();
    k3.array() -= k3.mean();

    const auto mask = cohort_mask(ages, years, 5);
    std::vector<int> cohorts;
    for (int c = years.front() - ages.back(); c <= years.back() - ages.front(); ++c)
        cohorts.push_back(c);
    const Eigen::VectorXd gamma = make_gamma(cohorts, mask, true);

    Eigen::MatrixXd eta(p, n);
    for (int t = 0; t < n; ++t)
        for (int x = 0; x < p; ++x) {
            const double w2 = xbar - ages[x];
            const double w3 = std::max(xbar - ages[x], 0.0);
            eta(x, t) = a(x) + k1(t) + w2 * k2(t) + w3 * k3(t) +
                        gamma(years[t] - ages[x] - cohorts.front());
        }
    const auto s = surface_from_counts(ages, years, eta, 1e6);

    ModelSpec spec;
    spec.kind = ModelKind::Plat;
    spec.plat_period_terms = 3;
    const auto m = fit(spec, s);
    REQUIRE(m.converged);
    check_monotone_trace(m);
    check_cohort_constraints(m, true);
    REQUIRE(m.kappa.size() == 3);
    REQUIRE(m.beta.empty());
    REQUIRE(m.mean_age == Catch::Approx(xbar));

    REQUIRE(rel_err(m.alpha, a) < 2e-3);
    REQUIRE(rel_err(m.kappa[0], k1) < 2e-3);
    REQUIRE(rel_err(m.kappa[1], k2) < 2e-2);
    REQUIRE(rel_err(m.kappa[2], k3) < 2e-2);
    REQUIRE((m.fitted_log_rates() - eta).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("two-term Plat drops the kinked period basis") {
    const auto ages = iota_vec(60, 16);
    const auto years = iota_vec(1995, 18);
    Eigen::VectorXd a(16), k1(18);
    for (int x = 0; x < 16; ++x) a(x) = -4.4 + 0.09 * x;
    for (int t = 0; t < 18; ++t) k1(t) = 0.4 - 0.8 * t / 17.0;
    k1.array() -= k1.mean();
    Eigen::MatrixXd eta(16, 18);
    for (int t = 0; t < 18; ++t)
        for (int x = 0; x < 16; ++x) eta(x, t) = a(x) + k1(t);
    const auto s = surface_from_counts(ages, years, eta, 1e6);

    ModelSpec spec;
    spec.kind = ModelKind::Plat;
    spec.plat_period_terms = 2;
    const auto m = fit(spec, s);
    REQUIRE(m.converged);
    REQUIRE(m.kappa.size() == 2);
    check_cohort_constraints(m, false);
    REQUIRE((m.fitted_log_rates() - eta).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("Plat attains at least the APC likelihood on shared data") {
    const auto ages = iota_vec(60, 16);
    const auto years = iota_vec(1990, 20);
    Eigen::MatrixXd eta(16, 20);
    for (int t = 0; t < 20; ++t)
        for (int x = 0; x < 16; ++x)
            eta(x, t) = -4.5 + 0.08 * x - 0.02 * t + 0.004 * x * std::sin(0.5 * t);
    const auto s = surface_from_counts(ages, years, eta, 1e5);

    ModelSpec apc_spec;
    apc_spec.kind = ModelKind::Apc;
    ModelSpec plat_spec;
    plat_spec.kind = ModelKind::Plat;
    plat_spec.plat_period_terms = 2;
    const auto apc = fit(apc_spec, s);
    const auto plat = fit(plat_spec, s);
    REQUIRE(plat.loglik_trace.back() >= apc.loglik_trace.back() - 1e-6);
}

TEST_CASE("fitted models serialize and parse back bit-exactly") {
    const auto ages = iota_vec(60, 10);
    const auto years = iota_vec(2000, 12);
    Eigen::VectorXd a(10), k(12);
    for (int x = 0; x < 10; ++x) a(x) = -4.1 + 0.07 * x;
    for (int t = 0; t < 12; ++t) k(t) = 0.3 - 0.6 * t / 11.0;
    k.array() -= k.mean();
    Eigen::MatrixXd eta(10, 12);

    for (ModelKind kind : {ModelKind::LcPoisson, ModelKind::LcGaussian2, ModelKind::Apc,
                           ModelKind::Plat}) {
        for (int t = 0; t < 12; ++t)
            for (int x = 0; x < 10; ++x) eta(x, t) = a(x) + k(t) / 10.0;
        const auto s = surface_from_counts(ages, years, eta, 1e5);
        ModelSpec spec;
        spec.kind = kind;
        spec.plat_period_terms = 2;
        const auto m = fit(spec, s);
        const auto back = parse_fitted_model(serialize_fitted_model(m));
        REQUIRE(back.spec.kind == m.spec.kind);
        REQUIRE(back.ages == m.ages);
        REQUIRE(back.years == m.years);
        REQUIRE(back.alpha == m.alpha);
        REQUIRE(back.beta.size() == m.beta.size());
        for (std::size_t j = 0; j < m.beta.size(); ++j) REQUIRE(back.beta[j] == m.beta[j]);
        REQUIRE(back.kappa.size() == m.kappa.size());
        for (std::size_t j = 0; j < m.kappa.size(); ++j) REQUIRE(back.kappa[j] == m.kappa[j]);
        REQUIRE(back.cohorts == m.cohorts);
        if (!m.cohorts.empty()) {
            REQUIRE(back.gamma == m.gamma);
            REQUIRE(back.gamma_estimated == m.gamma_estimated);
        }
        REQUIRE(back.converged == m.converged);
        REQUIRE(back.mean_age == m.mean_age);
        REQUIRE(back.sigma2 == m.sigma2);
    }
}
