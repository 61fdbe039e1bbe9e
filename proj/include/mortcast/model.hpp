#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "mortcast/surface.hpp"

namespace mortcast {

enum class ModelKind { LcPoisson, LcGaussian, LcGaussian2, Apc, Plat };

std::string_view model_name(ModelKind kind);
ModelKind model_from_name(std::string_view name);

/// Which models carry a cohort effect.
inline bool has_cohort_term(ModelKind kind) {
    return kind == ModelKind::Apc || kind == ModelKind::Plat;
}

struct ModelSpec {
    ModelKind kind = ModelKind::LcPoisson;
    int plat_period_terms = 3;     // 2 drops the (xbar-x)+ period term
    int max_iter = 2000;
    double tol = 1e-8;             // absolute objective change per cycle
    int thin_cohort_min_cells = 5; // cohorts seen in fewer cells are pinned to 0
};

/// Fitted parameters of one mortality model on one training surface.
///
/// Log-rate structure by kind:
///   LC family:  log m = alpha_x + sum_j beta[j]_x * kappa[j]_t
///   APC:        log m = alpha_x + kappa[0]_t + gamma_{t-x}
///   Plat:       log m = alpha_x + kappa[0]_t + (xbar-x) kappa[1]_t
///                       + (xbar-x)+ kappa[2]_t [3-term only] + gamma_{t-x}
///
/// Poisson fits store the objective as the log-likelihood relative to the
/// saturated model (= -deviance/2), which keeps tolerance checks meaningful
/// at large exposures; differences equal log-likelihood differences.
struct FittedModel {
    ModelSpec spec;
    std::vector<int> ages;
    std::vector<int> years;
    Eigen::VectorXd alpha;
    std::vector<Eigen::VectorXd> beta;
    std::vector<Eigen::VectorXd> kappa;
    std::vector<int> cohorts;          // labels t - x, ascending; empty unless APC/Plat
    Eigen::VectorXd gamma;             // aligned with cohorts
    std::vector<char> gamma_estimated; // 0 marks thin cohorts pinned during fitting
    double sigma2 = 0.0;               // mean squared residual of Gaussian fits
    std::vector<double> loglik_trace;  // objective per update cycle, first entry = initial
    bool converged = false;
    double mean_age = 0.0;             // xbar over the training ages

    int n_ages() const { return static_cast<int>(ages.size()); }
    int n_years() const { return static_cast<int>(years.size()); }

    int cohort_index(int cohort) const;
    int first_estimated_cohort() const;
    int last_estimated_cohort() const;

    /// log m at grid position (age row, year column) from the stored
    /// parameters; year_index may exceed the training window when kappa /
    /// gamma values for that point are supplied by a forecast path.
    double log_rate(int age_idx, int year_idx) const;

    /// Full fitted log-rate matrix over the training grid.
    Eigen::MatrixXd fitted_log_rates() const;

    /// Weight of period component j at a given age row: 1 for kappa1 (and
    /// all LC loadings come from beta instead), (xbar-x) for kappa2,
    /// (xbar-x)+ for kappa3.
    double period_weight(int component, int age_idx) const;
};

/// Validates the surface, synthesizes deaths from rates and exposures for
/// Poisson-likelihood fits when the deaths matrix is absent, and dispatches
/// to the per-model fitter.
FittedModel fit(const ModelSpec& spec, const MortalitySurface& surface);

FittedModel fit_lc_gaussian(const MortalitySurface& surface, int n_components);
FittedModel fit_lc_poisson(const ModelSpec& spec, const MortalitySurface& surface);
FittedModel fit_apc(const ModelSpec& spec, const MortalitySurface& surface);
FittedModel fit_plat(const ModelSpec& spec, const MortalitySurface& surface);

/// CSV bundle `param,index,value` with one metadata line carrying the spec,
/// convergence flag, and final objective.  Values round-trip bit-exactly.
std::string serialize_fitted_model(const FittedModel& model);
FittedModel parse_fitted_model(std::string_view text);

} // namespace mortcast
