#include <Eigen/SVD>
#include <cmath>

#include "fit_internal.hpp"
#include "mortcast/model.hpp"

namespace mortcast {

// Least-squares Lee-Carter: alpha is the row mean of the log rates and the
// components are the leading singular triplets of the centered matrix.
// Each triplet (u, s, v) is stored as b = u / sum(u), k = s * sum(u) * v, so
// sum(b) = 1 and b k' = u s v' exactly; the scaling also resolves the SVD
// sign ambiguity, because flipping (u, v) leaves both b and k unchanged.
FittedModel fit_lc_gaussian(const MortalitySurface& surface, int n_components) {
    detail::validate_fit_surface(surface);
    if (n_components != 1 && n_components != 2)
        throw ConfigInvalid("LC-Gaussian supports 1 or 2 components");

    const int p = surface.n_ages();
    const int n = surface.n_years();

    FittedModel model;
    model.spec.kind = n_components == 1 ? ModelKind::LcGaussian : ModelKind::LcGaussian2;
    model.ages = surface.ages;
    model.years = surface.years;
    model.mean_age = detail::mean_age_of(surface.ages);

    const Eigen::MatrixXd logm = surface.rates.array().log().matrix();
    model.alpha = logm.rowwise().mean();
    Eigen::MatrixXd centered = logm - model.alpha.replicate(1, n);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double tiny = 1e-13 * std::max(sv(0), 1.0);

    for (int j = 0; j < n_components; ++j) {
        Eigen::VectorXd b, k;
        if (j >= sv.size() || sv(j) <= tiny) {
            // No variation left in this direction: flat loading, still k = 0.
            b = Eigen::VectorXd::Constant(p, 1.0 / p);
            k = Eigen::VectorXd::Zero(n);
        } else {
            const Eigen::VectorXd u = svd.matrixU().col(j);
            const double scale = u.sum();
            if (scale == 0.0)
                throw DegenerateSurface("LC loading sums to zero; normalization undefined");
            b = u / scale;
            k = sv(j) * scale * svd.matrixV().col(j);
        }
        // Rounding can leave k a hair off center; absorb the mean into alpha.
        const double m = k.mean();
        model.alpha += b * m;
        k.array() -= m;
        model.beta.push_back(std::move(b));
        model.kappa.push_back(std::move(k));
    }

    const Eigen::MatrixXd residual = logm - model.fitted_log_rates();
    const double sse = residual.squaredNorm();
    model.sigma2 = sse / static_cast<double>(p * n);
    model.loglik_trace = {-sse};
    model.converged = true;
    return model;
}

} // namespace mortcast
