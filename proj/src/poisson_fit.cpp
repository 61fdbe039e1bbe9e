#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "fit_internal.hpp"
#include "mortcast/model.hpp"

namespace mortcast {

namespace {

// Maximizes the Poisson log-likelihood of D ~ Poisson(E * exp(eta)) by
// cycling exact one-dimensional Newton updates over parameter blocks whose
// likelihood Hessian is diagonal (age effects, each period index, loadings,
// cohort effects).  Every block applies step-halving until the objective is
// non-decreasing, so the recorded trace is monotone by construction.
//
// The objective is the log-likelihood relative to the saturated model,
// sum D*log(nu/D) + D - nu with nu = E*exp(eta) (a cell with D=0 contributes
// -nu).  This equals -deviance/2; differences match log-likelihood
// differences exactly, while the magnitude stays small enough near the
// optimum that an absolute tolerance of 1e-8 is meaningful even when
// exposures reach 1e7.
class PoissonFitter {
  public:
    PoissonFitter(const ModelSpec& spec, const MortalitySurface& surface, bool lc_loading,
                  int period_terms, bool cohort_term)
        : spec_(spec), lc_(lc_loading), cohort_(cohort_term) {
        if (!surface.deaths || !surface.exposures)
            throw MissingCounts("Poisson fit needs deaths and exposures");
        ages_ = surface.ages;
        years_ = surface.years;
        p_ = surface.n_ages();
        n_ = surface.n_years();
        D_ = *surface.deaths;
        E_ = *surface.exposures;
        xbar_ = detail::mean_age_of(ages_);

        // Constant part of the objective: log(E) - log(D) where D > 0.
        C_ = Eigen::MatrixXd::Zero(p_, n_);
        for (int t = 0; t < n_; ++t)
            for (int x = 0; x < p_; ++x)
                if (D_(x, t) > 0.0) C_(x, t) = std::log(E_(x, t)) - std::log(D_(x, t));

        a_.resize(p_);
        for (int x = 0; x < p_; ++x) {
            const double dsum = D_.row(x).sum();
            const double esum = E_.row(x).sum();
            a_(x) = esum > 0.0 ? std::log(std::max(dsum, 0.5) / esum) : 0.0;
        }
        if (lc_) b_ = Eigen::VectorXd::Constant(p_, 1.0 / p_);
        for (int j = 0; j < period_terms; ++j) k_.push_back(Eigen::VectorXd::Zero(n_));

        if (!lc_) {
            // Fixed period weights over ages: 1, (xbar - x), (xbar - x)+.
            weights_.push_back(Eigen::VectorXd::Ones(p_));
            if (period_terms >= 2) {
                Eigen::VectorXd w2(p_), w3(p_);
                for (int x = 0; x < p_; ++x) {
                    w2(x) = xbar_ - ages_[x];
                    w3(x) = std::max(xbar_ - ages_[x], 0.0);
                }
                weights_.push_back(w2);
                if (period_terms == 3) {
                    // Fit with the kinked basis orthogonalized against the
                    // first two; the raw (xbar-x)+ column overlaps them so
                    // much that coordinate updates crawl.  Coefficients are
                    // mapped back to the raw basis after fitting.
                    ortho_c1_ = w3.sum() / p_;
                    ortho_c2_ = w3.dot(w2) / w2.squaredNorm();
                    weights_.push_back(w3 - ortho_c1_ * weights_[0] - ortho_c2_ * w2);
                }
            }
        }

        if (cohort_) {
            const int first = years_.front() - ages_.back();
            const int last = years_.back() - ages_.front();
            for (int c = first; c <= last; ++c) cohorts_.push_back(c);
            cohort_offset_ = years_.front() - ages_.front() - first;
            std::vector<int> cells(cohorts_.size(), 0);
            for (int t = 0; t < n_; ++t)
                for (int x = 0; x < p_; ++x) ++cells[cohort_of(x, t)];
            estimated_.resize(cohorts_.size());
            for (std::size_t c = 0; c < cohorts_.size(); ++c)
                estimated_[c] = cells[c] >= spec.thin_cohort_min_cells ? 1 : 0;
            gamma_ = Eigen::VectorXd::Zero(static_cast<int>(cohorts_.size()));
        }
    }

    FittedModel run() {
        double obj = objective();
        if (!std::isfinite(obj))
            throw NonFiniteObjective("Poisson objective not finite at start "
                                     "(deaths with zero exposure?)");
        trace_.push_back(obj);
        bool converged = false;
        // Long-baseline acceleration: the valley the coordinate steps creep
        // along curves, so single-cycle extrapolation stalls; secants over
        // the last 25 and 250 cycles still point down the valley.
        Params anchor = snapshot();
        Params far_anchor = snapshot();
        for (int iter = 0; iter < spec_.max_iter; ++iter) {
            cycle(obj);
            if (iter % 25 == 24) {
                pattern_move(anchor, obj);
                anchor = snapshot();
            }
            if (iter % 250 == 249) {
                pattern_move(far_anchor, obj);
                far_anchor = snapshot();
            }
            trace_.push_back(obj);
            const double change = trace_[trace_.size() - 1] - trace_[trace_.size() - 2];
            if (std::abs(change) < spec_.tol) {
                converged = true;
                break;
            }
        }
        finalize();
        if (k_.size() == 3) {
            // Back to the raw (xbar-x)+ basis; sums stay zero.
            k_[0] -= ortho_c1_ * k_[2];
            k_[1] -= ortho_c2_ * k_[2];
        }

        FittedModel model;
        model.spec = spec_;
        model.ages = ages_;
        model.years = years_;
        model.alpha = a_;
        if (lc_) model.beta.push_back(b_);
        model.kappa = k_;
        model.cohorts = cohorts_;
        model.gamma = gamma_;
        model.gamma_estimated = estimated_;
        model.loglik_trace = trace_;
        model.converged = converged;
        model.mean_age = xbar_;
        return model;
    }

  private:
    int cohort_of(int x, int t) const { return t - x + cohort_offset_; }

    Eigen::MatrixXd eta() const {
        Eigen::MatrixXd out = a_.replicate(1, n_);
        if (lc_) {
            out.noalias() += b_ * k_[0].transpose();
        } else {
            for (std::size_t j = 0; j < k_.size(); ++j)
                out.noalias() += weights_[j] * k_[j].transpose();
        }
        if (cohort_)
            for (int t = 0; t < n_; ++t)
                for (int x = 0; x < p_; ++x) out(x, t) += gamma_(cohort_of(x, t));
        return out;
    }

    Eigen::MatrixXd nu() const {
        return E_.cwiseProduct(eta().array().exp().matrix());
    }

    double objective() const {
        const Eigen::ArrayXXd e = eta().array();
        const Eigen::ArrayXXd v = E_.array() * e.exp();
        return (D_.array() * (e + C_.array()) + D_.array() - v).sum();
    }

    // Applies param += step*delta with the largest step in {1, 1/2, ...}
    // that does not decrease the objective; keeps the old value if none does.
    void line_search(Eigen::VectorXd& param, const Eigen::VectorXd& delta, double& obj) {
        const Eigen::VectorXd saved = param;
        double step = 1.0;
        for (int i = 0; i < 40; ++i) {
            param = saved + step * delta;
            const double trial = objective();
            if (trial >= obj) {
                obj = trial;
                return;
            }
            step *= 0.5;
        }
        param = saved;
    }

    static Eigen::VectorXd safe_ratio(const Eigen::VectorXd& num, const Eigen::VectorXd& den) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(num.size());
        for (Eigen::Index i = 0; i < num.size(); ++i)
            if (den(i) > 0.0 && std::isfinite(num(i))) out(i) = num(i) / den(i);
        return out;
    }

    // Joint Newton step for the two Plat slope indices, whose bases
    // (xbar-x) and (xbar-x)+ overlap strongly; updating them one at a time
    // zigzags, the per-year 2x2 solve does not.
    void update_k23(double& obj) {
        const Eigen::MatrixXd v = nu();
        const Eigen::VectorXd& w2 = weights_[1];
        const Eigen::VectorXd& w3 = weights_[2];
        Eigen::VectorXd d2 = Eigen::VectorXd::Zero(n_), d3 = Eigen::VectorXd::Zero(n_);
        for (int t = 0; t < n_; ++t) {
            double g2 = 0, g3 = 0, s22 = 0, s23 = 0, s33 = 0;
            for (int x = 0; x < p_; ++x) {
                const double r = D_(x, t) - v(x, t);
                g2 += w2(x) * r;
                g3 += w3(x) * r;
                s22 += w2(x) * w2(x) * v(x, t);
                s23 += w2(x) * w3(x) * v(x, t);
                s33 += w3(x) * w3(x) * v(x, t);
            }
            const double det = s22 * s33 - s23 * s23;
            if (det > 1e-12 * std::max(s22 * s33, 1.0)) {
                d2(t) = (s33 * g2 - s23 * g3) / det;
                d3(t) = (s22 * g3 - s23 * g2) / det;
            } else if (s22 > 0.0) {
                d2(t) = g2 / s22;
            }
        }
        const Eigen::VectorXd saved2 = k_[1], saved3 = k_[2];
        double step = 1.0;
        for (int i = 0; i < 40; ++i) {
            k_[1] = saved2 + step * d2;
            k_[2] = saved3 + step * d3;
            const double trial = objective();
            if (trial >= obj) {
                obj = trial;
                return;
            }
            step *= 0.5;
        }
        k_[1] = saved2;
        k_[2] = saved3;
    }

    struct Params {
        Eigen::VectorXd a, b, gamma;
        std::vector<Eigen::VectorXd> k;
    };

    Params snapshot() const { return {a_, b_, gamma_, k_}; }

    void restore(const Params& s) {
        a_ = s.a;
        b_ = s.b;
        gamma_ = s.gamma;
        k_ = s.k;
    }

    void blend(const Params& base, const Params& dir, double f) {
        a_ = base.a + f * dir.a;
        if (b_.size() > 0) b_ = base.b + f * dir.b;
        if (gamma_.size() > 0) gamma_ = base.gamma + f * dir.gamma;
        for (std::size_t j = 0; j < k_.size(); ++j) k_[j] = base.k[j] + f * dir.k[j];
    }

    // Coordinate cycles creep along nearly flat ridges (the cohort trend is
    // almost interchangeable with the age/period effects).  Successive
    // cycle displacements line up with such a ridge, so extrapolating along
    // the last displacement with doubling steps escapes it; only improving
    // steps are accepted, keeping the trace monotone.
    void pattern_move(const Params& start, double& obj) {
        Params end = snapshot();
        Params dir = end;
        dir.a -= start.a;
        if (dir.b.size() > 0) dir.b -= start.b;
        if (dir.gamma.size() > 0) dir.gamma -= start.gamma;
        for (std::size_t j = 0; j < dir.k.size(); ++j) dir.k[j] -= start.k[j];

        double best_obj = obj;
        Params best = end;
        double f = 1.0;
        for (int i = 0; i < 30; ++i) {
            blend(end, dir, f);
            const double trial = objective();
            if (!(trial > best_obj)) break;
            best_obj = trial;
            best = snapshot();
            f *= 2.0;
        }
        restore(best);
        obj = best_obj;
    }

    void cycle(double& obj) {
        const Params start = snapshot();
        {
            const Eigen::MatrixXd v = nu();
            line_search(a_, safe_ratio((D_ - v).rowwise().sum(), v.rowwise().sum()), obj);
        }
        const std::size_t separate_k = k_.size() == 3 ? 1 : k_.size();
        for (std::size_t j = 0; j < separate_k; ++j) {
            const Eigen::MatrixXd v = nu();
            const Eigen::VectorXd w = lc_ ? b_ : weights_[j];
            const Eigen::VectorXd num = (D_ - v).transpose() * w;
            const Eigen::VectorXd den = v.transpose() * w.cwiseProduct(w);
            line_search(k_[j], safe_ratio(num, den), obj);
        }
        if (k_.size() == 3) update_k23(obj);
        if (lc_) {
            const Eigen::MatrixXd v = nu();
            const Eigen::VectorXd num = (D_ - v) * k_[0];
            const Eigen::VectorXd den = v * k_[0].cwiseProduct(k_[0]);
            line_search(b_, safe_ratio(num, den), obj);
        }
        if (cohort_) {
            const Eigen::MatrixXd v = nu();
            Eigen::VectorXd num = Eigen::VectorXd::Zero(gamma_.size());
            Eigen::VectorXd den = Eigen::VectorXd::Zero(gamma_.size());
            for (int t = 0; t < n_; ++t)
                for (int x = 0; x < p_; ++x) {
                    const int c = cohort_of(x, t);
                    num(c) += D_(x, t) - v(x, t);
                    den(c) += v(x, t);
                }
            Eigen::VectorXd delta = safe_ratio(num, den);
            for (Eigen::Index c = 0; c < delta.size(); ++c)
                if (!estimated_[static_cast<std::size_t>(c)]) delta(c) = 0.0;
            line_search(gamma_, delta, obj);

            // The gamma trend is (nearly) interchangeable with the age and
            // period effects; collapsing it every cycle stops the
            // coordinate steps from creeping along that ridge.  The
            // rotation is exact, so it is accepted unless floating-point
            // noise would make the recorded trace dip.
            const Eigen::VectorXd saved_a = a_;
            const std::vector<Eigen::VectorXd> saved_k = k_;
            const Eigen::VectorXd saved_gamma = gamma_;
            detrend_gamma(k_.size() >= 2 ? 2 : 1);
            const double trial = objective();
            if (trial >= obj) {
                obj = trial;
            } else {
                a_ = saved_a;
                k_ = saved_k;
                gamma_ = saved_gamma;
            }
        }
        pattern_move(start, obj);
    }

    // Exact reparametrizations after convergence: absorb gamma's polynomial
    // trend into the age and period effects, center every period index, and
    // scale the LC loading to sum to one.  None of these change fitted rates.
    void finalize() {
        // Quadratic gamma detrending whenever the (xbar-x) basis exists:
        // (t-x)^2 is then expressible through the other effects, so leaving
        // that component free would let the cohort index carry an arbitrary
        // quadratic ridge -- and a quadratic-in-t remainder in the first
        // period index, which a linear-drift random walk cannot extrapolate.
        if (cohort_) detrend_gamma(k_.size() >= 2 ? 2 : 1);
        if (lc_) {
            const double m = k_[0].mean();
            a_ += b_ * m;
            k_[0].array() -= m;
            const double s = b_.sum();
            if (s == 0.0) throw DegenerateSurface("LC loading sums to zero");
            b_ /= s;
            k_[0] *= s;
        } else {
            for (std::size_t j = 0; j < k_.size(); ++j) {
                const double m = k_[j].mean();
                a_ += weights_[j] * m;
                k_[j].array() -= m;
            }
        }
    }

    // Removes a polynomial trend of the given degree from gamma and absorbs
    // it into the age and period effects; exact on the fitted rates.
    // Quadratic detrending requires the (xbar-x) period basis.
    void detrend_gamma(int degree) {
        std::vector<int> est;
        for (std::size_t c = 0; c < cohorts_.size(); ++c)
            if (estimated_[c]) est.push_back(static_cast<int>(c));
        const int cols = degree + 1;
        if (static_cast<int>(est.size()) < cols) return; // not identifiable; leave as fitted

        double cbar = 0.0;
        for (int c : est) cbar += cohorts_[static_cast<std::size_t>(c)];
        cbar /= static_cast<double>(est.size());

        Eigen::MatrixXd X(static_cast<int>(est.size()), cols);
        Eigen::VectorXd y(static_cast<int>(est.size()));
        for (std::size_t i = 0; i < est.size(); ++i) {
            const double u = cohorts_[static_cast<std::size_t>(est[i])] - cbar;
            X(static_cast<int>(i), 0) = 1.0;
            X(static_cast<int>(i), 1) = u;
            if (cols == 3) X(static_cast<int>(i), 2) = u * u;
            y(static_cast<int>(i)) = gamma_(est[i]);
        }
        const Eigen::VectorXd psi = X.colPivHouseholderQr().solve(y);
        const double psi0 = psi(0);
        const double psi1 = psi(1);
        const double psi2 = cols == 3 ? psi(2) : 0.0;

        for (std::size_t c = 0; c < cohorts_.size(); ++c) {
            const double u = cohorts_[c] - cbar;
            gamma_(static_cast<int>(c)) -= psi0 + psi1 * u + psi2 * u * u;
        }
        for (int x = 0; x < p_; ++x) {
            const double age = ages_[x];
            a_(x) += psi0 - psi1 * age + psi2 * age * age;
        }
        for (int t = 0; t < n_; ++t) {
            const double tau = years_[t] - cbar;
            k_[0](t) += psi1 * tau + psi2 * tau * tau - 2.0 * psi2 * xbar_ * tau;
            if (psi2 != 0.0) k_[1](t) += 2.0 * psi2 * tau;
        }
    }

    ModelSpec spec_;
    bool lc_ = false;
    bool cohort_ = false;
    int p_ = 0, n_ = 0;
    std::vector<int> ages_, years_;
    double xbar_ = 0.0;
    Eigen::MatrixXd D_, E_, C_;
    Eigen::VectorXd a_, b_;
    std::vector<Eigen::VectorXd> k_;
    std::vector<Eigen::VectorXd> weights_;
    double ortho_c1_ = 0.0, ortho_c2_ = 0.0;
    std::vector<int> cohorts_;
    int cohort_offset_ = 0;
    std::vector<char> estimated_;
    Eigen::VectorXd gamma_;
    std::vector<double> trace_;
};

} // namespace

FittedModel fit_lc_poisson(const ModelSpec& spec, const MortalitySurface& surface) {
    detail::validate_fit_surface(surface);
    ModelSpec s = spec;
    s.kind = ModelKind::LcPoisson;
    return PoissonFitter(s, surface, true, 1, false).run();
}

FittedModel fit_apc(const ModelSpec& spec, const MortalitySurface& surface) {
    detail::validate_fit_surface(surface);
    ModelSpec s = spec;
    s.kind = ModelKind::Apc;
    return PoissonFitter(s, surface, false, 1, true).run();
}

FittedModel fit_plat(const ModelSpec& spec, const MortalitySurface& surface) {
    detail::validate_fit_surface(surface);
    if (spec.plat_period_terms != 2 && spec.plat_period_terms != 3)
        throw ConfigInvalid("plat_period_terms must be 2 or 3");
    ModelSpec s = spec;
    s.kind = ModelKind::Plat;
    return PoissonFitter(s, surface, false, s.plat_period_terms, true).run();
}

} // namespace mortcast
