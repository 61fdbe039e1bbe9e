#include "mortcast/model.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fit_internal.hpp"
#include "mortcast/errors.hpp"
#include "mortcast/text.hpp"

namespace mortcast {

std::string_view model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::LcPoisson: return "lc_poisson";
        case ModelKind::LcGaussian: return "lc_gaussian";
        case ModelKind::LcGaussian2: return "lc_gaussian2";
        case ModelKind::Apc: return "apc";
        case ModelKind::Plat: return "plat";
    }
    return "?";
}

ModelKind model_from_name(std::string_view name) {
    if (name == "lc_poisson") return ModelKind::LcPoisson;
    if (name == "lc_gaussian") return ModelKind::LcGaussian;
    if (name == "lc_gaussian2") return ModelKind::LcGaussian2;
    if (name == "apc") return ModelKind::Apc;
    if (name == "plat") return ModelKind::Plat;
    throw ConfigInvalid("unknown model '" + std::string(name) + "'");
}

namespace detail {

void validate_fit_surface(const MortalitySurface& surface) {
    if (surface.n_ages() < 3 || surface.n_years() < 3)
        throw DegenerateSurface("fitting needs at least 3 ages and 3 years");
    for (int t = 0; t < surface.n_years(); ++t)
        for (int x = 0; x < surface.n_ages(); ++x) {
            const double r = surface.rates(x, t);
            if (!std::isfinite(r) || r <= 0.0)
                throw DegenerateSurface("rate at age " + std::to_string(surface.ages[x]) +
                                        ", year " + std::to_string(surface.years[t]) +
                                        " is not positive; clean the surface first");
        }
}

double mean_age_of(const std::vector<int>& ages) {
    double sum = 0.0;
    for (int a : ages) sum += a;
    return sum / static_cast<double>(ages.size());
}

} // namespace detail

int FittedModel::cohort_index(int cohort) const {
    if (cohorts.empty() || cohort < cohorts.front() || cohort > cohorts.back())
        throw RangeOutOfBounds("cohort " + std::to_string(cohort) + " not in fitted range");
    return cohort - cohorts.front();
}

int FittedModel::first_estimated_cohort() const {
    for (std::size_t i = 0; i < gamma_estimated.size(); ++i)
        if (gamma_estimated[i]) return cohorts[i];
    throw RangeOutOfBounds("model has no estimated cohorts");
}

int FittedModel::last_estimated_cohort() const {
    for (std::size_t i = gamma_estimated.size(); i-- > 0;)
        if (gamma_estimated[i]) return cohorts[i];
    throw RangeOutOfBounds("model has no estimated cohorts");
}

double FittedModel::period_weight(int component, int age_idx) const {
    if (component == 0) return 1.0;
    const double d = mean_age - ages[age_idx];
    if (component == 1) return d;
    return d > 0.0 ? d : 0.0;
}

double FittedModel::log_rate(int age_idx, int year_idx) const {
    double eta = alpha(age_idx);
    if (!beta.empty()) {
        for (std::size_t j = 0; j < beta.size(); ++j)
            eta += beta[j](age_idx) * kappa[j](year_idx);
    } else {
        for (std::size_t j = 0; j < kappa.size(); ++j)
            eta += period_weight(static_cast<int>(j), age_idx) * kappa[j](year_idx);
    }
    if (!cohorts.empty()) eta += gamma(cohort_index(years[year_idx] - ages[age_idx]));
    return eta;
}

Eigen::MatrixXd FittedModel::fitted_log_rates() const {
    Eigen::MatrixXd out(n_ages(), n_years());
    for (int t = 0; t < n_years(); ++t)
        for (int x = 0; x < n_ages(); ++x) out(x, t) = log_rate(x, t);
    return out;
}

FittedModel fit(const ModelSpec& spec, const MortalitySurface& surface) {
    detail::validate_fit_surface(surface);
    if (spec.max_iter < 1 || !(spec.tol > 0.0))
        throw ConfigInvalid("model spec needs max_iter >= 1 and tol > 0");
    if (spec.plat_period_terms != 2 && spec.plat_period_terms != 3)
        throw ConfigInvalid("plat_period_terms must be 2 or 3");

    FittedModel result;
    switch (spec.kind) {
        case ModelKind::LcGaussian:
            result = fit_lc_gaussian(surface, 1);
            break;
        case ModelKind::LcGaussian2:
            result = fit_lc_gaussian(surface, 2);
            break;
        default: {
            if (!surface.exposures)
                throw MissingCounts("Poisson-likelihood fit needs exposures on the surface");
            if (surface.deaths) {
                switch (spec.kind) {
                    case ModelKind::LcPoisson: result = fit_lc_poisson(spec, surface); break;
                    case ModelKind::Apc: result = fit_apc(spec, surface); break;
                    default: result = fit_plat(spec, surface); break;
                }
            } else {
                // deaths synthesized from the surface's own rates and exposures
                MortalitySurface work = surface;
                work.deaths = work.rates.cwiseProduct(*work.exposures);
                switch (spec.kind) {
                    case ModelKind::LcPoisson: result = fit_lc_poisson(spec, work); break;
                    case ModelKind::Apc: result = fit_apc(spec, work); break;
                    default: result = fit_plat(spec, work); break;
                }
            }
            break;
        }
    }
    result.spec = spec;
    return result;
}

namespace {

void append_param(std::string& out, const char* name, int index, double value) {
    out += name;
    out += ',';
    out += std::to_string(index);
    out += ',';
    out += format_double(value);
    out += '\n';
}

} // namespace

std::string serialize_fitted_model(const FittedModel& model) {
    std::string out = "# model=";
    out += model_name(model.spec.kind);
    out += " plat_terms=" + std::to_string(model.spec.plat_period_terms);
    out += " max_iter=" + std::to_string(model.spec.max_iter);
    out += " tol=" + format_double(model.spec.tol);
    out += " thin=" + std::to_string(model.spec.thin_cohort_min_cells);
    out += " converged=";
    out += model.converged ? '1' : '0';
    out += " objective=" +
           format_double(model.loglik_trace.empty() ? 0.0 : model.loglik_trace.back());
    out += " sigma2=" + format_double(model.sigma2);
    out += " mean_age=" + format_double(model.mean_age);
    bool any_estimated = false;
    for (char e : model.gamma_estimated) any_estimated |= e != 0;
    if (any_estimated) {
        out += " gamma_est_first=" + std::to_string(model.first_estimated_cohort());
        out += " gamma_est_last=" + std::to_string(model.last_estimated_cohort());
    }
    out += '\n';
    out += "param,index,value\n";
    for (int x = 0; x < model.n_ages(); ++x)
        append_param(out, "alpha", model.ages[x], model.alpha(x));
    for (std::size_t j = 0; j < model.beta.size(); ++j) {
        const std::string name = "beta" + std::to_string(j + 1);
        for (int x = 0; x < model.n_ages(); ++x)
            append_param(out, name.c_str(), model.ages[x], model.beta[j](x));
    }
    for (std::size_t j = 0; j < model.kappa.size(); ++j) {
        const std::string name = "kappa" + std::to_string(j + 1);
        for (int t = 0; t < model.n_years(); ++t)
            append_param(out, name.c_str(), model.years[t], model.kappa[j](t));
    }
    for (std::size_t c = 0; c < model.cohorts.size(); ++c)
        append_param(out, "gamma", model.cohorts[c], model.gamma(static_cast<int>(c)));
    return out;
}

FittedModel parse_fitted_model(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    FittedModel model;
    bool have_meta = false;
    bool have_header = false;
    double objective = 0.0;
    int est_first = 0, est_last = -1;

    std::map<std::string, std::map<int, double>> params;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed{trim(line)};
        if (trimmed.empty()) continue;
        const std::string where = "model line " + std::to_string(line_no);
        if (trimmed[0] == '#') {
            for (const auto& token : split_whitespace(trimmed.substr(1))) {
                const auto eq = token.find('=');
                if (eq == std::string::npos) continue;
                const std::string key{token.substr(0, eq)};
                const std::string value{token.substr(eq + 1)};
                if (key == "model") model.spec.kind = model_from_name(value);
                else if (key == "plat_terms") model.spec.plat_period_terms = std::stoi(value);
                else if (key == "max_iter") model.spec.max_iter = std::stoi(value);
                else if (key == "tol") model.spec.tol = std::stod(value);
                else if (key == "thin") model.spec.thin_cohort_min_cells = std::stoi(value);
                else if (key == "converged") model.converged = value == "1";
                else if (key == "objective") objective = std::stod(value);
                else if (key == "sigma2") model.sigma2 = std::stod(value);
                else if (key == "mean_age") model.mean_age = std::stod(value);
                else if (key == "gamma_est_first") est_first = std::stoi(value);
                else if (key == "gamma_est_last") est_last = std::stoi(value);
            }
            have_meta = true;
            continue;
        }
        if (!have_header) {
            if (trimmed != "param,index,value")
                throw MalformedRow(where + ": unrecognized header '" + trimmed + "'");
            have_header = true;
            continue;
        }
        const auto fields = split(trimmed, ',');
        if (fields.size() != 3) throw MalformedRow(where + ": expected 3 fields");
        const std::string name{fields[0]};
        int index = 0;
        try {
            index = std::stoi(std::string(fields[1]));
        } catch (const std::exception&) {
            throw MalformedRow(where + ": bad index '" + std::string(fields[1]) + "'");
        }
        if (!params[name].emplace(index, std::stod(std::string(fields[2]))).second)
            throw MalformedRow(where + ": duplicate " + name + " entry");
    }
    if (!have_meta || !have_header || params.empty())
        throw EmptyInput("model: missing metadata or parameters");

    const auto take_vector = [&](const std::string& name, std::vector<int>* labels,
                                 Eigen::VectorXd& out) {
        const auto it = params.find(name);
        if (it == params.end()) throw MalformedRow("model: missing " + name + " block");
        out.resize(static_cast<int>(it->second.size()));
        int i = 0;
        int prev = 0;
        for (const auto& [index, value] : it->second) {
            if (i > 0 && index != prev + 1)
                throw IncompleteGrid("model: " + name + " indices are not contiguous");
            if (labels) labels->push_back(index);
            out(i++) = value;
            prev = index;
        }
    };

    take_vector("alpha", &model.ages, model.alpha);
    for (int j = 1; params.count("beta" + std::to_string(j)); ++j) {
        Eigen::VectorXd b;
        take_vector("beta" + std::to_string(j), nullptr, b);
        model.beta.push_back(std::move(b));
    }
    for (int j = 1; params.count("kappa" + std::to_string(j)); ++j) {
        Eigen::VectorXd k;
        take_vector("kappa" + std::to_string(j), j == 1 ? &model.years : nullptr, k);
        model.kappa.push_back(std::move(k));
    }
    if (params.count("gamma")) {
        take_vector("gamma", &model.cohorts, model.gamma);
        model.gamma_estimated.assign(model.cohorts.size(), 0);
        for (std::size_t c = 0; c < model.cohorts.size(); ++c)
            if (model.cohorts[c] >= est_first && model.cohorts[c] <= est_last)
                model.gamma_estimated[c] = 1;
    }
    model.loglik_trace = {objective};
    return model;
}

} // namespace mortcast
