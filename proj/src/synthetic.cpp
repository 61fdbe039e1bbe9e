#include "mortcast/synthetic.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "mortcast/errors.hpp"
#include "mortcast/rng.hpp"
#include "mortcast/text.hpp"

namespace mortcast {

namespace {
constexpr int kAges = 111; // 0..110+
}

Eigen::MatrixXd SyntheticTruth::true_rates() const {
    Eigen::MatrixXd rates(alpha.size(), kappa.size());
    for (Eigen::Index x = 0; x < alpha.size(); ++x)
        for (Eigen::Index t = 0; t < kappa.size(); ++t)
            rates(x, t) = std::exp(alpha(x) + beta(x) * kappa(t));
    return rates;
}

SyntheticTruth default_synthetic_truth(std::string country, Sex sex, int last_year) {
    SyntheticTruth truth;
    truth.country = std::move(country);
    truth.sex = sex;
    truth.last_year = last_year;

    truth.alpha.resize(kAges);
    truth.beta.resize(kAges);
    for (int x = 0; x < kAges; ++x) {
        // Infant hump plus Gompertz senescence; slightly lighter for women.
        const double level = sex == Sex::Female ? 2.6e-5 : 3.2e-5;
        truth.alpha(x) = std::log(0.002 * std::exp(-x / 8.0) + level * std::exp(0.095 * x));
        truth.beta(x) = std::exp(-x / 40.0);
    }
    truth.beta /= truth.beta.sum();

    const int n = last_year - truth.first_year + 1;
    truth.kappa.resize(n);
    for (int t = 0; t < n; ++t)
        truth.kappa(t) = 18.0 - 0.55 * t + 1.5 * std::sin(t / 4.0);
    return truth;
}

MortalitySurface generate_synthetic_country(const SyntheticTruth& truth, std::uint64_t seed) {
    if (truth.alpha.size() != kAges || truth.beta.size() != kAges)
        throw BadTruth("alpha and beta must cover ages 0..110");
    const int n = truth.last_year - truth.first_year + 1;
    if (n < 1 || truth.kappa.size() != n)
        throw BadTruth("kappa must cover " + std::to_string(n) + " years");
    if (!(truth.exposure_level > 0.0) || !std::isfinite(truth.exposure_level))
        throw BadTruth("exposure level must be positive and finite");
    if (!truth.alpha.allFinite() || !truth.beta.allFinite() || !truth.kappa.allFinite())
        throw BadTruth("truth parameters must be finite");
    if ((truth.beta.array() < 0.0).any())
        throw BadTruth("beta must be nonnegative");

    MortalitySurface s;
    s.country = truth.country;
    s.sex = truth.sex;
    s.open_top = true;
    for (int x = 0; x < kAges; ++x) s.ages.push_back(x);
    for (int t = 0; t < n; ++t) s.years.push_back(truth.first_year + t);

    std::mt19937_64 engine(derive_seed(
        seed, {hash_bytes(truth.country), static_cast<std::uint64_t>(sex_code(truth.sex))}));
    const Eigen::MatrixXd rates = truth.true_rates();
    Eigen::MatrixXd deaths(kAges, n);
    for (int x = 0; x < kAges; ++x)
        for (int t = 0; t < n; ++t) {
            std::poisson_distribution<long> draw(truth.exposure_level * rates(x, t));
            deaths(x, t) = static_cast<double>(draw(engine));
        }
    s.exposures = Eigen::MatrixXd::Constant(kAges, n, truth.exposure_level);
    s.deaths = deaths;
    s.rates = deaths / truth.exposure_level;
    return s;
}

std::string serialize_truth(const SyntheticTruth& truth) {
    std::string out = "# country=" + truth.country + " sex=" + std::string(1, sex_code(truth.sex)) +
                      " first=" + std::to_string(truth.first_year) +
                      " last=" + std::to_string(truth.last_year) +
                      " exposure=" + format_double(truth.exposure_level) + "\n";
    out += "param,index,value\n";
    const auto emit = [&out](std::string_view name, const Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
            out += std::string(name) + ',' + std::to_string(i) + ',' + format_double(v(i)) + '\n';
    };
    emit("alpha", truth.alpha);
    emit("beta", truth.beta);
    emit("kappa", truth.kappa);
    return out;
}

SyntheticTruth parse_truth(std::string_view text) {
    SyntheticTruth truth;
    truth.alpha.resize(0);
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<double> alpha, beta, kappa;
    bool saw_meta = false;
    while (std::getline(in, line)) {
        const std::string_view t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            for (const std::string& field : split_whitespace(t.substr(1))) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = field.substr(0, eq);
                const std::string value = field.substr(eq + 1);
                if (key == "country")
                    truth.country = value;
                else if (key == "sex")
                    truth.sex = sex_from_code(value);
                else if (key == "first")
                    truth.first_year = std::stoi(value);
                else if (key == "last")
                    truth.last_year = std::stoi(value);
                else if (key == "exposure")
                    truth.exposure_level = std::strtod(value.c_str(), nullptr);
            }
            saw_meta = true;
            continue;
        }
        if (t == "param,index,value") continue;
        const std::vector<std::string> f = split(t, ',');
        if (f.size() != 3) throw MalformedRow("expected param,index,value: " + std::string(t));
        const double v = std::strtod(f[2].c_str(), nullptr);
        if (f[0] == "alpha")
            alpha.push_back(v);
        else if (f[0] == "beta")
            beta.push_back(v);
        else if (f[0] == "kappa")
            kappa.push_back(v);
        else
            throw MalformedRow("unknown truth parameter: " + f[0]);
    }
    if (!saw_meta || alpha.empty()) throw EmptyInput("truth record is empty");
    truth.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    truth.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    truth.kappa = Eigen::Map<const Eigen::VectorXd>(kappa.data(), static_cast<Eigen::Index>(kappa.size()));
    return truth;
}

} // namespace mortcast
