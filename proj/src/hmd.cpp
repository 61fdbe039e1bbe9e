#include "mortcast/hmd.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <set>
#include <sstream>

#include "mortcast/errors.hpp"
#include "mortcast/text.hpp"

namespace mortcast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* table_name(HmdKind kind) {
    switch (kind) {
        case HmdKind::Rates: return "rates";
        case HmdKind::Deaths: return "deaths";
        case HmdKind::Exposures: return "exposures";
    }
    return "?";
}

bool try_parse_int(std::string_view token, int& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

int parse_int_field(std::string_view token, const std::string& where) {
    int v = 0;
    if (!try_parse_int(token, v))
        throw MalformedRow(where + ": expected integer, got '" + std::string(token) + "'");
    return v;
}

// Age labels are plain integers except the open group, written "110+".
int parse_age_field(std::string_view token, const std::string& where) {
    std::string_view body = token;
    if (!body.empty() && body.back() == '+') body.remove_suffix(1);
    const int age = parse_int_field(body, where);
    if (age < 0) throw MalformedRow(where + ": negative age");
    return age;
}

double parse_value_field(std::string_view token, const std::string& where) {
    if (token == ".") return kNaN;
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw MalformedRow(where + ": expected number or '.', got '" + std::string(token) + "'");
    return v;
}

bool same_grid(const HmdTable& a, const HmdTable& b) {
    if (a.size() != b.size()) return false;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib)
        if (ia->first != ib->first) return false;
    return true;
}

std::string cell_label(int age, int year) {
    return "(age " + std::to_string(age) + ", year " + std::to_string(year) + ")";
}

} // namespace

HmdTable parse_hmd_table(std::istream& text, HmdKind kind, Sex sex) {
    HmdTable out;
    std::string line;
    int line_no = 0;
    bool in_body = false;
    while (std::getline(text, line)) {
        ++line_no;
        const auto fields = split_whitespace(line);
        if (fields.empty()) continue;
        if (!in_body) {
            int dummy = 0;
            if (!try_parse_int(fields[0], dummy)) continue; // still in the header block
            in_body = true;
        }
        const std::string where =
            std::string(table_name(kind)) + " line " + std::to_string(line_no);
        if (fields.size() != 5)
            throw MalformedRow(where + ": expected 5 columns, got " +
                               std::to_string(fields.size()));
        const int year = parse_int_field(fields[0], where);
        const int age = parse_age_field(fields[1], where);
        // Validate all three value columns, keep the requested one.
        const double female = parse_value_field(fields[2], where);
        const double male = parse_value_field(fields[3], where);
        parse_value_field(fields[4], where);
        const double value = sex == Sex::Female ? female : male;
        if (!out.emplace(std::make_pair(age, year), value).second)
            throw InconsistentYears(where + ": duplicate cell " + cell_label(age, year));
    }
    if (out.empty())
        throw EmptyInput(std::string(table_name(kind)) + ": no data rows");
    return out;
}

HmdTable parse_hmd_table(std::string_view text, HmdKind kind, Sex sex) {
    std::istringstream in{std::string(text)};
    return parse_hmd_table(in, kind, sex);
}

MortalitySurface build_surface(const HmdTable& rates, const HmdTable* deaths,
                               const HmdTable* exposures, std::string country, Sex sex,
                               int start_year) {
    if (rates.empty()) throw EmptyInput("build_surface: empty rate table");
    if (deaths && !same_grid(rates, *deaths))
        throw GridMismatch("deaths grid does not match rates grid");
    if (exposures && !same_grid(rates, *exposures))
        throw GridMismatch("exposures grid does not match rates grid");

    std::set<int> age_set;
    int first_data_year = std::numeric_limits<int>::max();
    int last_year = std::numeric_limits<int>::min();
    for (const auto& [key, value] : rates) {
        age_set.insert(key.first);
        first_data_year = std::min(first_data_year, key.second);
        last_year = std::max(last_year, key.second);
    }
    if (start_year > last_year)
        throw NoYearsAfterStart("no data in or after " + std::to_string(start_year));

    MortalitySurface s;
    s.country = std::move(country);
    s.sex = sex;
    s.ages.assign(age_set.begin(), age_set.end());
    if (s.ages.back() - s.ages.front() + 1 != static_cast<int>(s.ages.size()))
        throw GridMismatch("age labels are not contiguous");
    s.open_top = true; // the last HMD age group aggregates all higher ages
    const int first_year = std::max(start_year, first_data_year);
    for (int t = first_year; t <= last_year; ++t) s.years.push_back(t);

    const int p = s.n_ages();
    const int n = s.n_years();
    s.rates = Eigen::MatrixXd::Constant(p, n, kNaN);
    if (deaths) s.deaths = Eigen::MatrixXd::Constant(p, n, kNaN);
    if (exposures) s.exposures = Eigen::MatrixXd::Constant(p, n, kNaN);

    for (const auto& [key, value] : rates) {
        if (key.second < first_year) continue;
        const int x = key.first - s.ages.front();
        const int t = key.second - first_year;
        s.rates(x, t) = value;
        if (deaths) (*s.deaths)(x, t) = deaths->at(key);
        if (exposures) (*s.exposures)(x, t) = exposures->at(key);
    }

    // Rate files carry rounded ratios; recompute from counts where possible
    // so rates match deaths/exposures exactly.
    if (s.has_counts()) {
        for (int x = 0; x < p; ++x)
            for (int t = 0; t < n; ++t) {
                const double d = (*s.deaths)(x, t);
                const double e = (*s.exposures)(x, t);
                if (std::isfinite(d) && std::isfinite(e) && e > 0.0) s.rates(x, t) = d / e;
            }
    }
    return s;
}

MortalitySurface aggregate_open_age(const MortalitySurface& surface, int top) {
    if (surface.ages.empty() || top < surface.ages.front() || top > surface.ages.back())
        throw TopOutOfRange("top age " + std::to_string(top) + " outside surface ages");
    const int cut = top - surface.ages.front();
    const int p = cut + 1;
    const int n = surface.n_years();

    MortalitySurface out;
    out.country = surface.country;
    out.sex = surface.sex;
    out.ages.assign(surface.ages.begin(), surface.ages.begin() + p);
    out.open_top = true;
    out.years = surface.years;
    out.rates = surface.rates.topRows(p);
    if (surface.deaths) out.deaths = surface.deaths->topRows(p);
    if (surface.exposures) out.exposures = surface.exposures->topRows(p);
    for (const auto& rep : surface.repairs)
        if (rep.age <= top) out.repairs.push_back(rep);

    for (int t = 0; t < n; ++t) {
        // Plain ascending-age sums keep count conservation bit-exact.
        if (surface.deaths) {
            double sum = 0.0;
            for (int x = cut; x < surface.n_ages(); ++x) sum += (*surface.deaths)(x, t);
            (*out.deaths)(cut, t) = sum;
        }
        if (surface.exposures) {
            double sum = 0.0;
            for (int x = cut; x < surface.n_ages(); ++x) sum += (*surface.exposures)(x, t);
            (*out.exposures)(cut, t) = sum;
        }
        if (surface.has_counts()) {
            const double d = (*out.deaths)(cut, t);
            const double e = (*out.exposures)(cut, t);
            out.rates(cut, t) = e > 0.0 ? d / e : kNaN;
        } else {
            double sum = 0.0;
            int count = 0;
            for (int x = cut; x < surface.n_ages(); ++x) {
                const double r = surface.rates(x, t);
                if (std::isfinite(r)) {
                    sum += r;
                    ++count;
                }
            }
            out.rates(cut, t) = count > 0 ? sum / count : kNaN;
        }
    }
    return out;
}

MortalitySurface truncate_ages(const MortalitySurface& surface, const AgeRange& range) {
    if (range.lower > range.upper) throw RangeOutOfBounds("inverted age range");
    if (surface.ages.empty() || range.lower < surface.ages.front() ||
        range.upper > surface.ages.back())
        throw RangeOutOfBounds("age range " + std::to_string(range.lower) + ".." +
                               std::to_string(range.upper) + " outside surface ages");
    const bool top_open = surface.open_top && range.upper == surface.ages.back();
    if (range.open_upper && !top_open)
        throw RangeOutOfBounds("no open age group at " + std::to_string(range.upper));

    const int lo = range.lower - surface.ages.front();
    const int rows = range.upper - range.lower + 1;

    MortalitySurface out;
    out.country = surface.country;
    out.sex = surface.sex;
    out.ages.assign(surface.ages.begin() + lo, surface.ages.begin() + lo + rows);
    out.open_top = top_open;
    out.years = surface.years;
    out.rates = surface.rates.middleRows(lo, rows);
    if (surface.deaths) out.deaths = surface.deaths->middleRows(lo, rows);
    if (surface.exposures) out.exposures = surface.exposures->middleRows(lo, rows);
    for (const auto& rep : surface.repairs)
        if (rep.age >= range.lower && rep.age <= range.upper) out.repairs.push_back(rep);
    return out;
}

MortalitySurface clean_rates(const MortalitySurface& surface) {
    MortalitySurface out = surface;
    const int p = surface.n_ages();
    const int n = surface.n_years();
    for (int t = 0; t < n; ++t) {
        std::vector<int> anchors; // ages with an originally valid positive rate
        for (int x = 0; x < p; ++x) {
            const double r = surface.rates(x, t);
            if (std::isfinite(r) && r > 0.0) anchors.push_back(x);
        }
        if (anchors.empty())
            throw UnrepairableColumn("year " + std::to_string(surface.years[t]) +
                                     " has no positive rates");
        for (int x = 0; x < p; ++x) {
            const double r = surface.rates(x, t);
            if (std::isfinite(r) && r > 0.0) continue;
            const auto above = std::lower_bound(anchors.begin(), anchors.end(), x);
            double repaired = 0.0;
            if (above == anchors.begin()) {
                repaired = surface.rates(*above, t);
            } else if (above == anchors.end()) {
                repaired = surface.rates(*(above - 1), t);
            } else {
                const int xa = *(above - 1);
                const int xb = *above;
                const double la = std::log(surface.rates(xa, t));
                const double lb = std::log(surface.rates(xb, t));
                const double w = static_cast<double>(x - xa) / (xb - xa);
                repaired = std::exp(la + w * (lb - la));
            }
            out.rates(x, t) = repaired;
            out.repairs.push_back({surface.ages[x], surface.years[t], r, repaired});
        }
        for (int x = 0; x < p; ++x) {
            const double r = out.rates(x, t);
            if (r > 1.0) {
                out.rates(x, t) = 1.0;
                out.repairs.push_back({surface.ages[x], surface.years[t], r, 1.0});
            }
        }
    }
    return out;
}

std::string serialize_surface(const MortalitySurface& surface) {
    if (surface.ages.empty() || surface.years.empty())
        throw EmptyInput("serialize_surface: empty surface");
    std::string out = "# country=" + surface.country + " sex=";
    out += sex_code(surface.sex);
    out += " start=" + std::to_string(surface.years.front());
    out += " open=";
    out += surface.open_top ? '1' : '0';
    out += '\n';
    const bool counts = surface.has_counts();
    out += counts ? "age,year,rate,deaths,exposures\n" : "age,year,rate\n";
    for (int x = 0; x < surface.n_ages(); ++x)
        for (int t = 0; t < surface.n_years(); ++t) {
            out += std::to_string(surface.ages[x]);
            out += ',';
            out += std::to_string(surface.years[t]);
            out += ',';
            out += format_double(surface.rates(x, t));
            if (counts) {
                out += ',';
                out += format_double((*surface.deaths)(x, t));
                out += ',';
                out += format_double((*surface.exposures)(x, t));
            }
            out += '\n';
        }
    return out;
}

MortalitySurface parse_surface(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;

    std::string country;
    char sex_ch = 0;
    int open_flag = -1;
    bool have_meta = false;
    bool have_header = false;
    bool counts = false;

    struct Cell {
        double rate, deaths, exposures;
    };
    std::map<std::pair<int, int>, Cell> cells;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed{trim(line)};
        if (trimmed.empty()) continue;
        const std::string where = "surface line " + std::to_string(line_no);
        if (trimmed[0] == '#') {
            for (const auto& token : split_whitespace(trimmed.substr(1))) {
                const auto eq = token.find('=');
                if (eq == std::string::npos) continue;
                const std::string key{token.substr(0, eq)};
                const std::string value{token.substr(eq + 1)};
                if (key == "country") country = value;
                else if (key == "sex" && value.size() == 1) sex_ch = value[0];
                else if (key == "open") open_flag = value == "1" ? 1 : 0;
            }
            have_meta = true;
            continue;
        }
        if (!have_header) {
            if (trimmed == "age,year,rate,deaths,exposures") counts = true;
            else if (trimmed != "age,year,rate")
                throw MalformedRow(where + ": unrecognized header '" + trimmed + "'");
            have_header = true;
            continue;
        }
        const auto fields = split(trimmed, ',');
        if (fields.size() != (counts ? 5u : 3u))
            throw MalformedRow(where + ": expected " + std::to_string(counts ? 5 : 3) +
                               " fields, got " + std::to_string(fields.size()));
        const int age = parse_int_field(fields[0], where);
        const int year = parse_int_field(fields[1], where);
        Cell cell{parse_value_field(fields[2], where), kNaN, kNaN};
        if (counts) {
            cell.deaths = parse_value_field(fields[3], where);
            cell.exposures = parse_value_field(fields[4], where);
        }
        if (!cells.emplace(std::make_pair(age, year), cell).second)
            throw InconsistentYears(where + ": duplicate cell " + cell_label(age, year));
    }
    if (!have_meta || country.empty() || sex_ch == 0 || open_flag < 0)
        throw MalformedRow("surface: missing or incomplete metadata line");
    if (cells.empty()) throw EmptyInput("surface: no data rows");

    std::set<int> age_set;
    std::set<int> year_set;
    for (const auto& [key, cell] : cells) {
        age_set.insert(key.first);
        year_set.insert(key.second);
    }

    MortalitySurface s;
    s.country = country;
    s.sex = sex_from_code(std::string_view(&sex_ch, 1));
    s.ages.assign(age_set.begin(), age_set.end());
    s.years.assign(year_set.begin(), year_set.end());
    s.open_top = open_flag == 1;
    if (s.ages.back() - s.ages.front() + 1 != static_cast<int>(s.ages.size()))
        throw IncompleteGrid("surface: age labels are not contiguous");
    if (s.years.back() - s.years.front() + 1 != static_cast<int>(s.years.size()))
        throw IncompleteGrid("surface: years are not consecutive");
    const std::size_t expected =
        static_cast<std::size_t>(s.n_ages()) * static_cast<std::size_t>(s.n_years());
    if (cells.size() != expected)
        throw IncompleteGrid("surface: grid has holes");

    s.rates = Eigen::MatrixXd::Constant(s.n_ages(), s.n_years(), kNaN);
    if (counts) {
        s.deaths = Eigen::MatrixXd::Constant(s.n_ages(), s.n_years(), kNaN);
        s.exposures = Eigen::MatrixXd::Constant(s.n_ages(), s.n_years(), kNaN);
    }
    for (const auto& [key, cell] : cells) {
        const int x = key.first - s.ages.front();
        const int t = key.second - s.years.front();
        s.rates(x, t) = cell.rate;
        if (counts) {
            (*s.deaths)(x, t) = cell.deaths;
            (*s.exposures)(x, t) = cell.exposures;
        }
    }
    return s;
}

} // namespace mortcast
