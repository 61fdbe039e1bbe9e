#include "mortcast/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "mortcast/errors.hpp"
#include "mortcast/hmd.hpp"
#include "mortcast/rng.hpp"
#include "mortcast/synthetic.hpp"
#include "mortcast/text.hpp"

namespace fs = std::filesystem;

namespace mortcast {

const std::vector<std::pair<std::string, int>>& default_country_years() {
    static const std::vector<std::pair<std::string, int>> table = {
        {"AUS", 2014}, {"BEL", 2015}, {"CAN", 2011}, {"DEN", 2016}, {"FIN", 2015},
        {"FRA", 2016}, {"ITA", 2014}, {"JPN", 2016}, {"NET", 2016}, {"NZ", 2013},
        {"NOR", 2014}, {"PRT", 2015}, {"SPA", 2016}, {"SWE", 2016}, {"SWI", 2016},
        {"SCO", 2016}, {"EW", 2016},  {"IRE", 2014}, {"USA", 2016},
    };
    return table;
}

namespace {

int parse_config_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int parsed = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigInvalid("key " + key + " needs an integer, got '" + value + "'");
    }
}

double parse_config_real(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double parsed = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || value.empty())
        throw ConfigInvalid("key " + key + " needs a number, got '" + value + "'");
    return parsed;
}

bool parse_config_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw ConfigInvalid("key " + key + " needs a boolean, got '" + value + "'");
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> items;
    for (const std::string& item : split(value, ','))
        if (!item.empty()) items.push_back(item);
    return items;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingData("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

/// Keeps year columns with labels in [first, last]; last < 0 means no upper
/// bound.
MortalitySurface year_window(const MortalitySurface& s, int first, int last) {
    int lo = 0;
    while (lo < s.n_years() && s.years[static_cast<std::size_t>(lo)] < first) ++lo;
    int hi = s.n_years();
    if (last >= 0)
        while (hi > lo && s.years[static_cast<std::size_t>(hi - 1)] > last) --hi;
    if (lo >= hi)
        throw NoYearsAfterStart("no data years in " + std::to_string(first) + ".." +
                                (last >= 0 ? std::to_string(last) : std::string("end")));
    MortalitySurface out = s;
    out.years.assign(s.years.begin() + lo, s.years.begin() + hi);
    out.rates = s.rates.middleCols(lo, hi - lo);
    if (s.deaths) out.deaths = s.deaths->middleCols(lo, hi - lo);
    if (s.exposures) out.exposures = s.exposures->middleCols(lo, hi - lo);
    out.repairs.clear();
    for (const RateRepair& r : s.repairs)
        if (r.year >= out.years.front() && r.year <= out.years.back()) out.repairs.push_back(r);
    return out;
}

const char* metric_label(const std::string& metric) {
    if (metric == "mape") return "MAPE (%)";
    if (metric == "rmspe") return "RMSPE (%)";
    if (metric == "interval_score") return "mean interval score (x100)";
    throw ConfigInvalid("unknown metric: " + metric);
}

double cell_metric(const BacktestCell& cell, const std::string& metric) {
    if (metric == "mape") return cell.mape;
    if (metric == "rmspe") return cell.rmspe;
    if (metric == "interval_score") return cell.mean_interval_score;
    throw ConfigInvalid("unknown metric: " + metric);
}

} // namespace

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    for (const auto& [country, year] : default_country_years()) config.countries.push_back(country);

    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigInvalid("expected key=value, got '" + std::string(t) + "'");
        const std::string key{trim(t.substr(0, eq))};
        const std::string value{trim(t.substr(eq + 1))};

        if (key == "data_dir") {
            config.data_dir = value;
        } else if (key == "output_dir") {
            config.output_dir = value;
        } else if (key == "countries") {
            config.countries = parse_list(value);
        } else if (key == "sexes") {
            config.sexes.clear();
            for (const std::string& code : parse_list(value))
                config.sexes.push_back(sex_from_code(code));
        } else if (key == "models") {
            config.models.clear();
            for (const std::string& name : parse_list(value))
                config.models.push_back(model_from_name(name));
        } else if (key == "holdout") {
            config.holdout = parse_config_int(key, value);
        } else if (key == "alpha") {
            config.alpha = parse_config_real(key, value);
        } else if (key == "n_sims") {
            config.n_sims = parse_config_int(key, value);
        } else if (key == "seed") {
            try {
                std::size_t used = 0;
                config.seed = std::stoull(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw ConfigInvalid("key seed needs an unsigned integer, got '" + value + "'");
            }
        } else if (key == "start_year") {
            config.start_year = parse_config_int(key, value);
        } else if (key == "rmspe_outside_root") {
            config.rmspe_outside_root = parse_config_bool(key, value);
        } else if (key == "synthetic") {
            config.synthetic = parse_config_bool(key, value);
        } else if (key == "jobs") {
            config.jobs = parse_config_int(key, value);
        } else if (key.rfind("last_year.", 0) == 0) {
            const std::string country = key.substr(10);
            if (country.empty()) throw ConfigInvalid("last_year override without a country");
            config.last_year[country] = parse_config_int(key, value);
        } else {
            throw ConfigInvalid("unknown config key: " + key);
        }
    }
    return config;
}

void validate_config(const ExperimentConfig& config) {
    if (config.holdout < 1) throw ConfigInvalid("holdout must be at least 1");
    if (config.n_sims < 100) throw ConfigInvalid("n_sims must be at least 100");
    if (!(config.alpha > 0.0 && config.alpha < 1.0))
        throw ConfigInvalid("alpha must lie in (0,1)");
    if (config.countries.empty()) throw ConfigInvalid("no countries configured");
    if (config.sexes.empty()) throw ConfigInvalid("no sexes configured");
    if (config.models.empty()) throw ConfigInvalid("no models configured");
    if (config.jobs < 0) throw ConfigInvalid("jobs must be nonnegative");
}

int last_year_for(const ExperimentConfig& config, const std::string& country) {
    const auto it = config.last_year.find(country);
    if (it != config.last_year.end()) return it->second;
    for (const auto& [code, year] : default_country_years())
        if (code == country) return year;
    return -1;
}

ModelSpec model_spec_for(ModelKind kind, Strategy strategy) {
    ModelSpec spec;
    spec.kind = kind;
    if (kind == ModelKind::Plat)
        spec.plat_period_terms = strategy == Strategy::PartialFit ? 2 : 3;
    // Cohort models converge slowly on large surfaces (the cohort trend
    // creeps against the age/period effects), so give them a budget sized
    // for the full age range rather than the library default.
    if (has_cohort_term(kind))
        spec.max_iter = strategy == Strategy::PartialFit ? 6000 : 12000;
    return spec;
}

MortalitySurface load_country_surface(const ExperimentConfig& config,
                                      const std::string& country, Sex sex) {
    const int last = last_year_for(config, country);
    MortalitySurface s;
    if (config.synthetic) {
        const SyntheticTruth truth =
            default_synthetic_truth(country, sex, last >= 0 ? last : 2016);
        s = generate_synthetic_country(
            truth, derive_seed(config.seed, {hash_bytes(country),
                                             static_cast<std::uint64_t>(sex_code(sex))}));
        s = year_window(s, config.start_year, last);
    } else {
        std::string data_dir = config.data_dir;
        if (data_dir.empty()) {
            const char* env = std::getenv("MORTCAST_DATA_DIR");
            if (env != nullptr) data_dir = env;
        }
        if (data_dir.empty())
            throw MissingData("no data directory configured (set data_dir or MORTCAST_DATA_DIR)");

        const fs::path rates_path = fs::path(data_dir) / (country + ".Mx_1x1.txt");
        if (!fs::exists(rates_path)) throw MissingData("missing rates file " + rates_path.string());
        const HmdTable rates = parse_hmd_table(read_file(rates_path), HmdKind::Rates, sex);

        HmdTable deaths, exposures;
        bool have_deaths = false, have_exposures = false;
        const fs::path deaths_path = fs::path(data_dir) / (country + ".Deaths_1x1.txt");
        if (fs::exists(deaths_path)) {
            deaths = parse_hmd_table(read_file(deaths_path), HmdKind::Deaths, sex);
            have_deaths = true;
        }
        const fs::path exposures_path = fs::path(data_dir) / (country + ".Exposures_1x1.txt");
        if (fs::exists(exposures_path)) {
            exposures = parse_hmd_table(read_file(exposures_path), HmdKind::Exposures, sex);
            have_exposures = true;
        }
        s = build_surface(rates, have_deaths ? &deaths : nullptr,
                          have_exposures ? &exposures : nullptr, country, sex,
                          config.start_year);
        s = year_window(s, config.start_year, last);
    }
    return clean_rates(aggregate_open_age(s, 100));
}

void ReportTable::recompute_summary() {
    const Eigen::Index rows = values.rows(), cols = values.cols();
    mean_row = rows > 0 ? Eigen::VectorXd(values.colwise().mean())
                        : Eigen::VectorXd::Zero(cols);
    row_argmin.assign(static_cast<std::size_t>(rows), -1);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < cols; ++c)
            if (std::isfinite(values(r, c)) && values(r, c) < best) {
                best = values(r, c);
                row_argmin[static_cast<std::size_t>(r)] = static_cast<int>(c);
            }
    }
}

ReportTable build_table(const std::vector<BacktestCell>& cells, const std::string& metric,
                        int horizon, const std::string& sex) {
    metric_label(metric); // validates the name
    ReportTable table;
    table.metric = metric;
    table.horizon = horizon;
    table.sex = sex;

    std::vector<ModelKind> models;
    std::map<std::string, std::map<std::string, double>> by_country; // country -> column -> value
    for (const BacktestCell& cell : cells) {
        if (cell.horizon != horizon || cell.sex != sex) continue;
        if (std::find(table.row_labels.begin(), table.row_labels.end(), cell.country) ==
            table.row_labels.end())
            table.row_labels.push_back(cell.country);
        if (std::find(models.begin(), models.end(), cell.model) == models.end())
            models.push_back(cell.model);
        const std::string column = std::string(model_name(cell.model)) + '/' +
                                   std::string(strategy_name(cell.strategy));
        by_country[cell.country][column] =
            cell.failed ? std::numeric_limits<double>::quiet_NaN() : cell_metric(cell, metric);
    }
    for (ModelKind model : models)
        for (Strategy strategy : {Strategy::FullFitThenTruncate, Strategy::PartialFit})
            table.column_labels.push_back(std::string(model_name(model)) + '/' +
                                          std::string(strategy_name(strategy)));

    table.values.resize(static_cast<Eigen::Index>(table.row_labels.size()),
                        static_cast<Eigen::Index>(table.column_labels.size()));
    table.values.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        const auto& row = by_country[table.row_labels[r]];
        for (std::size_t c = 0; c < table.column_labels.size(); ++c) {
            const auto it = row.find(table.column_labels[c]);
            if (it != row.end())
                table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    it->second;
        }
    }
    table.recompute_summary();
    return table;
}

std::string render_table(const ReportTable& table) {
    std::size_t label_width = std::string("country").size();
    for (const std::string& label : table.row_labels) label_width = std::max(label_width, label.size());
    std::vector<std::size_t> widths;
    for (const std::string& label : table.column_labels)
        widths.push_back(std::max<std::size_t>(label.size(), 8));

    std::string out = std::string(metric_label(table.metric)) + " at horizon " +
                      std::to_string(table.horizon) + ", sex " + table.sex + "\n";
    const auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    out += pad("country", label_width);
    for (std::size_t c = 0; c < table.column_labels.size(); ++c)
        out += "  " + pad(table.column_labels[c], widths[c]);
    out += '\n';

    const auto emit_row = [&](const std::string& label, const Eigen::VectorXd& row, int argmin) {
        out += pad(label, label_width);
        for (Eigen::Index c = 0; c < row.size(); ++c) {
            std::string cellText = format_fixed(row(c), 2);
            if (argmin == static_cast<int>(c)) cellText += '*';
            out += "  " + pad(cellText, widths[static_cast<std::size_t>(c)]);
        }
        out += '\n';
    };
    for (std::size_t r = 0; r < table.row_labels.size(); ++r)
        emit_row(table.row_labels[r], table.values.row(static_cast<Eigen::Index>(r)),
                 table.row_argmin[r]);
    emit_row("mean", table.mean_row, -1);
    return out;
}

std::string table_to_csv(const ReportTable& table) {
    std::string out = "# metric=" + table.metric + " horizon=" + std::to_string(table.horizon) +
                      " sex=" + table.sex + "\n";
    out += "country";
    for (const std::string& label : table.column_labels) out += ',' + label;
    out += '\n';
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        out += table.row_labels[r];
        for (Eigen::Index c = 0; c < table.values.cols(); ++c)
            out += ',' + format_double(table.values(static_cast<Eigen::Index>(r), c));
        out += '\n';
    }
    out += "mean";
    for (Eigen::Index c = 0; c < table.mean_row.size(); ++c)
        out += ',' + format_double(table.mean_row(c));
    out += '\n';
    return out;
}

ReportTable table_from_csv(std::string_view text) {
    ReportTable table;
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<Eigen::VectorXd> rows;
    bool saw_meta = false, saw_header = false, saw_mean = false;
    while (std::getline(in, line)) {
        const std::string_view t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            for (const std::string& field : split_whitespace(t.substr(1))) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
                if (key == "metric")
                    table.metric = value;
                else if (key == "horizon")
                    table.horizon = std::stoi(value);
                else if (key == "sex")
                    table.sex = value;
            }
            saw_meta = true;
            continue;
        }
        const std::vector<std::string> f = split(t, ',');
        if (!saw_header) {
            if (f.empty() || f[0] != "country")
                throw MalformedRow("expected table header, got '" + std::string(t) + "'");
            table.column_labels.assign(f.begin() + 1, f.end());
            saw_header = true;
            continue;
        }
        if (f.size() != table.column_labels.size() + 1)
            throw MalformedRow("row width mismatch: " + std::string(t));
        Eigen::VectorXd row(static_cast<Eigen::Index>(table.column_labels.size()));
        for (std::size_t c = 0; c < table.column_labels.size(); ++c)
            row(static_cast<Eigen::Index>(c)) = std::strtod(f[c + 1].c_str(), nullptr);
        if (f[0] == "mean") {
            table.mean_row = row;
            saw_mean = true;
        } else {
            if (saw_mean) throw MalformedRow("country row after the mean row");
            table.row_labels.push_back(f[0]);
            rows.push_back(std::move(row));
        }
    }
    if (!saw_meta || !saw_header || !saw_mean) throw EmptyInput("incomplete table CSV");
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.column_labels.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        table.values.row(static_cast<Eigen::Index>(r)) = rows[r];
    const Eigen::VectorXd stored_mean = table.mean_row;
    table.recompute_summary();
    table.mean_row = stored_mean; // keep the emitted mean verbatim
    return table;
}

std::vector<StrategyVerdict> summarize_strategy_winner(const std::vector<BacktestCell>& cells,
                                                       const std::string& metric, int horizon) {
    metric_label(metric);
    struct Bucket {
        std::vector<double> partial, full;
    };
    std::vector<std::pair<std::string, ModelKind>> order;
    std::map<std::string, Bucket> buckets; // key sex|model
    for (const BacktestCell& cell : cells) {
        if (cell.horizon != horizon) continue;
        const std::string key = cell.sex + '|' + std::string(model_name(cell.model));
        if (buckets.find(key) == buckets.end()) order.emplace_back(cell.sex, cell.model);
        Bucket& bucket = buckets[key];
        const double value =
            cell.failed ? std::numeric_limits<double>::quiet_NaN() : cell_metric(cell, metric);
        (cell.strategy == Strategy::PartialFit ? bucket.partial : bucket.full).push_back(value);
    }
    if (order.empty()) throw IncompleteGrid("no cells at horizon " + std::to_string(horizon));

    std::vector<StrategyVerdict> verdicts;
    for (const auto& [sex, model] : order) {
        const Bucket& bucket = buckets[sex + '|' + std::string(model_name(model))];
        if (bucket.partial.empty() || bucket.full.empty())
            throw IncompleteGrid("missing one strategy for " + std::string(model_name(model)) +
                                 " sex " + sex);
        StrategyVerdict v;
        v.sex = sex;
        v.model = model;
        const auto mean = [](const std::vector<double>& xs) {
            double sum = 0.0;
            for (double x : xs) sum += x;
            return sum / static_cast<double>(xs.size());
        };
        v.partial_mean = mean(bucket.partial);
        v.full_mean = mean(bucket.full);
        if (v.partial_mean < v.full_mean) {
            v.winner = Strategy::PartialFit;
        } else {
            v.winner = Strategy::FullFitThenTruncate;
            v.tie = v.partial_mean == v.full_mean;
        }
        verdicts.push_back(v);
    }
    return verdicts;
}

std::vector<std::string> emit_plot_script(const std::vector<ReportTable>& tables,
                                          const std::string& output_dir) {
    fs::create_directories(output_dir);
    std::vector<std::string> written;
    for (const ReportTable& table : tables) {
        if (table.row_labels.empty() || table.column_labels.empty())
            throw IoError("cannot plot an empty table (" + table.metric + ")");
        const std::string base =
            table.metric + "_h" + std::to_string(table.horizon) + "_" + table.sex;

        std::string data = "label,mean\n";
        for (std::size_t c = 0; c < table.column_labels.size(); ++c)
            data += table.column_labels[c] + ',' +
                    format_double(table.mean_row(static_cast<Eigen::Index>(c))) + '\n';
        const fs::path csv = fs::path(output_dir) / ("plot_" + base + ".csv");
        write_file(csv, data);

        std::string script;
        script += "set terminal svg size 900,540\n";
        script += "set output 'plot_" + base + ".svg'\n";
        script += "set datafile separator ','\n";
        script += "set style data histograms\n";
        script += "set style fill solid 0.8 border -1\n";
        script += "set boxwidth 0.8\n";
        script += "set xtics rotate by -35\n";
        script += "set ylabel '" + std::string(metric_label(table.metric)) + "'\n";
        script += "set title 'mean " + table.metric + " by model and strategy, h=" +
                  std::to_string(table.horizon) + ", sex " + table.sex + "'\n";
        script += "plot 'plot_" + base + ".csv' every ::1 using 2:xtic(1) notitle\n";
        const fs::path gp = fs::path(output_dir) / ("plot_" + base + ".gp");
        write_file(gp, script);

        written.push_back(csv.string());
        written.push_back(gp.string());
    }
    return written;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    validate_config(config);

    // Surfaces load once per (country, sex); failures here are data errors
    // and propagate instead of marking cells.
    std::map<std::pair<std::string, char>, MortalitySurface> surfaces;
    for (const std::string& country : config.countries)
        for (Sex sex : config.sexes)
            surfaces.emplace(std::make_pair(country, sex_code(sex)),
                             load_country_surface(config, country, sex));

    struct Task {
        const MortalitySurface* surface;
        ModelKind model;
        Strategy strategy;
    };
    std::vector<Task> tasks;
    for (const std::string& country : config.countries)
        for (Sex sex : config.sexes)
            for (ModelKind model : config.models)
                for (Strategy strategy :
                     {Strategy::FullFitThenTruncate, Strategy::PartialFit})
                    tasks.push_back(
                        {&surfaces.at({country, sex_code(sex)}), model, strategy});

    std::vector<std::vector<BacktestCell>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            BacktestConfig bc;
            bc.spec = model_spec_for(task.model, task.strategy);
            bc.strategy = task.strategy;
            bc.holdout = config.holdout;
            bc.alpha = config.alpha;
            bc.n_sims = config.n_sims;
            bc.seed = config.seed;
            bc.rmspe_outside_root = config.rmspe_outside_root;
            try {
                results[i] = expanding_window_backtest(*task.surface, bc);
            } catch (const Error& e) {
                // Whole-backtest failures (e.g. too few years) still yield
                // one failed cell per horizon so the grid stays complete.
                for (int h = 1; h <= config.holdout; ++h) {
                    BacktestCell cell;
                    cell.country = task.surface->country;
                    cell.sex = std::string(1, sex_code(task.surface->sex));
                    cell.model = task.model;
                    cell.strategy = task.strategy;
                    cell.horizon = h;
                    cell.n_origins = config.holdout - h + 1;
                    cell.failed = true;
                    cell.failure = e.what();
                    cell.mape = cell.rmspe = cell.mean_interval_score =
                        std::numeric_limits<double>::quiet_NaN();
                    results[i].push_back(std::move(cell));
                }
            }
        }
    };
    int jobs = config.jobs > 0 ? config.jobs
                               : static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (std::thread& thread : pool) thread.join();

    ExperimentResult result;
    for (std::vector<BacktestCell>& part : results)
        for (BacktestCell& cell : part) {
            result.any_failed = result.any_failed || cell.failed;
            result.cells.push_back(std::move(cell));
        }

    std::vector<int> horizons = {1};
    if (config.holdout != 1) horizons.push_back(config.holdout);
    const std::vector<std::string> metrics = {"mape", "rmspe", "interval_score"};
    for (int h : horizons)
        for (const std::string& metric : metrics)
            for (Sex sex : config.sexes)
                result.tables.push_back(
                    build_table(result.cells, metric, h, std::string(1, sex_code(sex))));

    std::string winners;
    for (int h : horizons)
        for (const std::string& metric : metrics) {
            const std::vector<StrategyVerdict> verdicts =
                summarize_strategy_winner(result.cells, metric, h);
            for (const StrategyVerdict& v : verdicts) {
                winners += metric + " h=" + std::to_string(h) + " sex=" + v.sex + " " +
                           std::string(model_name(v.model)) + ": " +
                           std::string(strategy_name(v.winner)) +
                           (v.tie ? " (tie)" : "") +
                           " partial=" + format_fixed(v.partial_mean, 4) +
                           " full=" + format_fixed(v.full_mean, 4) + "\n";
                result.verdicts.push_back(v);
            }
        }
    result.winners_text = winners;

    if (!config.output_dir.empty()) {
        fs::create_directories(config.output_dir);
        write_file(fs::path(config.output_dir) / "cells.csv", serialize_cells(result.cells));
        for (const ReportTable& table : result.tables) {
            const std::string base =
                "table_" + table.metric + "_h" + std::to_string(table.horizon) + "_" + table.sex;
            write_file(fs::path(config.output_dir) / (base + ".csv"), table_to_csv(table));
            write_file(fs::path(config.output_dir) / (base + ".txt"), render_table(table));
        }
        emit_plot_script(result.tables, config.output_dir);
        write_file(fs::path(config.output_dir) / "winners.txt", result.winners_text);
    }
    return result;
}

} // namespace mortcast
