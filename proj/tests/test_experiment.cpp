#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mortcast/errors.hpp"
#include "mortcast/experiment.hpp"

using namespace mortcast;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

BacktestCell make_cell(const std::string& country, const std::string& sex, ModelKind model,
                       Strategy strategy, int horizon, double value) {
    BacktestCell cell;
    cell.country = country;
    cell.sex = sex;
    cell.model = model;
    cell.strategy = strategy;
    cell.horizon = horizon;
    cell.mape = value;
    cell.rmspe = value + 1.0;
    cell.mean_interval_score = value + 2.0;
    cell.n_origins = 31 - horizon;
    return cell;
}

} // namespace

TEST_CASE("config defaults cover the full study grid") {
    const ExperimentConfig config = parse_config("");
    REQUIRE(config.countries.size() == 19);
    REQUIRE(config.countries.front() == "AUS");
    REQUIRE(config.countries.back() == "USA");
    REQUIRE(config.sexes.size() == 2);
    REQUIRE(config.models.size() == 5);
    REQUIRE(config.holdout == 30);
    REQUIRE(config.alpha == 0.2);
    REQUIRE(config.n_sims == 5000);
    REQUIRE(config.start_year == 1950);
    REQUIRE_FALSE(config.rmspe_outside_root);
    REQUIRE_FALSE(config.synthetic);
    REQUIRE_NOTHROW(validate_config(config));
}

TEST_CASE("config text overrides every field") {
    const ExperimentConfig config = parse_config(
        "# comment line\n"
        "data_dir = /tmp/data\n"
        "output_dir = /tmp/out\n"
        "countries = SWE, NOR\n"
        "sexes = M\n"
        "models = plat, apc\n"
        "holdout = 10\n"
        "alpha = 0.1\n"
        "n_sims = 500\n"
        "seed = 99\n"
        "start_year = 1960\n"
        "rmspe_outside_root = true\n"
        "synthetic = 1\n"
        "jobs = 3\n"
        "last_year.SWE = 2000\n");
    REQUIRE(config.data_dir == "/tmp/data");
    REQUIRE(config.output_dir == "/tmp/out");
    REQUIRE(config.countries == std::vector<std::string>{"SWE", "NOR"});
    REQUIRE(config.sexes == std::vector<Sex>{Sex::Male});
    REQUIRE(config.models == std::vector<ModelKind>{ModelKind::Plat, ModelKind::Apc});
    REQUIRE(config.holdout == 10);
    REQUIRE(config.alpha == 0.1);
    REQUIRE(config.n_sims == 500);
    REQUIRE(config.seed == 99);
    REQUIRE(config.start_year == 1960);
    REQUIRE(config.rmspe_outside_root);
    REQUIRE(config.synthetic);
    REQUIRE(config.jobs == 3);
    REQUIRE(last_year_for(config, "SWE") == 2000);  // override beats the table
    REQUIRE(last_year_for(config, "NOR") == 2014);  // table default
    REQUIRE(last_year_for(config, "XXX") == -1);    // unknown: unbounded
}

TEST_CASE("config rejects unknown keys and bad values") {
    REQUIRE_THROWS_AS(parse_config("no_such_key = 1\n"), ConfigInvalid);
    REQUIRE_THROWS_AS(parse_config("holdout = soon\n"), ConfigInvalid);
    REQUIRE_THROWS_AS(parse_config("alpha = big\n"), ConfigInvalid);
    REQUIRE_THROWS_AS(parse_config("synthetic = maybe\n"), ConfigInvalid);
    REQUIRE_THROWS_AS(parse_config("last_year. = 2000\n"), ConfigInvalid);
    REQUIRE_THROWS_AS(parse_config("just a line\n"), ConfigInvalid);

    ExperimentConfig config = parse_config("");
    config.holdout = 0;
    REQUIRE_THROWS_AS(validate_config(config), ConfigInvalid);
    config = parse_config("");
    config.n_sims = 99;
    REQUIRE_THROWS_AS(validate_config(config), ConfigInvalid);
    config = parse_config("");
    config.countries.clear();
    REQUIRE_THROWS_AS(validate_config(config), ConfigInvalid);
    config = parse_config("");
    config.alpha = 1.0;
    REQUIRE_THROWS_AS(validate_config(config), ConfigInvalid);
}

TEST_CASE("plat period terms follow the strategy") {
    REQUIRE(model_spec_for(ModelKind::Plat, Strategy::PartialFit).plat_period_terms == 2);
    REQUIRE(model_spec_for(ModelKind::Plat, Strategy::FullFitThenTruncate).plat_period_terms == 3);
    REQUIRE(model_spec_for(ModelKind::Apc, Strategy::PartialFit).kind == ModelKind::Apc);
}

TEST_CASE("synthetic surfaces arrive aggregated, repaired, and windowed") {
    ExperimentConfig config = parse_config("");
    config.synthetic = true;
    config.start_year = 1970;
    config.last_year["SY9"] = 2005;
    config.countries = {"SY9"};
    const MortalitySurface s = load_country_surface(config, "SY9", Sex::Female);

    REQUIRE(s.ages.front() == 0);
    REQUIRE(s.ages.back() == 100);
    REQUIRE(s.open_top);
    REQUIRE(s.years.front() == 1970);
    REQUIRE(s.years.back() == 2005);
    REQUIRE(s.has_counts());
    for (int x = 0; x < s.n_ages(); ++x)
        for (int t = 0; t < s.n_years(); ++t) {
            REQUIRE(s.rates(x, t) > 0.0);
            REQUIRE(s.rates(x, t) <= 1.0);
        }
}

TEST_CASE("missing data files surface as MissingData naming the path") {
    ExperimentConfig config = parse_config("");
    config.data_dir = "/nonexistent_mortcast_data";
    config.countries = {"AUS"};
    try {
        load_country_surface(config, "AUS", Sex::Female);
        FAIL("expected MissingData");
    } catch (const MissingData& e) {
        REQUIRE(std::string(e.what()).find("AUS.Mx_1x1.txt") != std::string::npos);
    }
}

TEST_CASE("report table assembles rows, columns, means, and argmins") {
    std::vector<BacktestCell> cells;
    cells.push_back(make_cell("AUS", "F", ModelKind::LcPoisson, Strategy::FullFitThenTruncate, 1, 4.0));
    cells.push_back(make_cell("AUS", "F", ModelKind::LcPoisson, Strategy::PartialFit, 1, 3.0));
    cells.push_back(make_cell("SWE", "F", ModelKind::LcPoisson, Strategy::FullFitThenTruncate, 1, 2.0));
    cells.push_back(make_cell("SWE", "F", ModelKind::LcPoisson, Strategy::PartialFit, 1, 2.0));
    cells.push_back(make_cell("AUS", "M", ModelKind::LcPoisson, Strategy::PartialFit, 1, 9.0));
    cells.push_back(make_cell("AUS", "F", ModelKind::LcPoisson, Strategy::PartialFit, 2, 9.0));

    const ReportTable table = build_table(cells, "mape", 1, "F");
    REQUIRE(table.row_labels == std::vector<std::string>{"AUS", "SWE"});
    REQUIRE(table.column_labels ==
            std::vector<std::string>{"lc_poisson/full", "lc_poisson/partial"});
    REQUIRE(table.values(0, 0) == 4.0);
    REQUIRE(table.values(0, 1) == 3.0);
    REQUIRE(table.mean_row(0) == 3.0);
    REQUIRE(table.mean_row(1) == 2.5);
    REQUIRE(table.row_argmin[0] == 1);
    REQUIRE(table.row_argmin[1] == 0); // tie broken by first column

    const std::string text = render_table(table);
    REQUIRE(text.find("3.00*") != std::string::npos);
    REQUIRE(text.find("2.00*") != std::string::npos);
    REQUIRE(text.find("mean") != std::string::npos);

    // rmspe and interval_score pull their own values
    REQUIRE(build_table(cells, "rmspe", 1, "F").values(0, 0) == 5.0);
    REQUIRE(build_table(cells, "interval_score", 1, "F").values(0, 0) == 6.0);
    REQUIRE_THROWS_AS(build_table(cells, "nope", 1, "F"), ConfigInvalid);
}

TEST_CASE("failed cells show as NaN in tables") {
    std::vector<BacktestCell> cells;
    cells.push_back(make_cell("AUS", "F", ModelKind::Apc, Strategy::FullFitThenTruncate, 1, 4.0));
    BacktestCell failed = make_cell("AUS", "F", ModelKind::Apc, Strategy::PartialFit, 1, 1.0);
    failed.failed = true;
    cells.push_back(failed);

    const ReportTable table = build_table(cells, "mape", 1, "F");
    REQUIRE(std::isnan(table.values(0, 1)));
    REQUIRE(table.row_argmin[0] == 0); // NaN never wins the argmin
}

TEST_CASE("table CSV round-trips the in-memory table") {
    std::vector<BacktestCell> cells;
    cells.push_back(make_cell("AUS", "F", ModelKind::Plat, Strategy::FullFitThenTruncate, 1,
                              4.123456789012345));
    cells.push_back(make_cell("AUS", "F", ModelKind::Plat, Strategy::PartialFit, 1, 3.25));
    cells.push_back(make_cell("SWE", "F", ModelKind::Plat, Strategy::FullFitThenTruncate, 1, 2.0));
    cells.push_back(make_cell("SWE", "F", ModelKind::Plat, Strategy::PartialFit, 1, 5.5));
    const ReportTable table = build_table(cells, "mape", 1, "F");

    const ReportTable back = table_from_csv(table_to_csv(table));
    REQUIRE(back.metric == table.metric);
    REQUIRE(back.horizon == table.horizon);
    REQUIRE(back.sex == table.sex);
    REQUIRE(back.row_labels == table.row_labels);
    REQUIRE(back.column_labels == table.column_labels);
    REQUIRE(back.values == table.values);
    REQUIRE(back.mean_row == table.mean_row);
    REQUIRE(back.row_argmin == table.row_argmin);

    REQUIRE_THROWS_AS(table_from_csv(""), EmptyInput);
}

TEST_CASE("strategy winner compares mean errors per sex and model") {
    std::vector<BacktestCell> cells;
    for (const std::string country : {"AUS", "SWE"}) {
        cells.push_back(make_cell(country, "F", ModelKind::LcPoisson,
                                  Strategy::FullFitThenTruncate, 1, 6.0));
        cells.push_back(
            make_cell(country, "F", ModelKind::LcPoisson, Strategy::PartialFit, 1, 5.0));
        cells.push_back(
            make_cell(country, "M", ModelKind::LcPoisson, Strategy::FullFitThenTruncate, 1, 4.0));
        cells.push_back(
            make_cell(country, "M", ModelKind::LcPoisson, Strategy::PartialFit, 1, 4.0));
    }
    const std::vector<StrategyVerdict> verdicts = summarize_strategy_winner(cells, "mape", 1);
    REQUIRE(verdicts.size() == 2);
    REQUIRE(verdicts[0].sex == "F");
    REQUIRE(verdicts[0].winner == Strategy::PartialFit);
    REQUIRE(verdicts[0].partial_mean == 5.0);
    REQUIRE(verdicts[0].full_mean == 6.0);
    REQUIRE_FALSE(verdicts[0].tie);
    REQUIRE(verdicts[1].sex == "M");
    REQUIRE(verdicts[1].winner == Strategy::FullFitThenTruncate);
    REQUIRE(verdicts[1].tie);

    std::vector<BacktestCell> partial_only = {
        make_cell("AUS", "F", ModelKind::LcPoisson, Strategy::PartialFit, 1, 5.0)};
    REQUIRE_THROWS_AS(summarize_strategy_winner(partial_only, "mape", 1), IncompleteGrid);
    REQUIRE_THROWS_AS(summarize_strategy_winner(cells, "mape", 7), IncompleteGrid);
}

TEST_CASE("plot emission is deterministic with one script per table") {
    std::vector<BacktestCell> cells;
    for (int h : {1, 30}) {
        cells.push_back(
            make_cell("AUS", "F", ModelKind::Apc, Strategy::FullFitThenTruncate, h, 4.0));
        cells.push_back(make_cell("AUS", "F", ModelKind::Apc, Strategy::PartialFit, h, 3.0));
    }
    const std::vector<ReportTable> tables = {build_table(cells, "mape", 1, "F"),
                                             build_table(cells, "mape", 30, "F")};
    const fs::path dir = "test_out_plots";
    fs::remove_all(dir);
    const std::vector<std::string> written = emit_plot_script(tables, dir.string());
    REQUIRE(written.size() == 4);
    REQUIRE(written[0].find("plot_mape_h1_F.csv") != std::string::npos);
    REQUIRE(written[1].find("plot_mape_h1_F.gp") != std::string::npos);
    REQUIRE(written[2].find("plot_mape_h30_F.csv") != std::string::npos);
    REQUIRE(written[3].find("plot_mape_h30_F.gp") != std::string::npos);

    const std::string first = slurp(written[0]);
    const std::string script = slurp(written[1]);
    REQUIRE(script.find("plot_mape_h1_F.csv") != std::string::npos);
    emit_plot_script(tables, dir.string());
    REQUIRE(slurp(written[0]) == first); // byte-identical on re-run

    ReportTable empty;
    empty.metric = "mape";
    REQUIRE_THROWS_AS(emit_plot_script({empty}, dir.string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("synthetic experiment runs the whole grid deterministically") {
    ExperimentConfig config = parse_config(
        "countries = SY1\n"
        "sexes = F\n"
        "models = lc_poisson, lc_gaussian2\n"
        "holdout = 5\n"
        "n_sims = 100\n"
        "seed = 31\n"
        "start_year = 1990\n"
        "synthetic = true\n"
        "jobs = 2\n");
    const fs::path dir = "test_out_experiment";
    fs::remove_all(dir);
    config.output_dir = dir.string();

    const ExperimentResult result = run_experiment(config);
    // 2 models x 2 strategies x 5 horizons
    REQUIRE(result.cells.size() == 20);
    REQUIRE_FALSE(result.any_failed);
    for (const BacktestCell& cell : result.cells) {
        REQUIRE(cell.country == "SY1");
        REQUIRE(std::isfinite(cell.mape));
        REQUIRE(cell.mape >= 0.0);
        REQUIRE(cell.n_origins + cell.horizon == config.holdout + 1);
    }
    // horizons {1,5} x 3 metrics x 1 sex
    REQUIRE(result.tables.size() == 6);
    REQUIRE(result.verdicts.size() == 2 * 3 * 2); // 2 horizons x 3 metrics x 2 models
    REQUIRE_FALSE(result.winners_text.empty());

    REQUIRE(fs::exists(dir / "cells.csv"));
    REQUIRE(fs::exists(dir / "table_mape_h1_F.csv"));
    REQUIRE(fs::exists(dir / "table_mape_h1_F.txt"));
    REQUIRE(fs::exists(dir / "table_interval_score_h5_F.csv"));
    REQUIRE(fs::exists(dir / "plot_rmspe_h5_F.gp"));
    REQUIRE(fs::exists(dir / "winners.txt"));
    const std::vector<BacktestCell> parsed = parse_cells(slurp(dir / "cells.csv"));
    REQUIRE(parsed.size() == result.cells.size());

    // Same config and seed, different thread count: identical cells.
    config.jobs = 4;
    config.output_dir.clear();
    const ExperimentResult again = run_experiment(config);
    REQUIRE(again.cells.size() == result.cells.size());
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        REQUIRE(again.cells[i].country == result.cells[i].country);
        REQUIRE(again.cells[i].horizon == result.cells[i].horizon);
        REQUIRE(again.cells[i].mape == result.cells[i].mape);
        REQUIRE(again.cells[i].rmspe == result.cells[i].rmspe);
        REQUIRE(again.cells[i].mean_interval_score == result.cells[i].mean_interval_score);
    }
    fs::remove_all(dir);
}
