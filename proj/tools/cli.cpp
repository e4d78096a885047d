#include "cli.hpp"

#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "bllopt/csv.hpp"
#include "bllopt/pipeline.hpp"

namespace bllopt::cli {

namespace {

// "lo:hi:step"
GridAxis parse_axis(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw CLI::ValidationError("range", "expected lo:hi:step, got '" + text + "'");
  const auto lo = csv::parse_double(parts[0]);
  const auto hi = csv::parse_double(parts[1]);
  const auto step = csv::parse_double(parts[2]);
  if (!lo || !hi || !step) throw CLI::ValidationError("range", "non-numeric value in '" + text + "'");
  if (!(*step > 0.0) || !(*lo <= *hi)) throw CLI::ValidationError("range", "need lo <= hi and step > 0 in '" + text + "'");
  return {*lo, *hi, *step};
}

struct Options {
  std::string input;
  std::string out;
  std::optional<int> year;
  std::size_t window = 3;
  std::optional<std::size_t> rate_window;
  std::optional<std::size_t> forecast_last_k;
  std::string preset = "wide";
  std::string p1_range;
  std::string p2_range;
  double floor = 0.25;
  bool no_population_cap = false;
  bool allow_negative_delta = false;
  std::optional<std::int64_t> total_tests;
  bool emit_trace = false;
  std::size_t k = 5;
  std::size_t max_iter = 100;
  std::string normalized;
  std::string clusters;
  std::string plan;
  SchemaConfig schema;
};

void add_options(CLI::App& app, Options& o) {
  app.add_option("--input,-i", o.input, "Panel CSV (one row per neighborhood and year)");
  app.add_option("--out,-o", o.out, "Output directory for artifacts");
  app.add_option("--year", o.year, "Target year (default: latest year in the panel)");
  app.add_option("--window", o.window, "Trailing years pooled for the cases share")->capture_default_str();
  app.add_option("--rate-window", o.rate_window, "Trailing years pooled for case rates (default: --window)");
  app.add_option("--forecast-last-k", o.forecast_last_k, "Fit the total-test forecast on the last k years only");
  app.add_option("--grid-preset", o.preset, "Grid preset: wide ([-10,10] step 0.1) or narrow ([-1,1] step 0.01)")
      ->check(CLI::IsMember({"wide", "narrow"}))
      ->capture_default_str();
  app.add_option("--p1-range", o.p1_range, "p1 lattice as lo:hi:step (overrides the preset)");
  app.add_option("--p2-range", o.p2_range, "p2 lattice as lo:hi:step (overrides the preset)");
  app.add_option("--floor", o.floor, "Minimum new share as a fraction of the current share")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_flag("--no-population-cap", o.no_population_cap, "Allow allocations above the child population");
  app.add_flag("--allow-negative-delta", o.allow_negative_delta, "Accept plans that detect fewer cases");
  app.add_option("--total-tests", o.total_tests, "Citywide test budget T (default: linear-trend forecast)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--emit-trace", o.emit_trace, "Also write the full grid-search trace");
  app.add_option("--k", o.k, "Number of clusters")->capture_default_str();
  app.add_option("--max-iter", o.max_iter, "k-medoids iteration limit")->capture_default_str();
  app.add_option("--normalized", o.normalized, "Reuse a normalized_panel.csv from a previous run");
  app.add_option("--clusters", o.clusters, "Reuse a clusters.csv or clusters.json from a previous run");
  app.add_option("--plan", o.plan, "Reuse an allocation_plan.json from a previous run");

  auto* cols = "Column mapping";
  app.add_option("--col-geo-id", o.schema.geo_id)->group(cols)->capture_default_str();
  app.add_option("--col-geo-name", o.schema.geo_name)->group(cols)->capture_default_str();
  app.add_option("--col-borough", o.schema.borough)->group(cols)->capture_default_str();
  app.add_option("--col-year", o.schema.year)->group(cols)->capture_default_str();
  app.add_option("--col-tests", o.schema.tests)->group(cols)->capture_default_str();
  app.add_option("--col-cases-5plus", o.schema.cases_5plus)->group(cols)->capture_default_str();
  app.add_option("--col-cases-10plus", o.schema.cases_10plus)->group(cols)->capture_default_str();
  app.add_option("--col-cases-15plus", o.schema.cases_15plus)->group(cols)->capture_default_str();
  app.add_option("--col-child-population", o.schema.child_population)->group(cols)->capture_default_str();
  app.add_option("--year-min", o.schema.year_min)->group(cols)->capture_default_str();
  app.add_option("--year-max", o.schema.year_max)->group(cols)->capture_default_str();
}

RunConfig to_config(const Options& o) {
  RunConfig c;
  c.input_path = o.input;
  c.output_dir = o.out;
  c.target_year = o.year;
  c.window = o.window;
  c.rate_window = o.rate_window;
  c.forecast_last_k = o.forecast_last_k;
  c.grid = o.preset == "narrow" ? GridConfig::narrow() : GridConfig::wide();
  if (!o.p1_range.empty()) c.grid.p1 = parse_axis(o.p1_range);
  if (!o.p2_range.empty()) c.grid.p2 = parse_axis(o.p2_range);
  c.constraints.floor_fraction = o.floor;
  c.constraints.population_cap = !o.no_population_cap;
  c.constraints.require_nonnegative_delta = !o.allow_negative_delta;
  c.total_tests_override = o.total_tests;
  c.emit_trace = o.emit_trace;
  c.k = o.k;
  c.max_iter = o.max_iter;
  c.schema = o.schema;
  if (!o.normalized.empty()) c.normalized_path = o.normalized;
  if (!o.clusters.empty()) c.clusters_path = o.clusters;
  if (!o.plan.empty()) c.plan_path = o.plan;
  return c;
}

void print_files(std::ostream& out, const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) out << "wrote " << f.string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Blood-lead test allocation: panel ingest, normalization, risk clustering and grid-search optimization",
               "bllopt"};
  app.set_config("--config", "", "Flat key = value configuration file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  Options opts;
  add_options(app, opts);

  auto* ingest = app.add_subcommand("ingest", "Parse and validate the panel; write diagnostics");
  auto* normalize = app.add_subcommand("normalize", "Year-wise mean normalization and descriptive statistics");
  auto* cluster = app.add_subcommand("cluster", "Assign neighborhoods to risk profiles with k-medoids");
  auto* optimize = app.add_subcommand("optimize", "Grid-search the test allocation");
  auto* evaluate = app.add_subcommand("evaluate", "Compare baseline and optimized allocations");
  auto* run_all = app.add_subcommand("run", "Full pipeline");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [stage=config]: " << e.what() << "\n";
    return static_cast<int>(ExitCode::ConfigError);
  }

  try {
    const auto config = to_config(opts);
    if (*run_all) {
      const auto result = run_pipeline(config);
      print_files(out, result.files);
      out << "\n" << report_text(result.report);
    } else if (*ingest) {
      print_files(out, run_ingest(config).files);
    } else if (*normalize) {
      print_files(out, run_normalize(config).files);
    } else if (*cluster) {
      print_files(out, run_cluster(config).files);
    } else if (*optimize) {
      print_files(out, run_optimize(config).files);
    } else if (*evaluate) {
      print_files(out, run_evaluate(config).files);
    }
  } catch (const CLI::ValidationError& e) {
    err << "error [stage=config]: " << e.what() << "\n";
    return static_cast<int>(ExitCode::ConfigError);
  } catch (const PipelineError& e) {
    err << "error [stage=" << to_string(e.stage()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  }
  return 0;
}

}  // namespace bllopt::cli
