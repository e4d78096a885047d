#include "bllopt/pipeline.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bllopt {

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Config: return "config";
    case Stage::Ingest: return "ingest";
    case Stage::Normalize: return "normalize";
    case Stage::Cluster: return "cluster";
    case Stage::Optimize: return "optimize";
    case Stage::Evaluate: return "evaluate";
    case Stage::Output: return "output";
  }
  return "unknown";
}

PipelineError::PipelineError(Stage stage, ExitCode code, const std::string& message)
    : std::runtime_error(message), stage_(stage), code_(code) {}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw PipelineError(Stage::Config, ExitCode::ConfigError, m); };
  if (input_path.empty()) fail("input path is required");
  if (output_dir.empty()) fail("output directory is required");
  if (window < 1) fail("window must be at least 1");
  if (rate_window && *rate_window < 1) fail("rate window must be at least 1");
  if (forecast_last_k && *forecast_last_k < 2) fail("forecast window must cover at least 2 years");
  if (k < 2) fail("k must be at least 2");
  if (max_iter < 1) fail("max_iter must be at least 1");
  if (!(constraints.floor_fraction >= 0.0 && constraints.floor_fraction <= 1.0)) fail("floor must lie in [0, 1]");
  if (total_tests_override && *total_tests_override < 0) fail("total tests must be non-negative");
  for (const auto* axis : {&grid.p1, &grid.p2}) {
    if (!(axis->step > 0.0)) fail("grid step must be positive");
    if (!(axis->lo <= axis->hi)) fail("grid range needs lo <= hi");
  }
}

namespace {

// Runs `fn`, translating module errors into a PipelineError for `stage`.
template <typename Fn>
auto guarded(Stage stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const IngestError& e) {
    throw PipelineError(stage, ExitCode::DataError, e.what());
  } catch (const NormalizeError& e) {
    throw PipelineError(stage, ExitCode::DataError, e.what());
  } catch (const ClusterError& e) {
    const auto code = e.code() == ClusterErrc::KTooLarge ? ExitCode::ConfigError : ExitCode::DataError;
    throw PipelineError(stage, code, e.what());
  } catch (const OptimizeError& e) {
    ExitCode code = ExitCode::DataError;
    if (e.code() == OptimizeErrc::Precondition) code = ExitCode::ConfigError;
    if (e.code() == OptimizeErrc::NoFeasiblePoint || e.code() == OptimizeErrc::InfeasibleWeights) {
      code = ExitCode::Infeasible;
    }
    throw PipelineError(stage, code, std::string("precondition failed: ") + e.what());
  } catch (const EvaluateError& e) {
    throw PipelineError(stage, ExitCode::DataError, e.what());
  } catch (const std::exception& e) {
    throw PipelineError(stage, ExitCode::DataError, e.what());
  }
}

std::string read_file(Stage stage, const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PipelineError(stage, ExitCode::ConfigError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(const std::filesystem::path& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw PipelineError(Stage::Output, ExitCode::ConfigError, "cannot create " + dir_.string());
  }

  void write(std::string_view name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw PipelineError(Stage::Output, ExitCode::DataError, "cannot write " + path.string());
    files_.push_back(path);
  }

  template <typename WriteFn>
  void write_with(std::string_view name, WriteFn&& fn) {
    std::ostringstream os;
    fn(os);
    write(name, os.str());
  }

  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
};

ParseResult load_panel(const RunConfig& cfg) {
  return guarded(Stage::Ingest, [&] {
    if (!std::filesystem::exists(cfg.input_path)) {
      throw PipelineError(Stage::Ingest, ExitCode::DataError, "input file " + cfg.input_path.string() + " not found");
    }
    auto parsed = parse_panel(cfg.input_path, cfg.schema);
    if (parsed.panel.empty()) {
      throw PipelineError(Stage::Ingest, ExitCode::DataError, "input contains no usable records");
    }
    return parsed;
  });
}

Year resolve_target_year(const RunConfig& cfg, const NeighborhoodPanel& panel, Stage stage) {
  if (!cfg.target_year) return panel.years().back();
  if (!panel.has_year(*cfg.target_year)) {
    throw PipelineError(stage, ExitCode::ConfigError,
                        "precondition failed: target year " + std::to_string(*cfg.target_year) + " not in panel");
  }
  return *cfg.target_year;
}

Count resolve_total_tests(const RunConfig& cfg, const NeighborhoodPanel& panel, Year target) {
  if (cfg.total_tests_override) return *cfg.total_tests_override;
  const auto totals = panel.yearly_test_totals();
  const auto upto = static_cast<std::size_t>(*panel.year_index(target)) + 1;
  return forecast_total_tests(std::span<const Count>(totals).first(upto), cfg.forecast_last_k);
}

NormalizedPanel load_normalized(const RunConfig& cfg, const NeighborhoodPanel& panel) {
  return guarded(Stage::Normalize, [&] {
    if (cfg.normalized_path) {
      std::istringstream in(read_file(Stage::Normalize, *cfg.normalized_path));
      return read_normalized_csv(in);
    }
    return normalize_panel(panel);
  });
}

ClusterAssignment load_clusters(const RunConfig& cfg, const NormalizedPanel& normalized) {
  return guarded(Stage::Cluster, [&] {
    if (cfg.clusters_path) {
      const auto text = read_file(Stage::Cluster, *cfg.clusters_path);
      if (cfg.clusters_path->extension() == ".json") return parse_assignment_json(text);
      std::istringstream in(text);
      return read_assignment_csv(in);
    }
    return assign_risk_profiles(normalized, cfg.k, cfg.max_iter);
  });
}

GridSearchResult optimize(const RunConfig& cfg, const NeighborhoodPanel& panel, Count* total_tests_out) {
  return guarded(Stage::Optimize, [&] {
    const Year target = resolve_target_year(cfg, panel, Stage::Optimize);
    const auto shares = compute_shares(panel, target, cfg.window);
    const Count t = resolve_total_tests(cfg, panel, target);
    if (total_tests_out) *total_tests_out = t;
    const auto problem = make_problem(panel, shares, t, cfg.rate_window);
    return grid_search(problem, cfg.grid, cfg.constraints);
  });
}

std::string descriptive_json(const RunConfig& cfg, const NeighborhoodPanel& panel) {
  const Year target = resolve_target_year(cfg, panel, Stage::Normalize);
  const auto shares = population_testing_shares(panel, target);
  const auto fit = fit_share_regression(shares.population_share, shares.testing_share);
  const auto totals = panel.yearly_test_totals();

  nlohmann::ordered_json doc;
  doc["share_regression"] = {{"year", target},
                             {"slope", fit.slope},
                             {"intercept", fit.intercept},
                             {"r_squared", fit.r_squared},
                             {"n", fit.n}};
  auto yearly = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < totals.size(); ++i) {
    yearly.push_back({{"year", panel.years()[i]}, {"tests", totals[i]}});
  }
  doc["yearly_test_totals"] = std::move(yearly);
  if (panel.years().size() >= 2) {
    RunConfig forecast_cfg = cfg;
    forecast_cfg.total_tests_override.reset();
    doc["forecast_total_tests"] = resolve_total_tests(forecast_cfg, panel, target);
  } else {
    doc["forecast_total_tests"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

void write_ingest(ArtifactWriter& w, const RunConfig& cfg, const ParseResult& parsed, std::size_t* violations) {
  const auto report = validate_panel(parsed.panel, {cfg.schema.year_min, cfg.schema.year_max, std::nullopt});
  if (violations) *violations = report.size();
  w.write(artifacts::kValidation, validation_report_json(report));
  w.write(artifacts::kGapRegistry, gap_registry_json(parsed));
  w.write_with(artifacts::kPanel, [&](std::ostream& os) { write_panel_csv(os, parsed.panel, cfg.schema); });
}

void write_normalize(ArtifactWriter& w, const RunConfig& cfg, const NeighborhoodPanel& panel,
                     const NormalizedPanel& normalized) {
  w.write_with(artifacts::kNormalized, [&](std::ostream& os) { write_normalized_csv(os, normalized); });
  w.write(artifacts::kDescriptive, guarded(Stage::Normalize, [&] { return descriptive_json(cfg, panel); }));
}

void write_clusters(ArtifactWriter& w, const ClusterAssignment& a) {
  w.write_with(artifacts::kClustersCsv, [&](std::ostream& os) { write_assignment_csv(os, a); });
  w.write(artifacts::kClustersJson, assignment_json(a));
}

void write_optimize(ArtifactWriter& w, const RunConfig& cfg, const GridSearchResult& r) {
  w.write_with(artifacts::kPlanCsv, [&](std::ostream& os) { write_plan_csv(os, r.best); });
  w.write(artifacts::kPlanJson, plan_json(r.best));
  if (cfg.emit_trace) {
    w.write_with(artifacts::kTrace, [&](std::ostream& os) { write_trace_csv(os, r.trace); });
  }
}

void write_evaluate(ArtifactWriter& w, const EvaluationReport& report) {
  w.write(artifacts::kReportJson, report_json(report));
  w.write(artifacts::kReportText, report_text(report));
  w.write_with(artifacts::kClusterDeltas, [&](std::ostream& os) { write_cluster_deltas_csv(os, report.cluster_deltas); });
  w.write_with(artifacts::kReallocation, [&](std::ostream& os) { write_reallocation_csv(os, report.reallocation); });
}

}  // namespace

StageOutput run_ingest(const RunConfig& config) {
  config.validate();
  const auto parsed = load_panel(config);
  ArtifactWriter w(config.output_dir);
  write_ingest(w, config, parsed, nullptr);
  return {w.files()};
}

StageOutput run_normalize(const RunConfig& config) {
  config.validate();
  const auto parsed = load_panel(config);
  const auto normalized = load_normalized(config, parsed.panel);
  ArtifactWriter w(config.output_dir);
  write_normalize(w, config, parsed.panel, normalized);
  return {w.files()};
}

StageOutput run_cluster(const RunConfig& config) {
  config.validate();
  std::optional<NormalizedPanel> normalized;
  if (config.normalized_path) {
    normalized = load_normalized(config, {});
  } else {
    normalized = load_normalized(config, load_panel(config).panel);
  }
  const auto clusters = load_clusters(config, *normalized);
  ArtifactWriter w(config.output_dir);
  write_clusters(w, clusters);
  return {w.files()};
}

StageOutput run_optimize(const RunConfig& config) {
  config.validate();
  const auto parsed = load_panel(config);
  const auto result = optimize(config, parsed.panel, nullptr);
  ArtifactWriter w(config.output_dir);
  write_optimize(w, config, result);
  return {w.files()};
}

StageOutput run_evaluate(const RunConfig& config) {
  config.validate();
  AllocationPlan plan;
  if (config.plan_path) {
    plan = guarded(Stage::Evaluate, [&] { return parse_plan_json(read_file(Stage::Evaluate, *config.plan_path)); });
  }
  std::optional<ParseResult> parsed;
  auto panel = [&]() -> const NeighborhoodPanel& {
    if (!parsed) parsed = load_panel(config);
    return parsed->panel;
  };
  if (!config.plan_path) plan = optimize(config, panel(), nullptr).best;

  ClusterAssignment clusters;
  if (config.clusters_path) {
    clusters = load_clusters(config, {});
  } else {
    clusters = load_clusters(config, load_normalized(config, panel()));
  }
  const auto report = guarded(Stage::Evaluate, [&] { return evaluate_plan(plan, clusters); });
  ArtifactWriter w(config.output_dir);
  write_evaluate(w, report);
  return {w.files()};
}

PipelineResult run_pipeline(const RunConfig& config) {
  config.validate();
  PipelineResult result;
  const auto parsed = load_panel(config);
  result.rejected_rows = parsed.rejected.size();

  ArtifactWriter w(config.output_dir);
  write_ingest(w, config, parsed, &result.violations);

  const auto normalized = load_normalized(config, parsed.panel);
  write_normalize(w, config, parsed.panel, normalized);

  result.clusters = load_clusters(config, normalized);
  write_clusters(w, result.clusters);

  const auto search = optimize(config, parsed.panel, &result.total_tests);
  write_optimize(w, config, search);
  result.plan = search.best;

  result.report = guarded(Stage::Evaluate, [&] { return evaluate_plan(result.plan, result.clusters); });
  write_evaluate(w, result.report);

  result.files = w.files();
  return result;
}

}  // namespace bllopt
