#pragma once
// End-to-end driver: ingest -> normalize -> cluster -> optimize -> evaluate.
// Every stage writes its artifacts into the output directory and can also
// be run on its own from the previous stage's files.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bllopt/cluster.hpp"
#include "bllopt/evaluate.hpp"
#include "bllopt/ingest.hpp"
#include "bllopt/normalize.hpp"
#include "bllopt/optimize.hpp"

namespace bllopt {

enum class Stage { Config, Ingest, Normalize, Cluster, Optimize, Evaluate, Output };
std::string_view to_string(Stage s) noexcept;

// Process exit codes.
enum class ExitCode : int { Success = 0, DataError = 1, ConfigError = 2, Infeasible = 3 };

class PipelineError : public std::runtime_error {
 public:
  PipelineError(Stage stage, ExitCode code, const std::string& message);
  Stage stage() const noexcept { return stage_; }
  ExitCode exit_code() const noexcept { return code_; }

 private:
  Stage stage_;
  ExitCode code_;
};

struct RunConfig {
  std::filesystem::path input_path;
  std::filesystem::path output_dir;
  std::optional<Year> target_year;          // default: latest panel year
  std::size_t window = 3;
  std::optional<std::size_t> rate_window;   // default: same as window
  std::optional<std::size_t> forecast_last_k;
  GridConfig grid = GridConfig::wide();
  ConstraintConfig constraints;
  std::size_t k = 5;
  std::size_t max_iter = 100;
  std::optional<Count> total_tests_override;
  bool emit_trace = false;
  SchemaConfig schema;

  // Inputs for partial reruns; when unset the stage recomputes them.
  std::optional<std::filesystem::path> normalized_path;
  std::optional<std::filesystem::path> clusters_path;
  std::optional<std::filesystem::path> plan_path;

  // Throws PipelineError(Config, ConfigError).
  void validate() const;
};

// Artifact file names inside output_dir.
namespace artifacts {
inline constexpr std::string_view kPanel = "panel.csv";
inline constexpr std::string_view kGapRegistry = "gap_registry.json";
inline constexpr std::string_view kValidation = "validation_report.json";
inline constexpr std::string_view kNormalized = "normalized_panel.csv";
inline constexpr std::string_view kDescriptive = "descriptive.json";
inline constexpr std::string_view kClustersCsv = "clusters.csv";
inline constexpr std::string_view kClustersJson = "clusters.json";
inline constexpr std::string_view kPlanCsv = "allocation_plan.csv";
inline constexpr std::string_view kPlanJson = "allocation_plan.json";
inline constexpr std::string_view kTrace = "search_trace.csv";
inline constexpr std::string_view kReportJson = "evaluation_report.json";
inline constexpr std::string_view kReportText = "evaluation_summary.txt";
inline constexpr std::string_view kClusterDeltas = "cluster_deltas.csv";
inline constexpr std::string_view kReallocation = "reallocation.csv";
}  // namespace artifacts

struct StageOutput {
  std::vector<std::filesystem::path> files;
};

struct PipelineResult {
  std::vector<std::filesystem::path> files;
  std::size_t rejected_rows = 0;
  std::size_t violations = 0;
  Count total_tests = 0;
  AllocationPlan plan;
  ClusterAssignment clusters;
  EvaluationReport report;
};

// Each stage throws PipelineError carrying its own stage and exit code.
StageOutput run_ingest(const RunConfig& config);
StageOutput run_normalize(const RunConfig& config);
StageOutput run_cluster(const RunConfig& config);
StageOutput run_optimize(const RunConfig& config);
StageOutput run_evaluate(const RunConfig& config);

PipelineResult run_pipeline(const RunConfig& config);

}  // namespace bllopt
