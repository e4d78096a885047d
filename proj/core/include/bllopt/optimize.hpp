#pragma once
// Test-allocation optimizer. A candidate allocation mixes the current
// testing shares x with the recent cases shares y using weights (p1, p2);
// the objective is the projected change in detected cases at a fixed citywide
// test budget T. An exhaustive lattice search over (p1, p2) picks the best
// candidate that satisfies the fairness floor and population caps.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bllopt/error.hpp"
#include "bllopt/ingest.hpp"

namespace bllopt {

struct ShareVectors {
  std::vector<GeoId> geo_ids;
  std::vector<double> x;  // testing share in the target year
  std::vector<double> y;  // cases share pooled over window_years
  std::vector<Year> window_years;
  Year target_year = 0;
};

// Neighborhoods without a record in a year contribute zero tests and cases.
// Throws OptimizeError: Precondition (window < 1, a window year missing from
// the panel), ZeroCityTests, ZeroCityCases.
ShareVectors compute_shares(const NeighborhoodPanel& panel, Year target_year, std::size_t window);

// Pooled cases_5plus / tests per neighborhood over `years`; 0 where the
// neighborhood has no tests in those years.
std::vector<double> window_rates(const NeighborhoodPanel& panel, std::span<const GeoId> geo_ids,
                                 std::span<const Year> years);

// Candidate share s_i / sum(s) with s_i = x_i*p1 + y_i*p2. Because x and y
// each sum to one, sum(s) = p1 + p2, which keeps the (1, 0) and (0, 1) corners
// bit-identical to x and y. Returns nullopt if any s_i < 0 or p1 + p2 <= 0.
std::optional<std::vector<double>> try_v2_share(const ShareVectors& shares, double p1, double p2);

// Throwing form: OptimizeError(InfeasibleWeights).
std::vector<double> v2_share(const ShareVectors& shares, double p1, double p2);

// T * sum_i rates_i * (rho2_i - rho1_i). Throws ShareMismatch on length
// mismatch and Precondition when a share vector does not sum to 1 within
// 1e-6 or a rate is negative.
double case_difference(double total_tests, std::span<const double> rates, std::span<const double> rho1,
                       std::span<const double> rho2);

// Largest-remainder apportionment of T across the shares. Remaining units go
// to the largest fractional parts, ties to the lower index. Fractional parts
// are compared at 1e-9 resolution so rounding noise cannot reorder ties.
std::vector<Count> finalize_tests(std::span<const double> shares, Count total_tests);

struct ConstraintConfig {
  double floor_fraction = 0.25;
  bool population_cap = true;
  bool require_nonnegative_delta = true;
};

struct GridAxis {
  double lo = -10.0;
  double hi = 10.0;
  double step = 0.1;

  // Inclusive lattice lo, lo + step, ..., snapped to 1e-9 so opposite values
  // cancel exactly.
  std::vector<double> values() const;
};

struct GridConfig {
  GridAxis p1;
  GridAxis p2;

  static GridConfig wide();    // [-10, 10] step 0.1 on both axes
  static GridConfig narrow();  // [-1, 1] step 0.01 on both axes
};

struct AllocationPlan {
  double p1 = 1.0;
  double p2 = 0.0;
  Year target_year = 0;
  Count total_tests = 0;
  std::vector<GeoId> geo_ids;
  std::vector<double> baseline_share;
  std::vector<double> v2_share;
  std::vector<double> rates;
  std::vector<Count> v1_tests;
  std::vector<Count> v2_tests;
  double projected_cases_v1 = 0.0;
  double projected_cases_v2 = 0.0;
  double delta_cases = 0.0;
};

// Everything the search needs, aligned to shares.geo_ids.
struct AllocationProblem {
  ShareVectors shares;
  std::vector<double> rates;
  std::vector<std::optional<Count>> child_population;  // target year; nullopt = no record
  Count total_tests = 0;
};

// Rates default to the shares' window; `rate_window` pools the last k years
// up to the target year instead (1 = target year only).
AllocationProblem make_problem(const NeighborhoodPanel& panel, const ShareVectors& shares, Count total_tests,
                               std::optional<std::size_t> rate_window = std::nullopt);

// Throws OptimizeError(InfeasibleWeights) for an infeasible (p1, p2).
AllocationPlan make_plan(const AllocationProblem& problem, double p1, double p2);

enum class ConstraintKind { Floor, PopulationCap, NegativeDelta };
std::string_view to_string(ConstraintKind k) noexcept;

struct ConstraintViolation {
  ConstraintKind kind;
  GeoId geo_id = 0;  // 0 for NegativeDelta
  std::string detail;
};

// Empty result means feasible. Population caps only bind neighborhoods that
// have a record in the plan's target year. The non-negative delta check
// ignores rounding residue below 1e-9 of the baseline projected cases.
std::vector<ConstraintViolation> check_constraints(const AllocationPlan& plan,
                                                   std::span<const std::optional<Count>> child_population,
                                                   const ConstraintConfig& config);
std::vector<ConstraintViolation> check_constraints(const AllocationPlan& plan, const NeighborhoodPanel& panel,
                                                   const ConstraintConfig& config);

enum class PointStatus { Feasible, InfeasibleWeights, FloorViolated, PopulationCapExceeded, NegativeDelta };
std::string_view to_string(PointStatus s) noexcept;

struct TraceEntry {
  double p1 = 0.0;
  double p2 = 0.0;
  std::optional<double> delta_cases;  // absent for infeasible weights
  PointStatus status = PointStatus::Feasible;

  bool feasible() const { return status == PointStatus::Feasible; }
};

struct GridSearchResult {
  AllocationPlan best;
  std::vector<TraceEntry> trace;  // sorted by (p1, p2)
  std::size_t feasible_points = 0;
};

// Exhaustive search; maximizes delta_cases over feasible points, ties to the
// lexicographically smallest (p1, p2). Values within a relative 1e-9 of the
// incumbent count as ties. Throws NoFeasiblePoint.
GridSearchResult grid_search(const AllocationProblem& problem, const GridConfig& grid,
                             const ConstraintConfig& constraints);
GridSearchResult grid_search(const NeighborhoodPanel& panel, const ShareVectors& shares, Count total_tests,
                             const GridConfig& grid, const ConstraintConfig& constraints);

void write_plan_csv(std::ostream& out, const AllocationPlan& plan);
std::string plan_json(const AllocationPlan& plan);
AllocationPlan parse_plan_json(std::string_view text);
void write_trace_csv(std::ostream& out, std::span<const TraceEntry> trace);

}  // namespace bllopt
