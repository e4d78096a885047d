#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bllopt/cluster.hpp"
#include "bllopt/error.hpp"
#include "bllopt/ingest.hpp"
#include "bllopt/optimize.hpp"

namespace bllopt {

struct ZTest {
  double z = 0.0;
  double p_value = 1.0;  // two-sided
};

// Two-sided tail probability of the standard normal, erfc(|z| / sqrt(2)).
double two_sided_normal_p(double z);

// Pooled two-proportion z-test of c2/n2 against c1/n1. Counts may be
// fractional (projected cases). Throws EvaluateError: Precondition when a
// count is out of range, DegeneratePooled when the pooled proportion is 0 or 1.
ZTest two_proportion_ztest(double c1, double n1, double c2, double n2);

struct ClusterCases {
  std::string label;
  double cases_v1 = 0.0;
  double cases_v2 = 0.0;
};

// Projected cases per cluster under the baseline and optimized shares.
// Throws UnassignedGeo when a plan neighborhood has no cluster.
std::vector<ClusterCases> cluster_case_deltas(const AllocationPlan& plan, const ClusterAssignment& assignment,
                                              std::span<const double> rates);

struct Reallocation {
  GeoId geo_id = 0;
  std::optional<double> pct_of_former;  // undefined when v1_tests == 0
};

std::vector<Reallocation> reallocation_percentages(const AllocationPlan& plan);

struct NeighborhoodMetrics {
  GeoId geo_id = 0;
  std::string geo_name;
  std::string borough;
  Year year = 0;
  Count tests = 0;
  Count cases = 0;
  std::optional<double> rate;
  double population_share = 0.0;
};

// Throws UnknownGeo / MissingYear.
NeighborhoodMetrics neighborhood_metrics(const NeighborhoodPanel& panel, GeoId geo, Year year);
std::pair<NeighborhoodMetrics, NeighborhoodMetrics> neighborhood_case_study(const NeighborhoodPanel& panel, GeoId geo_a,
                                                                            GeoId geo_b, Year year);

struct EvaluationReport {
  double p1 = 0.0;
  double p2 = 0.0;
  Count total_tests = 0;
  double cases_v1 = 0.0;
  double cases_v2 = 0.0;
  double delta_cases = 0.0;
  std::optional<double> improvement_pct;
  std::optional<ZTest> ztest;  // absent when the pooled proportion is degenerate
  std::vector<ClusterCases> cluster_deltas;
  std::vector<Reallocation> reallocation;
};

EvaluationReport evaluate_plan(const AllocationPlan& plan, const ClusterAssignment& assignment);

// Half-up rounding used for presentation only.
double round_half_up(double v);

std::string report_json(const EvaluationReport& report);
std::string report_text(const EvaluationReport& report);
void write_cluster_deltas_csv(std::ostream& out, std::span<const ClusterCases> deltas);
void write_reallocation_csv(std::ostream& out, std::span<const Reallocation> rows);

}  // namespace bllopt
