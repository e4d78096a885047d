#include "bllopt/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "bllopt/csv.hpp"

namespace bllopt {

double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

ZTest two_proportion_ztest(double c1, double n1, double c2, double n2) {
  auto valid = [](double c, double n) { return std::isfinite(c) && std::isfinite(n) && n > 0.0 && c >= 0.0 && c <= n; };
  if (!valid(c1, n1) || !valid(c2, n2)) {
    throw EvaluateError(EvaluateErrc::Precondition, "z-test needs 0 <= c <= n and n > 0 for both samples");
  }
  const double pooled = (c1 + c2) / (n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) {
    throw EvaluateError(EvaluateErrc::DegeneratePooled, "pooled proportion is " + csv::format_double(pooled) +
                                                            "; z is undefined");
  }
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
  ZTest t;
  t.z = (c2 / n2 - c1 / n1) / se;
  t.p_value = std::clamp(two_sided_normal_p(t.z), 0.0, 1.0);
  return t;
}

std::vector<ClusterCases> cluster_case_deltas(const AllocationPlan& plan, const ClusterAssignment& assignment,
                                              std::span<const double> rates) {
  const std::size_t n = plan.geo_ids.size();
  if (rates.size() != n || plan.v2_share.size() != n || plan.baseline_share.size() != n) {
    throw EvaluateError(EvaluateErrc::Precondition, "plan and rates are not aligned");
  }
  std::vector<ClusterCases> out;
  for (const auto& name : assignment.label_names) out.push_back({name, 0.0, 0.0});
  const double t = static_cast<double>(plan.total_tests);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = assignment.cluster_of(plan.geo_ids[i]);
    if (!c || *c >= out.size()) {
      throw EvaluateError(EvaluateErrc::UnassignedGeo, "geo " + std::to_string(plan.geo_ids[i]) + " has no cluster");
    }
    out[*c].cases_v1 += t * plan.baseline_share[i] * rates[i];
    out[*c].cases_v2 += t * plan.v2_share[i] * rates[i];
  }
  return out;
}

std::vector<Reallocation> reallocation_percentages(const AllocationPlan& plan) {
  std::vector<Reallocation> out;
  for (std::size_t i = 0; i < plan.geo_ids.size(); ++i) {
    Reallocation r{plan.geo_ids[i], std::nullopt};
    if (plan.v1_tests[i] > 0) {
      r.pct_of_former = 100.0 * static_cast<double>(plan.v2_tests[i]) / static_cast<double>(plan.v1_tests[i]);
    }
    out.push_back(r);
  }
  return out;
}

NeighborhoodMetrics neighborhood_metrics(const NeighborhoodPanel& panel, GeoId geo, Year year) {
  if (!panel.geo_index(geo)) throw EvaluateError(EvaluateErrc::UnknownGeo, "geo " + std::to_string(geo) + " not in panel");
  if (!panel.has_year(year)) throw EvaluateError(EvaluateErrc::MissingYear, "year " + std::to_string(year) + " not in panel");
  const auto* r = panel.find(geo, year);
  if (!r) {
    throw EvaluateError(EvaluateErrc::MissingYear,
                        "geo " + std::to_string(geo) + " has no record for " + std::to_string(year));
  }
  Count pop_total = 0;
  for (GeoId g : panel.geo_ids()) {
    if (const auto* o = panel.find(g, year)) pop_total += o->child_population;
  }
  NeighborhoodMetrics m;
  m.geo_id = geo;
  m.geo_name = r->geo_name;
  m.borough = r->borough;
  m.year = year;
  m.tests = r->tests;
  m.cases = r->cases_5plus;
  m.rate = panel.rate_5plus(geo, year);
  m.population_share = pop_total > 0 ? static_cast<double>(r->child_population) / static_cast<double>(pop_total) : 0.0;
  return m;
}

std::pair<NeighborhoodMetrics, NeighborhoodMetrics> neighborhood_case_study(const NeighborhoodPanel& panel, GeoId geo_a,
                                                                            GeoId geo_b, Year year) {
  return {neighborhood_metrics(panel, geo_a, year), neighborhood_metrics(panel, geo_b, year)};
}

EvaluationReport evaluate_plan(const AllocationPlan& plan, const ClusterAssignment& assignment) {
  EvaluationReport r;
  r.p1 = plan.p1;
  r.p2 = plan.p2;
  r.total_tests = plan.total_tests;
  r.cases_v1 = plan.projected_cases_v1;
  r.cases_v2 = plan.projected_cases_v2;
  r.delta_cases = plan.delta_cases;
  if (r.cases_v1 > 0.0) r.improvement_pct = 100.0 * (r.cases_v2 - r.cases_v1) / r.cases_v1;
  const double n = static_cast<double>(plan.total_tests);
  try {
    r.ztest = two_proportion_ztest(r.cases_v1, n, r.cases_v2, n);
  } catch (const EvaluateError&) {
    r.ztest.reset();
  }
  r.cluster_deltas = cluster_case_deltas(plan, assignment, plan.rates);
  r.reallocation = reallocation_percentages(plan);
  return r;
}

double round_half_up(double v) { return std::floor(v + 0.5); }

std::string report_json(const EvaluationReport& r) {
  nlohmann::ordered_json doc;
  doc["p1"] = r.p1;
  doc["p2"] = r.p2;
  doc["total_tests"] = r.total_tests;
  doc["cases_v1"] = r.cases_v1;
  doc["cases_v2"] = r.cases_v2;
  doc["cases_v1_rounded"] = round_half_up(r.cases_v1);
  doc["cases_v2_rounded"] = round_half_up(r.cases_v2);
  doc["delta_cases"] = r.delta_cases;
  doc["improvement_pct"] = r.improvement_pct ? nlohmann::ordered_json(*r.improvement_pct) : nullptr;
  doc["z_statistic"] = r.ztest ? nlohmann::ordered_json(r.ztest->z) : nullptr;
  doc["p_value"] = r.ztest ? nlohmann::ordered_json(r.ztest->p_value) : nullptr;
  auto clusters = nlohmann::ordered_json::array();
  for (const auto& c : r.cluster_deltas) {
    clusters.push_back({{"label", c.label}, {"cases_v1", c.cases_v1}, {"cases_v2", c.cases_v2}});
  }
  doc["cluster_deltas"] = std::move(clusters);
  auto realloc = nlohmann::ordered_json::array();
  for (const auto& a : r.reallocation) {
    realloc.push_back({{"geo_id", a.geo_id},
                       {"pct_of_former", a.pct_of_former ? nlohmann::ordered_json(*a.pct_of_former) : nullptr}});
  }
  doc["reallocation_pct"] = std::move(realloc);
  return doc.dump(2) + "\n";
}

std::string report_text(const EvaluationReport& r) {
  std::ostringstream os;
  os << std::fixed;
  os << "Optimized weights        p1 = " << std::setprecision(2) << r.p1 << ", p2 = " << r.p2 << "\n";
  os << "Total tests (T)          " << r.total_tests << "\n";
  os << "Projected cases, current " << std::setprecision(0) << round_half_up(r.cases_v1) << "\n";
  os << "Projected cases, optimal " << round_half_up(r.cases_v2) << "\n";
  os << "Case difference          " << round_half_up(r.delta_cases) << "\n";
  os << "Improvement              ";
  if (r.improvement_pct) {
    os << std::setprecision(1) << *r.improvement_pct << "%\n";
  } else {
    os << "undefined\n";
  }
  if (r.ztest) {
    os << "Two-proportion z         " << std::setprecision(3) << r.ztest->z << "\n";
    os << "Two-sided p-value        " << std::scientific << std::setprecision(3) << r.ztest->p_value << std::fixed
       << "\n";
  } else {
    os << "Two-proportion z         undefined (degenerate pooled proportion)\n";
  }
  os << "\n" << std::left << std::setw(12) << "cluster" << std::right << std::setw(12) << "cases_v1" << std::setw(12)
     << "cases_v2" << std::setw(10) << "delta" << "\n";
  for (const auto& c : r.cluster_deltas) {
    os << std::left << std::setw(12) << c.label << std::right << std::setprecision(0) << std::setw(12)
       << round_half_up(c.cases_v1) << std::setw(12) << round_half_up(c.cases_v2) << std::setw(10)
       << round_half_up(c.cases_v2 - c.cases_v1) << "\n";
  }
  return os.str();
}

void write_cluster_deltas_csv(std::ostream& out, std::span<const ClusterCases> deltas) {
  csv::write_record(out, {"label", "cases_v1", "cases_v2", "delta"});
  for (const auto& c : deltas) {
    csv::write_record(out, {c.label, csv::format_double(c.cases_v1), csv::format_double(c.cases_v2),
                            csv::format_double(c.cases_v2 - c.cases_v1)});
  }
}

void write_reallocation_csv(std::ostream& out, std::span<const Reallocation> rows) {
  csv::write_record(out, {"geo_id", "pct_of_former"});
  for (const auto& r : rows) {
    csv::write_record(out, {std::to_string(r.geo_id), r.pct_of_former ? csv::format_double(*r.pct_of_former) : ""});
  }
}

}  // namespace bllopt
