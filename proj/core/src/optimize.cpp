#include "bllopt/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "bllopt/csv.hpp"

namespace bllopt {

namespace {

constexpr double kShareTolerance = 1e-6;
constexpr std::size_t kMaxGridPoints = 4'000'000;
// Objective values closer than this (relative) are ties; scaled weight pairs
// such as (0.1, 0.2) and (0.3, 0.6) give the same allocation but can differ
// in the last bits.
constexpr double kTieTolerance = 1e-9;

bool sums_to_one(std::span<const double> v, double tol) {
  return std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) <= tol;
}

std::vector<Year> trailing_years(const NeighborhoodPanel& panel, Year target_year, std::size_t window) {
  if (window < 1) throw OptimizeError(OptimizeErrc::Precondition, "window must be at least 1 year");
  std::vector<Year> years;
  for (std::size_t k = window; k-- > 0;) {
    const Year y = target_year - static_cast<Year>(k);
    if (!panel.has_year(y)) {
      throw OptimizeError(OptimizeErrc::Precondition,
                          "window of " + std::to_string(window) + " years ending " + std::to_string(target_year) +
                              " needs year " + std::to_string(y) + ", which is not in the panel");
    }
    years.push_back(y);
  }
  return years;
}

}  // namespace

ShareVectors compute_shares(const NeighborhoodPanel& panel, Year target_year, std::size_t window) {
  ShareVectors s;
  s.target_year = target_year;
  s.window_years = trailing_years(panel, target_year, window);
  s.geo_ids = panel.geo_ids();

  Count city_tests = 0, city_cases = 0;
  std::vector<Count> tests, cases;
  for (GeoId g : s.geo_ids) {
    const auto* r = panel.find(g, target_year);
    tests.push_back(r ? r->tests : 0);
    Count c = 0;
    for (Year y : s.window_years) {
      if (const auto* w = panel.find(g, y)) c += w->cases_5plus;
    }
    cases.push_back(c);
    city_tests += tests.back();
    city_cases += c;
  }
  if (city_tests <= 0) {
    throw OptimizeError(OptimizeErrc::ZeroCityTests, "no tests recorded citywide in " + std::to_string(target_year));
  }
  if (city_cases <= 0) throw OptimizeError(OptimizeErrc::ZeroCityCases, "no cases recorded citywide in the window");
  for (std::size_t i = 0; i < s.geo_ids.size(); ++i) {
    s.x.push_back(static_cast<double>(tests[i]) / static_cast<double>(city_tests));
    s.y.push_back(static_cast<double>(cases[i]) / static_cast<double>(city_cases));
  }
  return s;
}

std::vector<double> window_rates(const NeighborhoodPanel& panel, std::span<const GeoId> geo_ids,
                                 std::span<const Year> years) {
  std::vector<double> rates;
  rates.reserve(geo_ids.size());
  for (GeoId g : geo_ids) {
    Count t = 0, c = 0;
    for (Year y : years) {
      if (const auto* r = panel.find(g, y)) {
        t += r->tests;
        c += r->cases_5plus;
      }
    }
    rates.push_back(t > 0 ? static_cast<double>(c) / static_cast<double>(t) : 0.0);
  }
  return rates;
}

std::optional<std::vector<double>> try_v2_share(const ShareVectors& shares, double p1, double p2) {
  const std::size_t n = shares.x.size();
  if (shares.y.size() != n) throw OptimizeError(OptimizeErrc::ShareMismatch, "x and y differ in length");
  const double total = p1 + p2;
  if (!(total > 0.0)) return std::nullopt;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = shares.x[i] * p1 + shares.y[i] * p2;
    if (s < 0.0) return std::nullopt;
    out[i] = s / total;
  }
  return out;
}

std::vector<double> v2_share(const ShareVectors& shares, double p1, double p2) {
  if (!sums_to_one(shares.x, 1e-9) || !sums_to_one(shares.y, 1e-9)) {
    throw OptimizeError(OptimizeErrc::Precondition, "x and y must each sum to 1");
  }
  auto v = try_v2_share(shares, p1, p2);
  if (!v) {
    throw OptimizeError(OptimizeErrc::InfeasibleWeights, "weights (" + csv::format_double(p1) + ", " +
                                                             csv::format_double(p2) +
                                                             ") give a negative or empty allocation");
  }
  return std::move(*v);
}

double case_difference(double total_tests, std::span<const double> rates, std::span<const double> rho1,
                       std::span<const double> rho2) {
  if (rates.size() != rho1.size() || rates.size() != rho2.size()) {
    throw OptimizeError(OptimizeErrc::ShareMismatch, "rates and share vectors differ in length");
  }
  if (!sums_to_one(rho1, kShareTolerance) || !sums_to_one(rho2, kShareTolerance)) {
    throw OptimizeError(OptimizeErrc::Precondition, "share vectors must each sum to 1");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] < 0.0) throw OptimizeError(OptimizeErrc::Precondition, "rates must be non-negative");
    acc += rates[i] * (rho2[i] - rho1[i]);
  }
  return total_tests * acc;
}

std::vector<Count> finalize_tests(std::span<const double> shares, Count total_tests) {
  if (total_tests < 0) throw OptimizeError(OptimizeErrc::Precondition, "total tests must be non-negative");
  const std::size_t n = shares.size();
  if (n == 0) {
    if (total_tests != 0) throw OptimizeError(OptimizeErrc::Precondition, "cannot apportion tests to no neighborhoods");
    return {};
  }
  double sum = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw OptimizeError(OptimizeErrc::Precondition, "shares must be finite and non-negative");
    }
    sum += s;
  }
  if (!(sum > 0.0)) throw OptimizeError(OptimizeErrc::Precondition, "shares sum to zero");

  std::vector<Count> out(n);
  std::vector<double> frac(n);
  Count assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = shares[i] / sum * static_cast<double>(total_tests);
    const double fl = std::floor(quota);
    out[i] = static_cast<Count>(fl);
    // Quantized so remainders equal up to rounding tie and fall to the lower index.
    frac[i] = std::round((quota - fl) * 1e9);
    assigned += out[i];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Count remaining = total_tests - assigned;
  if (remaining > 0) {
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; remaining > 0; k = (k + 1) % n, --remaining) ++out[order[k]];
  } else if (remaining < 0) {
    // Only reachable through rounding when the quotas overshoot T.
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] < frac[b]; });
    for (std::size_t k = 0; remaining < 0; k = (k + 1) % n) {
      if (out[order[k]] > 0) {
        --out[order[k]];
        ++remaining;
      }
    }
  }
  return out;
}

std::vector<double> GridAxis::values() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw OptimizeError(OptimizeErrc::Precondition, "grid step must be > 0");
  if (!(lo <= hi)) throw OptimizeError(OptimizeErrc::Precondition, "grid range needs lo <= hi");
  const double span = (hi - lo) / step;
  if (span + 1.0 > static_cast<double>(kMaxGridPoints)) {
    throw OptimizeError(OptimizeErrc::Precondition, "grid axis has too many points");
  }
  const auto count = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double raw = lo + static_cast<double>(i) * step;
    v[i] = std::round(raw * 1e9) / 1e9;
  }
  return v;
}

GridConfig GridConfig::wide() { return {{-10.0, 10.0, 0.1}, {-10.0, 10.0, 0.1}}; }
GridConfig GridConfig::narrow() { return {{-1.0, 1.0, 0.01}, {-1.0, 1.0, 0.01}}; }

AllocationProblem make_problem(const NeighborhoodPanel& panel, const ShareVectors& shares, Count total_tests,
                               std::optional<std::size_t> rate_window) {
  if (total_tests < 0) throw OptimizeError(OptimizeErrc::Precondition, "total tests must be non-negative");
  AllocationProblem p;
  p.shares = shares;
  p.total_tests = total_tests;
  const auto years = rate_window ? trailing_years(panel, shares.target_year, *rate_window) : shares.window_years;
  p.rates = window_rates(panel, shares.geo_ids, years);
  for (GeoId g : shares.geo_ids) {
    const auto* r = panel.find(g, shares.target_year);
    p.child_population.push_back(r ? std::optional<Count>(r->child_population) : std::nullopt);
  }
  return p;
}

namespace {

AllocationPlan plan_from_share(const AllocationProblem& problem, double p1, double p2, std::vector<double> v2,
                               const std::vector<Count>& v1_tests) {
  const auto& x = problem.shares.x;
  const double t = static_cast<double>(problem.total_tests);
  AllocationPlan plan;
  plan.p1 = p1;
  plan.p2 = p2;
  plan.target_year = problem.shares.target_year;
  plan.total_tests = problem.total_tests;
  plan.geo_ids = problem.shares.geo_ids;
  plan.baseline_share = x;
  plan.rates = problem.rates;
  plan.v1_tests = v1_tests;
  plan.v2_tests = finalize_tests(v2, problem.total_tests);
  double c1 = 0.0, c2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    c1 += problem.rates[i] * x[i];
    c2 += problem.rates[i] * v2[i];
  }
  plan.projected_cases_v1 = t * c1;
  plan.projected_cases_v2 = t * c2;
  plan.delta_cases = case_difference(t, problem.rates, x, v2);
  plan.v2_share = std::move(v2);
  return plan;
}

}  // namespace

AllocationPlan make_plan(const AllocationProblem& problem, double p1, double p2) {
  if (problem.rates.size() != problem.shares.x.size()) {
    throw OptimizeError(OptimizeErrc::ShareMismatch, "rates are not aligned with shares");
  }
  return plan_from_share(problem, p1, p2, v2_share(problem.shares, p1, p2),
                         finalize_tests(problem.shares.x, problem.total_tests));
}

std::string_view to_string(ConstraintKind k) noexcept {
  switch (k) {
    case ConstraintKind::Floor: return "floor";
    case ConstraintKind::PopulationCap: return "population_cap";
    case ConstraintKind::NegativeDelta: return "negative_delta";
  }
  return "unknown";
}

std::string_view to_string(PointStatus s) noexcept {
  switch (s) {
    case PointStatus::Feasible: return "feasible";
    case PointStatus::InfeasibleWeights: return "infeasible_weights";
    case PointStatus::FloorViolated: return "floor";
    case PointStatus::PopulationCapExceeded: return "population_cap";
    case PointStatus::NegativeDelta: return "negative_delta";
  }
  return "unknown";
}

std::vector<ConstraintViolation> check_constraints(const AllocationPlan& plan,
                                                   std::span<const std::optional<Count>> child_population,
                                                   const ConstraintConfig& config) {
  if (!(config.floor_fraction >= 0.0 && config.floor_fraction <= 1.0)) {
    throw OptimizeError(OptimizeErrc::Precondition, "floor fraction must lie in [0, 1]");
  }
  const std::size_t n = plan.geo_ids.size();
  if (plan.v2_share.size() != n || plan.baseline_share.size() != n || plan.v2_tests.size() != n ||
      child_population.size() != n) {
    throw OptimizeError(OptimizeErrc::ShareMismatch, "plan fields are not aligned");
  }
  std::vector<ConstraintViolation> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.v2_share[i] < config.floor_fraction * plan.baseline_share[i]) {
      out.push_back({ConstraintKind::Floor, plan.geo_ids[i],
                     "share " + csv::format_double(plan.v2_share[i]) + " below floor of baseline " +
                         csv::format_double(plan.baseline_share[i])});
    }
  }
  if (config.population_cap) {
    for (std::size_t i = 0; i < n; ++i) {
      if (child_population[i] && plan.v2_tests[i] > *child_population[i]) {
        out.push_back({ConstraintKind::PopulationCap, plan.geo_ids[i],
                       std::to_string(plan.v2_tests[i]) + " tests exceed child population " +
                           std::to_string(*child_population[i])});
      }
    }
  }
  // Scaled baseline weights such as (0.2, 0) reproduce x only to rounding;
  // their residue must not count as a loss.
  const double delta_floor = -kTieTolerance * std::max(1.0, plan.projected_cases_v1);
  if (config.require_nonnegative_delta && plan.delta_cases < delta_floor) {
    out.push_back({ConstraintKind::NegativeDelta, 0, "delta cases " + csv::format_double(plan.delta_cases)});
  }
  return out;
}

std::vector<ConstraintViolation> check_constraints(const AllocationPlan& plan, const NeighborhoodPanel& panel,
                                                   const ConstraintConfig& config) {
  std::vector<std::optional<Count>> pop;
  for (GeoId g : plan.geo_ids) {
    const auto* r = panel.find(g, plan.target_year);
    pop.push_back(r ? std::optional<Count>(r->child_population) : std::nullopt);
  }
  return check_constraints(plan, pop, config);
}

GridSearchResult grid_search(const AllocationProblem& problem, const GridConfig& grid,
                             const ConstraintConfig& constraints) {
  const auto& shares = problem.shares;
  if (shares.x.empty()) throw OptimizeError(OptimizeErrc::Precondition, "no neighborhoods to allocate");
  if (!sums_to_one(shares.x, 1e-9) || !sums_to_one(shares.y, 1e-9)) {
    throw OptimizeError(OptimizeErrc::Precondition, "x and y must each sum to 1");
  }
  if (problem.rates.size() != shares.x.size() || problem.child_population.size() != shares.x.size()) {
    throw OptimizeError(OptimizeErrc::ShareMismatch, "problem vectors are not aligned");
  }
  const auto p1_values = grid.p1.values();
  const auto p2_values = grid.p2.values();
  if (p1_values.size() * p2_values.size() > kMaxGridPoints) {
    throw OptimizeError(OptimizeErrc::Precondition, "grid has too many points");
  }

  const auto v1_tests = finalize_tests(shares.x, problem.total_tests);
  GridSearchResult result;
  result.trace.reserve(p1_values.size() * p2_values.size());

  std::optional<std::pair<double, double>> best;
  double best_delta = -std::numeric_limits<double>::infinity();

  // Lattice order is (p1, p2) ascending, so keeping the first maximum is the
  // lexicographic tie-break.
  for (double p1 : p1_values) {
    for (double p2 : p2_values) {
      TraceEntry entry{p1, p2, std::nullopt, PointStatus::Feasible};
      auto v2 = try_v2_share(shares, p1, p2);
      if (!v2) {
        entry.status = PointStatus::InfeasibleWeights;
        result.trace.push_back(entry);
        continue;
      }
      const auto plan = plan_from_share(problem, p1, p2, std::move(*v2), v1_tests);
      entry.delta_cases = plan.delta_cases;
      const auto violations = check_constraints(plan, problem.child_population, constraints);
      if (!violations.empty()) {
        switch (violations.front().kind) {
          case ConstraintKind::Floor: entry.status = PointStatus::FloorViolated; break;
          case ConstraintKind::PopulationCap: entry.status = PointStatus::PopulationCapExceeded; break;
          case ConstraintKind::NegativeDelta: entry.status = PointStatus::NegativeDelta; break;
        }
      } else {
        ++result.feasible_points;
        if (!best || plan.delta_cases > best_delta + kTieTolerance * std::max(1.0, std::abs(best_delta))) {
          best_delta = plan.delta_cases;
          best.emplace(p1, p2);
        }
      }
      result.trace.push_back(entry);
    }
  }

  if (!best) {
    throw OptimizeError(OptimizeErrc::NoFeasiblePoint,
                        "none of the " + std::to_string(result.trace.size()) + " grid points satisfies the constraints");
  }
  result.best = make_plan(problem, best->first, best->second);
  return result;
}

GridSearchResult grid_search(const NeighborhoodPanel& panel, const ShareVectors& shares, Count total_tests,
                             const GridConfig& grid, const ConstraintConfig& constraints) {
  return grid_search(make_problem(panel, shares, total_tests), grid, constraints);
}

// ---------------------------------------------------------------------------
// Serialization

void write_plan_csv(std::ostream& out, const AllocationPlan& plan) {
  csv::write_record(out, {"geo_id", "baseline_share", "v2_share", "v1_tests", "v2_tests", "pct_of_former"});
  for (std::size_t i = 0; i < plan.geo_ids.size(); ++i) {
    const std::string pct = plan.v1_tests[i] > 0
                                ? csv::format_double(100.0 * static_cast<double>(plan.v2_tests[i]) /
                                                     static_cast<double>(plan.v1_tests[i]))
                                : "";
    csv::write_record(out, {std::to_string(plan.geo_ids[i]), csv::format_double(plan.baseline_share[i]),
                            csv::format_double(plan.v2_share[i]), std::to_string(plan.v1_tests[i]),
                            std::to_string(plan.v2_tests[i]), pct});
  }
}

std::string plan_json(const AllocationPlan& plan) {
  nlohmann::ordered_json doc;
  doc["p1"] = plan.p1;
  doc["p2"] = plan.p2;
  doc["target_year"] = plan.target_year;
  doc["total_tests"] = plan.total_tests;
  doc["projected_cases_v1"] = plan.projected_cases_v1;
  doc["projected_cases_v2"] = plan.projected_cases_v2;
  doc["delta_cases"] = plan.delta_cases;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < plan.geo_ids.size(); ++i) {
    rows.push_back({{"geo_id", plan.geo_ids[i]},
                    {"baseline_share", plan.baseline_share[i]},
                    {"v2_share", plan.v2_share[i]},
                    {"rate", plan.rates[i]},
                    {"v1_tests", plan.v1_tests[i]},
                    {"v2_tests", plan.v2_tests[i]}});
  }
  doc["neighborhoods"] = std::move(rows);
  return doc.dump(2) + "\n";
}

AllocationPlan parse_plan_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    AllocationPlan plan;
    plan.p1 = doc.at("p1").get<double>();
    plan.p2 = doc.at("p2").get<double>();
    plan.target_year = doc.at("target_year").get<Year>();
    plan.total_tests = doc.at("total_tests").get<Count>();
    plan.projected_cases_v1 = doc.at("projected_cases_v1").get<double>();
    plan.projected_cases_v2 = doc.at("projected_cases_v2").get<double>();
    plan.delta_cases = doc.at("delta_cases").get<double>();
    for (const auto& row : doc.at("neighborhoods")) {
      plan.geo_ids.push_back(row.at("geo_id").get<GeoId>());
      plan.baseline_share.push_back(row.at("baseline_share").get<double>());
      plan.v2_share.push_back(row.at("v2_share").get<double>());
      plan.rates.push_back(row.at("rate").get<double>());
      plan.v1_tests.push_back(row.at("v1_tests").get<Count>());
      plan.v2_tests.push_back(row.at("v2_tests").get<Count>());
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw OptimizeError(OptimizeErrc::Precondition, std::string("invalid plan JSON: ") + e.what());
  }
}

void write_trace_csv(std::ostream& out, std::span<const TraceEntry> trace) {
  csv::write_record(out, {"p1", "p2", "delta_cases", "feasible", "status"});
  for (const auto& e : trace) {
    csv::write_record(out, {csv::format_double(e.p1), csv::format_double(e.p2),
                            e.delta_cases ? csv::format_double(*e.delta_cases) : "", e.feasible() ? "1" : "0",
                            std::string(to_string(e.status))});
  }
}

}  // namespace bllopt
