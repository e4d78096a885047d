// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// nonzero when any criterion fails. Tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "bllopt/pipeline.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace bllopt;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kNormalizeMeanTol = 1e-9;
constexpr double kNormalizeMaxSeconds = 1.0;
constexpr double kOracleMaxSeconds = 5.0;
constexpr double kRecoveryRate = 0.95;
constexpr double kZTol = 1e-6;
constexpr double kP196Tol = 1e-4;
constexpr double kPipelineMaxSeconds = 10.0;

enum class Outcome { Pass, Fail, Skip };

struct Result {
  Outcome outcome = Outcome::Pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

// 1. Normalization invariants.
Result normalization_invariants() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> value(1e-4, 10.0);
  std::uniform_real_distribution<double> any_scale(1e-3, 1e3);
  std::uniform_int_distribution<int> exponent(-20, 20);
  double worst_mean = 0, worst_scale_rel = 0;
  std::size_t exact_failures = 0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(1 + rng() % 60);
    for (auto& e : v) e = value(rng);
    const auto out = mean_normalize_year(v);
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    worst_mean = std::max(worst_mean, std::abs(mean - 1.0));

    // Power-of-two scales are representable exactly: bitwise equality.
    auto exact = v;
    const double c2 = std::ldexp(1.0, exponent(rng));
    for (auto& e : exact) e *= c2;
    if (mean_normalize_year(exact) != out) ++exact_failures;

    // Any other scale rounds the input itself; report the residue.
    auto scaled = v;
    const double c = any_scale(rng);
    for (auto& e : scaled) e *= c;
    const auto o2 = mean_normalize_year(scaled);
    for (std::size_t i = 0; i < out.size(); ++i) {
      worst_scale_rel = std::max(worst_scale_rel, std::abs(o2[i] - out[i]) / out[i]);
    }
  }
  const double secs = seconds_since(t0);
  Result r;
  r.detail = "max |mean-1| = " + fmt(worst_mean) + ", exact-scale mismatches = " + std::to_string(exact_failures) +
             ", max rel residue (arbitrary c) = " + fmt(worst_scale_rel) + ", " + fmt(secs) + " s";
  if (worst_mean > kNormalizeMeanTol || exact_failures != 0 || worst_scale_rel > 1e-12 ||
      secs >= kNormalizeMaxSeconds) {
    r.outcome = Outcome::Fail;
  }
  return r;
}

// 2. Identity baseline on synthetic panels and, if supplied, a real one.
Result identity_baseline() {
  std::vector<NeighborhoodPanel> panels;
  panels.push_back(parse_panel(testing_support::fixture_path()).panel);
  std::mt19937_64 rng(2002);
  for (int i = 0; i < 25; ++i) {
    panels.push_back(NeighborhoodPanel::from_records(
        testing_support::random_records(rng, 2 + static_cast<int>(rng() % 40), 2015, 7)));
  }
  std::string real = "no real panel supplied";
  if (const char* path = std::getenv("BLLOPT_NYC_DATA")) {
    panels.push_back(parse_panel(path).panel);
    real = "real panel included";
  }
  std::size_t bad = 0;
  for (const auto& p : panels) {
    const Year year = p.years().back();
    const auto s = compute_shares(p, year, 3);
    const auto problem = make_problem(p, s, 100000);
    const auto plan = make_plan(problem, 1.0, 0.0);
    if (plan.v2_share != s.x || plan.delta_cases != 0.0 || plan.v2_tests != plan.v1_tests) ++bad;
    if (v2_share(s, 0.0, 1.0) != s.y) ++bad;
  }
  Result r;
  r.detail = std::to_string(panels.size()) + " panels, " + std::to_string(bad) + " mismatches (" + real + ")";
  if (bad) r.outcome = Outcome::Fail;
  return r;
}

// 3. Optimizer against the independent exhaustive enumerator.
Result optimizer_oracle() {
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int instances = 40;
  int mismatches = 0, infeasible_agree = 0, capped = 0;
  std::string first_mismatch;
  const auto t0 = Clock::now();
  for (int k = 0; k < instances; ++k) {
    const std::size_t n = 2 + rng() % 4;
    std::vector<Count> tests(n), cases(n);
    for (std::size_t i = 0; i < n; ++i) {
      tests[i] = 100 + static_cast<Count>(rng() % 5000);
      cases[i] = 1 + static_cast<Count>(rng() % 200);
    }
    const Count t_sum = std::accumulate(tests.begin(), tests.end(), Count{0});
    const Count c_sum = std::accumulate(cases.begin(), cases.end(), Count{0});

    AllocationProblem p;
    for (std::size_t i = 0; i < n; ++i) {
      p.shares.geo_ids.push_back(static_cast<GeoId>(10 + i));
      p.shares.x.push_back(static_cast<double>(tests[i]) / static_cast<double>(t_sum));
      p.shares.y.push_back(static_cast<double>(cases[i]) / static_cast<double>(c_sum));
      p.rates.push_back(u(rng) * 0.05);
    }
    p.shares.target_year = 2021;
    p.total_tests = 1000 + static_cast<Count>(rng() % 200000);
    for (std::size_t i = 0; i < n; ++i) {
      // Populations between 0.8x and 3x the baseline allocation; some bind.
      const double base = p.shares.x[i] * static_cast<double>(p.total_tests);
      p.child_population.push_back(static_cast<Count>(base * (0.8 + 2.2 * u(rng))) + 1);
    }
    if (k % 5 == 0) p.child_population[0].reset();

    ConstraintConfig cfg;
    cfg.floor_fraction = (k % 4 == 0) ? 0.0 : 0.25;
    cfg.population_cap = k % 3 != 0;
    cfg.require_nonnegative_delta = k % 7 != 0;

    // 11 x 11 lattice, so 121 points; alternate ranges.
    const GridConfig grid = (k % 2 == 0) ? GridConfig{{-1, 1, 0.2}, {-1, 1, 0.2}} : GridConfig{{0, 2, 0.2}, {-1, 1, 0.2}};

    oracle::AllocationInstance inst;
    inst.x = p.shares.x;
    inst.y = p.shares.y;
    inst.rates = p.rates;
    inst.population = p.child_population;
    inst.total_tests = p.total_tests;
    inst.floor_fraction = cfg.floor_fraction;
    inst.population_cap = cfg.population_cap;
    inst.require_nonnegative_delta = cfg.require_nonnegative_delta;
    const auto ref = oracle::best_allocation(inst, grid.p1.values(), grid.p2.values());

    std::optional<GridSearchResult> got;
    try {
      got = grid_search(p, grid, cfg);
    } catch (const OptimizeError& e) {
      if (e.code() != OptimizeErrc::NoFeasiblePoint) throw;
    }
    if (!ref || !got) {
      if (static_cast<bool>(ref) != static_cast<bool>(got)) ++mismatches;
      else ++infeasible_agree;
      continue;
    }
    for (const auto& e : got->trace) {
      if (e.status == PointStatus::PopulationCapExceeded) {
        ++capped;
        break;
      }
    }
    if (got->best.p1 != ref->p1 || got->best.p2 != ref->p2 || got->best.v2_tests != ref->tests ||
        got->feasible_points != ref->feasible_points) {
      if (!mismatches++) {
        first_mismatch = "; first at instance " + std::to_string(k) + ": (" + fmt(got->best.p1) + ", " +
                         fmt(got->best.p2) + ") delta " + fmt(got->best.delta_cases) + " feasible " +
                         std::to_string(got->feasible_points) + " vs oracle (" + fmt(ref->p1) + ", " + fmt(ref->p2) +
                         ") delta " + fmt(static_cast<double>(ref->delta)) + " feasible " +
                         std::to_string(ref->feasible_points);
      }
    }
  }
  const double secs = seconds_since(t0);
  Result r;
  r.detail = std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches, " +
             std::to_string(capped) + " with a binding population cap, " + std::to_string(infeasible_agree) +
             " agreed infeasible, " + fmt(secs) + " s" + first_mismatch;
  if (mismatches || secs >= kOracleMaxSeconds) r.outcome = Outcome::Fail;
  return r;
}

// 4. k-medoids recovery of three separated flat-level groups.
Result kmedoids_recovery() {
  std::mt19937_64 rng(4004);
  const double levels[3] = {0.5, 1.0, 1.8};
  const double noise = 0.04;  // smallest gap 0.5 >= 10 x noise
  std::uniform_real_distribution<double> jitter(-noise, noise);
  int recovered = 0, monotone = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> group(12);
    for (int i = 0; i < 12; ++i) group[i] = i % 3;
    std::shuffle(group.begin(), group.end(), rng);
    std::vector<SeriesVector> series;
    for (int i = 0; i < 12; ++i) {
      SeriesVector s{static_cast<GeoId>(300 + i), std::vector<double>(17)};
      for (auto& v : s.values) v = levels[group[i]] + jitter(rng);
      series.push_back(std::move(s));
    }
    const auto res = k_medoids(series, 3);
    // Same partition: cluster ids and generating groups must be in bijection.
    std::map<std::size_t, std::set<int>> by_cluster;
    std::map<int, std::set<std::size_t>> by_group;
    for (int i = 0; i < 12; ++i) {
      by_cluster[res.cluster[i]].insert(group[i]);
      by_group[group[i]].insert(res.cluster[i]);
    }
    bool ok = by_cluster.size() == 3;
    for (const auto& [_, g] : by_cluster) ok = ok && g.size() == 1;
    for (const auto& [_, c] : by_group) ok = ok && c.size() == 1;
    if (ok) ++recovered;
    bool mono = true;
    for (std::size_t i = 1; i < res.cost_history.size(); ++i) mono = mono && res.cost_history[i] <= res.cost_history[i - 1];
    if (mono) ++monotone;
  }
  Result r;
  r.detail = "recovered " + std::to_string(recovered) + "/" + std::to_string(trials) + ", cost non-increasing in " +
             std::to_string(monotone) + "/" + std::to_string(trials);
  if (recovered < kRecoveryRate * trials || monotone != trials) r.outcome = Outcome::Fail;
  return r;
}

// 5. Z-test against the formula oracle.
Result ztest_correctness() {
  const auto t = two_proportion_ztest(2860, 260000, 3270, 260000);
  const double z_ref = static_cast<double>(oracle::pooled_z(2860, 260000, 3270, 260000));
  const double p196 = two_sided_normal_p(1.96);
  const double p_ref = static_cast<double>(oracle::two_sided_p_by_quadrature(t.z));
  Result r;
  r.detail = "z = " + fmt(t.z) + " (oracle " + fmt(z_ref) + "), p = " + fmt(t.p_value) + " (quadrature " +
             fmt(p_ref) + "), p(1.96) = " + fmt(p196);
  if (std::abs(t.z - z_ref) > kZTol || !(t.p_value < 0.05) || std::abs(p196 - 0.05) > kP196Tol) {
    r.outcome = Outcome::Fail;
  }
  return r;
}

// 6. Reference figures on the real dataset; runs only when it is supplied.
Result reference_figures() {
  const char* path = std::getenv("BLLOPT_NYC_DATA");
  if (!path) return {Outcome::Skip, "set BLLOPT_NYC_DATA to the portal export to run"};
  testing_support::TempDir d1, d2, d3;
  RunConfig cfg;
  cfg.input_path = path;
  cfg.output_dir = d1.path();
  cfg.target_year = 2021;
  const auto forecast = run_pipeline(cfg);
  cfg.total_tests_override = 260000;
  cfg.output_dir = d2.path();
  const auto wide = run_pipeline(cfg);
  cfg.grid = GridConfig::narrow();
  cfg.output_dir = d3.path();
  const auto narrow = run_pipeline(cfg);

  const auto panel = parse_panel(path).panel;
  const auto shares = population_testing_shares(panel, 2021);
  const double slope = fit_share_regression(shares.population_share, shares.testing_share).slope;
  std::optional<double> lower_manhattan;
  for (const auto& a : wide.report.reallocation) {
    if (a.geo_id == 310) lower_manhattan = a.pct_of_former;
  }

  auto within = [](double v, double target, double rel) { return std::abs(v - target) <= rel * target; };
  std::vector<std::string> misses;
  if (!within(wide.report.cases_v1, 2860, 0.10)) misses.push_back("baseline cases " + fmt(wide.report.cases_v1));
  if (!within(wide.report.cases_v2, 3270, 0.10)) misses.push_back("optimized cases " + fmt(wide.report.cases_v2));
  if (!wide.report.improvement_pct || std::abs(*wide.report.improvement_pct - 14.3) > 3.0) {
    misses.push_back("improvement " + fmt(wide.report.improvement_pct.value_or(NAN)));
  }
  if (!within(wide.report.delta_cases, 410, 0.15)) misses.push_back("delta " + fmt(wide.report.delta_cases));
  if (!within(static_cast<double>(forecast.total_tests), 260000, 0.15)) {
    misses.push_back("forecast T " + std::to_string(forecast.total_tests));
  }
  if (std::abs(slope - 1.04) > 0.05) misses.push_back("share slope " + fmt(slope));
  if (!lower_manhattan || std::abs(*lower_manhattan - 25.0) > 10.0) {
    misses.push_back("geo 310 reallocation " + fmt(lower_manhattan.value_or(NAN)));
  }
  if (wide.plan.v2_tests != narrow.plan.v2_tests) misses.push_back("wide and narrow grids disagree");

  Result r;
  r.detail = "cases " + fmt(wide.report.cases_v1) + " -> " + fmt(wide.report.cases_v2) + ", forecast T " +
             std::to_string(forecast.total_tests) + ", slope " + fmt(slope);
  if (!misses.empty()) {
    r.outcome = Outcome::Fail;
    for (const auto& m : misses) r.detail += "; " + m;
  }
  return r;
}

// 7. Determinism and runtime of the fixture pipeline on the default grid.
Result determinism() {
  testing_support::TempDir a, b;
  RunConfig cfg;
  cfg.input_path = testing_support::fixture_path();
  cfg.emit_trace = true;
  cfg.output_dir = a.path();
  const auto t0 = Clock::now();
  run_pipeline(cfg);
  const double secs = seconds_since(t0);
  cfg.output_dir = b.path();
  run_pipeline(cfg);
  std::size_t files = 0, differing = 0;
  for (const auto& e : std::filesystem::directory_iterator(a.path())) {
    ++files;
    if (testing_support::read_file(e.path()) != testing_support::read_file(b.path() / e.path().filename())) {
      ++differing;
    }
  }
  Result r;
  r.detail = std::to_string(files) + " files, " + std::to_string(differing) + " differ, first run " + fmt(secs) + " s";
  if (differing || files == 0 || secs >= kPipelineMaxSeconds) r.outcome = Outcome::Fail;
  return r;
}

// 8. Apportionment sums and per-entry deviation.
Result apportionment() {
  std::mt19937_64 rng(8008);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bad_sum = 0, bad_dev = 0;
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<double> s(n);
    for (auto& v : s) v = (rng() % 5 == 0) ? 0.0 : u(rng);
    s[rng() % n] += 0.01;
    const double sum = std::accumulate(s.begin(), s.end(), 0.0);
    for (auto& v : s) v /= sum;
    const Count total = static_cast<Count>(rng() % 1'000'001);
    const auto out = finalize_tests(s, total);
    if (std::accumulate(out.begin(), out.end(), Count{0}) != total) ++bad_sum;
    for (std::size_t i = 0; i < n; ++i) {
      const double dev = std::abs(static_cast<double>(out[i]) - s[i] * static_cast<double>(total));
      worst = std::max(worst, dev);
      if (!(dev < 1.0)) ++bad_dev;
    }
  }
  Result r;
  r.detail = "sum mismatches " + std::to_string(bad_sum) + ", max deviation " + fmt(worst);
  if (bad_sum || bad_dev) r.outcome = Outcome::Fail;
  return r;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"1 normalization invariants", normalization_invariants},
      {"2 identity baseline", identity_baseline},
      {"3 optimizer matches exhaustive oracle", optimizer_oracle},
      {"4 k-medoids recovery", kmedoids_recovery},
      {"5 z-test correctness", ztest_correctness},
      {"6 reference figures (real data)", reference_figures},
      {"7 determinism", determinism},
      {"8 apportionment", apportionment},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = r.outcome == Outcome::Pass ? "PASS" : r.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    if (r.outcome == Outcome::Fail) ++failures;
    std::cout << tag << "  [" << name << "]  " << r.detail << "\n";
  }
  return failures == 0 ? 0 : 1;
}
