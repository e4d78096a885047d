#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "bllopt/normalize.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace bllopt;
using testing_support::rec;

TEST_CASE("mean_normalize_year examples") {
  CHECK(mean_normalize_year(std::vector{0.02, 0.02, 0.02}) == std::vector{1.0, 1.0, 1.0});
  CHECK(mean_normalize_year(std::vector{2.0, 4.0, 6.0}) == std::vector{0.5, 1.0, 1.5});
  try {
    mean_normalize_year(std::vector<double>{});
    FAIL("expected precondition error");
  } catch (const NormalizeError& e) {
    CHECK(e.code() == NormalizeErrc::Precondition);
  }
}

TEST_CASE("mean_normalize_year rejects all-zero and negative input") {
  try {
    mean_normalize_year(std::vector{0.0, 0.0});
    FAIL("expected ZeroMean");
  } catch (const NormalizeError& e) {
    CHECK(e.code() == NormalizeErrc::ZeroMean);
  }
  CHECK_THROWS_AS(mean_normalize_year(std::vector{1.0, -0.5}), NormalizeError);
}

TEST_CASE("mean_normalize_year properties") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.0, 5.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng() % 40);
    for (auto& e : v) e = d(rng);
    v[0] += 0.01;
    const auto out = mean_normalize_year(v);
    const double sum = std::accumulate(out.begin(), out.end(), 0.0);
    CHECK(sum == doctest::Approx(static_cast<double>(v.size())).epsilon(1e-12));
    auto scaled = v;
    for (auto& e : scaled) e *= 8.0;
    CHECK(mean_normalize_year(scaled) == out);
  }
}

TEST_CASE("normalize_panel examples") {
  SUBCASE("identical rates everywhere") {
    const auto p = NeighborhoodPanel::from_records(
        {rec(1, 2010, 100, 3), rec(2, 2010, 200, 6), rec(1, 2011, 50, 2), rec(2, 2011, 25, 1)});
    const auto n = normalize_panel(p);
    for (GeoId g : {1, 2}) {
      for (Year y : {2010, 2011}) CHECK(*n.value(g, y) == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
  SUBCASE("two years normalized independently") {
    const auto p = NeighborhoodPanel::from_records(
        {rec(1, 2010, 100, 1), rec(2, 2010, 100, 3), rec(1, 2011, 100, 10), rec(2, 2011, 100, 10)});
    const auto n = normalize_panel(p);
    CHECK(*n.value(1, 2010) == 0.5);
    CHECK(*n.value(2, 2010) == 1.5);
    CHECK(*n.value(1, 2011) == 1.0);
    CHECK(*n.value(2, 2011) == 1.0);
  }
  SUBCASE("undefined cells propagate as gaps") {
    const auto p = NeighborhoodPanel::from_records(
        {rec(1, 2010, 100, 1), rec(2, 2010, 0, 0), rec(3, 2010, 100, 3), rec(1, 2011, 100, 2), rec(2, 2011, 100, 2)});
    const auto n = normalize_panel(p);
    CHECK_FALSE(n.value(2, 2010));
    CHECK_FALSE(n.value(3, 2011));
    CHECK(*n.value(1, 2010) == 0.5);
    CHECK(*n.value(3, 2010) == 1.5);
  }
  SUBCASE("an all-zero year is an error") {
    const auto p = NeighborhoodPanel::from_records({rec(1, 2010, 100, 0), rec(2, 2010, 100, 0)});
    try {
      normalize_panel(p);
      FAIL("expected ZeroMean");
    } catch (const NormalizeError& e) {
      CHECK(e.code() == NormalizeErrc::ZeroMean);
    }
  }
}

TEST_CASE("normalize_panel: every year has mean 1 over defined cells") {
  const auto r = parse_panel(testing_support::fixture_path());
  const auto n = normalize_panel(r.panel);
  for (std::size_t yi = 0; yi < n.years().size(); ++yi) {
    double sum = 0;
    int count = 0;
    for (std::size_t gi = 0; gi < n.geo_ids().size(); ++gi) {
      if (auto v = n.at(gi, yi)) {
        sum += *v;
        ++count;
      }
    }
    CHECK(sum / count == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("normalized CSV round-trip") {
  const auto r = parse_panel(testing_support::fixture_path());
  const auto n = normalize_panel(r.panel);
  std::ostringstream out;
  write_normalized_csv(out, n);
  std::istringstream in(out.str());
  CHECK(read_normalized_csv(in) == n);
}

TEST_CASE("fit_share_regression: identity line") {
  const std::vector x{0.1, 0.2, 0.3, 0.4};
  const auto fit = fit_share_regression(x, x);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fit.intercept == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(fit.r_squared == doctest::Approx(1.0));
  CHECK(fit.n == 4u);
}

TEST_CASE("fit_share_regression matches the closed-form sums") {
  const std::vector x{0.2, 0.3, 0.5};
  const std::vector y{0.5, 0.3, 0.2};
  const auto fit = fit_share_regression(x, y);
  const auto ref = oracle::least_squares(x, y);
  CHECK(fit.slope == doctest::Approx(static_cast<double>(ref.slope)).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(static_cast<double>(ref.intercept)).epsilon(1e-12));
  // By hand: both means are 1/3, Sxy = -39/900 and Sxx = 42/900, so slope = -13/14.
  CHECK(fit.slope == doctest::Approx(-13.0 / 14.0).epsilon(1e-12));
  CHECK(fit.r_squared >= 0.0);
  CHECK(fit.r_squared <= 1.0);
}

TEST_CASE("fit_share_regression is symmetric under point order") {
  std::mt19937_64 rng(5);
  std::vector<double> x(9), y(9);
  std::uniform_real_distribution<double> d(0.1, 1.0);
  for (auto& v : x) v = d(rng);
  for (auto& v : y) v = d(rng);
  const double sx = std::accumulate(x.begin(), x.end(), 0.0), sy = std::accumulate(y.begin(), y.end(), 0.0);
  for (auto& v : x) v /= sx;
  for (auto& v : y) v /= sy;
  const auto base = fit_share_regression(x, y);
  std::vector<std::size_t> idx(9);
  std::iota(idx.begin(), idx.end(), 0u);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> px, py;
    for (auto i : idx) {
      px.push_back(x[i]);
      py.push_back(y[i]);
    }
    const auto f = fit_share_regression(px, py);
    CHECK(f.slope == doctest::Approx(base.slope).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(base.intercept).epsilon(1e-12));
  }
}

TEST_CASE("fit_share_regression errors") {
  try {
    fit_share_regression(std::vector{0.5, 0.5}, std::vector{0.2, 0.8});
    FAIL("expected DegenerateInput");
  } catch (const NormalizeError& e) {
    CHECK(e.code() == NormalizeErrc::DegenerateInput);
  }
  CHECK_THROWS_AS(fit_share_regression(std::vector{0.5, 0.6}, std::vector{0.2, 0.8}), NormalizeError);
  CHECK_THROWS_AS(fit_share_regression(std::vector{1.0}, std::vector{1.0}), NormalizeError);
}

TEST_CASE("population_testing_shares on the fixture") {
  const auto r = parse_panel(testing_support::fixture_path());
  const auto s = population_testing_shares(r.panel, 2021);
  CHECK(std::accumulate(s.population_share.begin(), s.population_share.end(), 0.0) == doctest::Approx(1.0));
  CHECK(std::accumulate(s.testing_share.begin(), s.testing_share.end(), 0.0) == doctest::Approx(1.0));
  const auto fit = fit_share_regression(s.population_share, s.testing_share);
  CHECK(fit.slope > 0.0);
  CHECK_THROWS_AS(population_testing_shares(r.panel, 1990), NormalizeError);
}

TEST_CASE("forecast_total_tests examples") {
  CHECK(forecast_total_tests(std::vector<Count>{100, 110, 120}) == 130);
  CHECK(forecast_total_tests(std::vector<Count>{300000, 280000, 260000, 240000}) == 220000);
  CHECK(forecast_total_tests(std::vector<Count>{50, 100, 10, 300, 200}, 2) == 100);
  CHECK(forecast_total_tests(std::vector<Count>{300, 100}) == 0);
  try {
    forecast_total_tests(std::vector<Count>{100});
    FAIL("expected InsufficientData");
  } catch (const NormalizeError& e) {
    CHECK(e.code() == NormalizeErrc::InsufficientData);
  }
}

TEST_CASE("forecast reproduces any exact linear trend") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const Count a = 1000 + static_cast<Count>(rng() % 100000);
    const Count b = static_cast<Count>(rng() % 2001) - 1000;
    const std::size_t n = 2 + rng() % 15;
    std::vector<Count> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(a + b * static_cast<Count>(i));
    CHECK(forecast_total_tests(v) == std::max<Count>(0, a + b * static_cast<Count>(n)));
  }
}
