#include "bllopt/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include "bllopt/csv.hpp"

namespace bllopt {

NormalizedPanel::NormalizedPanel(std::vector<GeoId> geo_ids, std::vector<Year> years)
    : geo_ids_(std::move(geo_ids)), years_(std::move(years)), values_(geo_ids_.size() * years_.size()) {}

std::optional<double> NormalizedPanel::at(std::size_t gi, std::size_t yi) const {
  return values_.at(gi * years_.size() + yi);
}

std::optional<double> NormalizedPanel::value(GeoId g, Year y) const {
  auto git = std::lower_bound(geo_ids_.begin(), geo_ids_.end(), g);
  auto yit = std::lower_bound(years_.begin(), years_.end(), y);
  if (git == geo_ids_.end() || *git != g || yit == years_.end() || *yit != y) return std::nullopt;
  return at(static_cast<std::size_t>(git - geo_ids_.begin()), static_cast<std::size_t>(yit - years_.begin()));
}

void NormalizedPanel::set(std::size_t gi, std::size_t yi, double v) {
  values_.at(gi * years_.size() + yi) = v;
}

std::vector<double> mean_normalize_year(std::span<const double> rates) {
  if (rates.empty()) throw NormalizeError(NormalizeErrc::Precondition, "cannot normalize an empty rate vector");
  double sum = 0.0;
  for (double r : rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw NormalizeError(NormalizeErrc::Precondition, "rates must be finite and non-negative");
    }
    sum += r;
  }
  const double mean = sum / static_cast<double>(rates.size());
  if (!(mean > 0.0)) throw NormalizeError(NormalizeErrc::ZeroMean, "mean rate is zero");
  std::vector<double> out(rates.size());
  std::transform(rates.begin(), rates.end(), out.begin(), [mean](double r) { return r / mean; });
  return out;
}

NormalizedPanel normalize_panel(const NeighborhoodPanel& panel) {
  NormalizedPanel out(panel.geo_ids(), panel.years());
  const auto& geos = panel.geo_ids();
  for (std::size_t yi = 0; yi < panel.years().size(); ++yi) {
    const Year y = panel.years()[yi];
    std::vector<double> rates;
    std::vector<std::size_t> where;
    for (std::size_t gi = 0; gi < geos.size(); ++gi) {
      if (auto r = panel.rate_5plus(geos[gi], y)) {
        rates.push_back(*r);
        where.push_back(gi);
      }
    }
    if (rates.empty()) continue;
    std::vector<double> normalized;
    try {
      normalized = mean_normalize_year(rates);
    } catch (const NormalizeError& e) {
      if (e.code() != NormalizeErrc::ZeroMean) throw;
      throw NormalizeError(NormalizeErrc::ZeroMean, "all defined rates are zero in year " + std::to_string(y));
    }
    for (std::size_t k = 0; k < where.size(); ++k) out.set(where[k], yi, normalized[k]);
  }
  return out;
}

RegressionFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw NormalizeError(NormalizeErrc::Precondition, "regression needs two equal-length vectors of size >= 2");
  }
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw NormalizeError(NormalizeErrc::DegenerateInput, "x has zero variance");

  RegressionFit fit;
  fit.n = x.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // r^2 = explained / total; a constant y is fit perfectly by the flat line.
  fit.r_squared = syy > 0.0 ? std::clamp((sxy * sxy) / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

RegressionFit fit_share_regression(std::span<const double> x, std::span<const double> y) {
  auto sums_to_one = [](std::span<const double> v) {
    return std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) <= 1e-6;
  };
  if (x.size() != y.size() || x.size() < 2) {
    throw NormalizeError(NormalizeErrc::Precondition, "share vectors must have equal length >= 2");
  }
  if (!sums_to_one(x) || !sums_to_one(y)) {
    throw NormalizeError(NormalizeErrc::Precondition, "share vectors must each sum to 1");
  }
  return fit_line(x, y);
}

ShareSeries population_testing_shares(const NeighborhoodPanel& panel, Year year) {
  if (!panel.has_year(year)) {
    throw NormalizeError(NormalizeErrc::Precondition, "year " + std::to_string(year) + " not in panel");
  }
  ShareSeries s;
  double pop_total = 0.0, test_total = 0.0;
  for (GeoId g : panel.geo_ids()) {
    const auto* r = panel.find(g, year);
    if (!r) continue;
    s.geo_ids.push_back(g);
    s.population_share.push_back(static_cast<double>(r->child_population));
    s.testing_share.push_back(static_cast<double>(r->tests));
    pop_total += static_cast<double>(r->child_population);
    test_total += static_cast<double>(r->tests);
  }
  if (!(pop_total > 0.0) || !(test_total > 0.0)) {
    throw NormalizeError(NormalizeErrc::DegenerateInput, "zero citywide population or tests in " + std::to_string(year));
  }
  for (auto& v : s.population_share) v /= pop_total;
  for (auto& v : s.testing_share) v /= test_total;
  return s;
}

Count forecast_total_tests(std::span<const Count> yearly_totals, std::optional<std::size_t> last_k) {
  auto totals = yearly_totals;
  if (last_k) {
    if (*last_k < 2) throw NormalizeError(NormalizeErrc::InsufficientData, "forecast window must cover >= 2 years");
    if (*last_k < totals.size()) totals = totals.last(*last_k);
  }
  if (totals.size() < 2) {
    throw NormalizeError(NormalizeErrc::InsufficientData, "forecast needs at least two yearly totals");
  }
  std::vector<double> idx(totals.size()), val(totals.size());
  for (std::size_t i = 0; i < totals.size(); ++i) {
    idx[i] = static_cast<double>(i);
    val[i] = static_cast<double>(totals[i]);
  }
  const auto fit = fit_line(idx, val);
  const double next = fit.intercept + fit.slope * static_cast<double>(totals.size());
  return std::max<Count>(0, static_cast<Count>(std::llround(next)));
}

void write_normalized_csv(std::ostream& out, const NormalizedPanel& panel) {
  csv::write_record(out, {"geo_id", "year", "normalized_rate"});
  for (std::size_t gi = 0; gi < panel.geo_ids().size(); ++gi) {
    for (std::size_t yi = 0; yi < panel.years().size(); ++yi) {
      if (auto v = panel.at(gi, yi)) {
        csv::write_record(out, {std::to_string(panel.geo_ids()[gi]), std::to_string(panel.years()[yi]),
                                csv::format_double(*v)});
      }
    }
  }
}

NormalizedPanel read_normalized_csv(std::istream& in) {
  csv::Row row;
  std::size_t line = 0;
  if (!csv::read_record(in, row, line)) {
    throw NormalizeError(NormalizeErrc::Precondition, "normalized panel CSV is empty");
  }
  csv::Header header(row);
  auto cg = header.find("geo_id"), cy = header.find("year"), cv = header.find("normalized_rate");
  if (!cg || !cy || !cv) {
    throw NormalizeError(NormalizeErrc::Precondition, "normalized panel CSV needs geo_id,year,normalized_rate");
  }
  struct Cell {
    GeoId g;
    Year y;
    double v;
  };
  std::vector<Cell> cells;
  std::set<GeoId> geos;
  std::set<Year> years;
  while (csv::read_record(in, row, line)) {
    const auto width = std::max({*cg, *cy, *cv}) + 1;
    auto malformed = [&] {
      return NormalizeError(NormalizeErrc::Precondition, "malformed normalized panel row at line " + std::to_string(line));
    };
    if (row.size() < width) throw malformed();
    const auto g = csv::parse_int(row[*cg]);
    const auto y = csv::parse_int(row[*cy]);
    const auto v = csv::parse_double(row[*cv]);
    if (!g || !y || !v) throw malformed();
    const Cell cell{static_cast<GeoId>(g.value()), static_cast<Year>(y.value()), v.value()};
    cells.push_back(cell);
    geos.insert(cell.g);
    years.insert(cell.y);
  }
  std::vector<GeoId> geo_ids(geos.begin(), geos.end());
  std::vector<Year> year_list(years.begin(), years.end());
  NormalizedPanel out(geo_ids, year_list);
  for (const auto& c : cells) {
    auto gi = static_cast<std::size_t>(std::lower_bound(geo_ids.begin(), geo_ids.end(), c.g) - geo_ids.begin());
    auto yi = static_cast<std::size_t>(std::lower_bound(year_list.begin(), year_list.end(), c.y) - year_list.begin());
    out.set(gi, yi, c.v);
  }
  return out;
}

}  // namespace bllopt
