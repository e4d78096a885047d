#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "bllopt/error.hpp"
#include "bllopt/ingest.hpp"

namespace bllopt {

// Year-wise mean-normalized 5+ rates. A cell holds a value iff the raw rate
// was defined (record present, tests > 0).
class NormalizedPanel {
 public:
  NormalizedPanel() = default;
  NormalizedPanel(std::vector<GeoId> geo_ids, std::vector<Year> years);

  const std::vector<GeoId>& geo_ids() const { return geo_ids_; }
  const std::vector<Year>& years() const { return years_; }

  std::optional<double> at(std::size_t geo_index, std::size_t year_index) const;
  std::optional<double> value(GeoId g, Year y) const;
  void set(std::size_t geo_index, std::size_t year_index, double v);

  bool operator==(const NormalizedPanel&) const = default;

 private:
  std::vector<GeoId> geo_ids_;
  std::vector<Year> years_;
  std::vector<std::optional<double>> values_;  // row-major by geo
};

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

// x_i / mean(x). Throws NormalizeError: Precondition for an empty input or
// negative entries, ZeroMean when the mean is not strictly positive.
std::vector<double> mean_normalize_year(std::span<const double> rates);

// Normalizes each year independently over its defined cells.
NormalizedPanel normalize_panel(const NeighborhoodPanel& panel);

// Plain OLS of y on x. Throws DegenerateInput when x has zero variance.
RegressionFit fit_line(std::span<const double> x, std::span<const double> y);

// OLS of testing share on population share. Both vectors must have the same
// length >= 2 and each sum to 1 within 1e-6.
RegressionFit fit_share_regression(std::span<const double> x, std::span<const double> y);

struct ShareSeries {
  std::vector<GeoId> geo_ids;
  std::vector<double> population_share;
  std::vector<double> testing_share;
};

// Per-neighborhood population and testing shares for one year, over the
// neighborhoods with a record in that year.
ShareSeries population_testing_shares(const NeighborhoodPanel& panel, Year year);

// Linear trend on (index, total) evaluated at the next index, rounded to the
// nearest integer and floored at 0. `last_k` restricts the fit to the most
// recent k values. Throws InsufficientData for fewer than two points.
Count forecast_total_tests(std::span<const Count> yearly_totals, std::optional<std::size_t> last_k = std::nullopt);

// geo_id,year,normalized_rate; gaps are omitted.
void write_normalized_csv(std::ostream& out, const NormalizedPanel& panel);
NormalizedPanel read_normalized_csv(std::istream& in);

}  // namespace bllopt
