#pragma once
// Risk-profile clustering of neighborhoods: k-medoids (alternating
// assign/update) over normalized rate time series.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bllopt/error.hpp"
#include "bllopt/normalize.hpp"

namespace bllopt {

enum class RiskLabel { High, Low, Average, Rising, Declining };
inline constexpr std::array<RiskLabel, 5> kRiskLabels = {RiskLabel::High, RiskLabel::Low, RiskLabel::Average,
                                                         RiskLabel::Rising, RiskLabel::Declining};
std::string_view to_string(RiskLabel l) noexcept;

struct SeriesVector {
  GeoId geo_id = 0;
  std::vector<double> values;
};

// Euclidean distance. Throws ClusterError(LengthMismatch).
double series_distance(const SeriesVector& a, const SeriesVector& b);

// One series per neighborhood over all panel years. Interior gaps are
// linearly interpolated, leading/trailing gaps copy the nearest defined
// value. A neighborhood with no defined value at all is a Precondition error.
std::vector<SeriesVector> build_series(const NormalizedPanel& panel);

struct KMedoidsResult {
  std::vector<GeoId> geo_ids;          // input order
  std::vector<std::size_t> cluster;    // cluster index per input series
  std::vector<GeoId> medoids;          // medoid geo per cluster index
  double total_cost = 0.0;
  std::size_t iterations = 0;          // update steps executed
  bool converged = false;
  std::vector<double> cost_history;    // cost after every assignment step
};

// Alternates nearest-medoid assignment and per-cluster medoid update until
// the medoid set is unchanged or max_iter update steps have run. Without
// initial medoids a deterministic greedy BUILD initialization is used.
// Ties: assignment prefers the lower cluster index; update keeps the current
// medoid, otherwise the smaller geo_id.
KMedoidsResult k_medoids(std::span<const SeriesVector> series, std::size_t k,
                         std::optional<std::vector<GeoId>> initial_medoids = std::nullopt,
                         std::size_t max_iter = 100);

// Five distinct seeds in label order High, Low, Average, Rising, Declining.
std::array<GeoId, 5> seed_medoids(std::span<const SeriesVector> series);
std::array<GeoId, 5> seed_medoids(const NormalizedPanel& panel);

struct ClusterAssignment {
  std::vector<std::string> label_names;  // per cluster index
  std::vector<GeoId> medoids;            // per cluster index
  std::vector<GeoId> geo_ids;            // sorted ascending
  std::vector<std::size_t> cluster;      // parallel to geo_ids
  double total_cost = 0.0;
  std::size_t iterations = 0;
  bool converged = false;

  std::optional<std::size_t> cluster_of(GeoId g) const;
  std::optional<std::string_view> label_of(GeoId g) const;
  bool is_medoid(GeoId g) const;
  std::size_t k() const { return label_names.size(); }
};

// Packs a k-medoids result with label names into an assignment.
ClusterAssignment make_assignment(const KMedoidsResult& result, std::vector<std::string> label_names);

// Full risk-profiling step: k == 5 seeds with seed_medoids and labels the
// clusters by seed identity; any other k uses BUILD seeds and names the
// clusters cluster_1..cluster_k.
ClusterAssignment assign_risk_profiles(const NormalizedPanel& panel, std::size_t k = 5, std::size_t max_iter = 100);

void write_assignment_csv(std::ostream& out, const ClusterAssignment& a);
ClusterAssignment read_assignment_csv(std::istream& in);
std::string assignment_json(const ClusterAssignment& a);
ClusterAssignment parse_assignment_json(std::string_view text);

}  // namespace bllopt
