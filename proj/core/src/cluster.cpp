#include "bllopt/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "bllopt/csv.hpp"

namespace bllopt {

std::string_view to_string(RiskLabel l) noexcept {
  switch (l) {
    case RiskLabel::High: return "High";
    case RiskLabel::Low: return "Low";
    case RiskLabel::Average: return "Average";
    case RiskLabel::Rising: return "Rising";
    case RiskLabel::Declining: return "Declining";
  }
  return "unknown";
}

double series_distance(const SeriesVector& a, const SeriesVector& b) {
  if (a.values.size() != b.values.size()) {
    throw ClusterError(ClusterErrc::LengthMismatch, "series for geo " + std::to_string(a.geo_id) + " and " +
                                                        std::to_string(b.geo_id) + " differ in length");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

std::vector<SeriesVector> build_series(const NormalizedPanel& panel) {
  const std::size_t ny = panel.years().size();
  std::vector<SeriesVector> out;
  out.reserve(panel.geo_ids().size());
  for (std::size_t gi = 0; gi < panel.geo_ids().size(); ++gi) {
    SeriesVector s{panel.geo_ids()[gi], std::vector<double>(ny)};
    std::vector<std::size_t> known;
    for (std::size_t yi = 0; yi < ny; ++yi) {
      if (auto v = panel.at(gi, yi)) {
        s.values[yi] = *v;
        known.push_back(yi);
      }
    }
    if (known.empty()) {
      throw ClusterError(ClusterErrc::Precondition,
                         "geo " + std::to_string(s.geo_id) + " has no defined normalized rate");
    }
    for (std::size_t yi = 0; yi < known.front(); ++yi) s.values[yi] = s.values[known.front()];
    for (std::size_t yi = known.back() + 1; yi < ny; ++yi) s.values[yi] = s.values[known.back()];
    for (std::size_t j = 1; j < known.size(); ++j) {
      const auto lo = known[j - 1], hi = known[j];
      for (std::size_t yi = lo + 1; yi < hi; ++yi) {
        const double t = static_cast<double>(yi - lo) / static_cast<double>(hi - lo);
        s.values[yi] = s.values[lo] + t * (s.values[hi] - s.values[lo]);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Dense symmetric distance matrix.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::span<const SeriesVector> s) : n_(s.size()), d_(n_ * n_, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        d_[i * n_ + j] = d_[j * n_ + i] = series_distance(s[i], s[j]);
      }
    }
  }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

// Greedy PAM BUILD: first the series with the smallest distance sum, then
// repeatedly the candidate that lowers total cost the most.
std::vector<std::size_t> build_init(const DistanceMatrix& d, std::span<const SeriesVector> s, std::size_t k) {
  const std::size_t n = s.size();
  std::vector<std::size_t> medoids;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  while (medoids.size() < k) {
    std::size_t best = n;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (chosen[c]) continue;
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i) cost += std::min(nearest[i], d(c, i));
      if (cost < best_cost || (cost == best_cost && best < n && s[c].geo_id < s[best].geo_id)) {
        best = c;
        best_cost = cost;
      }
    }
    chosen[best] = true;
    medoids.push_back(best);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], d(best, i));
  }
  return medoids;
}

double assign(const DistanceMatrix& d, std::size_t n, const std::vector<std::size_t>& medoids,
              std::vector<std::size_t>& cluster) {
  cluster.assign(n, 0);
  double cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      if (medoids[c] == i) {  // a medoid always belongs to its own cluster
        best = c;
        best_d = 0.0;
        break;
      }
      const double dist = d(i, medoids[c]);
      if (dist < best_d) {
        best = c;
        best_d = dist;
      }
    }
    cluster[i] = best;
    cost += best_d;
  }
  return cost;
}

}  // namespace

KMedoidsResult k_medoids(std::span<const SeriesVector> series, std::size_t k,
                         std::optional<std::vector<GeoId>> initial_medoids, std::size_t max_iter) {
  const std::size_t n = series.size();
  if (n == 0) throw ClusterError(ClusterErrc::EmptyInput, "no series to cluster");
  if (k == 0) throw ClusterError(ClusterErrc::Precondition, "k must be positive");
  if (k > n) {
    throw ClusterError(ClusterErrc::KTooLarge,
                       "k = " + std::to_string(k) + " exceeds the number of series (" + std::to_string(n) + ")");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (series[i].values.size() != series[0].values.size()) {
      throw ClusterError(ClusterErrc::LengthMismatch, "series lengths differ");
    }
  }

  const DistanceMatrix d(series);
  std::vector<std::size_t> medoids;
  if (initial_medoids) {
    if (initial_medoids->size() != k) {
      throw ClusterError(ClusterErrc::Precondition, "expected " + std::to_string(k) + " initial medoids");
    }
    for (GeoId g : *initial_medoids) {
      auto it = std::find_if(series.begin(), series.end(), [g](const SeriesVector& s) { return s.geo_id == g; });
      if (it == series.end()) {
        throw ClusterError(ClusterErrc::Precondition, "initial medoid " + std::to_string(g) + " is not an input series");
      }
      const auto idx = static_cast<std::size_t>(it - series.begin());
      if (std::find(medoids.begin(), medoids.end(), idx) != medoids.end()) {
        throw ClusterError(ClusterErrc::Precondition, "initial medoids must be distinct");
      }
      medoids.push_back(idx);
    }
  } else {
    medoids = build_init(d, series, k);
  }

  KMedoidsResult r;
  std::vector<std::size_t> cluster;
  r.cost_history.push_back(assign(d, n, medoids, cluster));

  while (r.iterations < max_iter) {
    ++r.iterations;
    std::vector<std::size_t> next = medoids;
    for (std::size_t c = 0; c < k; ++c) {
      auto intra = [&](std::size_t cand) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (cluster[i] == c) s += d(cand, i);
        }
        return s;
      };
      std::size_t best = medoids[c];
      double best_cost = intra(best);
      for (std::size_t i = 0; i < n; ++i) {
        if (cluster[i] != c || i == medoids[c]) continue;
        const double cost = intra(i);
        if (cost < best_cost || (cost == best_cost && best != medoids[c] && series[i].geo_id < series[best].geo_id)) {
          best = i;
          best_cost = cost;
        }
      }
      next[c] = best;
    }
    if (next == medoids) {
      r.converged = true;
      break;
    }
    medoids = std::move(next);
    r.cost_history.push_back(assign(d, n, medoids, cluster));
  }

  r.cluster = std::move(cluster);
  r.total_cost = r.cost_history.back();
  for (const auto& s : series) r.geo_ids.push_back(s.geo_id);
  for (auto m : medoids) r.medoids.push_back(series[m].geo_id);
  return r;
}

std::array<GeoId, 5> seed_medoids(std::span<const SeriesVector> series) {
  if (series.size() < 5) {
    throw ClusterError(ClusterErrc::InsufficientNeighborhoods, "need at least 5 neighborhoods to seed 5 profiles");
  }
  struct Stats {
    GeoId geo;
    double mean;
    double dist_to_one;
    double slope;
  };
  std::vector<Stats> stats;
  for (const auto& s : series) {
    const auto len = s.values.size();
    if (len == 0) throw ClusterError(ClusterErrc::Precondition, "empty series");
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(len);
    double sq = 0.0;
    for (double v : s.values) sq += (v - 1.0) * (v - 1.0);
    double slope = 0.0;
    if (len >= 2) {
      const double mx = static_cast<double>(len - 1) / 2.0;
      double sxx = 0.0, sxy = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double dx = static_cast<double>(t) - mx;
        sxx += dx * dx;
        sxy += dx * (s.values[t] - mean);
      }
      slope = sxy / sxx;
    }
    stats.push_back({s.geo_id, mean, std::sqrt(sq), slope});
  }

  // Each criterion is a score to maximize.
  const std::array<double (*)(const Stats&), 5> score = {
      [](const Stats& s) { return s.mean; },
      [](const Stats& s) { return -s.mean; },
      [](const Stats& s) { return -s.dist_to_one; },
      [](const Stats& s) { return s.slope; },
      [](const Stats& s) { return -s.slope; },
  };

  std::array<GeoId, 5> seeds{};
  std::vector<bool> used(stats.size(), false);
  for (std::size_t c = 0; c < 5; ++c) {
    std::size_t best = stats.size();
    for (std::size_t i = 0; i < stats.size(); ++i) {
      if (used[i]) continue;
      if (best == stats.size()) {
        best = i;
        continue;
      }
      const double a = score[c](stats[i]), b = score[c](stats[best]);
      if (a > b || (a == b && stats[i].geo < stats[best].geo)) best = i;
    }
    used[best] = true;
    seeds[c] = stats[best].geo;
  }
  return seeds;
}

std::array<GeoId, 5> seed_medoids(const NormalizedPanel& panel) { return seed_medoids(build_series(panel)); }

std::optional<std::size_t> ClusterAssignment::cluster_of(GeoId g) const {
  auto it = std::lower_bound(geo_ids.begin(), geo_ids.end(), g);
  if (it == geo_ids.end() || *it != g) return std::nullopt;
  return cluster[static_cast<std::size_t>(it - geo_ids.begin())];
}

std::optional<std::string_view> ClusterAssignment::label_of(GeoId g) const {
  auto c = cluster_of(g);
  if (!c) return std::nullopt;
  return std::string_view(label_names.at(*c));
}

bool ClusterAssignment::is_medoid(GeoId g) const {
  return std::find(medoids.begin(), medoids.end(), g) != medoids.end();
}

ClusterAssignment make_assignment(const KMedoidsResult& result, std::vector<std::string> label_names) {
  if (label_names.size() != result.medoids.size()) {
    throw ClusterError(ClusterErrc::Precondition, "one label name per cluster is required");
  }
  ClusterAssignment a;
  a.label_names = std::move(label_names);
  a.medoids = result.medoids;
  a.total_cost = result.total_cost;
  a.iterations = result.iterations;
  a.converged = result.converged;
  std::vector<std::size_t> order(result.geo_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return result.geo_ids[x] < result.geo_ids[y]; });
  for (auto i : order) {
    a.geo_ids.push_back(result.geo_ids[i]);
    a.cluster.push_back(result.cluster[i]);
  }
  return a;
}

ClusterAssignment assign_risk_profiles(const NormalizedPanel& panel, std::size_t k, std::size_t max_iter) {
  const auto series = build_series(panel);
  std::vector<std::string> names;
  std::optional<std::vector<GeoId>> init;
  if (k == kRiskLabels.size()) {
    const auto seeds = seed_medoids(series);
    init.emplace(seeds.begin(), seeds.end());
    for (auto l : kRiskLabels) names.emplace_back(to_string(l));
  } else {
    for (std::size_t c = 0; c < k; ++c) names.push_back("cluster_" + std::to_string(c + 1));
  }
  return make_assignment(k_medoids(series, k, std::move(init), max_iter), std::move(names));
}

// ---------------------------------------------------------------------------
// Serialization

void write_assignment_csv(std::ostream& out, const ClusterAssignment& a) {
  csv::write_record(out, {"geo_id", "label", "is_medoid"});
  for (std::size_t i = 0; i < a.geo_ids.size(); ++i) {
    csv::write_record(out, {std::to_string(a.geo_ids[i]), a.label_names.at(a.cluster[i]),
                            a.is_medoid(a.geo_ids[i]) ? "1" : "0"});
  }
}

namespace {

// Canonical risk order when every name is a risk label, otherwise the order
// of first appearance.
std::vector<std::string> order_label_names(std::vector<std::string> seen) {
  auto rank = [](const std::string& n) -> std::size_t {
    for (std::size_t i = 0; i < kRiskLabels.size(); ++i) {
      if (n == to_string(kRiskLabels[i])) return i;
    }
    return kRiskLabels.size();
  };
  if (std::all_of(seen.begin(), seen.end(), [&](const auto& n) { return rank(n) < kRiskLabels.size(); })) {
    std::sort(seen.begin(), seen.end(), [&](const auto& x, const auto& y) { return rank(x) < rank(y); });
  }
  return seen;
}

}  // namespace

ClusterAssignment read_assignment_csv(std::istream& in) {
  csv::Row row;
  std::size_t line = 0;
  if (!csv::read_record(in, row, line)) throw ClusterError(ClusterErrc::EmptyInput, "cluster CSV is empty");
  csv::Header header(row);
  auto cg = header.find("geo_id"), cl = header.find("label"), cm = header.find("is_medoid");
  if (!cg || !cl || !cm) throw ClusterError(ClusterErrc::Precondition, "cluster CSV needs geo_id,label,is_medoid");
  struct Entry {
    GeoId g;
    std::string label;
    bool medoid;
  };
  std::vector<Entry> entries;
  std::vector<std::string> seen;
  while (csv::read_record(in, row, line)) {
    const auto width = std::max({*cg, *cl, *cm}) + 1;
    auto g = row.size() >= width ? csv::parse_int(row[*cg]) : std::nullopt;
    if (!g) throw ClusterError(ClusterErrc::Precondition, "malformed cluster row at line " + std::to_string(line));
    entries.push_back({static_cast<GeoId>(*g), row[*cl], row[*cm] == "1"});
    if (std::find(seen.begin(), seen.end(), row[*cl]) == seen.end()) seen.push_back(row[*cl]);
  }
  ClusterAssignment a;
  a.label_names = order_label_names(std::move(seen));
  a.medoids.assign(a.label_names.size(), 0);
  std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.g < y.g; });
  for (const auto& e : entries) {
    const auto c = static_cast<std::size_t>(
        std::find(a.label_names.begin(), a.label_names.end(), e.label) - a.label_names.begin());
    a.geo_ids.push_back(e.g);
    a.cluster.push_back(c);
    if (e.medoid) a.medoids[c] = e.g;
  }
  return a;
}

std::string assignment_json(const ClusterAssignment& a) {
  nlohmann::ordered_json doc;
  doc["k"] = a.k();
  doc["labels"] = a.label_names;
  nlohmann::ordered_json medoids;
  for (std::size_t c = 0; c < a.k(); ++c) medoids[a.label_names[c]] = a.medoids[c];
  doc["medoids"] = std::move(medoids);
  doc["total_cost"] = a.total_cost;
  doc["iterations"] = a.iterations;
  doc["converged"] = a.converged;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < a.geo_ids.size(); ++i) {
    rows.push_back({{"geo_id", a.geo_ids[i]},
                    {"label", a.label_names[a.cluster[i]]},
                    {"is_medoid", a.is_medoid(a.geo_ids[i])}});
  }
  doc["assignments"] = std::move(rows);
  return doc.dump(2) + "\n";
}

ClusterAssignment parse_assignment_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    ClusterAssignment a;
    a.label_names = doc.at("labels").get<std::vector<std::string>>();
    for (const auto& name : a.label_names) a.medoids.push_back(doc.at("medoids").at(name).get<GeoId>());
    a.total_cost = doc.at("total_cost").get<double>();
    a.iterations = doc.at("iterations").get<std::size_t>();
    a.converged = doc.at("converged").get<bool>();
    for (const auto& row : doc.at("assignments")) {
      const auto label = row.at("label").get<std::string>();
      auto it = std::find(a.label_names.begin(), a.label_names.end(), label);
      if (it == a.label_names.end()) throw ClusterError(ClusterErrc::Precondition, "unknown label " + label);
      a.geo_ids.push_back(row.at("geo_id").get<GeoId>());
      a.cluster.push_back(static_cast<std::size_t>(it - a.label_names.begin()));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ClusterError(ClusterErrc::Precondition, std::string("invalid cluster JSON: ") + e.what());
  }
}

}  // namespace bllopt
