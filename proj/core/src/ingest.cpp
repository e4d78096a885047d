#include "bllopt/ingest.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bllopt/csv.hpp"

namespace bllopt {

std::string_view to_string(GapReason r) noexcept {
  switch (r) {
    case GapReason::MissingCell: return "missing_cell";
    case GapReason::ZeroTests: return "zero_tests";
  }
  return "unknown";
}

std::string_view to_string(ViolationKind k) noexcept {
  switch (k) {
    case ViolationKind::NegativeCount: return "negative_count";
    case ViolationKind::CountOrdering: return "count_ordering";
    case ViolationKind::YearOutOfRange: return "year_out_of_range";
    case ViolationKind::DuplicateCell: return "duplicate_cell";
    case ViolationKind::UnregisteredGap: return "unregistered_gap";
    case ViolationKind::UnregisteredZeroTests: return "unregistered_zero_tests";
    case ViolationKind::StaleGap: return "stale_gap";
    case ViolationKind::MissingNeighborhoods: return "missing_neighborhoods";
  }
  return "unknown";
}

namespace {

bool record_less(const NeighborhoodYearRecord& a, const NeighborhoodYearRecord& b) {
  return std::tie(a.geo_id, a.year) < std::tie(b.geo_id, b.year);
}

bool gap_less(const Gap& a, const Gap& b) {
  return std::tie(a.geo_id, a.year, a.reason) < std::tie(b.geo_id, b.year, b.reason);
}

std::string cell_name(GeoId g, Year y) {
  return "(" + std::to_string(g) + ", " + std::to_string(y) + ")";
}

// Empty string when the record satisfies every per-record invariant.
std::string record_problem(const NeighborhoodYearRecord& r) {
  if (r.tests < 0 || r.cases_5plus < 0 || r.cases_10plus < 0 || r.cases_15plus < 0 ||
      r.child_population < 0) {
    return "negative count";
  }
  if (r.cases_5plus > r.tests) return "cases_5plus exceeds tests";
  if (r.cases_10plus > r.cases_5plus) return "cases_10plus exceeds cases_5plus";
  if (r.cases_15plus > r.cases_10plus) return "cases_15plus exceeds cases_10plus";
  return {};
}

}  // namespace

NeighborhoodPanel::NeighborhoodPanel(std::vector<NeighborhoodYearRecord> records, std::vector<Gap> gaps)
    : records_(std::move(records)), gaps_(std::move(gaps)) {
  std::stable_sort(records_.begin(), records_.end(), record_less);
  std::sort(gaps_.begin(), gaps_.end(), gap_less);
  build_index();
}

NeighborhoodPanel NeighborhoodPanel::from_records(std::vector<NeighborhoodYearRecord> records) {
  NeighborhoodPanel panel(std::move(records), {});
  const auto& recs = panel.records_;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (recs[i].geo_id == recs[i - 1].geo_id && recs[i].year == recs[i - 1].year) {
      throw IngestError(IngestErrc::DuplicateCell,
                        "duplicate cell " + cell_name(recs[i].geo_id, recs[i].year));
    }
  }
  for (GeoId g : panel.geo_ids_) {
    for (Year y : panel.years_) {
      const auto* rec = panel.find(g, y);
      if (!rec) {
        panel.gaps_.push_back({g, y, GapReason::MissingCell});
      } else if (rec->tests == 0) {
        panel.gaps_.push_back({g, y, GapReason::ZeroTests});
      }
    }
  }
  std::sort(panel.gaps_.begin(), panel.gaps_.end(), gap_less);
  return panel;
}

void NeighborhoodPanel::build_index() {
  std::set<GeoId> geos;
  std::set<Year> years;
  for (const auto& r : records_) {
    geos.insert(r.geo_id);
    years.insert(r.year);
  }
  geo_ids_.assign(geos.begin(), geos.end());
  years_.assign(years.begin(), years.end());
  cell_.assign(geo_ids_.size() * years_.size(), -1);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto gi = *geo_index(records_[i].geo_id);
    const auto yi = *year_index(records_[i].year);
    auto& slot = cell_[gi * years_.size() + yi];
    if (slot < 0) slot = static_cast<std::ptrdiff_t>(i);
  }
}

bool NeighborhoodPanel::has_year(Year y) const { return year_index(y).has_value(); }

std::optional<std::size_t> NeighborhoodPanel::geo_index(GeoId g) const {
  auto it = std::lower_bound(geo_ids_.begin(), geo_ids_.end(), g);
  if (it == geo_ids_.end() || *it != g) return std::nullopt;
  return static_cast<std::size_t>(it - geo_ids_.begin());
}

std::optional<std::size_t> NeighborhoodPanel::year_index(Year y) const {
  auto it = std::lower_bound(years_.begin(), years_.end(), y);
  if (it == years_.end() || *it != y) return std::nullopt;
  return static_cast<std::size_t>(it - years_.begin());
}

const NeighborhoodYearRecord* NeighborhoodPanel::find(GeoId g, Year y) const {
  auto gi = geo_index(g);
  auto yi = year_index(y);
  if (!gi || !yi) return nullptr;
  auto idx = cell_[*gi * years_.size() + *yi];
  return idx < 0 ? nullptr : &records_[static_cast<std::size_t>(idx)];
}

std::optional<double> NeighborhoodPanel::rate_5plus(GeoId g, Year y) const {
  const auto* r = find(g, y);
  if (!r || r->tests <= 0) return std::nullopt;
  return static_cast<double>(r->cases_5plus) / static_cast<double>(r->tests);
}

std::vector<Count> NeighborhoodPanel::yearly_test_totals() const {
  std::vector<Count> totals(years_.size(), 0);
  for (const auto& r : records_) totals[*year_index(r.year)] += r.tests;
  return totals;
}

// ---------------------------------------------------------------------------
// CSV parsing

ParseResult parse_panel(const std::filesystem::path& path, const SchemaConfig& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(IngestErrc::Io, "cannot open " + path.string());
  return parse_panel(in, schema);
}

ParseResult parse_panel(std::istream& in, const SchemaConfig& schema) {
  csv::Row row;
  std::size_t line = 0;
  if (!csv::read_record(in, row, line)) {
    throw IngestError(IngestErrc::MissingColumn, "input has no header row; missing column '" + schema.geo_id + "'");
  }
  const csv::Header header(row);

  const std::array<const std::string*, 9> names = {
      &schema.geo_id, &schema.geo_name, &schema.borough,
      &schema.year, &schema.tests, &schema.cases_5plus,
      &schema.cases_10plus, &schema.cases_15plus, &schema.child_population};
  std::array<std::size_t, 9> col{};
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto pos = header.find(*names[i]);
    if (!pos) throw IngestError(IngestErrc::MissingColumn, "missing column '" + *names[i] + "'");
    col[i] = *pos;
  }
  const std::size_t width = *std::max_element(col.begin(), col.end()) + 1;

  ParseResult result;
  std::vector<NeighborhoodYearRecord> records;

  auto reject = [&](std::size_t at, std::string reason) {
    if (schema.strict) {
      throw IngestError(IngestErrc::MalformedRow, "row at line " + std::to_string(at) + ": " + reason);
    }
    result.rejected.push_back({at, std::move(reason)});
  };

  while (csv::read_record(in, row, line)) {
    ++result.data_rows;
    if (row.empty()) {
      reject(line, "unbalanced quotes");
      continue;
    }
    if (row.size() < width) {
      reject(line, "expected at least " + std::to_string(width) + " fields, got " + std::to_string(row.size()));
      continue;
    }
    NeighborhoodYearRecord rec;
    std::string problem;
    auto int_field = [&](std::size_t which, auto& dest) {
      if (!problem.empty()) return;
      auto v = csv::parse_int(row[col[which]]);
      if (!v) {
        problem = "column '" + *names[which] + "' is not an integer: '" + row[col[which]] + "'";
        return;
      }
      dest = static_cast<std::remove_reference_t<decltype(dest)>>(*v);
    };
    int_field(0, rec.geo_id);
    int_field(3, rec.year);
    int_field(4, rec.tests);
    int_field(5, rec.cases_5plus);
    int_field(6, rec.cases_10plus);
    int_field(7, rec.cases_15plus);
    int_field(8, rec.child_population);
    rec.geo_name = row[col[1]];
    rec.borough = row[col[2]];
    if (problem.empty()) problem = record_problem(rec);
    if (problem.empty() && (rec.year < schema.year_min || rec.year > schema.year_max)) {
      problem = "year " + std::to_string(rec.year) + " outside [" + std::to_string(schema.year_min) + ", " +
                std::to_string(schema.year_max) + "]";
    }
    if (!problem.empty()) {
      reject(line, std::move(problem));
      continue;
    }
    records.push_back(std::move(rec));
  }

  result.panel = NeighborhoodPanel::from_records(std::move(records));
  return result;
}

void write_panel_csv(std::ostream& out, const NeighborhoodPanel& panel, const SchemaConfig& schema) {
  csv::write_record(out, {schema.geo_id, schema.geo_name, schema.borough, schema.year, schema.tests,
                          schema.cases_5plus, schema.cases_10plus, schema.cases_15plus,
                          schema.child_population});
  for (const auto& r : panel.records()) {
    csv::write_record(out, {std::to_string(r.geo_id), r.geo_name, r.borough, std::to_string(r.year),
                            std::to_string(r.tests), std::to_string(r.cases_5plus),
                            std::to_string(r.cases_10plus), std::to_string(r.cases_15plus),
                            std::to_string(r.child_population)});
  }
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_panel(const NeighborhoodPanel& panel, const ValidationOptions& options) {
  ValidationReport report;
  const auto& recs = panel.records();

  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    if (i > 0 && recs[i - 1].geo_id == r.geo_id && recs[i - 1].year == r.year) {
      report.push_back({ViolationKind::DuplicateCell, r.geo_id, r.year, "cell appears more than once"});
      continue;
    }
    if (auto p = record_problem(r); !p.empty()) {
      auto kind = p == "negative count" ? ViolationKind::NegativeCount : ViolationKind::CountOrdering;
      report.push_back({kind, r.geo_id, r.year, p});
    }
    if (r.year < options.year_min || r.year > options.year_max) {
      report.push_back({ViolationKind::YearOutOfRange, r.geo_id, r.year, "year outside configured range"});
    }
  }

  auto registered = [&](GeoId g, Year y, GapReason why) {
    return std::binary_search(panel.gaps().begin(), panel.gaps().end(), Gap{g, y, why}, gap_less);
  };

  for (GeoId g : panel.geo_ids()) {
    for (Year y : panel.years()) {
      const auto* rec = panel.find(g, y);
      if (!rec && !registered(g, y, GapReason::MissingCell)) {
        report.push_back({ViolationKind::UnregisteredGap, g, y, "cell absent and not in gap registry"});
      } else if (rec && rec->tests == 0 && !registered(g, y, GapReason::ZeroTests)) {
        report.push_back({ViolationKind::UnregisteredZeroTests, g, y, "tests == 0 and not in gap registry"});
      }
    }
  }

  for (const auto& gap : panel.gaps()) {
    const auto* rec = panel.find(gap.geo_id, gap.year);
    const bool consistent = gap.reason == GapReason::MissingCell ? rec == nullptr : (rec && rec->tests == 0);
    if (!consistent) {
      report.push_back({ViolationKind::StaleGap, gap.geo_id, gap.year,
                        "registry lists " + std::string(to_string(gap.reason)) + " but data disagrees"});
    }
  }

  if (options.expected_neighborhoods && panel.geo_ids().size() != *options.expected_neighborhoods) {
    report.push_back({ViolationKind::MissingNeighborhoods, 0, 0,
                      "expected " + std::to_string(*options.expected_neighborhoods) + " neighborhoods, found " +
                          std::to_string(panel.geo_ids().size())});
  }
  return report;
}

std::string gap_registry_json(const ParseResult& result) {
  nlohmann::ordered_json doc;
  doc["record_count"] = result.panel.records().size();
  doc["data_rows"] = result.data_rows;
  auto gaps = nlohmann::ordered_json::array();
  for (const auto& g : result.panel.gaps()) {
    gaps.push_back({{"geo_id", g.geo_id}, {"year", g.year}, {"reason", to_string(g.reason)}});
  }
  doc["gaps"] = std::move(gaps);
  auto rejected = nlohmann::ordered_json::array();
  for (const auto& r : result.rejected) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
  doc["rejected_rows"] = std::move(rejected);
  return doc.dump(2) + "\n";
}

std::string validation_report_json(const ValidationReport& report) {
  nlohmann::ordered_json doc;
  doc["valid"] = report.empty();
  auto items = nlohmann::ordered_json::array();
  for (const auto& v : report) {
    items.push_back({{"kind", to_string(v.kind)}, {"geo_id", v.geo_id}, {"year", v.year}, {"detail", v.detail}});
  }
  doc["violations"] = std::move(items);
  return doc.dump(2) + "\n";
}

}  // namespace bllopt
