#pragma once
// Neighborhood panel: one record per (neighborhood, year) with test counts,
// case counts at three blood-lead thresholds and the under-5 child population.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bllopt/error.hpp"

namespace bllopt {

using GeoId = std::int32_t;
using Year = std::int32_t;
using Count = std::int64_t;

struct NeighborhoodYearRecord {
  GeoId geo_id = 0;
  std::string geo_name;
  std::string borough;
  Year year = 0;
  Count tests = 0;
  Count cases_5plus = 0;
  Count cases_10plus = 0;
  Count cases_15plus = 0;
  Count child_population = 0;

  bool operator==(const NeighborhoodYearRecord&) const = default;
};

enum class GapReason { MissingCell, ZeroTests };

struct Gap {
  GeoId geo_id = 0;
  Year year = 0;
  GapReason reason = GapReason::MissingCell;

  bool operator==(const Gap&) const = default;
};

std::string_view to_string(GapReason r) noexcept;

// Immutable after construction. Records are kept sorted by (geo_id, year);
// geo_ids and years are the sorted distinct values seen in the records.
class NeighborhoodPanel {
 public:
  NeighborhoodPanel() = default;

  // Builds the gap registry from the records: every absent (geo, year) cell
  // is a MissingCell gap, every cell with tests == 0 is a ZeroTests gap.
  // Throws IngestError(DuplicateCell) if a (geo, year) appears twice.
  static NeighborhoodPanel from_records(std::vector<NeighborhoodYearRecord> records);

  // Uses the supplied gap registry verbatim; validate_panel() checks it.
  NeighborhoodPanel(std::vector<NeighborhoodYearRecord> records, std::vector<Gap> gaps);

  const std::vector<NeighborhoodYearRecord>& records() const { return records_; }
  const std::vector<Year>& years() const { return years_; }
  const std::vector<GeoId>& geo_ids() const { return geo_ids_; }
  const std::vector<Gap>& gaps() const { return gaps_; }

  bool empty() const { return records_.empty(); }
  bool has_year(Year y) const;
  std::optional<std::size_t> geo_index(GeoId g) const;
  std::optional<std::size_t> year_index(Year y) const;

  const NeighborhoodYearRecord* find(GeoId g, Year y) const;

  // cases_5plus / tests; nullopt when the cell is absent or tests == 0.
  std::optional<double> rate_5plus(GeoId g, Year y) const;

  // Citywide sum of tests for each year in years() order.
  std::vector<Count> yearly_test_totals() const;

  bool operator==(const NeighborhoodPanel& o) const {
    return records_ == o.records_ && gaps_ == o.gaps_;
  }

 private:
  void build_index();

  std::vector<NeighborhoodYearRecord> records_;
  std::vector<Year> years_;
  std::vector<GeoId> geo_ids_;
  std::vector<Gap> gaps_;
  // cell_[gi * years_.size() + yi] = record index or -1
  std::vector<std::ptrdiff_t> cell_;
};

// Column-name mapping plus the accepted year range. Loaded from
// configuration so portal schema drift does not need a rebuild.
struct SchemaConfig {
  std::string geo_id = "geo_id";
  std::string geo_name = "geo_name";
  std::string borough = "borough";
  std::string year = "year";
  std::string tests = "tests";
  std::string cases_5plus = "cases_5plus";
  std::string cases_10plus = "cases_10plus";
  std::string cases_15plus = "cases_15plus";
  std::string child_population = "child_population";

  Year year_min = 2005;
  Year year_max = 2021;

  // When set, the first malformed row throws instead of being collected.
  bool strict = false;
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based physical line, header is line 1
  std::string reason;
};

struct ParseResult {
  NeighborhoodPanel panel;
  std::vector<RejectedRow> rejected;
  std::size_t data_rows = 0;
};

// Throws IngestError: MissingColumn (header lacks a mapped name, or the file
// is empty), DuplicateCell, Io, and MalformedRow only in strict mode.
ParseResult parse_panel(const std::filesystem::path& path, const SchemaConfig& schema = {});
ParseResult parse_panel(std::istream& in, const SchemaConfig& schema = {});

// Writes the canonical CSV form using the schema's column names.
void write_panel_csv(std::ostream& out, const NeighborhoodPanel& panel, const SchemaConfig& schema = {});

enum class ViolationKind {
  NegativeCount,
  CountOrdering,  // cases_15plus <= cases_10plus <= cases_5plus <= tests broken
  YearOutOfRange,
  DuplicateCell,
  UnregisteredGap,
  UnregisteredZeroTests,
  StaleGap,  // registry entry that does not match the data
  MissingNeighborhoods,
};

std::string_view to_string(ViolationKind k) noexcept;

struct Violation {
  ViolationKind kind;
  GeoId geo_id = 0;
  Year year = 0;
  std::string detail;
};

struct ValidationOptions {
  Year year_min = 2005;
  Year year_max = 2021;
  // When set, the panel must cover exactly this many neighborhoods.
  std::optional<std::size_t> expected_neighborhoods;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate_panel(const NeighborhoodPanel& panel, const ValidationOptions& options = {});

// JSON documents for the ingest stage diagnostics.
std::string gap_registry_json(const ParseResult& result);
std::string validation_report_json(const ValidationReport& report);

}  // namespace bllopt
