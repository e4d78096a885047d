#pragma once
// Minimal RFC 4180-style CSV helpers shared by every module that reads or
// writes tabular artifacts. Doubles are written in shortest round-trip form
// so a write/read cycle reproduces values bit-for-bit.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bllopt::csv {

using Row = std::vector<std::string>;

// Splits one logical record. Quoted fields may contain commas and doubled
// quotes; embedded newlines are not supported.
std::optional<Row> split_record(std::string_view line);

// Reads the next non-empty record. Returns false at end of stream.
// `line_number` is advanced by the number of physical lines consumed.
bool read_record(std::istream& in, Row& out, std::size_t& line_number);

std::string escape(std::string_view field);
void write_record(std::ostream& out, const Row& fields);

std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

std::string_view trim(std::string_view s);

// Maps header names to column positions; returns nullopt for absent names.
class Header {
 public:
  explicit Header(Row names);
  std::optional<std::size_t> find(std::string_view name) const;
  const Row& names() const { return names_; }

 private:
  Row names_;
};

}  // namespace bllopt::csv
