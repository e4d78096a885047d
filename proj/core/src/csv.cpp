#include "bllopt/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <system_error>

namespace bllopt::csv {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

std::optional<Row> split_record(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  Row fields;
  std::string cur;
  bool in_quotes = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!trim(cur).empty()) return std::nullopt;  // stray quote mid-field
      cur.clear();
      in_quotes = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else if (was_quoted) {
      if (c != ' ' && c != '\t') return std::nullopt;
    } else {
      cur.push_back(c);
    }
  }
  if (in_quotes) return std::nullopt;
  fields.push_back(was_quoted ? cur : std::string(trim(cur)));
  return fields;
}

bool read_record(std::istream& in, Row& out, std::size_t& line_number) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto fields = split_record(line);
    if (!fields) {
      out.clear();
      return true;  // caller sees an empty row and reports it as malformed
    }
    out = std::move(*fields);
    return true;
  }
  return false;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos &&
      trim(field).size() == field.size()) {
    return std::string(field);
  }
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted.push_back('"');
    quoted.push_back(c);
  }
  quoted.push_back('"');
  return quoted;
}

void write_record(std::ostream& out, const Row& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc{} && ptr == s.data() + s.size()) return v;
  // Portal exports sometimes write integral counts as "123.0".
  auto d = parse_double(s);
  if (d && *d == static_cast<double>(static_cast<std::int64_t>(*d)) && *d >= -9.0e18 && *d <= 9.0e18) {
    return static_cast<std::int64_t>(*d);
  }
  return std::nullopt;
}

Header::Header(Row names) : names_(std::move(names)) {
  // Strip a UTF-8 byte-order mark from the first column name.
  if (!names_.empty() && names_.front().rfind("\xEF\xBB\xBF", 0) == 0) {
    names_.front().erase(0, 3);
  }
}

std::optional<std::size_t> Header::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

}  // namespace bllopt::csv
