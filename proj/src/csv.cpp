#include "dsgd/csv.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "dsgd/common.hpp"

namespace dsgd {

namespace {

std::string non_finite(double v) {
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) return non_finite(v);
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string format_double_shortest(double v) {
  if (!std::isfinite(v)) return non_finite(v);
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::add(std::vector<std::string> row) {
  require(row.size() == header_.size(), "CSV row has " + std::to_string(row.size()) +
                                            " fields, header has " +
                                            std::to_string(header_.size()));
  rows_.push_back(std::move(row));
  return *this;
}

std::string CsvTable::render() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) out += ',';
      out += quote_if_needed(fields[k]);
    }
    out += '\n';
  };
  line(header_);
  for (const auto& row : rows_) line(row);
  return out;
}

}  // namespace dsgd
