#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dsgd {

/// 17 significant digits, '.' decimal point, locale independent.
/// Non-finite values print as nan, inf and -inf.
std::string format_double(double v);

/// Shortest decimal that parses back to exactly `v`.
std::string format_double_shortest(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& add(std::vector<std::string> row);
  std::size_t size() const { return rows_.size(); }
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  /// RFC 4180 style with '\n' line endings; fields containing commas,
  /// quotes or newlines are quoted.
  std::string render() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace dsgd
