#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace deepddm {

/// Shortest exact decimal for a double ("%.17g"); integers print without exponent.
std::string format_double(double v);

/// Comma-separated writer with a header row and '.' decimals regardless of locale.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> out;
    out.reserve(sizeof...(cells));
    (out.push_back(cell(cells)), ...);
    write_row(out);
  }
  void write_row(const std::vector<std::string>& cells);

 private:
  template <class T>
  static std::string cell(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "1" : "0";
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(static_cast<double>(v));
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(v);
    } else {
      return std::string(v);
    }
  }

  std::ofstream out_;
  std::size_t columns_;
};

/// Minimal reader for files produced by CsvWriter (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace deepddm
