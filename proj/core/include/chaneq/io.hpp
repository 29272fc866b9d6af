#pragma once

// File output helpers: atomic writes, CSV assembly and small SVG line charts.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace chaneq {

/// Writes to a sibling temporary file and renames it over `path`.
/// Creates missing parent directories. Throws ConfigError on failure.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form, identical on every run.
std::string format_number(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& row(const std::vector<std::string>& cells);
  const std::string& str() const noexcept { return out_; }

 private:
  std::size_t columns_;
  std::string out_;
};

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart with axes, ticks and a legend.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

}  // namespace chaneq
