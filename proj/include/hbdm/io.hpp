#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hbdm {

/// Fixed 17-significant-digit formatting used by every CSV output.
std::string format_double(double value);

/// Minimal CSV builder; numbers are written with format_double.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }
  void row(std::span<const double> values);
  std::size_t rows() const { return rows_; }
  const std::string& str() const { return buffer_; }

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string buffer_;
};

void write_text_file(const std::string& path, const std::string& contents);

/// 64-bit FNV-1a, used for scenario hashes in run manifests.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace hbdm
