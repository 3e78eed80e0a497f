#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace samplepilot {

using RowId = std::uint32_t;

enum class ColumnType { Integer, Real, Categorical };

std::string_view to_string(ColumnType type) noexcept;
std::optional<ColumnType> parse_column_type(std::string_view text) noexcept;

inline constexpr std::int32_t kNullCode = -1;

// One typed column. Numeric columns store doubles (integers are exact up to
// 2^53) with NaN as the null marker; categorical columns store dictionary
// codes with kNullCode as the null marker.
struct Column {
  std::string name;
  ColumnType type = ColumnType::Categorical;
  std::vector<double> numbers;
  std::vector<std::int32_t> codes;
  std::vector<std::string> dictionary;

  static Column integer(std::string name, std::vector<double> values);
  static Column real(std::string name, std::vector<double> values);
  // Empty strings become nulls.
  static Column categorical(std::string name, const std::vector<std::string>& values);

  bool numeric() const noexcept { return type != ColumnType::Categorical; }
  std::size_t size() const noexcept { return numeric() ? numbers.size() : codes.size(); }
  bool is_null(std::size_t row) const noexcept;
  // Decimal or label rendering; empty for null.
  std::string render(std::size_t row) const;
  std::optional<std::int32_t> code_of(std::string_view label) const;
};

struct ColumnStats {
  std::string column;
  std::size_t distinct_count = 0;
  std::size_t null_count = 0;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> mean;
  std::optional<double> stddev;  // sample standard deviation (n - 1)
  std::map<std::string, std::size_t> category_frequencies;
};

// Immutable columnar table. Construction validates the shape, then caches
// per-column statistics and a content hash.
class Table {
 public:
  Table() = default;
  Table(std::string name, std::vector<Column> columns);

  const std::string& name() const noexcept { return name_; }
  std::size_t row_count() const noexcept { return row_count_; }
  std::size_t column_count() const noexcept { return columns_.size(); }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const Column& column(std::size_t index) const { return columns_.at(index); }
  const Column& column(std::string_view name) const;
  std::optional<std::size_t> column_index(std::string_view name) const noexcept;
  const ColumnStats& stats(std::size_t index) const { return stats_.at(index); }
  const ColumnStats& stats(std::string_view name) const;
  const std::vector<ColumnStats>& all_stats() const noexcept { return stats_; }
  // Hex FNV-1a over column names, types and rendered cells.
  const std::string& content_hash() const noexcept { return hash_; }

  // New table holding the given rows (in order).
  Table select_rows(const std::vector<RowId>& rows, std::string name) const;

 private:
  std::string name_;
  std::vector<Column> columns_;
  std::size_t row_count_ = 0;
  std::vector<ColumnStats> stats_;
  std::string hash_;
};

std::vector<ColumnStats> compute_stats(const Table& table);

// Shortest round-trip decimal rendering of a numeric value.
std::string render_number(double value, ColumnType type);

struct CsvOptions {
  std::map<std::string, ColumnType> schema_hint;
  std::size_t max_rows = 10'000'000;
  std::string name = "table";
};

Table load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Table parse_csv(std::string_view text, const CsvOptions& options = {});
void write_csv(const Table& table, std::ostream& out);
void write_csv(const Table& table, const std::filesystem::path& path);

}  // namespace samplepilot
