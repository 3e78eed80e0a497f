#include "samplepilot/table.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "samplepilot/error.hpp"
#include "samplepilot/rng.hpp"

namespace samplepilot {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMaxExactInteger = 9007199254740992.0;  // 2^53

std::optional<double> parse_integer(std::string_view cell) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
  const auto d = static_cast<double>(v);
  if (std::fabs(d) > kMaxExactInteger) return std::nullopt;
  return d;
}

std::optional<double> parse_real(std::string_view cell) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::optional<double> parse_cell(std::string_view cell, ColumnType type) {
  return type == ColumnType::Integer ? parse_integer(cell) : parse_real(cell);
}

// RFC-4180 records; quoted fields may hold commas, quotes ("") and newlines.
std::vector<std::vector<std::string>> split_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' || c == '\n') {
      end_record();
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw Error(ErrorCode::MalformedCsv, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void write_field(std::ostream& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

std::string_view to_string(ColumnType type) noexcept {
  switch (type) {
    case ColumnType::Integer: return "Integer";
    case ColumnType::Real: return "Real";
    case ColumnType::Categorical: return "Categorical";
  }
  return "Categorical";
}

std::optional<ColumnType> parse_column_type(std::string_view text) noexcept {
  if (text == "Integer") return ColumnType::Integer;
  if (text == "Real") return ColumnType::Real;
  if (text == "Categorical") return ColumnType::Categorical;
  return std::nullopt;
}

std::string render_number(double value, ColumnType type) {
  if (std::isnan(value)) return {};
  char buf[64];
  std::to_chars_result res;
  if (type == ColumnType::Integer)
    res = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(value));
  else
    res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

Column Column::integer(std::string name, std::vector<double> values) {
  Column c;
  c.name = std::move(name);
  c.type = ColumnType::Integer;
  c.numbers = std::move(values);
  return c;
}

Column Column::real(std::string name, std::vector<double> values) {
  Column c;
  c.name = std::move(name);
  c.type = ColumnType::Real;
  c.numbers = std::move(values);
  return c;
}

Column Column::categorical(std::string name, const std::vector<std::string>& values) {
  Column c;
  c.name = std::move(name);
  c.type = ColumnType::Categorical;
  c.codes.reserve(values.size());
  std::unordered_map<std::string, std::int32_t> lookup;
  for (const auto& v : values) {
    if (v.empty()) {
      c.codes.push_back(kNullCode);
      continue;
    }
    auto [it, inserted] = lookup.try_emplace(v, static_cast<std::int32_t>(c.dictionary.size()));
    if (inserted) c.dictionary.push_back(v);
    c.codes.push_back(it->second);
  }
  return c;
}

bool Column::is_null(std::size_t row) const noexcept {
  return numeric() ? std::isnan(numbers[row]) : codes[row] == kNullCode;
}

std::string Column::render(std::size_t row) const {
  if (numeric()) return render_number(numbers[row], type);
  const auto code = codes[row];
  return code == kNullCode ? std::string{} : dictionary[static_cast<std::size_t>(code)];
}

std::optional<std::int32_t> Column::code_of(std::string_view label) const {
  for (std::size_t i = 0; i < dictionary.size(); ++i)
    if (dictionary[i] == label) return static_cast<std::int32_t>(i);
  return std::nullopt;
}

Table::Table(std::string name, std::vector<Column> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& c = columns_[i];
    if (!seen.insert(c.name).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate column name '" + c.name + "'");
    if (i == 0) row_count_ = c.size();
    if (c.size() != row_count_)
      throw Error(ErrorCode::InvalidArgument, "column '" + c.name + "' has ragged length");
    if (c.type == ColumnType::Integer) {
      for (double v : c.numbers)
        if (!std::isnan(v) && v != std::trunc(v))
          throw Error(ErrorCode::TypeMismatch, "non-integral value in column '" + c.name + "'");
    }
  }
  stats_ = compute_stats(*this);

  std::uint64_t h = fnv1a("samplepilot.table.v1");
  for (const auto& c : columns_) {
    h = fnv1a(c.name, h);
    h = fnv1a(to_string(c.type), h);
    for (std::size_t r = 0; r < row_count_; ++r) {
      h = fnv1a(c.render(r), h);
      h = fnv1a(std::string_view("\x1f", 1), h);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  hash_ = buf;
}

const Column& Table::column(std::string_view name) const {
  if (auto idx = column_index(name)) return columns_[*idx];
  throw Error(ErrorCode::UnknownColumn, "no column named '" + std::string(name) + "'");
}

std::optional<std::size_t> Table::column_index(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

const ColumnStats& Table::stats(std::string_view name) const {
  if (auto idx = column_index(name)) return stats_[*idx];
  throw Error(ErrorCode::UnknownColumn, "no column named '" + std::string(name) + "'");
}

Table Table::select_rows(const std::vector<RowId>& rows, std::string name) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) {
    Column copy;
    copy.name = c.name;
    copy.type = c.type;
    if (c.numeric()) {
      copy.numbers.reserve(rows.size());
      for (RowId r : rows) copy.numbers.push_back(c.numbers.at(r));
    } else {
      copy.dictionary = c.dictionary;
      copy.codes.reserve(rows.size());
      for (RowId r : rows) copy.codes.push_back(c.codes.at(r));
    }
    out.push_back(std::move(copy));
  }
  return Table(std::move(name), std::move(out));
}

std::vector<ColumnStats> compute_stats(const Table& table) {
  std::vector<ColumnStats> result;
  result.reserve(table.column_count());
  for (const auto& c : table.columns()) {
    ColumnStats s;
    s.column = c.name;
    if (c.numeric()) {
      std::vector<double> values;
      values.reserve(c.numbers.size());
      for (double v : c.numbers) {
        if (std::isnan(v))
          ++s.null_count;
        else
          values.push_back(v);
      }
      if (!values.empty()) {
        // Sorting first makes every aggregate independent of row order.
        std::sort(values.begin(), values.end());
        s.distinct_count = 1;
        for (std::size_t i = 1; i < values.size(); ++i)
          if (values[i] != values[i - 1]) ++s.distinct_count;
        s.min = values.front();
        s.max = values.back();
        double sum = 0.0;
        for (double v : values) sum += v;
        const double mean = sum / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        s.mean = mean;
        s.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      }
    } else {
      std::vector<std::size_t> counts(c.dictionary.size(), 0);
      for (auto code : c.codes) {
        if (code == kNullCode)
          ++s.null_count;
        else
          ++counts[static_cast<std::size_t>(code)];
      }
      for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) continue;
        s.category_frequencies[c.dictionary[i]] = counts[i];
        ++s.distinct_count;
      }
    }
    result.push_back(std::move(s));
  }
  return result;
}

Table parse_csv(std::string_view text, const CsvOptions& options) {
  auto records = split_records(text);
  if (records.empty()) throw Error(ErrorCode::EmptyFile, "no header row");
  const auto header = std::move(records.front());
  const std::size_t width = header.size();
  const std::size_t rows = records.size() - 1;
  if (rows > options.max_rows)
    throw Error(ErrorCode::TableTooLarge, std::to_string(rows) + " rows exceeds limit of " +
                                              std::to_string(options.max_rows));
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width)
      throw Error(ErrorCode::MalformedCsv, "record " + std::to_string(r + 1) + " has " +
                                               std::to_string(records[r].size()) +
                                               " fields, header has " + std::to_string(width));
  }
  for (const auto& [col, _] : options.schema_hint) {
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw Error(ErrorCode::UnknownColumn, "schema hint names missing column '" + col + "'");
  }

  std::vector<Column> columns;
  columns.reserve(width);
  for (std::size_t j = 0; j < width; ++j) {
    const std::string& name = header[j];
    ColumnType type;
    if (auto it = options.schema_hint.find(name); it != options.schema_hint.end()) {
      type = it->second;
    } else {
      // Integer -> Real -> Categorical; one non-conforming cell demotes.
      type = ColumnType::Integer;
      for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& cell = records[r][j];
        if (cell.empty()) continue;
        if (type == ColumnType::Integer && !parse_integer(cell)) type = ColumnType::Real;
        if (type == ColumnType::Real && !parse_real(cell)) {
          type = ColumnType::Categorical;
          break;
        }
      }
    }
    if (type == ColumnType::Categorical) {
      std::vector<std::string> values;
      values.reserve(rows);
      for (std::size_t r = 1; r < records.size(); ++r) values.push_back(std::move(records[r][j]));
      columns.push_back(Column::categorical(name, values));
    } else {
      std::vector<double> values;
      values.reserve(rows);
      for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& cell = records[r][j];
        if (cell.empty()) {
          values.push_back(kNaN);
          continue;
        }
        auto v = parse_cell(cell, type);
        if (!v)
          throw Error(ErrorCode::MalformedCsv, "cell '" + cell + "' in column '" + name +
                                                   "' is not " + std::string(to_string(type)));
        values.push_back(*v);
      }
      columns.push_back(type == ColumnType::Integer ? Column::integer(name, std::move(values))
                                                    : Column::real(name, std::move(values)));
    }
  }
  return Table(options.name, std::move(columns));
}

Table load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(ErrorCode::EmptyFile, path.string() + " is empty");
  return parse_csv(text, options);
}

void write_csv(const Table& table, std::ostream& out) {
  const auto& cols = table.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (j) out << ',';
    write_field(out, cols[j].name);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (j) out << ',';
      std::string cell = cols[j].render(r);
      // Keep integral reals recognisable as Real on reload.
      if (cols[j].type == ColumnType::Real && !cell.empty() &&
          cell.find_first_of(".eEn") == std::string::npos)
        cell += ".0";
      write_field(out, cell);
    }
    out << '\n';
  }
}

void write_csv(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_csv(table, out);
}

}  // namespace samplepilot
