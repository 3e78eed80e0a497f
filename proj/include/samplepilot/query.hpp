#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "samplepilot/sampling.hpp"
#include "samplepilot/table.hpp"

namespace samplepilot {

enum class OpType { Filter, Group, Back };
enum class CmpOp { Eq, Neq, Gt, Lt, Contains };
enum class AggFunc { Count, Sum, Avg };

std::string_view to_string(OpType op) noexcept;
std::string_view to_string(CmpOp cmp) noexcept;
std::string_view to_string(AggFunc agg) noexcept;
std::optional<OpType> parse_op(std::string_view text) noexcept;
std::optional<CmpOp> parse_cmp(std::string_view text) noexcept;
std::optional<AggFunc> parse_agg(std::string_view text) noexcept;

// One EDA operation. Only the fields relevant to `op` are meaningful;
// equality and serialization ignore the rest.
struct Query {
  OpType op = OpType::Back;
  std::string attr;
  CmpOp cmp = CmpOp::Eq;
  std::string term;
  std::string group_attr;
  AggFunc agg = AggFunc::Count;
  std::string agg_attr;  // empty for Count

  static Query filter(std::string attr, CmpOp cmp, std::string term);
  static Query group(std::string attr, AggFunc agg, std::string agg_attr = {});
  static Query back();

  friend bool operator==(const Query& a, const Query& b);
};

nlohmann::json query_to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);  // throws InvalidArgument
std::string describe(const Query& q);

// Throws UnknownColumn or TypeMismatch when the query does not fit the schema.
void validate_query(const Table& table, const Query& q);

struct Bar {
  std::string key;
  double value = 0.0;     // raw aggregate over the scanned rows
  double estimate = 0.0;  // Count and Sum scaled by 1/effective_sr; Avg raw
};

enum class DisplayKind { FilteredView, GroupedBars };

struct DisplayResult {
  DisplayKind kind = DisplayKind::FilteredView;
  std::vector<Bar> groups;         // value desc, key asc; at most max_groups
  std::size_t group_count = 0;     // before truncation
  std::size_t matched_rows = 0;
  double matched_estimate = 0.0;   // matched_rows / effective_sr
  std::optional<AggFunc> agg;
  std::string group_attr;
  std::vector<std::string> top_rows;
  std::vector<double> vector;
  std::size_t rows_scanned = 0;

  bool empty() const noexcept {
    return kind == DisplayKind::FilteredView ? matched_rows == 0 : group_count == 0;
  }
};

nlohmann::json display_to_json(const DisplayResult& d);
DisplayResult display_from_json(const nlohmann::json& j);

struct EngineOptions {
  std::size_t vector_width = 32;
  std::size_t top_k = 5;
  std::size_t max_groups = 20;
};

// [kind one-hot (2), log1p(count) (1), top-8 bars / max |bar| (8),
//  hashed top-8 keys (8), agg one-hot (3), zeros up to width].
std::vector<double> encode_display(const DisplayResult& result, std::size_t width = 32);

// Six [0, 1] features: op, attr, cmp, term, group attr, agg.
std::array<double, 6> encode_query(const Table& table, const Query& q);

// Equal-width decile (0..9) of a value against the column range.
int decile_bucket(const ColumnStats& stats, double value) noexcept;

// rows_scanned(source) / rows_scanned(full data); falls back to the source
// sampling rate when the full-data frame is empty.
double step_cost_ratio(std::size_t source_rows, std::size_t full_rows, double effective_sr) noexcept;

struct Frame {
  std::vector<Query> filters;                          // active filter chain
  std::shared_ptr<const std::vector<RowId>> full_rows;  // full-table rows passing the chain
  DisplayResult display;
};

struct StepRecord {
  Query query;
  std::string sample_id;  // "FULL" for the full table
  DisplayResult display;
  double cost_ratio = 1.0;
  std::size_t full_rows_scanned = 0;
  bool fallback = false;  // simulator substituted an unconditioned schema
};

inline constexpr std::string_view kFullSampleId = "FULL";

// Display stack plus history for one session. Single owner; the table is
// shared read-only.
class SessionState {
 public:
  explicit SessionState(const Table& table, EngineOptions options = {});

  const Table& table() const noexcept { return *table_; }
  const EngineOptions& options() const noexcept { return options_; }
  std::size_t depth() const noexcept { return stack_.size(); }
  const Frame& top() const noexcept { return stack_.back(); }
  const std::vector<Frame>& stack() const noexcept { return stack_; }
  double cumulative_cost() const noexcept { return cumulative_cost_; }
  const std::vector<StepRecord>& history() const noexcept { return history_; }
  // Last display shown, if any step ran.
  const DisplayResult* last_display() const noexcept {
    return history_.empty() ? nullptr : &history_.back().display;
  }
  void mark_last_fallback() { if (!history_.empty()) history_.back().fallback = true; }

  // Runs `query` against `source` (nullptr means the full table).
  const StepRecord& execute(const Query& query, const SampleHandle* source);

 private:
  const Table* table_;
  EngineOptions options_;
  std::vector<Frame> stack_;
  double cumulative_cost_ = 0.0;
  std::vector<StepRecord> history_;
};

struct Session {
  std::uint64_t id = 0;
  int template_id = -1;
  std::vector<StepRecord> steps;
};

nlohmann::json step_to_json(std::uint64_t session_id, int template_id, std::size_t step,
                            const StepRecord& record);
// One JSON record per step, newline-delimited.
void write_session_log(std::ostream& out, const std::vector<Session>& sessions);
std::vector<Session> read_session_log(std::istream& in);

}  // namespace samplepilot
