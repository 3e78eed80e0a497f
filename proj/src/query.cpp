#include "samplepilot/query.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include "samplepilot/error.hpp"
#include "samplepilot/rng.hpp"

namespace samplepilot {

std::string_view to_string(OpType op) noexcept {
  switch (op) {
    case OpType::Filter: return "Filter";
    case OpType::Group: return "Group";
    case OpType::Back: return "Back";
  }
  return "Back";
}

std::string_view to_string(CmpOp cmp) noexcept {
  switch (cmp) {
    case CmpOp::Eq: return "Eq";
    case CmpOp::Neq: return "Neq";
    case CmpOp::Gt: return "Gt";
    case CmpOp::Lt: return "Lt";
    case CmpOp::Contains: return "Contains";
  }
  return "Eq";
}

std::string_view to_string(AggFunc agg) noexcept {
  switch (agg) {
    case AggFunc::Count: return "Count";
    case AggFunc::Sum: return "Sum";
    case AggFunc::Avg: return "Avg";
  }
  return "Count";
}

std::optional<OpType> parse_op(std::string_view t) noexcept {
  if (t == "Filter") return OpType::Filter;
  if (t == "Group") return OpType::Group;
  if (t == "Back") return OpType::Back;
  return std::nullopt;
}

std::optional<CmpOp> parse_cmp(std::string_view t) noexcept {
  if (t == "Eq") return CmpOp::Eq;
  if (t == "Neq") return CmpOp::Neq;
  if (t == "Gt") return CmpOp::Gt;
  if (t == "Lt") return CmpOp::Lt;
  if (t == "Contains") return CmpOp::Contains;
  return std::nullopt;
}

std::optional<AggFunc> parse_agg(std::string_view t) noexcept {
  if (t == "Count") return AggFunc::Count;
  if (t == "Sum") return AggFunc::Sum;
  if (t == "Avg") return AggFunc::Avg;
  return std::nullopt;
}

Query Query::filter(std::string attr, CmpOp cmp, std::string term) {
  Query q;
  q.op = OpType::Filter;
  q.attr = std::move(attr);
  q.cmp = cmp;
  q.term = std::move(term);
  return q;
}

Query Query::group(std::string attr, AggFunc agg, std::string agg_attr) {
  Query q;
  q.op = OpType::Group;
  q.group_attr = std::move(attr);
  q.agg = agg;
  if (agg != AggFunc::Count) q.agg_attr = std::move(agg_attr);
  return q;
}

Query Query::back() { return Query{}; }

bool operator==(const Query& a, const Query& b) {
  if (a.op != b.op) return false;
  switch (a.op) {
    case OpType::Filter: return a.attr == b.attr && a.cmp == b.cmp && a.term == b.term;
    case OpType::Group:
      return a.group_attr == b.group_attr && a.agg == b.agg && a.agg_attr == b.agg_attr;
    case OpType::Back: return true;
  }
  return true;
}

nlohmann::json query_to_json(const Query& q) {
  nlohmann::json j{{"op", to_string(q.op)}};
  if (q.op == OpType::Filter) {
    j["attr"] = q.attr;
    j["cmp"] = to_string(q.cmp);
    j["term"] = q.term;
  } else if (q.op == OpType::Group) {
    j["group_attr"] = q.group_attr;
    j["agg_func"] = to_string(q.agg);
    if (!q.agg_attr.empty()) j["agg_attr"] = q.agg_attr;
  }
  return j;
}

Query query_from_json(const nlohmann::json& j) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::InvalidArgument, "bad query: " + why); };
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) throw bad("missing op");
  const auto op = parse_op(j["op"].get<std::string>());
  if (!op) throw bad("unknown op");
  auto str = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) throw bad(std::string("missing ") + key);
    return j[key].get<std::string>();
  };
  switch (*op) {
    case OpType::Filter: {
      const auto cmp = parse_cmp(str("cmp"));
      if (!cmp) throw bad("unknown cmp");
      // Numeric terms may arrive as JSON numbers.
      std::string term;
      if (j.contains("term") && j["term"].is_number())
        term = render_number(j["term"].get<double>(), j["term"].is_number_integer() ? ColumnType::Integer : ColumnType::Real);
      else
        term = str("term");
      return Query::filter(str("attr"), *cmp, term);
    }
    case OpType::Group: {
      const auto agg = parse_agg(str("agg_func"));
      if (!agg) throw bad("unknown agg_func");
      std::string agg_attr;
      if (*agg != AggFunc::Count) agg_attr = str("agg_attr");
      return Query::group(str("group_attr"), *agg, agg_attr);
    }
    case OpType::Back: return Query::back();
  }
  return Query::back();
}

std::string describe(const Query& q) {
  switch (q.op) {
    case OpType::Filter:
      return "Filter(" + q.attr + "," + std::string(to_string(q.cmp)) + "," + q.term + ")";
    case OpType::Group:
      return "Group(" + q.group_attr + "," + std::string(to_string(q.agg)) +
             (q.agg_attr.empty() ? "" : "," + q.agg_attr) + ")";
    case OpType::Back: return "Back";
  }
  return "Back";
}

namespace {

std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Compiled filter predicate over one column.
class Predicate {
 public:
  Predicate(const Table& table, const Query& q) : column_(&table.column(q.attr)), cmp_(q.cmp), text_(q.term) {
    if (column_->numeric()) {
      if (cmp_ != CmpOp::Contains) number_ = *parse_number(q.term);
    } else {
      match_.assign(column_->dictionary.size(), 0);
      for (std::size_t i = 0; i < match_.size(); ++i) {
        const auto& label = column_->dictionary[i];
        bool m = false;
        switch (cmp_) {
          case CmpOp::Eq: m = label == text_; break;
          case CmpOp::Neq: m = label != text_; break;
          case CmpOp::Contains: m = label.find(text_) != std::string::npos; break;
          default: break;
        }
        match_[i] = m;
      }
    }
  }

  bool operator()(RowId r) const {
    if (column_->is_null(r)) return false;
    if (!column_->numeric()) return match_[static_cast<std::size_t>(column_->codes[r])] != 0;
    const double v = column_->numbers[r];
    switch (cmp_) {
      case CmpOp::Eq: return v == number_;
      case CmpOp::Neq: return v != number_;
      case CmpOp::Gt: return v > number_;
      case CmpOp::Lt: return v < number_;
      case CmpOp::Contains: return column_->render(r).find(text_) != std::string::npos;
    }
    return false;
  }

 private:
  const Column* column_;
  CmpOp cmp_;
  std::string text_;
  double number_ = 0.0;
  std::vector<char> match_;
};

// Maps rows of one column to group labels: categories, small-domain
// integers by value, otherwise 10 equal-width bins over the column range.
class GroupKeyer {
 public:
  GroupKeyer(const Table& table, const std::string& name)
      : column_(&table.column(name)), stats_(&table.stats(name)) {
    if (column_->type == ColumnType::Integer && stats_->distinct_count <= 20) by_value_ = true;
    if (column_->type == ColumnType::Real || (column_->type == ColumnType::Integer && !by_value_)) {
      const double lo = stats_->min.value_or(0.0), hi = stats_->max.value_or(0.0);
      for (int b = 0; b < 10; ++b) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "[%.4g,%.4g)", lo + (hi - lo) * b / 10.0, lo + (hi - lo) * (b + 1) / 10.0);
        bin_labels_.emplace_back(buf);
      }
    }
  }

  std::string key(RowId r) const {
    if (column_->is_null(r)) return "\xe2\x88\x85";  // ∅
    if (!column_->numeric() || by_value_) return column_->render(r);
    return bin_labels_[static_cast<std::size_t>(decile_bucket(*stats_, column_->numbers[r]))];
  }

 private:
  const Column* column_;
  const ColumnStats* stats_;
  bool by_value_ = false;
  std::vector<std::string> bin_labels_;
};

std::string render_row(const Table& table, RowId r) {
  std::string out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c) out.push_back('|');
    out += table.column(c).name;
    out.push_back('=');
    out += table.column(c).render(r);
  }
  return out;
}

std::vector<RowId> intersect(const std::vector<RowId>& frame, const SampleHandle* source) {
  if (!source) return frame;
  std::vector<RowId> out;
  out.reserve(std::min(frame.size(), source->row_indices.size()));
  std::set_intersection(frame.begin(), frame.end(), source->row_indices.begin(),
                        source->row_indices.end(), std::back_inserter(out));
  return out;
}

DisplayResult filtered_view(const Table& table, const std::vector<RowId>& matched, double sr,
                            const EngineOptions& opt) {
  DisplayResult d;
  d.kind = DisplayKind::FilteredView;
  d.matched_rows = matched.size();
  d.matched_estimate = static_cast<double>(matched.size()) / sr;
  for (std::size_t i = 0; i < matched.size() && i < opt.top_k; ++i)
    d.top_rows.push_back(render_row(table, matched[i]));
  d.vector = encode_display(d, opt.vector_width);
  return d;
}

DisplayResult grouped_bars(const Table& table, const Query& q, const std::vector<RowId>& rows,
                           double sr, const EngineOptions& opt) {
  const GroupKeyer keyer(table, q.group_attr);
  const Column* agg_col = q.agg == AggFunc::Count ? nullptr : &table.column(q.agg_attr);
  struct Acc {
    std::size_t count = 0;
    std::size_t non_null = 0;
    double sum = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (RowId r : rows) {
    auto& a = acc[keyer.key(r)];
    ++a.count;
    if (agg_col && !agg_col->is_null(r)) {
      ++a.non_null;
      a.sum += agg_col->numbers[r];
    }
  }
  DisplayResult d;
  d.kind = DisplayKind::GroupedBars;
  d.agg = q.agg;
  d.group_attr = q.group_attr;
  d.group_count = acc.size();
  for (const auto& [key, a] : acc) {
    Bar b{key, 0.0, 0.0};
    switch (q.agg) {
      case AggFunc::Count:
        b.value = static_cast<double>(a.count);
        b.estimate = b.value / sr;
        break;
      case AggFunc::Sum:
        b.value = a.sum;
        b.estimate = a.sum / sr;
        break;
      case AggFunc::Avg:
        b.value = a.non_null ? a.sum / static_cast<double>(a.non_null) : 0.0;
        b.estimate = b.value;
        break;
    }
    d.groups.push_back(std::move(b));
  }
  std::sort(d.groups.begin(), d.groups.end(), [](const Bar& x, const Bar& y) {
    return x.value != y.value ? x.value > y.value : x.key < y.key;
  });
  if (d.groups.size() > opt.max_groups) d.groups.resize(opt.max_groups);
  for (std::size_t i = 0; i < d.groups.size() && i < opt.top_k; ++i)
    d.top_rows.push_back(q.group_attr + "=" + d.groups[i].key);
  d.vector = encode_display(d, opt.vector_width);
  return d;
}

}  // namespace

void validate_query(const Table& table, const Query& q) {
  auto column = [&](const std::string& name) -> const Column& { return table.column(name); };
  switch (q.op) {
    case OpType::Filter: {
      const auto& c = column(q.attr);
      if (!c.numeric() && (q.cmp == CmpOp::Gt || q.cmp == CmpOp::Lt))
        throw Error(ErrorCode::TypeMismatch, std::string(to_string(q.cmp)) + " on categorical column '" + q.attr + "'");
      if (c.numeric() && q.cmp != CmpOp::Contains && !parse_number(q.term))
        throw Error(ErrorCode::TypeMismatch, "term '" + q.term + "' is not numeric for column '" + q.attr + "'");
      break;
    }
    case OpType::Group: {
      column(q.group_attr);
      if (q.agg != AggFunc::Count) {
        if (q.agg_attr.empty())
          throw Error(ErrorCode::TypeMismatch, std::string(to_string(q.agg)) + " needs an aggregate column");
        if (!column(q.agg_attr).numeric())
          throw Error(ErrorCode::TypeMismatch, "cannot aggregate categorical column '" + q.agg_attr + "'");
      }
      break;
    }
    case OpType::Back: break;
  }
}

int decile_bucket(const ColumnStats& stats, double value) noexcept {
  if (!stats.min || !stats.max || !(*stats.max > *stats.min)) return 0;
  const double pos = (value - *stats.min) / (*stats.max - *stats.min) * 10.0;
  if (!(pos > 0.0)) return 0;
  return std::min(9, static_cast<int>(pos));
}

double step_cost_ratio(std::size_t source_rows, std::size_t full_rows, double effective_sr) noexcept {
  if (full_rows == 0) return effective_sr;
  return static_cast<double>(source_rows) / static_cast<double>(full_rows);
}

std::vector<double> encode_display(const DisplayResult& r, std::size_t width) {
  if (width < 22) throw Error(ErrorCode::InvalidArgument, "display vector width must be at least 22");
  std::vector<double> v(width, 0.0);
  v[r.kind == DisplayKind::FilteredView ? 0 : 1] = 1.0;
  if (r.kind == DisplayKind::FilteredView) {
    v[2] = std::log1p(static_cast<double>(r.matched_rows));
    return v;
  }
  v[2] = std::log1p(static_cast<double>(r.group_count));
  double max_abs = 0.0;
  const std::size_t shown = std::min<std::size_t>(8, r.groups.size());
  for (std::size_t i = 0; i < shown; ++i) max_abs = std::max(max_abs, std::fabs(r.groups[i].value));
  for (std::size_t i = 0; i < shown; ++i) {
    v[3 + i] = max_abs > 0 ? r.groups[i].value / max_abs : 0.0;
    v[11 + i] = unit_interval(fnv1a(r.groups[i].key));
  }
  if (r.agg) v[19 + static_cast<std::size_t>(*r.agg)] = 1.0;
  return v;
}

std::array<double, 6> encode_query(const Table& table, const Query& q) {
  std::array<double, 6> e{};
  const double ncols = static_cast<double>(std::max<std::size_t>(1, table.column_count()));
  auto col_feature = [&](const std::string& name) {
    auto idx = table.column_index(name);
    return idx ? static_cast<double>(*idx + 1) / ncols : 0.0;
  };
  e[0] = static_cast<double>(static_cast<int>(q.op) + 1) / 3.0;
  if (q.op == OpType::Filter) {
    e[1] = col_feature(q.attr);
    e[2] = static_cast<double>(static_cast<int>(q.cmp) + 1) / 5.0;
    const auto idx = table.column_index(q.attr);
    const auto num = parse_number(q.term);
    if (idx && table.column(*idx).numeric() && num)
      e[3] = static_cast<double>(decile_bucket(table.stats(*idx), *num) + 1) / 10.0;
    else
      e[3] = unit_interval(fnv1a(q.term));
  } else if (q.op == OpType::Group) {
    e[4] = col_feature(q.group_attr);
    e[5] = static_cast<double>(static_cast<int>(q.agg) + 1) / 3.0;
  }
  return e;
}

SessionState::SessionState(const Table& table, EngineOptions options)
    : table_(&table), options_(options) {
  auto rows = std::make_shared<std::vector<RowId>>(table.row_count());
  std::iota(rows->begin(), rows->end(), RowId{0});
  Frame root;
  root.display = filtered_view(table, *rows, 1.0, options_);
  root.full_rows = std::move(rows);
  stack_.push_back(std::move(root));
}

const StepRecord& SessionState::execute(const Query& query, const SampleHandle* source) {
  validate_query(*table_, query);
  const double sr = source ? source->effective_sr : 1.0;
  if (source && sr <= 0.0) throw Error(ErrorCode::InvalidArgument, "empty sample '" + source->sample_id + "'");

  StepRecord rec;
  rec.query = query;
  rec.sample_id = source ? source->sample_id : std::string(kFullSampleId);

  switch (query.op) {
    case OpType::Filter: {
      const Frame& parent = stack_.back();
      const Predicate pred(*table_, query);
      const auto scanned = intersect(*parent.full_rows, source);
      std::vector<RowId> matched;
      for (RowId r : scanned)
        if (pred(r)) matched.push_back(r);
      auto full = std::make_shared<std::vector<RowId>>();
      if (!source) {
        *full = matched;
      } else {
        for (RowId r : *parent.full_rows)
          if (pred(r)) full->push_back(r);
      }
      rec.display = filtered_view(*table_, matched, sr, options_);
      rec.display.rows_scanned = scanned.size();
      rec.full_rows_scanned = parent.full_rows->size();
      Frame frame;
      frame.filters = parent.filters;
      frame.filters.push_back(query);
      frame.full_rows = std::move(full);
      frame.display = rec.display;
      stack_.push_back(std::move(frame));
      break;
    }
    case OpType::Group: {
      const Frame& parent = stack_.back();
      const auto scanned = intersect(*parent.full_rows, source);
      rec.display = grouped_bars(*table_, query, scanned, sr, options_);
      rec.display.rows_scanned = scanned.size();
      rec.full_rows_scanned = parent.full_rows->size();
      Frame frame;
      frame.filters = parent.filters;
      frame.full_rows = parent.full_rows;
      frame.display = rec.display;
      stack_.push_back(std::move(frame));
      break;
    }
    case OpType::Back: {
      if (stack_.size() < 2) throw Error(ErrorCode::EmptyStack, "Back at the root frame");
      stack_.pop_back();
      const Frame& restored = stack_.back();
      rec.display = restored.display;
      rec.display.rows_scanned = intersect(*restored.full_rows, source).size();
      rec.full_rows_scanned = restored.full_rows->size();
      break;
    }
  }
  rec.cost_ratio = step_cost_ratio(rec.display.rows_scanned, rec.full_rows_scanned, sr);
  cumulative_cost_ += rec.cost_ratio;
  history_.push_back(std::move(rec));
  return history_.back();
}

nlohmann::json display_to_json(const DisplayResult& d) {
  nlohmann::json j;
  j["kind"] = d.kind == DisplayKind::FilteredView ? "FilteredView" : "GroupedBars";
  if (d.kind == DisplayKind::FilteredView) {
    j["matched_rows"] = d.matched_rows;
    j["matched_estimate"] = d.matched_estimate;
  } else {
    j["group_attr"] = d.group_attr;
    j["agg_func"] = to_string(d.agg.value_or(AggFunc::Count));
    j["group_count"] = d.group_count;
    auto groups = nlohmann::json::array();
    for (const auto& b : d.groups) groups.push_back({{"key", b.key}, {"value", b.value}, {"estimate", b.estimate}});
    j["groups"] = std::move(groups);
  }
  j["top_rows"] = d.top_rows;
  j["vector"] = d.vector;
  j["rows_scanned"] = d.rows_scanned;
  return j;
}

DisplayResult display_from_json(const nlohmann::json& j) {
  DisplayResult d;
  d.kind = j.at("kind").get<std::string>() == "GroupedBars" ? DisplayKind::GroupedBars : DisplayKind::FilteredView;
  if (d.kind == DisplayKind::FilteredView) {
    d.matched_rows = j.at("matched_rows").get<std::size_t>();
    d.matched_estimate = j.value("matched_estimate", static_cast<double>(d.matched_rows));
  } else {
    d.group_attr = j.at("group_attr").get<std::string>();
    d.agg = parse_agg(j.at("agg_func").get<std::string>());
    d.group_count = j.at("group_count").get<std::size_t>();
    for (const auto& g : j.at("groups"))
      d.groups.push_back({g.at("key").get<std::string>(), g.at("value").get<double>(), g.at("estimate").get<double>()});
  }
  d.top_rows = j.at("top_rows").get<std::vector<std::string>>();
  d.vector = j.at("vector").get<std::vector<double>>();
  d.rows_scanned = j.at("rows_scanned").get<std::size_t>();
  return d;
}

nlohmann::json step_to_json(std::uint64_t session_id, int template_id, std::size_t step,
                            const StepRecord& record) {
  nlohmann::json j;
  j["session_id"] = session_id;
  j["step"] = step;
  j["template"] = template_id;
  j["query"] = query_to_json(record.query);
  j["sample_id"] = record.sample_id;
  j["rows_scanned"] = record.display.rows_scanned;
  j["full_rows_scanned"] = record.full_rows_scanned;
  j["cost_ratio"] = record.cost_ratio;
  j["fallback"] = record.fallback;
  j["display"] = display_to_json(record.display);
  return j;
}

void write_session_log(std::ostream& out, const std::vector<Session>& sessions) {
  for (const auto& s : sessions)
    for (std::size_t i = 0; i < s.steps.size(); ++i)
      out << step_to_json(s.id, s.template_id, i, s.steps[i]).dump() << '\n';
}

std::vector<Session> read_session_log(std::istream& in) {
  std::vector<Session> sessions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.contains("session_id") && j.contains("format")) continue;  // header record
      const auto id = j.at("session_id").get<std::uint64_t>();
      if (sessions.empty() || sessions.back().id != id) {
        Session s;
        s.id = id;
        s.template_id = j.value("template", -1);
        sessions.push_back(std::move(s));
      }
      StepRecord rec;
      rec.query = query_from_json(j.at("query"));
      rec.sample_id = j.at("sample_id").get<std::string>();
      rec.cost_ratio = j.at("cost_ratio").get<double>();
      rec.full_rows_scanned = j.at("full_rows_scanned").get<std::size_t>();
      rec.fallback = j.value("fallback", false);
      rec.display = display_from_json(j.at("display"));
      sessions.back().steps.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Io, "session log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sessions;
}

}  // namespace samplepilot
