#include "samplepilot/simulator.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "samplepilot/error.hpp"
#include "samplepilot/parallel.hpp"

namespace samplepilot {

namespace {

std::string_view kind_name(SchemaKind k) {
  switch (k) {
    case SchemaKind::Filter: return "filter";
    case SchemaKind::Group: return "group";
    case SchemaKind::Drill: return "drill";
    case SchemaKind::Back: return "back";
  }
  return "back";
}

SchemaKind parse_kind(const std::string& s) {
  if (s == "filter") return SchemaKind::Filter;
  if (s == "group") return SchemaKind::Group;
  if (s == "drill") return SchemaKind::Drill;
  if (s == "back") return SchemaKind::Back;
  throw Error(ErrorCode::InvalidConfig, "unknown schema kind '" + s + "'");
}

QuerySchema filter_at(std::string attr, CmpOp cmp, double fraction, double weight = 1.0) {
  QuerySchema s;
  s.kind = SchemaKind::Filter;
  s.attr = std::move(attr);
  s.cmp = cmp;
  s.fraction = fraction;
  s.weight = weight;
  return s;
}

QuerySchema filter_eq(std::string attr, std::string term, double weight = 1.0) {
  QuerySchema s;
  s.kind = SchemaKind::Filter;
  s.attr = std::move(attr);
  s.cmp = CmpOp::Eq;
  s.term = std::move(term);
  s.weight = weight;
  return s;
}

QuerySchema group(std::string attr, AggFunc agg, std::string agg_attr = {}, double weight = 1.0) {
  QuerySchema s;
  s.kind = SchemaKind::Group;
  s.group_attr = std::move(attr);
  s.agg = agg;
  s.agg_attr = std::move(agg_attr);
  s.weight = weight;
  return s;
}

QuerySchema drill() {
  QuerySchema s;
  s.kind = SchemaKind::Drill;
  return s;
}

QuerySchema back(double weight = 1.0) {
  QuerySchema s;
  s.kind = SchemaKind::Back;
  s.weight = weight;
  return s;
}

}  // namespace

void validate_config(const SimulatorConfig& c, const Table* table) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (c.templates.empty()) fail("no intent templates");
  if (c.intent_mixture.size() != c.templates.size()) fail("intent mixture size differs from template count");
  double total = 0.0;
  for (double w : c.intent_mixture) {
    if (!(w >= 0.0)) fail("negative mixture weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) fail("intent mixture must sum to 1");
  if (!(c.drill_temperature >= 0.0)) fail("drill temperature must be non-negative");
  for (const auto& t : c.templates) {
    if (t.phases.empty()) fail("template '" + t.name + "' has no phases");
    if (t.min_length < 1 || t.max_length < t.min_length) fail("template '" + t.name + "' has a bad length range");
    for (std::size_t p = 0; p < t.phases.size(); ++p) {
      const auto& phase = t.phases[p];
      if (phase.empty()) fail("template '" + t.name + "' has an empty phase");
      bool has_drill = false;
      for (const auto& s : phase) {
        if (!(s.weight > 0.0)) fail("schema weights must be positive");
        has_drill = has_drill || s.result_conditioned();
        if (!table) continue;
        Query q;
        if (s.kind == SchemaKind::Filter) {
          q = Query::filter(s.attr, s.cmp, s.fraction ? "0" : s.term);
        } else if (s.kind == SchemaKind::Group) {
          q = Query::group(s.group_attr, s.agg, s.agg_attr);
        } else {
          continue;
        }
        try {
          validate_query(*table, q);
        } catch (const Error& e) {
          fail("template '" + t.name + "': " + e.what());
        }
      }
      if (!has_drill) continue;
      const bool after_group =
          p > 0 && std::all_of(t.phases[p - 1].begin(), t.phases[p - 1].end(),
                               [](const QuerySchema& s) { return s.kind == SchemaKind::Group; });
      if (!after_group) fail("template '" + t.name + "': drill in phase " + std::to_string(p) + " must follow a group phase");
    }
  }
}

nlohmann::json simulator_config_to_json(const SimulatorConfig& c) {
  nlohmann::json templates = nlohmann::json::array();
  for (const auto& t : c.templates) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& phase : t.phases) {
      nlohmann::json ps = nlohmann::json::array();
      for (const auto& s : phase) {
        nlohmann::json j{{"kind", kind_name(s.kind)}, {"weight", s.weight}};
        if (s.kind == SchemaKind::Filter) {
          j["attr"] = s.attr;
          j["cmp"] = to_string(s.cmp);
          if (s.fraction) j["fraction"] = *s.fraction;
          else j["term"] = s.term;
        } else if (s.kind == SchemaKind::Group) {
          j["group_attr"] = s.group_attr;
          j["agg"] = to_string(s.agg);
          if (!s.agg_attr.empty()) j["agg_attr"] = s.agg_attr;
        }
        ps.push_back(std::move(j));
      }
      phases.push_back(std::move(ps));
    }
    templates.push_back({{"name", t.name}, {"length", {t.min_length, t.max_length}}, {"phases", phases}});
  }
  return {{"templates", templates},
          {"intent_mixture", c.intent_mixture},
          {"drill_temperature", c.drill_temperature},
          {"seed", c.seed}};
}

SimulatorConfig simulator_config_from_json(const nlohmann::json& j) {
  try {
    SimulatorConfig c;
    for (const auto& tj : j.at("templates")) {
      IntentTemplate t;
      t.name = tj.value("name", "intent" + std::to_string(c.templates.size()));
      if (tj.contains("length")) {
        t.min_length = tj.at("length").at(0).get<int>();
        t.max_length = tj.at("length").at(1).get<int>();
      }
      for (const auto& pj : tj.at("phases")) {
        std::vector<QuerySchema> phase;
        for (const auto& sj : pj) {
          QuerySchema s;
          s.kind = parse_kind(sj.at("kind").get<std::string>());
          s.weight = sj.value("weight", 1.0);
          if (s.kind == SchemaKind::Filter) {
            s.attr = sj.at("attr").get<std::string>();
            const auto cmp = parse_cmp(sj.at("cmp").get<std::string>());
            if (!cmp) throw Error(ErrorCode::InvalidConfig, "unknown comparison in template");
            s.cmp = *cmp;
            if (sj.contains("fraction")) s.fraction = sj.at("fraction").get<double>();
            else if (sj.at("term").is_string()) s.term = sj.at("term").get<std::string>();
            else s.term = render_number(sj.at("term").get<double>(), ColumnType::Real);
          } else if (s.kind == SchemaKind::Group) {
            s.group_attr = sj.at("group_attr").get<std::string>();
            const auto agg = parse_agg(sj.value("agg", std::string("Count")));
            if (!agg) throw Error(ErrorCode::InvalidConfig, "unknown aggregate in template");
            s.agg = *agg;
            s.agg_attr = sj.value("agg_attr", std::string());
          }
          phase.push_back(std::move(s));
        }
        t.phases.push_back(std::move(phase));
      }
      c.templates.push_back(std::move(t));
    }
    if (j.contains("intent_mixture")) {
      c.intent_mixture = j.at("intent_mixture").get<std::vector<double>>();
    } else {
      c.intent_mixture.assign(c.templates.size(), c.templates.empty() ? 0.0 : 1.0 / static_cast<double>(c.templates.size()));
    }
    c.drill_temperature = j.value("drill_temperature", 0.05);
    c.seed = j.value("seed", std::uint64_t{0});
    validate_config(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("simulator config: ") + e.what());
  }
}

SimulatorConfig load_simulator_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  try {
    return simulator_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("simulator config: ") + e.what());
  }
}

std::size_t pick_bar(const DisplayResult& d, double temperature, Rng& rng) {
  if (d.groups.empty()) throw Error(ErrorCode::NoDisplay, "no bars to drill into");
  double max_abs = 0.0;
  for (const auto& b : d.groups) max_abs = std::max(max_abs, std::fabs(b.value));
  const double scale = max_abs > 0.0 ? max_abs : 1.0;
  std::size_t top = 0;
  for (std::size_t i = 1; i < d.groups.size(); ++i)
    if (d.groups[i].value > d.groups[top].value) top = i;
  if (temperature <= 0.0) {
    rng.next();  // keep the stream position independent of the temperature
    return top;
  }
  std::vector<double> w(d.groups.size());
  const double peak = d.groups[top].value / scale;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp((d.groups[i].value / scale - peak) / temperature);
  return rng.categorical(w);
}

SessionRun::SessionRun(const SimulatorConfig& config, const Table& table, std::uint64_t seed)
    : config_(&config), table_(&table), schema_rng_(derive_seed(seed, 1)), drill_rng_(derive_seed(seed, 2)) {
  Rng setup(derive_seed(seed, 0));
  template_id_ = static_cast<int>(setup.categorical(config.intent_mixture));
  const auto& t = config.templates.at(static_cast<std::size_t>(template_id_));
  length_ = static_cast<std::size_t>(t.min_length) +
            setup.below(static_cast<std::uint64_t>(t.max_length - t.min_length + 1));
}

const QuerySchema& SessionRun::draw(const std::vector<const QuerySchema*>& options) {
  std::vector<double> w;
  w.reserve(options.size());
  for (const auto* s : options) w.push_back(s->weight);
  return *options[schema_rng_.categorical(w)];
}

Query SessionRun::resolve(const QuerySchema& s) const {
  switch (s.kind) {
    case SchemaKind::Filter: {
      if (!s.fraction) return Query::filter(s.attr, s.cmp, s.term);
      const auto& st = table_->stats(s.attr);
      const double lo = st.min.value_or(0.0), hi = st.max.value_or(0.0);
      const double v = std::round((lo + *s.fraction * (hi - lo)) * 10.0) / 10.0;
      return Query::filter(s.attr, s.cmp, render_number(v, ColumnType::Real));
    }
    case SchemaKind::Group: return Query::group(s.group_attr, s.agg, s.agg == AggFunc::Count ? "" : s.agg_attr);
    default: return Query::back();
  }
}

Query SessionRun::next_query(const DisplayResult* last, std::size_t depth) {
  if (done()) throw Error(ErrorCode::InvalidArgument, "session already finished");
  const auto& t = config_->templates[static_cast<std::size_t>(template_id_)];
  const auto& phase = t.phases[std::min(step_, t.phases.size() - 1)];
  fallback_ = false;

  std::vector<const QuerySchema*> options;
  for (const auto& s : phase)
    if (s.kind != SchemaKind::Back || depth >= 2) options.push_back(&s);
  if (options.empty())
    for (const auto& s : t.phases.front())
      if (s.kind != SchemaKind::Back) options.push_back(&s);
  if (options.empty()) throw Error(ErrorCode::InvalidConfig, "template '" + t.name + "' offers no legal query");

  const QuerySchema* chosen = &draw(options);
  ++step_;
  if (!chosen->result_conditioned()) return resolve(*chosen);

  if (!last || last->kind != DisplayKind::GroupedBars)
    throw Error(ErrorCode::NoDisplay, "drill without a grouped display");
  if (last->empty() || last->groups.empty()) {
    // Nothing to drill into: fall back to an unconditioned schema of the phase.
    fallback_ = true;
    std::vector<const QuerySchema*> plain;
    for (const auto* s : options)
      if (!s->result_conditioned()) plain.push_back(s);
    if (plain.empty()) return depth >= 2 ? Query::back() : resolve(t.phases.front().front());
    return resolve(draw(plain));
  }
  const auto& bar = last->groups[pick_bar(*last, config_->drill_temperature, drill_rng_)];
  if (!bar.key.empty() && bar.key.front() == '[') {
    // Binned numeric key "[lo,hi)": drill to rows above the bin's lower edge.
    const auto comma = bar.key.find(',');
    return Query::filter(last->group_attr, CmpOp::Gt, bar.key.substr(1, comma - 1));
  }
  return Query::filter(last->group_attr, CmpOp::Eq, bar.key);
}

std::uint64_t session_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return derive_seed(seed, 0x5e55000000000000ULL + index);
}

Session run_session(const SimulatorConfig& config, const Table& table, std::uint64_t seed, std::uint64_t id,
                    const SourceChooser& chooser, const EngineOptions& engine) {
  SessionRun run(config, table, seed);
  SessionState state(table, engine);
  while (!run.done()) {
    const Query q = run.next_query(state.last_display(), state.depth());
    const SampleHandle* source = chooser ? chooser(state, q, run.step() - 1) : nullptr;
    state.execute(q, source);
    if (run.last_fallback()) state.mark_last_fallback();
  }
  return Session{id, run.template_id(), state.history()};
}

std::vector<Session> generate_sessions(const SimulatorConfig& config, const Table& table, std::size_t n,
                                       std::uint64_t seed, const SourceChooser& chooser,
                                       const EngineOptions& engine, std::uint64_t first_index) {
  validate_config(config, &table);
  std::vector<Session> out(n);
  parallel_for(n, [&](std::size_t i) {
    const std::uint64_t idx = first_index + i;
    out[i] = run_session(config, table, session_seed(seed, idx), idx, chooser, engine);
  });
  return out;
}

std::size_t unique_sessions(const std::vector<Session>& sessions) {
  std::set<std::string> seen;
  for (const auto& s : sessions) {
    std::string key;
    for (const auto& st : s.steps) key += query_to_json(st.query).dump() + "\n";
    seen.insert(std::move(key));
  }
  return seen.size();
}

SimulatorConfig flights_templates() {
  using A = AggFunc;
  SimulatorConfig c;
  c.templates = {
      {"delay-season",
       {{group("month", A::Avg, "dep_delay", 3), group("month", A::Count, "", 1)},
        {drill()},
        {group("carrier", A::Avg, "dep_delay", 2), group("day_of_week", A::Avg, "dep_delay", 1)},
        {drill()},
        {group("origin", A::Avg, "arr_delay", 2), group("origin", A::Count, "", 1)},
        {drill()},
        {back(2), filter_at("dep_delay", CmpOp::Gt, 0.05)},
        {group("day_of_week", A::Count), group("carrier", A::Count)},
        {drill()}},
       5,
       9},
      {"carrier-performance",
       {{filter_at("dep_delay", CmpOp::Gt, 0.05, 2), filter_at("arr_delay", CmpOp::Gt, 0.05, 1)},
        {group("carrier", A::Avg, "arr_delay", 2), group("carrier", A::Count, "", 1)},
        {drill()},
        {group("origin", A::Avg, "dep_delay"), group("month", A::Avg, "dep_delay")},
        {drill()},
        {back(), group("day_of_week", A::Avg, "dep_delay")},
        {group("month", A::Count), group("origin", A::Count)},
        {drill()},
        {back()}},
       5,
       9},
      {"cancellations",
       {{filter_eq("cancelled", "1")},
        {group("origin", A::Count, "", 2), group("month", A::Count, "", 1)},
        {drill()},
        {group("carrier", A::Count), group("month", A::Count)},
        {drill()},
        {back()},
        {group("day_of_week", A::Count)},
        {drill()},
        {back()}},
       5,
       9},
      {"long-haul",
       {{filter_at("distance", CmpOp::Gt, 0.35), filter_at("distance", CmpOp::Gt, 0.5)},
        {group("origin", A::Avg, "arr_delay"), group("carrier", A::Count)},
        {drill()},
        {group("month", A::Avg, "arr_delay"), group("day_of_week", A::Count)},
        {drill()},
        {back(), group("carrier", A::Sum, "distance")},
        {group("carrier", A::Avg, "dep_delay")},
        {drill()},
        {back()}},
       5,
       9},
  };
  c.intent_mixture = {0.35, 0.3, 0.2, 0.15};
  c.drill_temperature = 0.05;
  c.seed = 7;
  return c;
}

}  // namespace samplepilot
