#include "samplepilot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "samplepilot/error.hpp"
#include "samplepilot/parallel.hpp"

namespace samplepilot {

SessionSet make_session_set(std::string name, const Table& table, std::vector<Session> sessions,
                            const BtmModel& model) {
  SessionSet set{std::move(name), std::move(sessions), {}};
  set.intents.resize(set.sessions.size());
  parallel_for(set.sessions.size(),
               [&](std::size_t i) { set.intents[i] = infer(model, tokenize(table, set.sessions[i].steps)); });
  return set;
}

std::vector<double> mean_intent(const SessionSet& set) {
  if (set.intents.empty()) throw Error(ErrorCode::EmptySet, "session set '" + set.name + "' is empty");
  std::vector<double> mean(set.intents.front().probs.size(), 0.0);
  for (const auto& d : set.intents)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += d.probs.at(k);
  for (double& v : mean) v /= static_cast<double>(set.intents.size());
  return mean;
}

double intent_divergence(const SessionSet& a, const SessionSet& b) {
  return euclidean(mean_intent(a), mean_intent(b));
}

namespace {

std::set<std::string> slice_rows(const SessionSet& set, int intent, std::size_t last, std::size_t& count) {
  std::set<std::string> rows;
  count = 0;
  for (std::size_t i = 0; i < set.sessions.size(); ++i) {
    if (set.intents[i].argmax_intent != intent) continue;
    ++count;
    const auto r = final_rows(set.sessions[i].steps, last);
    rows.insert(r.begin(), r.end());
  }
  return rows;
}

bool final_rows_empty(const SessionSet& set, std::size_t last) {
  for (const auto& s : set.sessions)
    if (!final_rows(s.steps, last).empty()) return false;
  return true;
}

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double insight_recall(const SessionSet& gen, const SessionSet& orig, int intent, std::size_t last) {
  std::size_t n_gen = 0, n_orig = 0;
  const auto g = slice_rows(gen, intent, last, n_gen);
  const auto o = slice_rows(orig, intent, last, n_orig);
  const std::string which = "intent " + std::to_string(intent);
  if (n_gen == 0) throw Error(ErrorCode::EmptyIntentSlice, which + " has no sessions in '" + gen.name + "'");
  if (n_orig == 0) throw Error(ErrorCode::EmptyIntentSlice, which + " has no sessions in '" + orig.name + "'");
  if (o.empty()) throw Error(ErrorCode::EmptyIntentSlice, which + " shows no rows in '" + orig.name + "'");
  std::size_t hit = 0;
  for (const auto& r : g) hit += o.count(r);
  return static_cast<double>(hit) / static_cast<double>(o.size());
}

double session_latency_reduction(const Session& session) {
  if (session.steps.empty()) return 0.0;
  double source = 0.0, full = 0.0;
  for (const auto& s : session.steps) {
    source += static_cast<double>(s.display.rows_scanned);
    full += static_cast<double>(s.full_rows_scanned);
  }
  if (full > 0.0) return 1.0 - source / full;
  double sum = 0.0;
  for (const auto& s : session.steps) sum += s.cost_ratio;
  return 1.0 - sum / static_cast<double>(session.steps.size());
}

LatencyStats latency_stats(std::vector<double> values) {
  LatencyStats st;
  st.per_session = values;
  if (values.empty()) return st;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / static_cast<double>(values.size());
  st.median = quantile(values, 0.5);
  st.q1 = quantile(values, 0.25);
  st.q3 = quantile(values, 0.75);
  st.min = values.front();
  st.max = values.back();
  return st;
}

LatencyStats latency_reduction(const SessionSet& set) {
  std::vector<double> v;
  v.reserve(set.sessions.size());
  for (const auto& s : set.sessions) v.push_back(session_latency_reduction(s));
  return latency_stats(std::move(v));
}

std::string baseline_name(const BaselinePolicy& policy) {
  if (std::holds_alternative<BlinkDb>(policy)) return "BlinkDB";
  if (std::holds_alternative<CiGreedy>(policy)) return "CiGreedy";
  return std::get<Fixed>(policy).sample_id;
}

BaselinePolicy parse_baseline(const std::string& text) {
  if (text == "blinkdb" || text == "BlinkDB") return BlinkDb{};
  if (text == "cigreedy" || text == "CiGreedy") return CiGreedy{};
  const std::string prefix = "fixed:";
  if (text.rfind(prefix, 0) == 0) return Fixed{text.substr(prefix.size())};
  if (text.empty()) throw Error(ErrorCode::InvalidConfig, "empty baseline name");
  return Fixed{text};
}

double ci_half_width(double stddev, std::size_t n, std::size_t population, double confidence) {
  if (n == 0) return std::numeric_limits<double>::infinity();
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::InvalidArgument, "confidence must be in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
  const double fpc = population > 0 ? std::max(0.0, 1.0 - static_cast<double>(n) / static_cast<double>(population)) : 1.0;
  return z * stddev / std::sqrt(static_cast<double>(n)) * std::sqrt(fpc);
}

namespace {

const SampleHandle* require(const SampleCatalog& catalog, const std::string& id) {
  if (id == kFullSampleId) return nullptr;
  const auto* h = catalog.find(id);
  if (!h) throw Error(ErrorCode::MissingSample, "sample '" + id + "' not in catalog");
  return h;
}

// Columns a query touches once it runs in its frame: the frame's filter
// columns plus its own filter or grouping column.
std::set<std::string> query_column_set(const Query& q, const SessionState& state) {
  const auto& stack = state.stack();
  const Frame& frame = q.op == OpType::Back && stack.size() >= 2 ? stack[stack.size() - 2] : stack.back();
  std::set<std::string> qcs;
  for (const auto& f : frame.filters) qcs.insert(f.attr);
  if (q.op == OpType::Filter) qcs.insert(q.attr);
  if (q.op == OpType::Group) qcs.insert(q.group_attr);
  return qcs;
}

const SampleHandle* largest(const SampleCatalog& catalog) {
  const SampleHandle* best = nullptr;
  for (const auto& h : catalog.handles)
    if (!best || h.effective_sr > best->effective_sr) best = &h;
  return best;
}

const SampleHandle* select_blinkdb(const Query& q, const SessionState& state, const SampleCatalog& catalog) {
  const auto qcs = query_column_set(q, state);
  const SampleHandle* best = nullptr;
  double best_j = 0.0;
  for (const auto& h : catalog.handles) {
    if (h.strat_columns_used.empty()) continue;
    std::size_t inter = 0;
    for (const auto& c : h.strat_columns_used) inter += qcs.count(c);
    if (inter == 0) continue;
    const double j = static_cast<double>(inter) / static_cast<double>(qcs.size() + h.strat_columns_used.size() - inter);
    if (!best || j > best_j || (j == best_j && h.effective_sr > best->effective_sr)) {
      best = &h;
      best_j = j;
    }
  }
  return best ? best : require(catalog, "Uni@1%");
}

const SampleHandle* select_ci(const CiGreedy& p, const Query& q, const SessionState& state,
                              const SampleCatalog& catalog) {
  if (q.op != OpType::Group || q.agg == AggFunc::Count) return largest(catalog);
  const Table& table = state.table();
  const double s = table.stats(q.agg_attr).stddev.value_or(0.0);
  const auto& frame_rows = *state.top().full_rows;
  std::vector<char> in_frame(table.row_count(), 0);
  for (RowId r : frame_rows) in_frame[r] = 1;
  const SampleHandle* best = nullptr;
  double best_w = 0.0;
  for (const auto& h : catalog.handles) {
    std::size_t n = 0;
    for (RowId r : h.row_indices) n += in_frame[r];
    const double w = ci_half_width(s, n, frame_rows.size(), p.confidence);
    if (!best || w < best_w) {
      best = &h;
      best_w = w;
    }
  }
  return best;
}

}  // namespace

const SampleHandle* baseline_select(const BaselinePolicy& policy, const Query& query, const SessionState& state,
                                    const SampleCatalog& catalog) {
  if (std::holds_alternative<BlinkDb>(policy)) return select_blinkdb(query, state, catalog);
  if (const auto* ci = std::get_if<CiGreedy>(&policy)) return select_ci(*ci, query, state, catalog);
  return require(catalog, std::get<Fixed>(policy).sample_id);
}

SourceChooser baseline_chooser(const BaselinePolicy& policy, const SampleCatalog& catalog) {
  if (const auto* f = std::get_if<Fixed>(&policy)) {
    const SampleHandle* h = require(catalog, f->sample_id);
    return [h](const SessionState&, const Query&, std::size_t) { return h; };
  }
  if (std::holds_alternative<BlinkDb>(policy)) require(catalog, "Uni@1%");
  if (catalog.handles.empty()) throw Error(ErrorCode::MissingSample, "catalog is empty");
  const SampleCatalog* cat = &catalog;
  return [policy, cat](const SessionState& state, const Query& q, std::size_t) {
    return baseline_select(policy, q, state, *cat);
  };
}

std::vector<std::size_t> action_space(const SampleCatalog& catalog, const std::string& name) {
  std::set<std::string> families;
  if (name == "uniform") families = {"uniform"};
  else if (name == "uniform+strat") families = {"uniform", "strat", "kstrat"};
  else if (name == "uniform+strat+cluster") families = {"uniform", "strat", "kstrat", "cluster"};
  else if (name != "all") throw Error(ErrorCode::InvalidConfig, "unknown action space '" + name + "'");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < catalog.handles.size(); ++i)
    if (name == "all" || families.count(strategy_family(catalog.handles[i].strategy))) out.push_back(i);
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "action space '" + name + "' selects no samples");
  return out;
}

RewardWeights ablate_reward(RewardWeights w, const std::string& component) {
  if (component == "term") w.gamma = 0.0;
  else if (component == "intent") w.beta = 0.0;
  else if (component == "latency") w.latency = 0.0;
  else throw Error(ErrorCode::InvalidConfig, "unknown reward component '" + component + "'");
  return w;
}

EvalReport run_evaluation(const std::vector<EvalMethod>& methods, const SimulatorConfig& simulator,
                          const Table& table, const BtmModel& model, const EvalOptions& options) {
  if (options.n == 0) throw Error(ErrorCode::EmptySet, "evaluation needs at least one session");
  EvalReport report{options.n, options.seed, model.k, {}};
  const SessionSet ref = make_session_set(
      "reference", table, generate_sessions(simulator, table, options.n, options.seed, {}, options.engine), model);

  for (const auto& m : methods) {
    const SessionSet gen = make_session_set(
        m.name, table, generate_sessions(simulator, table, options.n, options.seed, m.chooser, options.engine),
        model);
    MethodMetrics mm;
    mm.method = m.name;
    mm.divergence = intent_divergence(gen, ref);
    mm.latency = latency_reduction(gen);

    double recall_sum = 0.0;
    std::size_t recall_n = 0;
    for (int k = 0; k < model.k; ++k) {
      IntentMetrics im;
      im.intent = k;
      SessionSet g{gen.name, {}, {}}, r{ref.name, {}, {}};
      std::vector<double> lat;
      for (std::size_t i = 0; i < gen.sessions.size(); ++i)
        if (gen.intents[i].argmax_intent == k) {
          g.sessions.push_back(gen.sessions[i]);
          g.intents.push_back(gen.intents[i]);
          lat.push_back(mm.latency.per_session[i]);
          for (const auto& st : gen.sessions[i].steps) ++mm.action_usage[k][st.sample_id];
        }
      for (std::size_t i = 0; i < ref.sessions.size(); ++i)
        if (ref.intents[i].argmax_intent == k) {
          r.sessions.push_back(ref.sessions[i]);
          r.intents.push_back(ref.intents[i]);
        }
      im.sessions = g.sessions.size();
      im.reference_sessions = r.sessions.size();
      if (!lat.empty()) im.latency_median = latency_stats(lat).median;
      if (!g.sessions.empty() && !r.sessions.empty()) im.divergence = intent_divergence(g, r);
      if (!r.sessions.empty() && !final_rows_empty(r, options.last)) {
        // A method that never reaches an intent the reference reaches recalls nothing of it.
        im.recall = g.sessions.empty() ? 0.0 : insight_recall(g, r, k, options.last);
        recall_sum += *im.recall;
        ++recall_n;
      }
      mm.per_intent.push_back(im);
    }
    mm.mean_recall = recall_n ? recall_sum / static_cast<double>(recall_n) : 1.0;
    report.methods.push_back(std::move(mm));
  }

  if (!options.normalize_to.empty()) {
    const auto it = std::find_if(report.methods.begin(), report.methods.end(),
                                 [&](const MethodMetrics& m) { return m.method == options.normalize_to; });
    if (it != report.methods.end() && it->divergence > 0.0) {
      const double base = it->divergence;
      for (auto& m : report.methods) m.relative_divergence = m.divergence / base;
    }
  }
  return report;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  return out;
}

}  // namespace

nlohmann::json eval_report_to_json(const EvalReport& report) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : report.methods) {
    nlohmann::json intents = nlohmann::json::array();
    for (const auto& im : m.per_intent)
      intents.push_back({{"intent", im.intent},
                         {"sessions", im.sessions},
                         {"reference_sessions", im.reference_sessions},
                         {"divergence", opt(im.divergence)},
                         {"recall", opt(im.recall)},
                         {"latency_median", opt(im.latency_median)}});
    nlohmann::json usage = nlohmann::json::object();
    for (const auto& [k, counts] : m.action_usage) usage[std::to_string(k)] = counts;
    methods.push_back({{"method", m.method},
                       {"divergence", m.divergence},
                       {"relative_divergence", opt(m.relative_divergence)},
                       {"mean_recall", m.mean_recall},
                       {"latency",
                        {{"per_session", m.latency.per_session},
                         {"mean", m.latency.mean},
                         {"median", m.latency.median},
                         {"q1", m.latency.q1},
                         {"q3", m.latency.q3},
                         {"min", m.latency.min},
                         {"max", m.latency.max}}},
                       {"intents", std::move(intents)},
                       {"action_usage", std::move(usage)}});
  }
  return {{"n", report.n}, {"seed", report.seed}, {"k", report.k}, {"methods", std::move(methods)}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  auto optional_of = [](const nlohmann::json& v) {
    return v.is_null() ? std::optional<double>() : std::optional<double>(v.get<double>());
  };
  try {
    EvalReport r;
    r.n = j.at("n").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k = j.at("k").get<int>();
    for (const auto& jm : j.at("methods")) {
      MethodMetrics m;
      m.method = jm.at("method").get<std::string>();
      m.divergence = jm.at("divergence").get<double>();
      m.relative_divergence = optional_of(jm.at("relative_divergence"));
      m.mean_recall = jm.at("mean_recall").get<double>();
      m.latency = latency_stats(jm.at("latency").at("per_session").get<std::vector<double>>());
      for (const auto& ji : jm.at("intents")) {
        IntentMetrics im;
        im.intent = ji.at("intent").get<int>();
        im.sessions = ji.at("sessions").get<std::size_t>();
        im.reference_sessions = ji.at("reference_sessions").get<std::size_t>();
        im.divergence = optional_of(ji.at("divergence"));
        im.recall = optional_of(ji.at("recall"));
        im.latency_median = optional_of(ji.at("latency_median"));
        m.per_intent.push_back(im);
      }
      for (const auto& [k, counts] : jm.at("action_usage").items())
        m.action_usage[std::stoi(k)] = counts.get<std::map<std::string, std::size_t>>();
      r.methods.push_back(std::move(m));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("evaluation report: ") + e.what());
  }
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  const std::string stamp = "# config " + config_hash + "\n";
  {
    auto out = open_out(dir / "summary.tsv");
    out << stamp << "method\tdivergence\trelative_divergence\tmean_recall\tlatency_median\tlatency_q1\tlatency_q3"
                    "\tlatency_mean\n";
    for (const auto& m : report.methods)
      out << m.method << '\t' << num(m.divergence) << '\t' << num(m.relative_divergence) << '\t'
          << num(m.mean_recall) << '\t' << num(m.latency.median) << '\t' << num(m.latency.q1) << '\t'
          << num(m.latency.q3) << '\t' << num(m.latency.mean) << '\n';
  }
  {
    auto out = open_out(dir / "intents.tsv");
    out << stamp << "method\tintent\tsessions\treference_sessions\tdivergence\trecall\tlatency_median\n";
    for (const auto& m : report.methods)
      for (const auto& im : m.per_intent)
        out << m.method << '\t' << im.intent << '\t' << im.sessions << '\t' << im.reference_sessions << '\t'
            << num(im.divergence) << '\t' << num(im.recall) << '\t' << num(im.latency_median) << '\n';
  }
  {
    auto out = open_out(dir / "latency_box.tsv");
    out << stamp << "method\tsession\tlatency_reduction\n";
    for (const auto& m : report.methods)
      for (std::size_t i = 0; i < m.latency.per_session.size(); ++i)
        out << m.method << '\t' << i << '\t' << num(m.latency.per_session[i]) << '\n';
  }
  {
    auto out = open_out(dir / "action_usage.tsv");
    out << stamp << "method\tintent\tsample_id\tsteps\tfraction\n";
    for (const auto& m : report.methods)
      for (const auto& [k, counts] : m.action_usage) {
        std::size_t total = 0;
        for (const auto& [id, c] : counts) total += c;
        for (const auto& [id, c] : counts)
          out << m.method << '\t' << k << '\t' << id << '\t' << c << '\t'
              << num(static_cast<double>(c) / static_cast<double>(total)) << '\n';
      }
  }
  auto j = eval_report_to_json(report);
  j["config_hash"] = config_hash;
  auto out = open_out(dir / "report.json");
  out << j.dump(2) << '\n';
}

}  // namespace samplepilot
