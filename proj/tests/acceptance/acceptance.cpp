// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Optional arguments select checks by name.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "samplepilot/agent.hpp"
#include "samplepilot/error.hpp"
#include "samplepilot/eval.hpp"
#include "samplepilot/pipeline.hpp"
#include "samplepilot/synthetic.hpp"

using namespace samplepilot;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few failures of a check.
struct Checker {
  Outcome out;
  int failures = 0;
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    out.pass = false;
    if (++failures <= 3) out.detail += (out.detail.empty() ? "" : "; ") + what;
  }
  void note(const std::string& what) { out.detail += (out.detail.empty() ? "" : "; ") + what; }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

const Table& flights() {
  static const Table t = make_flights_table(50000, 7);
  return t;
}

GridOptions scaled_grid() {
  GridOptions g;
  g.strat_columns = {"month", "carrier", "origin", "day_of_week"};
  g.kstrat_columns = {"carrier", "origin"};
  g.kstrat_caps = {100, 500, 1000};
  return g;
}

Outcome sampling_contracts() {
  Checker c;
  const auto start = std::chrono::steady_clock::now();
  const Table& t = flights();
  const double n = static_cast<double>(t.row_count());

  for (double tau : {0.01, 0.05, 0.1}) {
    const double mean = n * tau, sd = std::sqrt(n * tau * (1 - tau));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto h = draw_sample(t, Uniform{tau}, seed);
      const double size = static_cast<double>(h.row_indices.size());
      c.expect(std::fabs(size - mean) <= 4 * sd, "uniform tau=" + fmt(tau) + " size " + fmt(size));
    }
  }

  for (std::uint64_t k : {7, 20, 100, 333}) {
    const auto h = draw_sample(t, Systematic{k}, 5);
    const auto& r = h.row_indices;
    const std::size_t lo = t.row_count() / k, hi = (t.row_count() + k - 1) / k;
    c.expect(r.size() == lo || r.size() == hi, "systematic k=" + std::to_string(k) + " size " + std::to_string(r.size()));
    for (std::size_t i = 1; i < r.size(); ++i)
      if (r[i] - r[i - 1] != k) {
        c.expect(false, "systematic k=" + std::to_string(k) + " stride broken at " + std::to_string(i));
        break;
      }
    c.expect(!r.empty() && r.front() < k, "systematic start outside [0, k)");
  }

  for (const std::string col : {"carrier", "origin", "month"}) {
    for (std::uint64_t cap : {5, 50, 400}) {
      const auto h = draw_sample(t, StratAtMostK{col, cap}, 9);
      const auto keys = stratum_keys(t.column(col), t.stats(col));
      std::map<std::int64_t, std::size_t> population, drawn;
      for (auto k : keys) ++population[k];
      for (RowId r : h.row_indices) ++drawn[keys[r]];
      for (const auto& [key, size] : population)
        c.expect(drawn[key] == std::min<std::size_t>(cap, size), "kstrat " + col + "@" + std::to_string(cap) +
                                                                     " stratum " + std::to_string(key) + " got " +
                                                                     std::to_string(drawn[key]));
    }
  }

  for (std::uint64_t size : {10, 250, 2500}) {
    for (const SamplingStrategy& s : {SamplingStrategy{MaxMinDiversity{size}}, SamplingStrategy{MaxSumDiversity{size}}}) {
      const auto h = draw_sample(t, s, 4);
      std::set<RowId> unique(h.row_indices.begin(), h.row_indices.end());
      c.expect(h.row_indices.size() == size && unique.size() == size,
               default_sample_id(s) + " returned " + std::to_string(h.row_indices.size()) + " rows");
    }
  }

  const double elapsed = seconds_since(start);
  c.expect(elapsed < 60.0, "took " + fmt(elapsed) + " s");
  return c.out;
}

Outcome effective_sr() {
  Checker c;
  const Table& t = flights();
  const auto cat = build_catalog(t, standard_grid(scaled_grid(), t.row_count()), 11);
  c.expect(cat.size() == 29, "grid has " + std::to_string(cat.size()) + " handles");
  const fs::path dir = fs::temp_directory_path() / "samplepilot_acceptance_catalog";
  save_catalog(cat, dir);
  const auto loaded = load_catalog(dir, t);
  for (const auto* catalog : {&cat, &loaded})
    for (const auto& h : catalog->handles) {
      const double expect = static_cast<double>(h.row_indices.size()) / static_cast<double>(t.row_count());
      c.expect(std::fabs(h.effective_sr - expect) <= 1e-12, h.sample_id + " sr " + fmt(h.effective_sr));
    }
  fs::remove_all(dir);
  return c.out;
}

// Sequences of 5..9 tokens drawn from one of four disjoint vocabularies.
Outcome btm_recovery() {
  Checker c;
  const auto start = std::chrono::steady_clock::now();
  std::vector<TokenSeq> corpus;
  std::vector<int> label;
  Rng rng(2024);
  for (int s = 0; s < 400; ++s) {
    const int g = s % 4;
    TokenSeq seq;
    for (std::uint64_t i = 0, len = 5 + rng.below(5); i < len; ++i)
      seq.push_back("q" + std::to_string(g) + "_" + std::to_string(rng.below(8)));
    corpus.push_back(std::move(seq));
    label.push_back(g);
  }
  BtmParams p;
  p.iterations = 300;
  p.seed = 5;
  const auto sel = uci_select_k(corpus, 2, 8, p);
  c.expect(sel.best_k == 4, "selected K=" + std::to_string(sel.best_k));
  p.k = sel.best_k;
  const auto model = train_btm(corpus, p);
  std::vector<int> got;
  for (const auto& s : corpus) got.push_back(infer(model, s).argmax_intent);
  std::vector<int> perm(static_cast<std::size_t>(std::max(model.k, 4)));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < label.size(); ++i) hit += perm[static_cast<std::size_t>(got[i])] == label[i];
    best = std::max(best, static_cast<double>(hit) / static_cast<double>(label.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  c.expect(best >= 0.9, "agreement " + fmt(best));
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 300.0, "took " + fmt(elapsed) + " s");
  c.note("K=" + std::to_string(sel.best_k) + " agreement " + fmt(best));
  return c.out;
}

Outcome reward_arithmetic() {
  Checker c;
  const Table& t = flights();
  const auto one_pct = draw_sample(t, Systematic{100}, 1);
  SessionState st(t);
  const auto& rec = st.execute(Query::group("month", AggFunc::Count), &one_pct);
  c.expect(rec.cost_ratio == 0.01, "cost ratio " + fmt(rec.cost_ratio));
  c.expect(latency_reward({rec.cost_ratio}) == 0.99, "latency reward " + fmt(latency_reward({rec.cost_ratio})));

  // Bounds over randomized sessions with random sources.
  const Table small = make_flights_table(5000, 3);
  const auto cat = build_catalog(small, standard_grid(scaled_grid(), small.row_count()), 2);
  const auto sim = flights_templates();
  const auto ground_sessions = generate_sessions(sim, small, 60, 8);
  std::vector<TokenSeq> corpus;
  for (const auto& s : ground_sessions) corpus.push_back(tokenize(small, s.steps));
  BtmParams p;
  p.k = 4;
  p.iterations = 50;
  const auto model = train_btm(corpus, p);
  const auto ground = make_ground_set(small, ground_sessions, model);
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    RewardWeights w;
    w.delta = rng.uniform() * 2;
    w.zeta = rng.uniform() * 2;
    w.beta = rng.uniform();
    w.gamma = rng.uniform();
    const std::uint64_t pick = rng.next();
    const auto chooser = [&](const SessionState&, const Query&, std::size_t step) -> const SampleHandle* {
      const auto a = derive_seed(pick, step) % (cat.size() + 1);
      return a == cat.size() ? nullptr : &cat.handles[a];
    };
    const auto s = run_session(sim, small, rng.next(), static_cast<std::uint64_t>(i), chooser);
    const auto r = session_reward(small, s.steps, model, ground, w);
    for (double v : {r.r_latency, r.r_dis, r.r_topic, r.r_intent, r.r_match, r.r_recall, r.r_term})
      c.expect(v >= -0.5 && v <= 0.5, "component " + fmt(v) + " out of range in session " + std::to_string(i));
    const double bound = 0.5 * (1 + w.beta + w.gamma);
    c.expect(std::fabs(r.r_total) <= bound + 1e-12, "r_total " + fmt(r.r_total));
  }

  // Recall against a brute-force set oracle.
  auto oracle = [](const std::vector<std::vector<std::string>>& gen, const std::vector<std::vector<std::string>>& orig) {
    std::vector<std::string> g, o;
    for (const auto& v : gen) g.insert(g.end(), v.begin(), v.end());
    for (const auto& v : orig) o.insert(o.end(), v.begin(), v.end());
    std::sort(o.begin(), o.end());
    o.erase(std::unique(o.begin(), o.end()), o.end());
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    std::size_t hit = 0;
    for (const auto& x : g) hit += std::binary_search(o.begin(), o.end(), x);
    return static_cast<double>(hit) / static_cast<double>(o.size());
  };
  int fixtures = 0;
  for (int f = 0; fixtures < 200; ++f) {
    auto make_set = [&](std::size_t sessions, std::vector<std::vector<std::string>>& shown) {
      SessionSet set;
      for (std::size_t i = 0; i < sessions; ++i) {
        Session s;
        for (int step = 0; step < 3; ++step) {
          StepRecord r;
          for (auto k = rng.below(6); k > 0; --k) r.display.top_rows.push_back("row" + std::to_string(rng.below(20)));
          if (step >= 1) shown.push_back(r.display.top_rows);
          s.steps.push_back(r);
        }
        set.sessions.push_back(s);
        set.intents.push_back({{1.0, 0.0}, 0});
      }
      return set;
    };
    std::vector<std::vector<std::string>> gen_rows, orig_rows;
    const auto gen = make_set(1 + rng.below(4), gen_rows);
    const auto orig = make_set(1 + rng.below(4), orig_rows);
    std::size_t orig_count = 0;
    for (const auto& v : orig_rows) orig_count += v.size();
    if (orig_count == 0) continue;
    ++fixtures;
    const double got = insight_recall(gen, orig, 0, 2);
    const double want = oracle(gen_rows, orig_rows);
    c.expect(got == want, "fixture " + std::to_string(f) + ": " + fmt(got) + " vs oracle " + fmt(want));
  }
  return c.out;
}

Outcome gradient_check() {
  Checker c;
  for (std::uint64_t seed : {1, 2, 3}) {
    Hyperparams h;
    h.hidden = 24;
    h.seed = seed;
    h.ent_coef = 0.03;
    PolicyValueNets nets(7, 5, h);
    Rng rng(seed + 40);
    std::vector<Transition> batch;
    for (int i = 0; i < 16; ++i) {
      Transition t;
      for (int j = 0; j < 7; ++j) t.state.push_back(rng.normal());
      t.action = rng.below(5);
      t.ret = rng.uniform() - 0.5;
      batch.push_back(t);
    }
    std::vector<double> pg, vg;
    a2c_loss(nets, batch, h, &pg, &vg);
    auto policy_part = [&] {
      const auto l = a2c_loss(nets, batch, h);
      return l.policy - h.ent_coef * l.entropy;
    };
    auto value_part = [&] { return h.vf_coef * a2c_loss(nets, batch, h).value; };
    auto check = [&](std::vector<double>& params, const std::vector<double>& grad, const std::function<double()>& f,
                     const std::string& which) {
      const std::size_t stride = params.size() / 10;
      for (std::size_t k = 0; k < 10; ++k) {
        const std::size_t i = k * stride + seed;
        const double keep = params[i], eps = 1e-6;
        params[i] = keep + eps;
        const double up = f();
        params[i] = keep - eps;
        const double down = f();
        params[i] = keep;
        const double numeric = (up - down) / (2 * eps);
        const double rel = std::fabs(numeric - grad[i]) / std::max(1e-8, std::fabs(numeric) + std::fabs(grad[i]));
        c.expect(rel < 1e-4, which + " param " + std::to_string(i) + " relative error " + fmt(rel));
      }
    };
    check(nets.policy.params(), pg, policy_part, "policy");
    check(nets.value.params(), vg, value_part, "value");
  }
  return c.out;
}

class Bandit : public Environment {
 public:
  std::size_t state_width() const override { return 4; }
  std::size_t action_count() const override { return 3; }
  Episode run_episode(const ActionChooser& choose, std::uint64_t seed) const override {
    Rng rng(seed);
    std::vector<double> s(4);
    for (auto& x : s) x = rng.normal();
    Episode e;
    e.actions.push_back(choose(s));
    e.states.push_back(std::move(s));
    e.reward.r_total = std::vector<double>{0.1, 0.9, 0.2}[e.actions.back()];
    return e;
  }
};

Outcome rl_sanity() {
  Checker c;
  const auto start = std::chrono::steady_clock::now();
  Hyperparams h;
  h.episodes = 2000;
  const auto res = a2c_train(Bandit{}, h, 17);
  Rng rng(8);
  int best = 0;
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> s(4);
    for (auto& x : s) x = rng.normal();
    best += select_action(res.nets, s, ActionMode::Greedy, nullptr) == 1;
  }
  c.expect(best >= 1900, "best action on " + fmt(best / 20.0) + "% of states");
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 120.0, "took " + fmt(elapsed) + " s");
  return c.out;
}

Outcome baseline_determinism() {
  Checker c;
  const Table& t = flights();
  const auto cat = build_catalog(t, standard_grid(scaled_grid(), t.row_count()), 11);
  std::set<std::string> strat_cols;
  for (const auto& h : cat.handles) strat_cols.insert(h.strat_columns_used.begin(), h.strat_columns_used.end());

  const std::vector<std::string> columns{"month", "carrier", "origin", "day_of_week", "distance", "cancelled"};
  const std::vector<std::string> terms{"JUN", "AA", "ORD", "MON", "1000", "1"};
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    SessionState st(t);
    for (auto depth = rng.below(3); depth > 0; --depth) {
      const auto col = rng.below(4);
      st.execute(Query::filter(columns[col], CmpOp::Eq, terms[col]), nullptr);
    }
    const auto g = columns[rng.below(columns.size())];
    const Query q = rng.bernoulli(0.5) ? Query::group(g, AggFunc::Count) : Query::group(g, AggFunc::Avg, "dep_delay");
    std::set<std::string> qcs{g};
    for (const auto& f : st.top().filters) qcs.insert(f.attr);
    bool overlap = false;
    for (const auto& col : qcs) overlap = overlap || strat_cols.count(col);
    const auto* a = baseline_select(BlinkDb{}, q, st, cat);
    const auto* b = baseline_select(BlinkDb{}, q, st, cat);
    c.expect(a == b, "BlinkDB not deterministic");
    if (overlap)
      c.expect(a && !a->strat_columns_used.empty(), "no stratified pick for " + describe(q));
    else
      c.expect(a && a->sample_id == "Uni@1%", "expected Uni@1% for " + describe(q));
    c.expect(baseline_select(CiGreedy{}, q, st, cat) == baseline_select(CiGreedy{}, q, st, cat),
             "CiGreedy not deterministic");
  }

  const double ratio = ci_half_width(12.0, 100, 1'000'000'000, 0.95) / ci_half_width(12.0, 400, 1'000'000'000, 0.95);
  c.expect(std::fabs(ratio - 2.0) < 1e-6, "half-width ratio " + fmt(ratio));
  SampleCatalog two;
  for (std::size_t n : {100, 400}) {
    SampleHandle h;
    h.sample_id = "n" + std::to_string(n);
    for (std::size_t i = 0; i < n; ++i) h.row_indices.push_back(static_cast<RowId>(i * 97));
    h.effective_sr = static_cast<double>(n) / static_cast<double>(t.row_count());
    h.strategy = Uniform{h.effective_sr};
    two.handles.push_back(h);
  }
  SessionState root(t);
  const auto* pick = baseline_select(CiGreedy{}, Query::group("carrier", AggFunc::Avg, "dep_delay"), root, two);
  c.expect(pick && pick->sample_id == "n400", "CiGreedy picked " + (pick ? pick->sample_id : "FULL"));
  return c.out;
}

// Full pipeline on the bundled config; shared by the ordering and determinism checks.
struct PipelineRuns {
  RunConfig config;
  fs::path first, second;
  double first_seconds = 0.0;
  std::string error;
};

PipelineRuns& pipeline_runs(bool need_second) {
  static PipelineRuns runs;
  static bool first_done = false, second_done = false;
  if (!first_done) {
    first_done = true;
    try {
      runs.config = load_run_config(SAMPLEPILOT_CONFIG);
      runs.first = fs::temp_directory_path() / "samplepilot_acceptance_run1";
      fs::remove_all(runs.first);
      runs.config.out = runs.first;
      const auto start = std::chrono::steady_clock::now();
      run_pipeline(runs.config);
      runs.first_seconds = seconds_since(start);
    } catch (const std::exception& e) {
      runs.error = e.what();
    }
  }
  if (need_second && !second_done && runs.error.empty()) {
    second_done = true;
    try {
      runs.second = fs::temp_directory_path() / "samplepilot_acceptance_run2";
      fs::remove_all(runs.second);
      RunConfig again = runs.config;
      again.out = runs.second;
      run_pipeline(again);
    } catch (const std::exception& e) {
      runs.error = e.what();
    }
  }
  return runs;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome end_to_end_ordering() {
  Checker c;
  const auto& runs = pipeline_runs(false);
  if (!runs.error.empty()) return {false, "pipeline failed: " + runs.error};
  const auto report = eval_report_from_json(nlohmann::json::parse(slurp(ArtifactPaths{runs.first}.eval_report())));
  std::map<std::string, const MethodMetrics*> by;
  for (const auto& m : report.methods) by[m.method] = &m;
  if (!by.count("agent") || !by.count("Uni@1%")) return {false, "report lacks agent or Uni@1%"};
  const auto& agent = *by["agent"];
  const auto& uni = *by["Uni@1%"];
  c.expect(agent.latency.median >= 0.70, "agent median latency reduction " + fmt(agent.latency.median));
  c.expect(agent.divergence <= uni.divergence,
           "agent divergence " + fmt(agent.divergence) + " > Uni@1% " + fmt(uni.divergence));
  c.expect(agent.mean_recall >= uni.mean_recall,
           "agent recall " + fmt(agent.mean_recall) + " < Uni@1% " + fmt(uni.mean_recall));
  for (const auto& m : report.methods)
    if (m.method != "Uni@1%")
      c.expect(uni.latency.median > m.latency.median,
               m.method + " latency " + fmt(m.latency.median) + " >= Uni@1% " + fmt(uni.latency.median));
  c.expect(runs.first_seconds < 45 * 60, "pipeline took " + fmt(runs.first_seconds) + " s");
  c.note("agent: reduction " + fmt(agent.latency.median) + ", ED " + fmt(agent.divergence) + ", recall " +
         fmt(agent.mean_recall) + "; Uni@1%: reduction " + fmt(uni.latency.median) + ", ED " + fmt(uni.divergence) +
         ", recall " + fmt(uni.mean_recall) + "; " + fmt(runs.first_seconds) + " s");
  return c.out;
}

Outcome pipeline_determinism() {
  Checker c;
  const auto& runs = pipeline_runs(true);
  if (!runs.error.empty()) return {false, "pipeline failed: " + runs.error};
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(runs.first)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), runs.first);
    if (rel == "metadata.json") continue;
    c.expect(fs::exists(runs.second / rel) && slurp(entry.path()) == slurp(runs.second / rel),
             rel.string() + " differs");
    ++files;
  }
  for (const char* key : {"samples/manifest.json", "checkpoint.json", "eval/report.json", "report/summary.tsv"})
    c.expect(fs::exists(runs.first / key), std::string(key) + " missing");
  c.note(std::to_string(files) + " artifacts compared");
  return c.out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"sampling_contracts", sampling_contracts},
      {"effective_sr", effective_sr},
      {"btm_recovery", btm_recovery},
      {"reward_arithmetic", reward_arithmetic},
      {"gradient_check", gradient_check},
      {"rl_sanity", rl_sanity},
      {"end_to_end_ordering", end_to_end_ordering},
      {"baseline_determinism", baseline_determinism},
      {"pipeline_determinism", pipeline_determinism},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    if (!only.empty() && !only.count(name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt(seconds_since(start)) << " s)"
              << (o.detail.empty() ? "" : ": " + o.detail) << std::endl;
  }
  for (const char* dir : {"samplepilot_acceptance_run1", "samplepilot_acceptance_run2"})
    fs::remove_all(fs::temp_directory_path() / dir);
  return failed == 0 ? 0 : 1;
}
