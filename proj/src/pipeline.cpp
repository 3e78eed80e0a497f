#include "samplepilot/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "samplepilot/error.hpp"
#include "samplepilot/rng.hpp"
#include "samplepilot/synthetic.hpp"

namespace samplepilot {

namespace {

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json btm_params_to_json(const BtmParams& p) {
  return {{"alpha", p.alpha}, {"beta", p.beta}, {"iterations", p.iterations}};
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || path.rfind("synthetic:", 0) == 0) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() || base.empty() ? path : (base / p).lexically_normal().string();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string() + " (run the earlier pipeline steps first)");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

template <typename Fn>
void timed(const RunConfig& c, const std::string& command, Fn&& fn) {
  const std::string started = utc_now();
  fn();
  record_metadata(c.out, command, started, utc_now());
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json sampling = {{"diversity_pool", c.sampling.diversity_pool},
                             {"kmeans_iterations", c.sampling.kmeans_iterations}};
  return {{"dataset", c.dataset},
          {"dataset_seed", c.dataset_seed},
          {"table_name", c.table_name},
          {"grid", grid_to_json(c.grid)},
          {"sampling", sampling},
          {"simulator", c.simulator},
          {"k_range", {c.k_min, c.k_max}},
          {"btm", btm_params_to_json(c.btm)},
          {"hyperparams", hyperparams_to_json(c.hyperparams)},
          {"action_space", c.action_space},
          {"ablate_reward", c.ablate_reward},
          {"simulate_n", c.simulate_n},
          {"eval_n", c.eval_n},
          {"methods", c.methods},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    check_keys(j,
               {"dataset", "dataset_seed", "table_name", "grid", "sampling", "simulator", "k_range", "btm",
                "hyperparams", "action_space", "ablate_reward", "simulate_n", "eval_n", "methods", "seed", "out"},
               "config");
    c.dataset = resolve(j.value("dataset", c.dataset), base_dir);
    c.dataset_seed = j.value("dataset_seed", c.dataset_seed);
    c.table_name = j.value("table_name", c.table_name);
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      check_keys(s, {"diversity_pool", "kmeans_iterations"}, "sampling");
      c.sampling.diversity_pool = s.value("diversity_pool", c.sampling.diversity_pool);
      c.sampling.kmeans_iterations = s.value("kmeans_iterations", c.sampling.kmeans_iterations);
    }
    c.simulator = resolve(j.value("simulator", c.simulator), base_dir);
    if (j.contains("k_range")) {
      const auto r = j.at("k_range").get<std::vector<int>>();
      if (r.size() != 2) throw Error(ErrorCode::InvalidConfig, "k_range needs two values");
      c.k_min = r[0];
      c.k_max = r[1];
    }
    if (j.contains("btm")) {
      const auto& b = j.at("btm");
      check_keys(b, {"alpha", "beta", "iterations"}, "btm");
      c.btm.alpha = b.value("alpha", c.btm.alpha);
      c.btm.beta = b.value("beta", c.btm.beta);
      c.btm.iterations = b.value("iterations", c.btm.iterations);
    }
    if (j.contains("hyperparams")) c.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    c.action_space = j.value("action_space", c.action_space);
    c.ablate_reward = j.value("ablate_reward", c.ablate_reward);
    c.simulate_n = j.value("simulate_n", c.simulate_n);
    c.eval_n = j.value("eval_n", c.eval_n);
    c.methods = j.value("methods", c.methods);
    c.seed = j.value("seed", c.seed);
    if (j.contains("out")) c.out = resolve(j.at("out").get<std::string>(), base_dir);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  if (c.k_min < 1 || c.k_max < c.k_min) throw Error(ErrorCode::InvalidConfig, "k_range must satisfy 1 <= min <= max");
  for (const auto& a : c.ablate_reward) ablate_reward(c.hyperparams.reward, a);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

std::string config_hash(const RunConfig& c) { return hex16(fnv1a(run_config_to_json(c).dump())); }

std::uint64_t stage_seed(const RunConfig& c, Stage stage) noexcept {
  return derive_seed(c.seed, static_cast<std::uint64_t>(stage));
}

SimulatorConfig load_simulator(const RunConfig& c) {
  if (c.simulator.empty()) return flights_templates();
  return load_simulator_config(c.simulator);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void record_metadata(const std::filesystem::path& out, const std::string& command, const std::string& started,
                     const std::string& finished) {
  const ArtifactPaths paths{out};
  nlohmann::json meta = nlohmann::json::object();
  if (std::filesystem::exists(paths.metadata())) {
    try {
      meta = read_json(paths.metadata());
    } catch (const Error&) {
      meta = nlohmann::json::object();
    }
  }
  meta[command] = {{"started", started}, {"finished", finished}};
  write_text(paths.metadata(), meta.dump(2) + "\n");
}

void run_ingest(const RunConfig& c) {
  timed(c, "ingest", [&] {
    Table table;
    const std::string prefix = "synthetic:";
    if (c.dataset.rfind(prefix, 0) == 0) {
      std::size_t rows = 0;
      try {
        rows = std::stoul(c.dataset.substr(prefix.size()));
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "bad synthetic dataset spec '" + c.dataset + "'");
      }
      table = make_flights_table(rows, c.dataset_seed);
    } else {
      CsvOptions opt;
      opt.name = c.table_name;
      table = load_csv(c.dataset, opt);
    }
    const ArtifactPaths paths{c.out};
    std::filesystem::create_directories(c.out);
    write_csv(table, paths.table_csv());
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& col : table.columns()) cols.push_back({{"name", col.name}, {"type", to_string(col.type)}});
    const nlohmann::json meta = {{"format", "table"},
                                 {"config_hash", config_hash(c)},
                                 {"name", table.name()},
                                 {"rows", table.row_count()},
                                 {"columns", cols},
                                 {"content_hash", table.content_hash()}};
    write_text(paths.table_meta(), meta.dump(2) + "\n");
  });
}

Table load_ingested_table(const std::filesystem::path& out) {
  const ArtifactPaths paths{out};
  const auto meta = read_json(paths.table_meta());
  CsvOptions opt;
  opt.name = meta.at("name").get<std::string>();
  for (const auto& col : meta.at("columns")) {
    const auto type = parse_column_type(col.at("type").get<std::string>());
    if (!type) throw Error(ErrorCode::Io, "table.json: unknown column type");
    opt.schema_hint[col.at("name").get<std::string>()] = *type;
  }
  Table t = load_csv(paths.table_csv(), opt);
  if (t.content_hash() != meta.at("content_hash").get<std::string>())
    throw Error(ErrorCode::Io, "table.csv does not match table.json (content hash differs)");
  return t;
}

void run_build_samples(const RunConfig& c) {
  timed(c, "build-samples", [&] {
    const Table table = load_ingested_table(c.out);
    const auto catalog =
        build_catalog(table, standard_grid(c.grid, table.row_count()), stage_seed(c, Stage::Catalog), c.sampling);
    save_catalog(catalog, ArtifactPaths{c.out}.samples(), config_hash(c));
  });
}

std::vector<Session> load_sessions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string() + " (run simulate first)");
  return read_session_log(in);
}

void run_simulate(const RunConfig& c) {
  timed(c, "simulate", [&] {
    const Table table = load_ingested_table(c.out);
    const auto sim = load_simulator(c);
    validate_config(sim, &table);
    const auto sessions = generate_sessions(sim, table, c.simulate_n, stage_seed(c, Stage::Simulate));
    std::ostringstream out;
    out << nlohmann::json{{"format", "sessions"}, {"config_hash", config_hash(c)}, {"count", sessions.size()}}.dump()
        << '\n';
    write_session_log(out, sessions);
    write_text(ArtifactPaths{c.out}.sessions(), out.str());
  });
}

void run_train_btm(const RunConfig& c) {
  timed(c, "train-btm", [&] {
    const Table table = load_ingested_table(c.out);
    const auto sessions = load_sessions(ArtifactPaths{c.out}.sessions());
    std::vector<TokenSeq> corpus;
    for (const auto& s : sessions) corpus.push_back(tokenize(table, s.steps));
    BtmParams p = c.btm;
    p.seed = stage_seed(c, Stage::Btm);
    const auto selection = uci_select_k(corpus, c.k_min, c.k_max, p);
    p.k = selection.best_k;
    const auto model = train_btm(corpus, p);
    const std::string hash = config_hash(c);

    std::ostringstream scores;
    scores << "# config " << hash << "\nk\tuci\n";
    for (const auto& [k, score] : selection.scores) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", score);
      scores << k << '\t' << buf << '\n';
    }
    write_text(ArtifactPaths{c.out}.uci_scores(), scores.str());
    auto j = btm_to_json(model);
    j["config_hash"] = hash;
    write_text(ArtifactPaths{c.out}.btm(), j.dump() + "\n");
  });
}

void run_train_agent(const RunConfig& c) {
  timed(c, "train-agent", [&] {
    const ArtifactPaths paths{c.out};
    const Table table = load_ingested_table(c.out);
    const auto catalog = load_catalog(paths.samples(), table);
    const auto model = load_btm(paths.btm());
    const auto sim = load_simulator(c);
    const GroundSet ground = make_ground_set(table, load_sessions(paths.sessions()), model);

    Hyperparams h = c.hyperparams;
    for (const auto& a : c.ablate_reward) h.reward = ablate_reward(h.reward, a);
    h.seed = stage_seed(c, Stage::Nets);
    const auto actions = action_space(catalog, c.action_space);
    const EdaEnvironment env(table, catalog, actions, sim, model, ground, h.reward);
    const auto result = a2c_train(env, h, stage_seed(c, Stage::Episodes));

    Checkpoint cp;
    cp.nets = result.nets;
    cp.hyperparams = h;
    for (auto i : actions) cp.action_ids.push_back(catalog.handles[i].sample_id);
    cp.k = model.k;
    cp.batches = result.batches;
    cp.config_hash = config_hash(c);
    save_checkpoint(cp, paths.checkpoint());

    std::ostringstream log;
    log << nlohmann::json{{"format", "training_log"}, {"config_hash", cp.config_hash}, {"checkpoint", cp.id()}}.dump()
        << '\n';
    write_training_log(log, result.log);
    write_text(paths.training_log(), log.str());
  });
}

void run_evaluate(const RunConfig& c) {
  timed(c, "evaluate", [&] {
    const ArtifactPaths paths{c.out};
    const Table table = load_ingested_table(c.out);
    const auto catalog = load_catalog(paths.samples(), table);
    const auto model = load_btm(paths.btm());
    const auto sim = load_simulator(c);

    std::vector<EvalMethod> methods;
    std::string checkpoint_id;
    for (const auto& m : c.methods) {
      if (m == "agent") {
        const auto cp = load_checkpoint(paths.checkpoint());
        checkpoint_id = cp.id();
        methods.push_back({"agent", agent_chooser(cp, catalog, model)});
      } else {
        const auto policy = parse_baseline(m);
        methods.push_back({baseline_name(policy), baseline_chooser(policy, catalog)});
      }
    }
    EvalOptions o;
    o.n = c.eval_n;
    o.seed = stage_seed(c, Stage::Evaluate);
    if (checkpoint_id.size()) o.normalize_to = "agent";
    auto j = eval_report_to_json(run_evaluation(methods, sim, table, model, o));
    j["config_hash"] = config_hash(c);
    j["checkpoint_id"] = checkpoint_id;
    write_text(paths.eval_report(), j.dump(2) + "\n");
  });
}

void run_report(const RunConfig& c) {
  timed(c, "report", [&] {
    const ArtifactPaths paths{c.out};
    const auto report = eval_report_from_json(read_json(paths.eval_report()));
    write_eval_report(report, paths.report_dir(), config_hash(c));
  });
}

void run_pipeline(const RunConfig& c) {
  run_ingest(c);
  run_build_samples(c);
  run_simulate(c);
  run_train_btm(c);
  run_train_agent(c);
  run_evaluate(c);
  run_report(c);
}

}  // namespace samplepilot
