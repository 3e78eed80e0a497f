#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "samplepilot/agent.hpp"
#include "samplepilot/eval.hpp"
#include "samplepilot/intent.hpp"
#include "samplepilot/sampling.hpp"
#include "samplepilot/simulator.hpp"
#include "samplepilot/table.hpp"

namespace samplepilot {

// Everything one pipeline run needs. Relative paths resolve against the
// directory of the config file they came from.
struct RunConfig {
  std::string dataset = "synthetic:50000";  // CSV path or synthetic:<rows>
  std::uint64_t dataset_seed = 7;           // synthetic data only
  std::string table_name = "flights";
  GridOptions grid;
  SamplingOptions sampling;
  std::string simulator;  // template JSON; empty means the built-in flights templates
  int k_min = 2;
  int k_max = 8;
  BtmParams btm;  // k is chosen by the UCI sweep
  Hyperparams hyperparams;
  std::string action_space = "all";
  std::vector<std::string> ablate_reward;
  std::size_t simulate_n = 1000;
  std::size_t eval_n = 1000;
  std::vector<std::string> methods{"agent", "blinkdb", "cigreedy", "Uni@10%", "Uni@1%"};
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";  // not part of the hash
};

nlohmann::json run_config_to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are an InvalidConfig error.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Hex FNV-1a of the serialized config without the output directory.
std::string config_hash(const RunConfig& c);

// Per-stage seeds, all derived from the master seed.
enum class Stage : std::uint64_t { Catalog = 1, Simulate = 2, Btm = 3, Episodes = 4, Nets = 5, Evaluate = 6 };
std::uint64_t stage_seed(const RunConfig& c, Stage stage) noexcept;

SimulatorConfig load_simulator(const RunConfig& c);

// Artifact locations inside the output directory.
struct ArtifactPaths {
  std::filesystem::path root;
  std::filesystem::path table_csv() const { return root / "table.csv"; }
  std::filesystem::path table_meta() const { return root / "table.json"; }
  std::filesystem::path samples() const { return root / "samples"; }
  std::filesystem::path sessions() const { return root / "sessions.ndjson"; }
  std::filesystem::path btm() const { return root / "btm.json"; }
  std::filesystem::path uci_scores() const { return root / "uci_scores.tsv"; }
  std::filesystem::path checkpoint() const { return root / "checkpoint.json"; }
  std::filesystem::path training_log() const { return root / "training_log.ndjson"; }
  std::filesystem::path eval_report() const { return root / "eval" / "report.json"; }
  std::filesystem::path report_dir() const { return root / "report"; }
  std::filesystem::path metadata() const { return root / "metadata.json"; }
};

void run_ingest(const RunConfig& c);
void run_build_samples(const RunConfig& c);
void run_simulate(const RunConfig& c);
void run_train_btm(const RunConfig& c);
void run_train_agent(const RunConfig& c);
void run_evaluate(const RunConfig& c);
void run_report(const RunConfig& c);
// All of the above in order.
void run_pipeline(const RunConfig& c);

// Loaders for artifacts written by earlier commands.
Table load_ingested_table(const std::filesystem::path& out);
std::vector<Session> load_sessions(const std::filesystem::path& path);

// Records wall-clock start and finish of a command in metadata.json, the
// only artifact allowed to differ between reruns.
void record_metadata(const std::filesystem::path& out, const std::string& command, const std::string& started,
                     const std::string& finished);
std::string utc_now();

}  // namespace samplepilot
