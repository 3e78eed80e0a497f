#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "samplepilot/intent.hpp"
#include "samplepilot/query.hpp"
#include "samplepilot/rewards.hpp"
#include "samplepilot/sampling.hpp"
#include "samplepilot/simulator.hpp"

namespace samplepilot {

// Sessions with their intent distributions under a shared topic model.
struct SessionSet {
  std::string name;
  std::vector<Session> sessions;
  std::vector<IntentDistribution> intents;
};

SessionSet make_session_set(std::string name, const Table& table, std::vector<Session> sessions,
                            const BtmModel& model);

std::vector<double> mean_intent(const SessionSet& set);

// Euclidean distance between the sets' mean intent vectors. Throws EmptySet.
double intent_divergence(const SessionSet& a, const SessionSet& b);

// |U M(gen) ∩ U M(orig)| / |U M(orig)| over sessions whose argmax intent is
// `intent`, where M is the union of top rows of the last `last` steps.
// Throws EmptyIntentSlice when either slice is empty or the reference rows are.
double insight_recall(const SessionSet& gen, const SessionSet& orig, int intent, std::size_t last = 2);

// 1 - (rows scanned on the chosen sources) / (rows the full table would scan).
double session_latency_reduction(const Session& session);

struct LatencyStats {
  std::vector<double> per_session;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

LatencyStats latency_reduction(const SessionSet& set);
LatencyStats latency_stats(std::vector<double> values);

struct BlinkDb {};
struct CiGreedy {
  double confidence = 0.95;
};
struct Fixed {
  std::string sample_id;  // "FULL" runs on the full table
};
using BaselinePolicy = std::variant<BlinkDb, CiGreedy, Fixed>;

std::string baseline_name(const BaselinePolicy& policy);
// "blinkdb", "cigreedy", "fixed:<id>" (or a bare sample id).
BaselinePolicy parse_baseline(const std::string& text);

// z * s / sqrt(n) * sqrt(1 - n / N) with z the two-sided normal quantile.
double ci_half_width(double stddev, std::size_t n, std::size_t population, double confidence);

// Picks a handle for `query` given the state it will run on; nullptr means
// the full table. Throws MissingSample when a required id is absent.
const SampleHandle* baseline_select(const BaselinePolicy& policy, const Query& query, const SessionState& state,
                                    const SampleCatalog& catalog);

// Checks referenced ids up front.
SourceChooser baseline_chooser(const BaselinePolicy& policy, const SampleCatalog& catalog);

// Catalog indices for an action-space name: uniform, uniform+strat,
// uniform+strat+cluster, all.
std::vector<std::size_t> action_space(const SampleCatalog& catalog, const std::string& name);

// Zeroes one reward component: term, intent or latency.
RewardWeights ablate_reward(RewardWeights w, const std::string& component);

struct EvalMethod {
  std::string name;
  SourceChooser chooser;
};

struct EvalOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t last = 2;
  EngineOptions engine;
  std::string normalize_to;  // method whose divergence scales the relative column
};

struct IntentMetrics {
  int intent = 0;
  std::size_t sessions = 0;            // generated sessions with this argmax
  std::size_t reference_sessions = 0;
  std::optional<double> divergence;    // slice mean vs reference slice mean
  std::optional<double> recall;
  std::optional<double> latency_median;
};

struct MethodMetrics {
  std::string method;
  double divergence = 0.0;
  std::optional<double> relative_divergence;
  double mean_recall = 0.0;  // over intents present in the reference
  LatencyStats latency;
  std::vector<IntentMetrics> per_intent;
  std::map<int, std::map<std::string, std::size_t>> action_usage;  // intent -> sample id -> steps
};

struct EvalReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<MethodMetrics> methods;
};

// Generates n sessions per method with the same session seeds as a
// full-table reference run and scores each against it.
EvalReport run_evaluation(const std::vector<EvalMethod>& methods, const SimulatorConfig& simulator,
                          const Table& table, const BtmModel& model, const EvalOptions& options);

nlohmann::json eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

// summary.tsv, intents.tsv, latency_box.tsv, action_usage.tsv and
// report.json, each stamped with the config hash.
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& config_hash);

}  // namespace samplepilot
