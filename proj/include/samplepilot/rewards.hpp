#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "samplepilot/intent.hpp"
#include "samplepilot/query.hpp"

namespace samplepilot {

struct RewardWeights {
  double delta = 1.0;
  double zeta = 1.0;
  double beta = 0.5;
  double gamma = 0.5;
  double latency = 1.0;  // 0 drops the latency term (ablation)
  std::size_t k_last = 2;
  std::size_t top_k = 5;
};

struct RewardBreakdown {
  double raw_latency = 0.0;  // sum of (1 - cost ratio)
  double raw_dis = 0.0;
  double raw_topic = 0.0;
  double raw_match = 0.0;
  double raw_recall = 0.0;
  double r_latency = 0.0;
  double r_dis = 0.0;
  double r_topic = 0.0;
  double r_intent = 0.0;
  double r_match = 0.0;
  double r_recall = 0.0;
  double r_term = 0.0;
  double r_total = 0.0;
};

// Maps a [0, 1] component onto [-0.5, 0.5].
inline double scale_reward(double c) noexcept { return c - 0.5; }

double latency_reward(const std::vector<double>& cost_ratios);

// 0.5 * fraction of matching query fields (0 when the operations differ)
// + 0.5 * (1 - min(1, 2 * angle / pi)) between display vectors.
double step_similarity(const StepRecord& a, const StepRecord& b);

// Weighted edit distance E (gap 1, substitution 2 * (1 - step similarity))
// normalized as 2E / (|a| + |b| + E). A metric with values in [0, 1].
double eda_sim_distance(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b);

double euclidean(const std::vector<double>& a, const std::vector<double>& b);

// Union of the top rows shown by the last `last` steps.
std::set<std::string> final_rows(const std::vector<StepRecord>& steps, std::size_t last = 2);

// Reference sessions with their tokens, intents and final rows.
struct GroundSet {
  std::vector<Session> sessions;
  std::vector<TokenSeq> tokens;
  std::vector<IntentDistribution> intents;
  std::vector<std::set<std::string>> rows;
};

GroundSet make_ground_set(const Table& table, std::vector<Session> sessions, const BtmModel& model,
                          std::size_t last = 2);

struct IntentRewardResult {
  double raw_dis = 0.0;
  double raw_topic = 0.0;
  std::size_t ground_index = 0;
};

IntentRewardResult intent_reward(const std::vector<StepRecord>& gen, const IntentDistribution& gen_intent,
                                 const GroundSet& ground);

struct TerminationResult {
  double raw_match = 0.0;
  double raw_recall = 0.0;
};

// Match: the last k_last tokens equal those of some ground session sharing
// the generated session's argmax intent. Recall: overlap of final rows with
// the closest ground session's final rows.
TerminationResult termination_reward(const TokenSeq& gen_tokens, const std::set<std::string>& gen_rows,
                                     int gen_intent, std::size_t ground_index, const GroundSet& ground,
                                     std::size_t k_last);

RewardBreakdown combine_rewards(double raw_latency, std::size_t length, double raw_dis, double raw_topic,
                                double raw_match, double raw_recall, const RewardWeights& w);

// Full episode reward for a finished session.
RewardBreakdown session_reward(const Table& table, const std::vector<StepRecord>& steps, const BtmModel& model,
                               const GroundSet& ground, const RewardWeights& w);

}  // namespace samplepilot
