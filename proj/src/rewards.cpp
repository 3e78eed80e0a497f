#include "samplepilot/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "samplepilot/error.hpp"

namespace samplepilot {

double latency_reward(const std::vector<double>& costs) {
  double r = 0.0;
  for (double c : costs) r += 1.0 - c;
  return r;
}

namespace {

double field_match(const Query& a, const Query& b) {
  if (a.op != b.op) return 0.0;
  switch (a.op) {
    case OpType::Back: return 1.0;
    case OpType::Filter:
      return ((a.attr == b.attr) + (a.cmp == b.cmp) + (a.term == b.term)) / 3.0;
    case OpType::Group: {
      const std::string aa = a.agg == AggFunc::Count ? std::string() : a.agg_attr;
      const std::string ba = b.agg == AggFunc::Count ? std::string() : b.agg_attr;
      return ((a.group_attr == b.group_attr) + (a.agg == b.agg) + (aa == ba)) / 3.0;
    }
  }
  return 0.0;
}

double angular_similarity(const std::vector<double>& x, const std::vector<double>& y) {
  double dot = 0.0, nx = 0.0, ny = 0.0;
  const std::size_t n = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < n; ++i) dot += x[i] * y[i];
  for (double v : x) nx += v * v;
  for (double v : y) ny += v * v;
  if (nx == 0.0 && ny == 0.0) return 1.0;
  if (nx == 0.0 || ny == 0.0) return 0.0;
  const double cosine = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
  const double theta = std::acos(cosine);
  return 1.0 - std::min(1.0, 2.0 * theta / std::numbers::pi);
}

}  // namespace

double step_similarity(const StepRecord& a, const StepRecord& b) {
  return 0.5 * field_match(a.query, b.query) + 0.5 * angular_similarity(a.display.vector, b.display.vector);
}

double eda_sim_distance(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n + m == 0) return 0.0;
  std::vector<double> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<double>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const double sub = prev[j - 1] + 2.0 * (1.0 - step_similarity(a[i - 1], b[j - 1]));
      cur[j] = std::min({prev[j] + 1.0, cur[j - 1] + 1.0, sub});
    }
    std::swap(prev, cur);
  }
  const double e = prev[m];
  return 2.0 * e / (static_cast<double>(n + m) + e);
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "vector sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::set<std::string> final_rows(const std::vector<StepRecord>& steps, std::size_t last) {
  std::set<std::string> out;
  const std::size_t from = steps.size() > last ? steps.size() - last : 0;
  for (std::size_t i = from; i < steps.size(); ++i)
    out.insert(steps[i].display.top_rows.begin(), steps[i].display.top_rows.end());
  return out;
}

GroundSet make_ground_set(const Table& table, std::vector<Session> sessions, const BtmModel& model,
                          std::size_t last) {
  if (sessions.empty()) throw Error(ErrorCode::EmptyGroundSet, "ground set has no sessions");
  GroundSet g;
  for (const auto& s : sessions) {
    g.tokens.push_back(tokenize(table, s.steps));
    g.intents.push_back(infer(model, g.tokens.back()));
    g.rows.push_back(final_rows(s.steps, last));
  }
  g.sessions = std::move(sessions);
  return g;
}

IntentRewardResult intent_reward(const std::vector<StepRecord>& gen, const IntentDistribution& gen_intent,
                                 const GroundSet& ground) {
  if (ground.sessions.empty()) throw Error(ErrorCode::EmptyGroundSet, "ground set has no sessions");
  IntentRewardResult r;
  double best = 2.0;
  for (std::size_t i = 0; i < ground.sessions.size(); ++i) {
    const double d = eda_sim_distance(gen, ground.sessions[i].steps);
    if (d < best) {
      best = d;
      r.ground_index = i;
    }
  }
  r.raw_dis = 1.0 - best;
  const double eud = std::min(std::sqrt(2.0), euclidean(gen_intent.probs, ground.intents[r.ground_index].probs));
  r.raw_topic = 1.0 - eud / std::sqrt(2.0);
  return r;
}

TerminationResult termination_reward(const TokenSeq& gen_tokens, const std::set<std::string>& gen_rows,
                                     int gen_intent, std::size_t ground_index, const GroundSet& ground,
                                     std::size_t k_last) {
  if (gen_tokens.size() < k_last) throw Error(ErrorCode::TooShort, "session shorter than the matched suffix");
  TerminationResult r;
  for (std::size_t i = 0; i < ground.sessions.size() && r.raw_match == 0.0; ++i) {
    if (ground.intents[i].argmax_intent != gen_intent) continue;
    const auto& t = ground.tokens[i];
    if (t.size() < k_last) continue;
    if (std::equal(gen_tokens.end() - static_cast<long>(k_last), gen_tokens.end(), t.end() - static_cast<long>(k_last)))
      r.raw_match = 1.0;
  }
  const auto& target = ground.rows.at(ground_index);
  if (target.empty()) {
    r.raw_recall = 1.0;
  } else {
    std::size_t hit = 0;
    for (const auto& row : target) hit += gen_rows.count(row);
    r.raw_recall = static_cast<double>(hit) / static_cast<double>(target.size());
  }
  return r;
}

RewardBreakdown combine_rewards(double raw_latency, std::size_t length, double raw_dis, double raw_topic,
                                double raw_match, double raw_recall, const RewardWeights& w) {
  RewardBreakdown b;
  b.raw_latency = raw_latency;
  b.raw_dis = raw_dis;
  b.raw_topic = raw_topic;
  b.raw_match = raw_match;
  b.raw_recall = raw_recall;
  b.r_latency = scale_reward(length ? raw_latency / static_cast<double>(length) : 0.0);
  b.r_dis = scale_reward(raw_dis);
  b.r_topic = scale_reward(raw_topic);
  b.r_intent = scale_reward((raw_dis + w.delta * raw_topic) / (1.0 + w.delta));
  b.r_match = scale_reward(raw_match);
  b.r_recall = scale_reward(raw_recall);
  b.r_term = scale_reward((raw_match + w.zeta * raw_recall) / (1.0 + w.zeta));
  b.r_total = w.latency * b.r_latency + w.beta * b.r_intent + w.gamma * b.r_term;
  return b;
}

RewardBreakdown session_reward(const Table& table, const std::vector<StepRecord>& steps, const BtmModel& model,
                               const GroundSet& ground, const RewardWeights& w) {
  std::vector<double> costs;
  for (const auto& s : steps) costs.push_back(s.cost_ratio);
  const auto tokens = tokenize(table, steps);
  const auto intent = infer(model, tokens);
  const auto ir = intent_reward(steps, intent, ground);
  const auto tr = termination_reward(tokens, final_rows(steps, w.k_last), intent.argmax_intent, ir.ground_index,
                                     ground, w.k_last);
  return combine_rewards(latency_reward(costs), steps.size(), ir.raw_dis, ir.raw_topic, tr.raw_match,
                         tr.raw_recall, w);
}

}  // namespace samplepilot
