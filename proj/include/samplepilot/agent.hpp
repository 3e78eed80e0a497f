#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "samplepilot/intent.hpp"
#include "samplepilot/nets.hpp"
#include "samplepilot/query.hpp"
#include "samplepilot/rewards.hpp"
#include "samplepilot/rng.hpp"
#include "samplepilot/sampling.hpp"
#include "samplepilot/simulator.hpp"

namespace samplepilot {

inline constexpr std::size_t kStateWindow = 3;
inline constexpr std::size_t kQueryFeatures = 6;

std::size_t state_width(std::size_t vector_width, int k) noexcept;

// [(query encoding, display vector) of the last three executed steps, most
// recent first, zero-padded], intent distribution of the executed prefix,
// cumulative cost ratio.
std::vector<double> encode_state(const Table& table, const std::vector<StepRecord>& history, const BtmModel& model,
                                 std::size_t vector_width);

struct Hyperparams {
  RewardWeights reward;
  double lr = 0.0007;
  double vf_coef = 0.25;
  double ent_coef = 0.01;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  double rms_alpha = 0.99;
  double rms_eps = 1e-5;
  std::size_t hidden = 64;
  std::size_t n_envs = 8;
  std::size_t episodes = 2000;
  std::uint64_t seed = 1;
};

nlohmann::json hyperparams_to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

struct PolicyValueNets {
  Mlp policy;
  Mlp value;
  RmsProp policy_opt;
  RmsProp value_opt;

  PolicyValueNets() = default;
  PolicyValueNets(std::size_t state_width, std::size_t actions, const Hyperparams& h);

  std::vector<double> action_probs(std::span<const double> state) const;
  double state_value(std::span<const double> state) const;
};

enum class ActionMode { Greedy, Sample };

// Greedy: first maximal probability. Sample: draw from the policy.
std::size_t select_action(const PolicyValueNets& nets, std::span<const double> state, ActionMode mode, Rng* rng);

struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double ret = 0.0;  // episode reward credited to every step
};

struct LossTerms {
  double policy = 0.0;   // -mean(log pi(a|s) * advantage)
  double value = 0.0;    // mean((return - value)^2)
  double entropy = 0.0;  // mean policy entropy
  double total = 0.0;    // policy - ent_coef * entropy + vf_coef * value
};

// Loss over a batch; when the gradient pointers are given they receive the
// analytic gradients (advantages are treated as constants).
LossTerms a2c_loss(const PolicyValueNets& nets, const std::vector<Transition>& batch, const Hyperparams& h,
                   std::vector<double>* policy_grad = nullptr, std::vector<double>* value_grad = nullptr);

using ActionChooser = std::function<std::size_t(const std::vector<double>& state)>;

struct Episode {
  std::vector<std::vector<double>> states;
  std::vector<std::size_t> actions;
  RewardBreakdown reward;
  Session session;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t state_width() const = 0;
  virtual std::size_t action_count() const = 0;
  // Must be safe to call concurrently.
  virtual Episode run_episode(const ActionChooser& choose, std::uint64_t seed) const = 0;
};

// Simulated analyst sessions on the table; each action picks a catalog handle.
class EdaEnvironment : public Environment {
 public:
  EdaEnvironment(const Table& table, const SampleCatalog& catalog, std::vector<std::size_t> actions,
                 const SimulatorConfig& simulator, const BtmModel& model, const GroundSet& ground,
                 RewardWeights weights, EngineOptions engine = {});

  std::size_t state_width() const override;
  std::size_t action_count() const override { return actions_.size(); }
  Episode run_episode(const ActionChooser& choose, std::uint64_t seed) const override;

  const SampleHandle& handle(std::size_t action) const { return catalog_->handles.at(actions_.at(action)); }
  const std::vector<std::size_t>& actions() const noexcept { return actions_; }

 private:
  const Table* table_;
  const SampleCatalog* catalog_;
  std::vector<std::size_t> actions_;
  const SimulatorConfig* simulator_;
  const BtmModel* model_;
  const GroundSet* ground_;
  RewardWeights weights_;
  EngineOptions engine_;
};

struct TrainingLogRow {
  std::size_t batch = 0;
  double mean_r_total = 0.0;
  double mean_r_latency = 0.0;
  double mean_r_intent = 0.0;
  double mean_r_term = 0.0;
  double entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

struct TrainResult {
  PolicyValueNets nets;
  std::vector<TrainingLogRow> log;
  std::size_t batches = 0;
};

// Episode seeds of training batches come from `episode_seed_base`.
TrainResult a2c_train(const Environment& env, const Hyperparams& h, std::uint64_t episode_seed_base);

void write_training_log(std::ostream& out, const std::vector<TrainingLogRow>& log);

struct Checkpoint {
  PolicyValueNets nets;
  Hyperparams hyperparams;
  std::vector<std::string> action_ids;
  std::size_t vector_width = 32;
  int k = 0;
  std::size_t batches = 0;
  std::string config_hash;

  // Hex hash of the serialized parameters and action ids.
  std::string id() const;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Greedy per-query chooser over a checkpoint's actions, for evaluation and
// live sessions. Throws MissingSample when an action id is not in the catalog.
SourceChooser agent_chooser(const Checkpoint& checkpoint, const SampleCatalog& catalog, const BtmModel& model);

}  // namespace samplepilot
