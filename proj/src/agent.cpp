#include "samplepilot/agent.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "samplepilot/error.hpp"
#include "samplepilot/parallel.hpp"

namespace samplepilot {

std::size_t state_width(std::size_t vector_width, int k) noexcept {
  return kStateWindow * (kQueryFeatures + vector_width) + static_cast<std::size_t>(k) + 1;
}

std::vector<double> encode_state(const Table& table, const std::vector<StepRecord>& history, const BtmModel& model,
                                 std::size_t vector_width) {
  std::vector<double> s(state_width(vector_width, model.k), 0.0);
  const std::size_t slot = kQueryFeatures + vector_width;
  for (std::size_t w = 0; w < kStateWindow && w < history.size(); ++w) {
    const auto& step = history[history.size() - 1 - w];
    const auto q = encode_query(table, step.query);
    std::copy(q.begin(), q.end(), s.begin() + static_cast<long>(w * slot));
    const auto& v = step.display.vector;
    std::copy_n(v.begin(), std::min(v.size(), vector_width), s.begin() + static_cast<long>(w * slot + kQueryFeatures));
  }
  const auto intent = infer(model, tokenize(table, history));
  std::copy(intent.probs.begin(), intent.probs.end(), s.begin() + static_cast<long>(kStateWindow * slot));
  double cost = 0.0;
  for (const auto& step : history) cost += step.cost_ratio;
  s.back() = cost;
  return s;
}

nlohmann::json hyperparams_to_json(const Hyperparams& h) {
  return {{"delta", h.reward.delta},     {"zeta", h.reward.zeta},       {"beta", h.reward.beta},
          {"gamma", h.reward.gamma},     {"latency_weight", h.reward.latency},
          {"k_last", h.reward.k_last},   {"top_k", h.reward.top_k},     {"lr", h.lr},
          {"vf_coef", h.vf_coef},        {"ent_coef", h.ent_coef},      {"max_grad_norm", h.max_grad_norm},
          {"rms_alpha", h.rms_alpha},    {"rms_eps", h.rms_eps},        {"hidden", h.hidden},
          {"n_envs", h.n_envs},          {"episodes", h.episodes},      {"seed", h.seed}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams h;
  try {
    h.reward.delta = j.value("delta", h.reward.delta);
    h.reward.zeta = j.value("zeta", h.reward.zeta);
    h.reward.beta = j.value("beta", h.reward.beta);
    h.reward.gamma = j.value("gamma", h.reward.gamma);
    h.reward.latency = j.value("latency_weight", h.reward.latency);
    h.reward.k_last = j.value("k_last", h.reward.k_last);
    h.reward.top_k = j.value("top_k", h.reward.top_k);
    h.lr = j.value("lr", h.lr);
    h.vf_coef = j.value("vf_coef", h.vf_coef);
    h.ent_coef = j.value("ent_coef", h.ent_coef);
    h.max_grad_norm = j.value("max_grad_norm", h.max_grad_norm);
    h.rms_alpha = j.value("rms_alpha", h.rms_alpha);
    h.rms_eps = j.value("rms_eps", h.rms_eps);
    h.hidden = j.value("hidden", h.hidden);
    h.n_envs = j.value("n_envs", h.n_envs);
    h.episodes = j.value("episodes", h.episodes);
    h.seed = j.value("seed", h.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("hyperparameters: ") + e.what());
  }
  if (h.n_envs == 0 || h.hidden == 0 || h.lr < 0 || h.reward.k_last == 0)
    throw Error(ErrorCode::InvalidConfig, "hyperparameters out of range");
  return h;
}

PolicyValueNets::PolicyValueNets(std::size_t width, std::size_t actions, const Hyperparams& h)
    : policy(width, h.hidden, actions, derive_seed(h.seed, 0x706f6c)),
      value(width, h.hidden, 1, derive_seed(h.seed, 0x76616c)) {
  policy_opt.alpha = value_opt.alpha = h.rms_alpha;
  policy_opt.eps = value_opt.eps = h.rms_eps;
}

std::vector<double> PolicyValueNets::action_probs(std::span<const double> state) const {
  return softmax(policy.forward(state));
}

double PolicyValueNets::state_value(std::span<const double> state) const { return value.forward(state)[0]; }

std::size_t select_action(const PolicyValueNets& nets, std::span<const double> state, ActionMode mode, Rng* rng) {
  const auto p = nets.action_probs(state);
  if (mode == ActionMode::Greedy || !rng)
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return rng->categorical(p);
}

LossTerms a2c_loss(const PolicyValueNets& nets, const std::vector<Transition>& batch, const Hyperparams& h,
                   std::vector<double>* policy_grad, std::vector<double>* value_grad) {
  LossTerms L;
  if (batch.empty()) return L;
  const double n = static_cast<double>(batch.size());
  if (policy_grad) policy_grad->assign(nets.policy.params().size(), 0.0);
  if (value_grad) value_grad->assign(nets.value.params().size(), 0.0);
  Mlp::Cache pc, vc;
  std::vector<double> dlogits;
  for (const auto& t : batch) {
    nets.policy.forward(t.state, pc);
    nets.value.forward(t.state, vc);
    const auto p = softmax(pc.y);
    const double v = vc.y[0];
    const double adv = t.ret - v;
    const double logp = std::log(std::max(p[t.action], 1e-300));
    const double H = entropy(p);
    L.policy += -logp * adv / n;
    L.entropy += H / n;
    L.value += adv * adv / n;
    if (policy_grad) {
      dlogits.assign(p.size(), 0.0);
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double onehot = j == t.action ? 1.0 : 0.0;
        const double logpj = std::log(std::max(p[j], 1e-300));
        // d(-logp * adv)/dz_j and d(-ent * H)/dz_j, both over n.
        dlogits[j] = (-adv * (onehot - p[j]) + h.ent_coef * p[j] * (logpj + H)) / n;
      }
      nets.policy.backward(pc, dlogits, *policy_grad);
    }
    if (value_grad) {
      const double dv = h.vf_coef * -2.0 * adv / n;
      nets.value.backward(vc, std::span<const double>(&dv, 1), *value_grad);
    }
  }
  L.total = L.policy - h.ent_coef * L.entropy + h.vf_coef * L.value;
  return L;
}

EdaEnvironment::EdaEnvironment(const Table& table, const SampleCatalog& catalog, std::vector<std::size_t> actions,
                               const SimulatorConfig& simulator, const BtmModel& model, const GroundSet& ground,
                               RewardWeights weights, EngineOptions engine)
    : table_(&table), catalog_(&catalog), actions_(std::move(actions)), simulator_(&simulator), model_(&model),
      ground_(&ground), weights_(weights), engine_(engine) {
  if (actions_.empty()) throw Error(ErrorCode::InvalidArgument, "empty action space");
  for (auto a : actions_)
    if (a >= catalog.size()) throw Error(ErrorCode::MissingSample, "action index outside the catalog");
  validate_config(simulator, &table);
}

std::size_t EdaEnvironment::state_width() const { return samplepilot::state_width(engine_.vector_width, model_->k); }

Episode EdaEnvironment::run_episode(const ActionChooser& choose, std::uint64_t seed) const {
  Episode ep;
  SessionRun run(*simulator_, *table_, seed);
  SessionState state(*table_, engine_);
  while (!run.done()) {
    const Query q = run.next_query(state.last_display(), state.depth());
    auto s = encode_state(*table_, state.history(), *model_, engine_.vector_width);
    const std::size_t a = choose(s);
    state.execute(q, &handle(a));
    if (run.last_fallback()) state.mark_last_fallback();
    ep.states.push_back(std::move(s));
    ep.actions.push_back(a);
  }
  ep.reward = session_reward(*table_, state.history(), *model_, *ground_, weights_);
  ep.session = Session{seed, run.template_id(), state.history()};
  return ep;
}

TrainResult a2c_train(const Environment& env, const Hyperparams& h, std::uint64_t seed_base) {
  TrainResult out;
  out.nets = PolicyValueNets(env.state_width(), env.action_count(), h);
  const std::size_t batches = (h.episodes + h.n_envs - 1) / h.n_envs;
  std::vector<double> pg, vg;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t first = b * h.n_envs;
    const std::size_t count = std::min(h.n_envs, h.episodes - first);
    std::vector<Episode> eps(count);
    const PolicyValueNets& nets = out.nets;
    parallel_for(count, [&](std::size_t i) {
      const std::uint64_t seed = derive_seed(seed_base, first + i);
      Rng rng(derive_seed(seed, 3));
      eps[i] = env.run_episode(
          [&](const std::vector<double>& s) { return select_action(nets, s, ActionMode::Sample, &rng); }, seed);
    });

    std::vector<Transition> batch;
    TrainingLogRow row;
    row.batch = b;
    for (const auto& e : eps) {
      row.mean_r_total += e.reward.r_total / static_cast<double>(count);
      row.mean_r_latency += e.reward.r_latency / static_cast<double>(count);
      row.mean_r_intent += e.reward.r_intent / static_cast<double>(count);
      row.mean_r_term += e.reward.r_term / static_cast<double>(count);
      for (std::size_t t = 0; t < e.states.size(); ++t) batch.push_back({e.states[t], e.actions[t], e.reward.r_total});
    }
    const auto loss = a2c_loss(out.nets, batch, h, &pg, &vg);
    if (!std::isfinite(loss.total)) {
      throw Error(ErrorCode::NonFiniteLoss, "batch " + std::to_string(b) + ": policy loss " +
                                                std::to_string(loss.policy) + ", value loss " +
                                                std::to_string(loss.value) + ", entropy " + std::to_string(loss.entropy));
    }
    if (h.max_grad_norm > 0) {
      double sq = 0.0;
      for (double g : pg) sq += g * g;
      for (double g : vg) sq += g * g;
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) throw Error(ErrorCode::NonFiniteLoss, "batch " + std::to_string(b) + ": gradient norm is not finite");
      if (norm > h.max_grad_norm) {
        const double f = h.max_grad_norm / (norm + 1e-6);
        for (double& g : pg) g *= f;
        for (double& g : vg) g *= f;
      }
    }
    out.nets.policy_opt.step(out.nets.policy.params(), pg, h.lr);
    out.nets.value_opt.step(out.nets.value.params(), vg, h.lr);
    row.entropy = loss.entropy;
    row.policy_loss = loss.policy;
    row.value_loss = loss.value;
    out.log.push_back(row);
  }
  out.batches = batches;
  return out;
}

void write_training_log(std::ostream& out, const std::vector<TrainingLogRow>& log) {
  for (const auto& r : log) {
    out << nlohmann::json{{"batch", r.batch},
                          {"mean_r_total", r.mean_r_total},
                          {"mean_r_latency", r.mean_r_latency},
                          {"mean_r_intent", r.mean_r_intent},
                          {"mean_r_term", r.mean_r_term},
                          {"entropy", r.entropy},
                          {"policy_loss", r.policy_loss},
                          {"value_loss", r.value_loss}}
               .dump()
        << '\n';
  }
}

std::string Checkpoint::id() const {
  std::uint64_t h = fnv1a("checkpoint");
  auto mix = [&](const std::vector<double>& v) {
    for (double d : v) h = fnv1a(std::string_view(reinterpret_cast<const char*>(&d), sizeof d), h);
  };
  mix(nets.policy.params());
  mix(nets.value.params());
  for (const auto& a : action_ids) h = fnv1a(a + "\x1f", h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  return {{"format", "checkpoint"},
          {"version", 1},
          {"config_hash", c.config_hash},
          {"hyperparams", hyperparams_to_json(c.hyperparams)},
          {"actions", c.action_ids},
          {"vector_width", c.vector_width},
          {"k", c.k},
          {"batches", c.batches},
          {"policy", c.nets.policy.to_json()},
          {"value", c.nets.value.to_json()},
          {"policy_rms", c.nets.policy_opt.square_avg},
          {"value_rms", c.nets.value_opt.square_avg}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "checkpoint" || j.at("version").get<int>() != 1)
      throw Error(ErrorCode::InvalidConfig, "unsupported checkpoint format");
    Checkpoint c;
    c.config_hash = j.value("config_hash", std::string());
    c.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    c.action_ids = j.at("actions").get<std::vector<std::string>>();
    c.vector_width = j.at("vector_width").get<std::size_t>();
    c.k = j.at("k").get<int>();
    c.batches = j.at("batches").get<std::size_t>();
    c.nets.policy = Mlp::from_json(j.at("policy"));
    c.nets.value = Mlp::from_json(j.at("value"));
    c.nets.policy_opt.square_avg = j.at("policy_rms").get<std::vector<double>>();
    c.nets.value_opt.square_avg = j.at("value_rms").get<std::vector<double>>();
    c.nets.policy_opt.alpha = c.nets.value_opt.alpha = c.hyperparams.rms_alpha;
    c.nets.policy_opt.eps = c.nets.value_opt.eps = c.hyperparams.rms_eps;
    if (c.nets.policy.outputs() != c.action_ids.size() ||
        c.nets.policy.inputs() != state_width(c.vector_width, c.k))
      throw Error(ErrorCode::InvalidConfig, "checkpoint shapes disagree");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << checkpoint_to_json(c).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("checkpoint: ") + e.what());
  }
}

SourceChooser agent_chooser(const Checkpoint& checkpoint, const SampleCatalog& catalog, const BtmModel& model) {
  if (model.k != checkpoint.k) throw Error(ErrorCode::InvalidConfig, "checkpoint and topic model disagree on K");
  std::vector<const SampleHandle*> handles;
  for (const auto& id : checkpoint.action_ids) {
    const auto* h = catalog.find(id);
    if (!h) throw Error(ErrorCode::MissingSample, "checkpoint action '" + id + "' not in catalog");
    handles.push_back(h);
  }
  auto nets = std::make_shared<const PolicyValueNets>(checkpoint.nets);
  const std::size_t width = checkpoint.vector_width;
  const BtmModel* m = &model;
  return [nets, handles, width, m](const SessionState& state, const Query&, std::size_t) {
    const auto s = encode_state(state.table(), state.history(), *m, width);
    return handles[select_action(*nets, s, ActionMode::Greedy, nullptr)];
  };
}

}  // namespace samplepilot
