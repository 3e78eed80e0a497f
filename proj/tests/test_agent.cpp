#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "samplepilot/agent.hpp"
#include "samplepilot/error.hpp"
#include "samplepilot/synthetic.hpp"

using namespace samplepilot;

namespace {

// One-step episodes with fixed per-action rewards and a random state.
class Bandit : public Environment {
 public:
  explicit Bandit(std::vector<double> rewards) : rewards_(std::move(rewards)) {}
  std::size_t state_width() const override { return 4; }
  std::size_t action_count() const override { return rewards_.size(); }
  Episode run_episode(const ActionChooser& choose, std::uint64_t seed) const override {
    Rng rng(seed);
    std::vector<double> s(4);
    for (auto& x : s) x = rng.normal();
    Episode e;
    e.actions.push_back(choose(s));
    e.states.push_back(std::move(s));
    e.reward.r_total = rewards_[e.actions.back()];
    return e;
  }

 private:
  std::vector<double> rewards_;
};

struct Fixture {
  Table table = make_flights_table(4000, 3);
  SampleCatalog catalog;
  SimulatorConfig sim = flights_templates();
  BtmModel model;
  GroundSet ground;

  Fixture() {
    catalog = build_catalog(table,
                            {StrategySpec{Uniform{0.01}, ""}, StrategySpec{Uniform{0.1}, ""},
                             StrategySpec{StratProportional{"carrier", 0.05}, ""}, StrategySpec{Uniform{1.0}, ""}},
                            5);
    auto sessions = generate_sessions(sim, table, 60, 11);
    std::vector<TokenSeq> corpus;
    for (const auto& s : sessions) corpus.push_back(tokenize(table, s.steps));
    BtmParams p;
    p.k = 4;
    p.iterations = 50;
    model = train_btm(corpus, p);
    ground = make_ground_set(table, std::move(sessions), model);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

PolicyValueNets flat_nets(std::vector<double> bias) {
  Hyperparams h;
  h.hidden = 8;
  PolicyValueNets n(4, bias.size(), h);
  auto& p = n.policy.params();
  const std::size_t out_block = bias.size() * 8 + bias.size();
  std::fill(p.end() - static_cast<long>(out_block), p.end(), 0.0);
  std::copy(bias.begin(), bias.end(), p.end() - static_cast<long>(bias.size()));
  return n;
}

}  // namespace

TEST(EncodeState, EmptyHistory) {
  const auto& f = fixture();
  const auto s = encode_state(f.table, {}, f.model, 32);
  ASSERT_EQ(s.size(), state_width(32, 4));
  EXPECT_EQ(s.size(), 3u * (6 + 32) + 4 + 1);
  for (std::size_t i = 0; i < 3 * 38; ++i) EXPECT_EQ(s[i], 0.0);
  const auto prior = make_distribution(f.model.topic_prior).probs;
  for (int k = 0; k < 4; ++k) EXPECT_EQ(s[3 * 38 + static_cast<std::size_t>(k)], prior[static_cast<std::size_t>(k)]);
  EXPECT_EQ(s.back(), 0.0);
}

TEST(EncodeState, HandAssembledThreeSteps) {
  const auto& f = fixture();
  SessionState st(f.table);
  const std::vector<Query> qs{Query::group("month", AggFunc::Count), Query::filter("month", CmpOp::Eq, "JUN"),
                              Query::group("carrier", AggFunc::Avg, "dep_delay"), Query::back()};
  st.execute(qs[0], nullptr);
  const auto one = encode_state(f.table, st.history(), f.model, 32);
  EXPECT_EQ(one.back(), 1.0);
  for (std::size_t i = 38; i < 3 * 38; ++i) EXPECT_EQ(one[i], 0.0);

  st.execute(qs[1], f.catalog.find("Uni@10%"));
  st.execute(qs[2], nullptr);
  st.execute(qs[3], f.catalog.find("Uni@1%"));
  const auto& h = st.history();
  std::vector<double> expect;
  for (std::size_t w = 0; w < 3; ++w) {
    const auto& step = h[h.size() - 1 - w];
    const auto q = encode_query(f.table, step.query);
    expect.insert(expect.end(), q.begin(), q.end());
    expect.insert(expect.end(), step.display.vector.begin(), step.display.vector.end());
  }
  const auto phi = infer(f.model, tokenize(f.table, qs)).probs;
  expect.insert(expect.end(), phi.begin(), phi.end());
  expect.push_back(h[0].cost_ratio + h[1].cost_ratio + h[2].cost_ratio + h[3].cost_ratio);
  EXPECT_EQ(encode_state(f.table, h, f.model, 32), expect);
}

TEST(SelectAction, TiesGreedyAndSampling) {
  const auto flat = flat_nets({0, 0, 0});
  const std::vector<double> s{0.3, -1, 2, 0};
  EXPECT_EQ(select_action(flat, s, ActionMode::Greedy, nullptr), 0u);
  const auto p = flat.action_probs(s);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);

  const auto peaked = flat_nets({0, 10, 0});
  Rng rng(1);
  int ones = 0;
  for (int i = 0; i < 10000; ++i) ones += select_action(peaked, s, ActionMode::Sample, &rng) == 1;
  EXPECT_GT(ones, 9900);

  std::vector<int> c(3, 0);
  for (int i = 0; i < 9000; ++i) ++c[select_action(flat, s, ActionMode::Sample, &rng)];
  double chi2 = 0;
  for (int x : c) chi2 += (x - 3000.0) * (x - 3000.0) / 3000.0;
  EXPECT_LT(chi2, 13.82);  // p = 0.001, two degrees of freedom
}

TEST(A2cLoss, GradientsMatchFiniteDifferences) {
  Hyperparams h;
  h.hidden = 16;
  h.ent_coef = 0.05;
  PolicyValueNets nets(5, 4, h);
  Rng rng(9);
  std::vector<Transition> batch;
  for (int i = 0; i < 12; ++i) {
    Transition t;
    for (int j = 0; j < 5; ++j) t.state.push_back(rng.normal());
    t.action = rng.below(4);
    t.ret = rng.uniform() - 0.5;
    batch.push_back(t);
  }
  std::vector<double> pg, vg;
  a2c_loss(nets, batch, h, &pg, &vg);

  // Advantages are constants in the policy loss, so differentiate the
  // policy part with the value net frozen and the value part separately.
  auto policy_part = [&](const PolicyValueNets& n) {
    const auto l = a2c_loss(n, batch, h);
    return l.policy - h.ent_coef * l.entropy;
  };
  auto value_part = [&](const PolicyValueNets& n) { return h.vf_coef * a2c_loss(n, batch, h).value; };
  auto check = [&](std::vector<double>& params, const std::vector<double>& grad, auto&& f, PolicyValueNets& n) {
    const std::size_t stride = params.size() / 10;
    for (std::size_t k = 0; k < 10; ++k) {
      const std::size_t i = k * stride + 1;
      const double keep = params[i], eps = 1e-6;
      params[i] = keep + eps;
      const double up = f(n);
      params[i] = keep - eps;
      const double down = f(n);
      params[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double rel = std::fabs(numeric - grad[i]) / std::max(1e-8, std::fabs(numeric) + std::fabs(grad[i]));
      EXPECT_LT(rel, 1e-4) << "param " << i << " analytic " << grad[i] << " numeric " << numeric;
    }
  };
  check(nets.policy.params(), pg, policy_part, nets);
  check(nets.value.params(), vg, value_part, nets);
}

TEST(A2cTrain, BanditFindsBestAction) {
  Bandit env({0.1, 0.9, 0.2});
  Hyperparams h;
  h.episodes = 2000;
  const auto res = a2c_train(env, h, 7);
  Rng rng(2);
  int best = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> s(4);
    for (auto& x : s) x = rng.normal();
    best += select_action(res.nets, s, ActionMode::Greedy, nullptr) == 1;
  }
  EXPECT_GE(best, 950);
  EXPECT_EQ(res.log.size(), 250u);
}

TEST(A2cTrain, LargeEntropyKeepsPolicyNearUniform) {
  Bandit env({0.1, 0.9, 0.2});
  Hyperparams h;
  h.episodes = 2000;
  h.ent_coef = 10.0;
  const auto res = a2c_train(env, h, 7);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s(4);
    for (auto& x : s) x = rng.normal();
    const auto p = res.nets.action_probs(s);
    EXPECT_LT(*std::max_element(p.begin(), p.end()), 0.5);
  }
}

TEST(A2cTrain, ZeroLearningRateLeavesParameters) {
  Bandit env({0.1, 0.9, 0.2});
  Hyperparams h;
  h.episodes = 80;
  h.lr = 0.0;
  const auto res = a2c_train(env, h, 7);
  const PolicyValueNets fresh(4, 3, h);
  EXPECT_EQ(res.nets.policy.params(), fresh.policy.params());
  EXPECT_EQ(res.nets.value.params(), fresh.value.params());
}

TEST(A2cTrain, NonFiniteRewardAborts) {
  Bandit env({0.1, std::numeric_limits<double>::quiet_NaN(), 0.2});
  Hyperparams h;
  h.episodes = 64;
  try {
    a2c_train(env, h, 7);
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(EdaEnvironment, EpisodesAreDeterministicAndBounded) {
  const auto& f = fixture();
  Hyperparams h;
  const EdaEnvironment env(f.table, f.catalog, {0, 1, 2, 3}, f.sim, f.model, f.ground, h.reward);
  EXPECT_EQ(env.state_width(), state_width(32, 4));
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng a(seed), b(seed);
    const auto e1 = env.run_episode([&](const std::vector<double>&) { return a.below(4); }, seed);
    const auto e2 = env.run_episode([&](const std::vector<double>&) { return b.below(4); }, seed);
    EXPECT_EQ(e1.actions, e2.actions);
    EXPECT_EQ(e1.reward.r_total, e2.reward.r_total);
    for (double c : {e1.reward.r_latency, e1.reward.r_intent, e1.reward.r_term}) {
      EXPECT_GE(c, -0.5);
      EXPECT_LE(c, 0.5);
    }
    EXPECT_EQ(e1.states.size(), e1.session.steps.size());
  }
  // Always using the full table gives no latency saving.
  const auto full = env.run_episode([](const std::vector<double>&) { return std::size_t{3}; }, 1);
  EXPECT_EQ(full.reward.raw_latency, 0.0);
}

TEST(Checkpoint, RoundTripAndChooser) {
  const auto& f = fixture();
  Hyperparams h;
  h.episodes = 16;
  h.n_envs = 4;
  const EdaEnvironment env(f.table, f.catalog, {0, 1, 2}, f.sim, f.model, f.ground, h.reward);
  const auto res = a2c_train(env, h, 3);
  Checkpoint c;
  c.nets = res.nets;
  c.hyperparams = h;
  c.action_ids = {"Uni@1%", "Uni@10%", "Strat-carrier@5%"};
  c.k = f.model.k;
  c.batches = res.batches;
  const auto path = std::filesystem::temp_directory_path() / "samplepilot_ckpt_test.json";
  save_checkpoint(c, path);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.id(), c.id());
  EXPECT_EQ(back.nets.policy.params(), c.nets.policy.params());
  EXPECT_EQ(back.nets.value_opt.square_avg, c.nets.value_opt.square_avg);
  std::filesystem::remove(path);

  const auto choose = agent_chooser(back, f.catalog, f.model);
  const auto s = run_session(f.sim, f.table, 5, 0, choose);
  for (const auto& st : s.steps) EXPECT_NE(st.sample_id, "FULL");
  c.action_ids[0] = "Missing@1%";
  EXPECT_THROW(agent_chooser(c, f.catalog, f.model), Error);

  // Same training seed, same parameters.
  EXPECT_EQ(a2c_train(env, h, 3).nets.policy.params(), res.nets.policy.params());
}
