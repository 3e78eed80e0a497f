#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "samplepilot/error.hpp"
#include "samplepilot/simulator.hpp"
#include "samplepilot/synthetic.hpp"

using namespace samplepilot;

namespace {

DisplayResult bars(std::string attr, std::vector<std::pair<std::string, double>> kv) {
  DisplayResult d;
  d.kind = DisplayKind::GroupedBars;
  d.group_attr = std::move(attr);
  d.agg = AggFunc::Count;
  for (auto& [k, v] : kv) d.groups.push_back({k, v, v});
  d.group_count = d.groups.size();
  return d;
}

// Group by month, then drill into a bar, then group by carrier.
SimulatorConfig drill_config(double temperature) {
  return simulator_config_from_json(nlohmann::json::parse(R"({
    "templates": [{"name": "drill", "length": [3, 3], "phases": [
      [{"kind": "group", "group_attr": "month", "agg": "Count"}],
      [{"kind": "drill"}, {"kind": "back", "weight": 0.5}],
      [{"kind": "group", "group_attr": "carrier", "agg": "Count"}]]}],
    "intent_mixture": [1.0],
    "drill_temperature": )" + std::to_string(temperature) + "}"));
}

Table month_table() {
  std::vector<std::string> month, carrier;
  for (int i = 0; i < 30; ++i) month.push_back("JUN");
  for (int i = 0; i < 20; ++i) month.push_back("JUL");
  for (int i = 0; i < 10; ++i) month.push_back("MAY");
  for (int i = 0; i < 60; ++i) carrier.push_back(i % 3 ? "AA" : "UA");
  return Table("m", {Column::categorical("month", month), Column::categorical("carrier", carrier)});
}

}  // namespace

TEST(PickBar, ZeroTemperatureIsArgmax) {
  Rng rng(1);
  const auto d = bars("month", {{"JUN", 80}, {"JAN", 10}});
  for (int i = 0; i < 200; ++i) EXPECT_EQ(pick_bar(d, 0.0, rng), 0u);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(pick_bar(d, 1e-4, rng), 0u);
}

TEST(PickBar, EqualBarsAreEquallyLikely) {
  Rng rng(2);
  const auto d = bars("month", {{"A", 50}, {"B", 50}});
  int a = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) a += pick_bar(d, 1.0, rng) == 0;
  const double chi2 = 2.0 * std::pow(a - n / 2.0, 2) / (n / 2.0);
  EXPECT_LT(chi2, 10.83);  // p = 0.001, one degree of freedom
}

TEST(NextQuery, DrillFollowsTopBarAndFlipsWithTheDisplay) {
  const auto t = month_table();
  const auto cfg = drill_config(0.0);
  const auto jun = bars("month", {{"JUN", 80}, {"JAN", 10}});
  const auto jul = bars("month", {{"JUL", 20}, {"JUN", 10}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SessionRun a(cfg, t, seed), b(cfg, t, seed);
    a.next_query(nullptr, 1);
    b.next_query(nullptr, 1);
    const auto qa = a.next_query(&jun, 2);
    const auto qb = b.next_query(&jul, 2);
    if (qa.op == OpType::Back) {
      // Schema choice does not depend on the display.
      EXPECT_EQ(qb.op, OpType::Back);
      continue;
    }
    EXPECT_EQ(qa, Query::filter("month", CmpOp::Eq, "JUN"));
    EXPECT_EQ(qb, Query::filter("month", CmpOp::Eq, "JUL"));
  }
}

TEST(NextQuery, EmptyDisplayFallsBackAndFlags) {
  const auto t = month_table();
  const auto cfg = drill_config(0.0);
  DisplayResult empty = bars("month", {});
  int fallbacks = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SessionRun run(cfg, t, seed);
    run.next_query(nullptr, 1);
    const auto q = run.next_query(&empty, 2);
    EXPECT_EQ(q.op, OpType::Back);
    fallbacks += run.last_fallback();
  }
  EXPECT_GT(fallbacks, 0);
  SessionRun run(cfg, t, 3);
  run.next_query(nullptr, 1);
  DisplayResult view;
  bool threw = false;
  for (std::uint64_t s = 0; s < 20 && !threw; ++s) {
    SessionRun r(cfg, t, s);
    r.next_query(nullptr, 1);
    try {
      r.next_query(&view, 2);
    } catch (const Error& e) {
      threw = e.code() == ErrorCode::NoDisplay;
    }
  }
  EXPECT_TRUE(threw);
}

TEST(Config, DrillMustFollowGroupPhase) {
  auto bad = nlohmann::json::parse(R"({"templates": [{"phases": [[{"kind": "drill"}]]}], "intent_mixture": [1.0]})");
  EXPECT_THROW(simulator_config_from_json(bad), Error);
  auto mixed = nlohmann::json::parse(R"({"templates": [{"phases": [
      [{"kind": "group", "group_attr": "a"}, {"kind": "back"}], [{"kind": "drill"}]]}], "intent_mixture": [1.0]})");
  EXPECT_THROW(simulator_config_from_json(mixed), Error);
  auto mix = nlohmann::json::parse(R"({"templates": [{"phases": [[{"kind": "back"}]]}], "intent_mixture": [0.7]})");
  EXPECT_THROW(simulator_config_from_json(mix), Error);
  const auto cfg = flights_templates();
  EXPECT_NO_THROW(validate_config(cfg));
  EXPECT_EQ(simulator_config_to_json(simulator_config_from_json(simulator_config_to_json(cfg))),
            simulator_config_to_json(cfg));
  const Table other("x", {Column::categorical("month", {"JAN"})});
  EXPECT_THROW(validate_config(cfg, &other), Error);
}

TEST(GenerateSessions, EmptyAndDeterministic) {
  const auto t = make_flights_table(5000, 2);
  const auto cfg = flights_templates();
  EXPECT_TRUE(generate_sessions(cfg, t, 0, 1).empty());
  const auto a = generate_sessions(cfg, t, 40, 9);
  const auto b = generate_sessions(cfg, t, 40, 9);
  ASSERT_EQ(a.size(), 40u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].template_id, b[i].template_id);
    ASSERT_EQ(a[i].steps.size(), b[i].steps.size());
    EXPECT_GE(a[i].steps.size(), 5u);
    EXPECT_LE(a[i].steps.size(), 9u);
    for (std::size_t k = 0; k < a[i].steps.size(); ++k) {
      EXPECT_EQ(a[i].steps[k].query, b[i].steps[k].query);
      EXPECT_EQ(a[i].steps[k].display.vector, b[i].steps[k].display.vector);
      EXPECT_EQ(a[i].steps[k].sample_id, "FULL");
    }
  }
  EXPECT_GT(unique_sessions(a), 5u);
}

TEST(GenerateSessions, BackNeverAtRoot) {
  const auto t = make_flights_table(5000, 2);
  for (const auto& s : generate_sessions(flights_templates(), t, 100, 4)) {
    std::size_t depth = 1;
    for (const auto& st : s.steps) {
      if (st.query.op == OpType::Back) {
        EXPECT_GE(depth, 2u);
        --depth;
      } else {
        ++depth;
      }
    }
  }
}

TEST(GenerateSessions, MixtureCountsWithinFourSigma) {
  const auto t = make_flights_table(500, 2);
  auto cfg = flights_templates();
  cfg.intent_mixture = {0.4, 0.3, 0.2, 0.1};
  std::vector<int> counts(4, 0);
  const int n = 1000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(SessionRun(cfg, t, session_seed(3, i)).template_id())];
  for (int k = 0; k < 4; ++k) {
    const double p = cfg.intent_mixture[static_cast<std::size_t>(k)];
    EXPECT_LE(std::fabs(counts[static_cast<std::size_t>(k)] - n * p), 4.0 * std::sqrt(n * p * (1 - p)));
  }
}

TEST(GenerateSessions, AdversarialSampleDivertsSessions) {
  const auto t = month_table();
  const auto cfg = drill_config(0.0);
  SampleHandle bad;
  bad.sample_id = "bad";
  for (RowId r = 0; r < 30; r += 3) bad.row_indices.push_back(r);
  for (RowId r = 30; r < 60; ++r) bad.row_indices.push_back(r);
  bad.effective_sr = static_cast<double>(bad.row_indices.size()) / 60.0;

  const auto ref = generate_sessions(cfg, t, 60, 2);
  const auto again = generate_sessions(cfg, t, 60, 2);
  const auto sampled = generate_sessions(cfg, t, 60, 2, [&](const SessionState&, const Query&, std::size_t) { return &bad; });
  auto rate = [&](const std::vector<Session>& got) {
    int diverged = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      bool d = false;
      for (std::size_t k = 0; k < ref[i].steps.size(); ++k) d = d || !(ref[i].steps[k].query == got[i].steps[k].query);
      diverged += d;
    }
    return static_cast<double>(diverged) / static_cast<double>(ref.size());
  };
  EXPECT_EQ(rate(again), 0.0);
  EXPECT_GT(rate(sampled), 0.3);
  for (const auto& s : sampled)
    for (const auto& st : s.steps) EXPECT_EQ(st.sample_id, "bad");
}
