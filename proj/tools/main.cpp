// Command-line driver for the sampling pipeline and the session service.
#include <csignal>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "samplepilot/error.hpp"
#include "samplepilot/pipeline.hpp"
#include "samplepilot/service.hpp"

using namespace samplepilot;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArgument:
    case ErrorCode::MissingSample:
      return kExitConfig;
    case ErrorCode::NonFiniteLoss:
      return kExitDivergence;
    default:
      return kExitData;
  }
}

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::string k_range;
  std::vector<std::string> ablate;
  std::string action_space;
  std::optional<double> delta, beta, gamma;
};

RunConfig effective_config(const Overrides& o, const std::string& command) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.out.empty()) c.out = o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.n) {
    if (command == "simulate") c.simulate_n = *o.n;
    else if (command == "evaluate") c.eval_n = *o.n;
    else c.simulate_n = c.eval_n = *o.n;
  }
  if (!o.k_range.empty()) {
    const auto colon = o.k_range.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("no colon");
      c.k_min = std::stoi(o.k_range.substr(0, colon));
      c.k_max = std::stoi(o.k_range.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "--k-range expects MIN:MAX");
    }
    if (c.k_min < 1 || c.k_max < c.k_min) throw Error(ErrorCode::InvalidConfig, "--k-range must satisfy 1 <= MIN <= MAX");
  }
  if (!o.ablate.empty()) {
    for (const auto& a : o.ablate) ablate_reward(c.hyperparams.reward, a);
    c.ablate_reward = o.ablate;
  }
  if (!o.action_space.empty()) c.action_space = o.action_space;
  if (o.delta) c.hyperparams.reward.delta = *o.delta;
  if (o.beta) c.hyperparams.reward.beta = *o.beta;
  if (o.gamma) c.hyperparams.reward.gamma = *o.gamma;
  return c;
}

HttpFrontend* g_frontend = nullptr;

void serve(const RunConfig& c) {
  SessionService service({load_service_dataset(c.out)}, config_hash(c));
  const auto [host, port] = bind_address_from_env();
  HttpFrontend http(service);
  g_frontend = &http;
  std::signal(SIGINT, [](int) { if (g_frontend) g_frontend->stop(); });
  std::signal(SIGTERM, [](int) { if (g_frontend) g_frontend->stop(); });
  std::cerr << "serving " << c.out.string() << " on " << host << ":" << port << "\n";
  if (!http.listen(host, port)) throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
  g_frontend = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate exploratory analysis: samples, simulator, topic model, agent, evaluation"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "Run configuration (JSON)");
  app.add_option("--out", o.out, "Output directory (overrides the config)");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--n", o.n, "Session count for simulate / evaluate");
  app.add_option("--k-range", o.k_range, "Intent count range MIN:MAX");
  app.add_option("--ablate-reward", o.ablate, "Drop reward components")->check(CLI::IsMember({"term", "intent", "latency"}));
  app.add_option("--action-space", o.action_space, "Action subset")
      ->check(CLI::IsMember({"uniform", "uniform+strat", "uniform+strat+cluster", "all"}));
  app.add_option("--delta", o.delta, "Weight of the topic term in the intent reward");
  app.add_option("--beta", o.beta, "Weight of the intent reward");
  app.add_option("--gamma", o.gamma, "Weight of the termination reward");

  const std::vector<std::pair<std::string, void (*)(const RunConfig&)>> commands{
      {"ingest", run_ingest},           {"build-samples", run_build_samples}, {"simulate", run_simulate},
      {"train-btm", run_train_btm},     {"train-agent", run_train_agent},     {"evaluate", run_evaluate},
      {"report", run_report},           {"pipeline", run_pipeline},           {"serve", serve}};
  const std::map<std::string, std::string> help{
      {"ingest", "Load the dataset and write table.csv / table.json"},
      {"build-samples", "Draw the sampling grid into samples/"},
      {"simulate", "Generate full-data analyst sessions"},
      {"train-btm", "Pick K by UCI coherence and train the topic model"},
      {"train-agent", "Train the sample-selection agent"},
      {"evaluate", "Score the agent and baselines against a full-data reference"},
      {"report", "Write comparison tables and plot data"},
      {"pipeline", "Run every step from ingest to report"},
      {"serve", "Start the HTTP session service (SAMPLEPILOT_BIND=host:port)"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  for (const auto& [name, fn] : commands) {
    if (!app.got_subcommand(name)) continue;
    try {
      fn(effective_config(o, name));
      return 0;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return exit_code(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitData;
    }
  }
  return kExitConfig;
}
