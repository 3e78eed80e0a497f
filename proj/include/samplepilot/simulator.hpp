#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "samplepilot/query.hpp"
#include "samplepilot/rng.hpp"
#include "samplepilot/sampling.hpp"
#include "samplepilot/table.hpp"

namespace samplepilot {

enum class SchemaKind { Filter, Group, Drill, Back };

// One weighted way to produce the next query. Filter terms are either a
// literal or min + fraction * (max - min) of the column.
struct QuerySchema {
  SchemaKind kind = SchemaKind::Back;
  double weight = 1.0;
  std::string attr;
  CmpOp cmp = CmpOp::Eq;
  std::string term;
  std::optional<double> fraction;
  std::string group_attr;
  AggFunc agg = AggFunc::Count;
  std::string agg_attr;

  bool result_conditioned() const noexcept { return kind == SchemaKind::Drill; }
};

struct IntentTemplate {
  std::string name;
  std::vector<std::vector<QuerySchema>> phases;  // phase i drives step i (last phase repeats)
  int min_length = 5;
  int max_length = 9;
};

struct SimulatorConfig {
  std::vector<IntentTemplate> templates;
  std::vector<double> intent_mixture;
  double drill_temperature = 0.05;
  std::uint64_t seed = 0;
};

// Throws InvalidConfig for bad weights, mixtures, lengths, or a drill phase
// not preceded by an all-Group phase. With a table, columns are checked too.
void validate_config(const SimulatorConfig& config, const Table* table = nullptr);

SimulatorConfig simulator_config_from_json(const nlohmann::json& j);
nlohmann::json simulator_config_to_json(const SimulatorConfig& config);
SimulatorConfig load_simulator_config(const std::filesystem::path& path);

// Softmax over bar value / max |bar| at the given temperature; a
// temperature of zero picks the first maximal bar.
std::size_t pick_bar(const DisplayResult& bars, double temperature, Rng& rng);

// State of one simulated analyst. Template and length come from the session
// seed; schema choice and drill choice use separate derived streams, so a
// different display only changes result-conditioned decisions.
class SessionRun {
 public:
  SessionRun(const SimulatorConfig& config, const Table& table, std::uint64_t session_seed);

  int template_id() const noexcept { return template_id_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t step() const noexcept { return step_; }
  bool done() const noexcept { return step_ >= length_; }
  // True when the last query replaced a drill whose display was empty.
  bool last_fallback() const noexcept { return fallback_; }

  // Next query given the last display and the current stack depth. Back is
  // never emitted at the root frame.
  Query next_query(const DisplayResult* last_display, std::size_t depth);

 private:
  Query resolve(const QuerySchema& schema) const;
  const QuerySchema& draw(const std::vector<const QuerySchema*>& options);

  const SimulatorConfig* config_;
  const Table* table_;
  int template_id_ = 0;
  std::size_t length_ = 0;
  std::size_t step_ = 0;
  bool fallback_ = false;
  Rng schema_rng_;
  Rng drill_rng_;
};

// Picks the data source for a query; nullptr means the full table.
using SourceChooser = std::function<const SampleHandle*(const SessionState& state, const Query& next, std::size_t step)>;

// Runs one session to completion. Session seeds are derived from the
// generator seed and the session index.
Session run_session(const SimulatorConfig& config, const Table& table, std::uint64_t session_seed,
                    std::uint64_t session_id, const SourceChooser& chooser = {}, const EngineOptions& engine = {});

std::uint64_t session_seed(std::uint64_t seed, std::uint64_t index) noexcept;

std::vector<Session> generate_sessions(const SimulatorConfig& config, const Table& table, std::size_t n,
                                       std::uint64_t seed, const SourceChooser& chooser = {},
                                       const EngineOptions& engine = {}, std::uint64_t first_index = 0);

// Number of distinct query sequences.
std::size_t unique_sessions(const std::vector<Session>& sessions);

// Default four-intent configuration for the synthetic flights table.
SimulatorConfig flights_templates();

}  // namespace samplepilot
