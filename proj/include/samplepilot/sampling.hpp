#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "samplepilot/table.hpp"

namespace samplepilot {

struct Uniform {
  double tau = 0.01;
};
struct Systematic {
  std::uint64_t k = 100;
};
struct StratProportional {
  std::string column;
  double tau = 0.01;
};
struct StratAtMostK {
  std::string column;
  std::uint64_t cap = 100;
};
struct Cluster {
  std::uint64_t n_clusters = 10;
  double tau = 0.01;
};
struct MaxMinDiversity {
  std::uint64_t size = 100;
};
struct MaxSumDiversity {
  std::uint64_t size = 100;
};

using SamplingStrategy = std::variant<Uniform, Systematic, StratProportional, StratAtMostK,
                                      Cluster, MaxMinDiversity, MaxSumDiversity>;

// Short name in the Uni@1% / Sys@100 / Strat-col@5% / KStrat-col@2k style.
std::string default_sample_id(const SamplingStrategy& strategy);
// "uniform", "systematic", "strat", "kstrat", "cluster", "maxmin" or "maxsum".
std::string strategy_family(const SamplingStrategy& strategy);
nlohmann::json strategy_to_json(const SamplingStrategy& strategy);
SamplingStrategy strategy_from_json(const nlohmann::json& j);

struct SampleHandle {
  std::string sample_id;
  std::vector<RowId> row_indices;  // sorted, unique
  double effective_sr = 0.0;       // |row_indices| / parent rows
  SamplingStrategy strategy;
  std::vector<std::string> strat_columns_used;  // sorted; empty unless stratified

  bool contains(RowId row) const;
};

struct SamplingOptions {
  std::size_t diversity_pool = 2000;
  int kmeans_iterations = 25;
};

SampleHandle draw_sample(const Table& table, const SamplingStrategy& strategy,
                         std::uint64_t seed, const SamplingOptions& options = {});

// Stratum key per row: category code, integer value, or equal-width decile
// for reals. Nulls share one stratum.
std::vector<std::int64_t> stratum_keys(const Column& column, const ColumnStats& stats);

// Cluster label per row from seeded k-means over standardized numeric and
// one-hot categorical features.
std::vector<std::uint32_t> kmeans_assign(const Table& table, std::uint64_t n_clusters,
                                         std::uint64_t seed, int iterations);

// Mean per-column Gower distance in [0, 1].
class GowerMetric {
 public:
  explicit GowerMetric(const Table& table);
  double operator()(RowId a, RowId b) const;

 private:
  const Table* table_;
  std::vector<double> inverse_range_;
};

enum class DiversityObjective { MaxMin, MaxSum };

struct DiversityTrace {
  std::vector<RowId> order;  // rows in the order the greedy added them
  // MaxMin: minimum pairwise distance of the selected set after each step.
  // MaxSum: distance-sum gain of each added row. Both start at the seed pair.
  std::vector<double> objective;
};

DiversityTrace greedy_diversity(const Table& table, std::uint64_t size,
                                DiversityObjective objective, std::uint64_t seed,
                                std::size_t candidate_pool);

struct StrategySpec {
  SamplingStrategy strategy;
  std::string sample_id;  // empty: default_sample_id(strategy)
};

class SampleCatalog {
 public:
  std::string parent_name;
  std::string parent_hash;
  std::size_t parent_rows = 0;
  std::uint64_t seed = 0;
  std::vector<SampleHandle> handles;

  const SampleHandle* find(std::string_view sample_id) const noexcept;
  std::optional<std::size_t> index_of(std::string_view sample_id) const noexcept;
  std::size_t size() const noexcept { return handles.size(); }
};

// Per-handle seed is derived from the catalog seed and the sample id.
SampleCatalog build_catalog(const Table& table, const std::vector<StrategySpec>& strategies,
                            std::uint64_t seed, const SamplingOptions& options = {});

// Writes manifest.json plus one little-endian u64 index file per sample.
void save_catalog(const SampleCatalog& catalog, const std::filesystem::path& dir,
                  const std::string& config_hash = {});
SampleCatalog load_catalog(const std::filesystem::path& dir, const Table& parent);

struct GridOptions {
  std::vector<std::string> strat_columns;   // proportional strata (4 in the full grid)
  std::vector<std::string> kstrat_columns;  // at-most-K strata (2 in the full grid)
  std::vector<double> rates{0.01, 0.05, 0.1};
  std::vector<std::uint64_t> systematic_k{100, 20, 10};
  std::vector<std::uint64_t> kstrat_caps{2000, 10000, 20000};
  std::uint64_t n_clusters = 10;
  double diversity_fraction = 0.05;
};

// Uniform, systematic and cluster at every rate; MaxMin and MaxSum at the
// diversity fraction; at-most-K per (column, cap); proportional per
// (column, rate). With 4 + 2 columns this is the 29-action grid.
std::vector<StrategySpec> standard_grid(const GridOptions& grid, std::size_t row_count);

nlohmann::json grid_to_json(const GridOptions& grid);
GridOptions grid_from_json(const nlohmann::json& j);

}  // namespace samplepilot
