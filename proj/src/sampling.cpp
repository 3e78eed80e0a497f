#include "samplepilot/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "samplepilot/error.hpp"
#include "samplepilot/parallel.hpp"
#include "samplepilot/rng.hpp"

namespace samplepilot {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string percent(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g%%", tau * 100.0);
  return buf;
}

std::string cap_label(std::uint64_t cap) {
  if (cap >= 1000 && cap % 1000 == 0) return std::to_string(cap / 1000) + "k";
  return std::to_string(cap);
}

void check_rate(double tau) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "sampling rate must be in (0, 1]");
}

std::size_t require_column(const Table& table, const std::string& name) {
  if (auto idx = table.column_index(name)) return *idx;
  throw Error(ErrorCode::UnknownColumn, "strat column '" + name + "' not in table");
}

// Rows grouped by stratum key, strata ordered by key, rows ascending.
std::vector<std::vector<RowId>> strata_of(const Table& table, std::size_t col) {
  const auto keys = stratum_keys(table.column(col), table.stats(col));
  std::map<std::int64_t, std::vector<RowId>> groups;
  for (std::size_t r = 0; r < keys.size(); ++r) groups[keys[r]].push_back(static_cast<RowId>(r));
  std::vector<std::vector<RowId>> out;
  out.reserve(groups.size());
  for (auto& [_, rows] : groups) out.push_back(std::move(rows));
  return out;
}

std::vector<RowId> uniform_rows(std::size_t n, double tau, Rng& rng) {
  std::vector<RowId> rows;
  rows.reserve(static_cast<std::size_t>(static_cast<double>(n) * tau * 1.1) + 16);
  for (std::size_t r = 0; r < n; ++r)
    if (rng.bernoulli(tau)) rows.push_back(static_cast<RowId>(r));
  return rows;
}

// k distinct indices from [0, n) by partial Fisher-Yates.
std::vector<RowId> choose_distinct(std::vector<RowId> pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<RowId> all_rows(std::size_t n) {
  std::vector<RowId> rows(n);
  std::iota(rows.begin(), rows.end(), RowId{0});
  return rows;
}

}  // namespace

std::string default_sample_id(const SamplingStrategy& strategy) {
  return std::visit(
      Overloaded{
          [](const Uniform& s) { return "Uni@" + percent(s.tau); },
          [](const Systematic& s) { return "Sys@" + std::to_string(s.k); },
          [](const StratProportional& s) { return "Strat-" + s.column + "@" + percent(s.tau); },
          [](const StratAtMostK& s) { return "KStrat-" + s.column + "@" + cap_label(s.cap); },
          [](const Cluster& s) {
            const std::string k = s.n_clusters == 10 ? "" : std::to_string(s.n_clusters);
            return "Clus" + k + "@" + percent(s.tau);
          },
          [](const MaxMinDiversity& s) { return "MaxMin@" + std::to_string(s.size); },
          [](const MaxSumDiversity& s) { return "MaxSum@" + std::to_string(s.size); },
      },
      strategy);
}

std::string strategy_family(const SamplingStrategy& strategy) {
  return std::visit(Overloaded{
                        [](const Uniform&) { return std::string("uniform"); },
                        [](const Systematic&) { return std::string("systematic"); },
                        [](const StratProportional&) { return std::string("strat"); },
                        [](const StratAtMostK&) { return std::string("kstrat"); },
                        [](const Cluster&) { return std::string("cluster"); },
                        [](const MaxMinDiversity&) { return std::string("maxmin"); },
                        [](const MaxSumDiversity&) { return std::string("maxsum"); },
                    },
                    strategy);
}

nlohmann::json strategy_to_json(const SamplingStrategy& strategy) {
  using nlohmann::json;
  return std::visit(
      Overloaded{
          [](const Uniform& s) { return json{{"type", "uniform"}, {"tau", s.tau}}; },
          [](const Systematic& s) { return json{{"type", "systematic"}, {"k", s.k}}; },
          [](const StratProportional& s) {
            return json{{"type", "strat"}, {"column", s.column}, {"tau", s.tau}};
          },
          [](const StratAtMostK& s) {
            return json{{"type", "kstrat"}, {"column", s.column}, {"cap", s.cap}};
          },
          [](const Cluster& s) {
            return json{{"type", "cluster"}, {"n_clusters", s.n_clusters}, {"tau", s.tau}};
          },
          [](const MaxMinDiversity& s) { return json{{"type", "maxmin"}, {"size", s.size}}; },
          [](const MaxSumDiversity& s) { return json{{"type", "maxsum"}, {"size", s.size}}; },
      },
      strategy);
}

SamplingStrategy strategy_from_json(const nlohmann::json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "uniform") return Uniform{j.at("tau").get<double>()};
    if (type == "systematic") return Systematic{j.at("k").get<std::uint64_t>()};
    if (type == "strat")
      return StratProportional{j.at("column").get<std::string>(), j.at("tau").get<double>()};
    if (type == "kstrat")
      return StratAtMostK{j.at("column").get<std::string>(), j.at("cap").get<std::uint64_t>()};
    if (type == "cluster")
      return Cluster{j.value("n_clusters", std::uint64_t{10}), j.at("tau").get<double>()};
    if (type == "maxmin") return MaxMinDiversity{j.at("size").get<std::uint64_t>()};
    if (type == "maxsum") return MaxSumDiversity{j.at("size").get<std::uint64_t>()};
    throw Error(ErrorCode::InvalidConfig, "unknown sampling strategy type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad strategy: ") + e.what());
  }
}

bool SampleHandle::contains(RowId row) const {
  return std::binary_search(row_indices.begin(), row_indices.end(), row);
}

std::vector<std::int64_t> stratum_keys(const Column& column, const ColumnStats& stats) {
  constexpr std::int64_t kNullStratum = std::numeric_limits<std::int64_t>::min();
  std::vector<std::int64_t> keys(column.size());
  for (std::size_t r = 0; r < column.size(); ++r) {
    if (column.is_null(r)) {
      keys[r] = kNullStratum;
    } else if (column.type == ColumnType::Categorical) {
      keys[r] = column.codes[r];
    } else if (column.type == ColumnType::Integer) {
      keys[r] = static_cast<std::int64_t>(column.numbers[r]);
    } else {
      const double lo = *stats.min, hi = *stats.max;
      const double width = (hi - lo) / 10.0;
      std::int64_t bin = width > 0 ? static_cast<std::int64_t>((column.numbers[r] - lo) / width) : 0;
      keys[r] = std::clamp<std::int64_t>(bin, 0, 9);
    }
  }
  return keys;
}

GowerMetric::GowerMetric(const Table& table) : table_(&table) {
  inverse_range_.resize(table.column_count(), 0.0);
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    const auto& s = table.stats(c);
    if (s.min && s.max && *s.max > *s.min) inverse_range_[c] = 1.0 / (*s.max - *s.min);
  }
}

double GowerMetric::operator()(RowId a, RowId b) const {
  const auto& cols = table_->columns();
  if (cols.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto& col = cols[c];
    const bool na = col.is_null(a), nb = col.is_null(b);
    if (na || nb) {
      total += (na && nb) ? 0.0 : 1.0;
    } else if (col.numeric()) {
      total += std::min(1.0, std::fabs(col.numbers[a] - col.numbers[b]) * inverse_range_[c]);
    } else {
      total += col.codes[a] == col.codes[b] ? 0.0 : 1.0;
    }
  }
  return total / static_cast<double>(cols.size());
}

std::vector<std::uint32_t> kmeans_assign(const Table& table, std::uint64_t n_clusters,
                                         std::uint64_t seed, int iterations) {
  const std::size_t n = table.row_count();
  if (n_clusters == 0 || n_clusters > n)
    throw Error(ErrorCode::DegenerateCluster,
                std::to_string(n_clusters) + " clusters over " + std::to_string(n) + " rows");

  // Feature layout: one standardized slot per numeric column, one-hot slots
  // for the 32 most frequent categories of each categorical column.
  struct Slot {
    std::size_t column = 0;
    double mean = 0, inv_sd = 0;
    std::vector<int> onehot;  // code -> offset within the column block, -1 if unmapped
    std::size_t offset = 0;
  };
  std::vector<Slot> slots;
  std::size_t dims = 0;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    const auto& col = table.column(c);
    const auto& st = table.stats(c);
    Slot slot;
    slot.column = c;
    slot.offset = dims;
    if (col.numeric()) {
      slot.mean = st.mean.value_or(0.0);
      const double sd = st.stddev.value_or(0.0);
      slot.inv_sd = sd > 0 ? 1.0 / sd : 0.0;
      dims += 1;
    } else {
      std::vector<std::pair<std::size_t, std::int32_t>> freq;
      std::vector<std::size_t> counts(col.dictionary.size(), 0);
      for (auto code : col.codes)
        if (code != kNullCode) ++counts[static_cast<std::size_t>(code)];
      for (std::size_t i = 0; i < counts.size(); ++i)
        freq.emplace_back(counts[i], static_cast<std::int32_t>(i));
      std::sort(freq.begin(), freq.end(),
                [](auto& x, auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
      slot.onehot.assign(col.dictionary.size(), -1);
      const std::size_t keep = std::min<std::size_t>(32, freq.size());
      for (std::size_t i = 0; i < keep; ++i) slot.onehot[static_cast<std::size_t>(freq[i].second)] = static_cast<int>(i);
      dims += keep;
    }
    slots.push_back(std::move(slot));
  }
  if (dims == 0) dims = 1;

  std::vector<double> features(n * dims, 0.0);
  for (const auto& slot : slots) {
    const auto& col = table.column(slot.column);
    for (std::size_t r = 0; r < n; ++r) {
      double* row = &features[r * dims];
      if (col.numeric()) {
        row[slot.offset] = col.is_null(r) ? 0.0 : (col.numbers[r] - slot.mean) * slot.inv_sd;
      } else if (col.codes[r] != kNullCode) {
        const int off = slot.onehot[static_cast<std::size_t>(col.codes[r])];
        if (off >= 0) row[slot.offset + static_cast<std::size_t>(off)] = 1.0;
      }
    }
  }

  Rng rng(seed);
  const auto init = choose_distinct(all_rows(n), n_clusters, rng);
  std::vector<double> centers(n_clusters * dims);
  for (std::size_t k = 0; k < n_clusters; ++k)
    std::copy_n(&features[init[k] * dims], dims, &centers[k * dims]);

  std::vector<std::uint32_t> label(n, 0);
  std::vector<double> sums(n_clusters * dims);
  std::vector<std::size_t> counts(n_clusters);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* x = &features[r * dims];
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_k = 0;
      for (std::size_t k = 0; k < n_clusters; ++k) {
        const double* m = &centers[k * dims];
        double d = 0.0;
        for (std::size_t j = 0; j < dims; ++j) {
          const double diff = x[j] - m[j];
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          best_k = static_cast<std::uint32_t>(k);
        }
      }
      label[r] = best_k;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t r = 0; r < n; ++r) {
      ++counts[label[r]];
      for (std::size_t j = 0; j < dims; ++j) sums[label[r] * dims + j] += features[r * dims + j];
    }
    for (std::size_t k = 0; k < n_clusters; ++k) {
      if (counts[k] == 0) continue;  // empty cluster keeps its previous center
      for (std::size_t j = 0; j < dims; ++j)
        centers[k * dims + j] = sums[k * dims + j] / static_cast<double>(counts[k]);
    }
  }
  return label;
}

DiversityTrace greedy_diversity(const Table& table, std::uint64_t size,
                                DiversityObjective objective, std::uint64_t seed,
                                std::size_t candidate_pool) {
  const std::size_t n = table.row_count();
  if (size == 0) throw Error(ErrorCode::InvalidArgument, "diversity size must be positive");
  if (size > n)
    throw Error(ErrorCode::SizeExceedsTable,
                "diversity size " + std::to_string(size) + " > " + std::to_string(n) + " rows");
  Rng rng(seed);
  const std::size_t pool_size =
      std::min<std::size_t>(n, std::max<std::size_t>(candidate_pool, 2 * size));
  auto pool = pool_size == n ? all_rows(n) : choose_distinct(all_rows(n), pool_size, rng);
  std::sort(pool.begin(), pool.end());

  const GowerMetric dist(table);
  DiversityTrace trace;
  if (size == 1 || pool.size() == 1) {
    trace.order.push_back(pool[rng.below(pool.size())]);
    return trace;
  }

  // Seed pair: the farthest pair inside the candidate pool.
  std::size_t best_a = 0, best_b = 1;
  double best_d = -1.0;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const double d = dist(pool[i], pool[j]);
      if (d > best_d) {
        best_d = d;
        best_a = i;
        best_b = j;
      }
    }

  std::vector<char> taken(pool.size(), 0);
  std::vector<double> score(pool.size(), 0.0);  // min-distance or distance-sum to selection
  const bool maxmin = objective == DiversityObjective::MaxMin;
  if (maxmin) std::fill(score.begin(), score.end(), std::numeric_limits<double>::infinity());
  auto add = [&](std::size_t idx) {
    taken[idx] = 1;
    trace.order.push_back(pool[idx]);
    for (std::size_t c = 0; c < pool.size(); ++c) {
      if (taken[c]) continue;
      const double d = dist(pool[c], pool[idx]);
      score[c] = maxmin ? std::min(score[c], d) : score[c] + d;
    }
  };
  add(best_a);
  add(best_b);
  trace.objective.push_back(best_d);
  double running_min = best_d;
  while (trace.order.size() < size) {
    std::size_t pick = pool.size();
    for (std::size_t c = 0; c < pool.size(); ++c) {
      if (taken[c]) continue;
      if (pick == pool.size() || score[c] > score[pick]) pick = c;
    }
    const double value = score[pick];
    add(pick);
    if (maxmin) {
      running_min = std::min(running_min, value);
      trace.objective.push_back(running_min);
    } else {
      trace.objective.push_back(value);
    }
  }
  return trace;
}

SampleHandle draw_sample(const Table& table, const SamplingStrategy& strategy,
                         std::uint64_t seed, const SamplingOptions& options) {
  const std::size_t n = table.row_count();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "cannot sample an empty table");
  Rng rng(seed);
  SampleHandle handle;
  handle.strategy = strategy;
  handle.sample_id = default_sample_id(strategy);

  std::visit(
      Overloaded{
          [&](const Uniform& s) {
            check_rate(s.tau);
            handle.row_indices = uniform_rows(n, s.tau, rng);
          },
          [&](const Systematic& s) {
            if (s.k == 0) throw Error(ErrorCode::InvalidArgument, "systematic k must be positive");
            for (std::uint64_t r = rng.below(s.k); r < n; r += s.k)
              handle.row_indices.push_back(static_cast<RowId>(r));
          },
          [&](const StratProportional& s) {
            check_rate(s.tau);
            const auto col = require_column(table, s.column);
            for (const auto& stratum : strata_of(table, col))
              for (RowId r : stratum)
                if (rng.bernoulli(s.tau)) handle.row_indices.push_back(r);
            handle.strat_columns_used = {s.column};
          },
          [&](const StratAtMostK& s) {
            if (s.cap == 0) throw Error(ErrorCode::InvalidArgument, "at-most-K cap must be positive");
            const auto col = require_column(table, s.column);
            for (auto& stratum : strata_of(table, col)) {
              auto picked = choose_distinct(std::move(stratum), s.cap, rng);
              handle.row_indices.insert(handle.row_indices.end(), picked.begin(), picked.end());
            }
            handle.strat_columns_used = {s.column};
          },
          [&](const Cluster& s) {
            check_rate(s.tau);
            const auto labels = kmeans_assign(table, s.n_clusters, rng.next(), options.kmeans_iterations);
            std::vector<std::vector<RowId>> members(s.n_clusters);
            for (std::size_t r = 0; r < n; ++r) members[labels[r]].push_back(static_cast<RowId>(r));
            for (const auto& rows : members)
              for (RowId r : rows)
                if (rng.bernoulli(s.tau)) handle.row_indices.push_back(r);
          },
          [&](const MaxMinDiversity& s) {
            handle.row_indices =
                greedy_diversity(table, s.size, DiversityObjective::MaxMin, rng.next(), options.diversity_pool).order;
          },
          [&](const MaxSumDiversity& s) {
            handle.row_indices =
                greedy_diversity(table, s.size, DiversityObjective::MaxSum, rng.next(), options.diversity_pool).order;
          },
      },
      strategy);

  std::sort(handle.row_indices.begin(), handle.row_indices.end());
  handle.effective_sr = static_cast<double>(handle.row_indices.size()) / static_cast<double>(n);
  return handle;
}

const SampleHandle* SampleCatalog::find(std::string_view sample_id) const noexcept {
  for (const auto& h : handles)
    if (h.sample_id == sample_id) return &h;
  return nullptr;
}

std::optional<std::size_t> SampleCatalog::index_of(std::string_view sample_id) const noexcept {
  for (std::size_t i = 0; i < handles.size(); ++i)
    if (handles[i].sample_id == sample_id) return i;
  return std::nullopt;
}

SampleCatalog build_catalog(const Table& table, const std::vector<StrategySpec>& strategies,
                            std::uint64_t seed, const SamplingOptions& options) {
  if (strategies.empty()) throw Error(ErrorCode::InvalidArgument, "no sampling strategies given");
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& spec : strategies) {
    ids.push_back(spec.sample_id.empty() ? default_sample_id(spec.strategy) : spec.sample_id);
    if (!seen.insert(ids.back()).second)
      throw Error(ErrorCode::DuplicateSampleId, "sample id '" + ids.back() + "' repeats");
  }
  SampleCatalog catalog;
  catalog.parent_name = table.name();
  catalog.parent_hash = table.content_hash();
  catalog.parent_rows = table.row_count();
  catalog.seed = seed;
  catalog.handles.resize(strategies.size());
  parallel_for(strategies.size(), [&](std::size_t i) {
    auto handle = draw_sample(table, strategies[i].strategy, derive_seed(seed, fnv1a(ids[i])), options);
    handle.sample_id = ids[i];
    catalog.handles[i] = std::move(handle);
  });
  return catalog;
}

namespace {

std::string index_file_name(std::size_t position, const std::string& sample_id) {
  std::string safe;
  for (char c : sample_id) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
      safe.push_back(c);
    else if (c == '%')
      safe += "pct";
    else
      safe.push_back('_');
  }
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%03zu_", position);
  return prefix + safe + ".idx";
}

}  // namespace

void save_catalog(const SampleCatalog& catalog, const std::filesystem::path& dir,
                  const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "samplepilot.catalog";
  manifest["version"] = 1;
  manifest["config_hash"] = config_hash;
  manifest["parent"] = {{"name", catalog.parent_name},
                        {"content_hash", catalog.parent_hash},
                        {"rows", catalog.parent_rows}};
  manifest["seed"] = catalog.seed;
  manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < catalog.handles.size(); ++i) {
    const auto& h = catalog.handles[i];
    const auto file = index_file_name(i, h.sample_id);
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / file).string());
    for (RowId r : h.row_indices) {
      unsigned char bytes[8];
      std::uint64_t v = r;
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(v >> (8 * b));
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    manifest["samples"].push_back({{"sample_id", h.sample_id},
                                   {"strategy", strategy_to_json(h.strategy)},
                                   {"row_count", h.row_indices.size()},
                                   {"effective_sr", h.effective_sr},
                                   {"strat_columns", h.strat_columns_used},
                                   {"index_file", file}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

SampleCatalog load_catalog(const std::filesystem::path& dir, const Table& parent) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorCode::Io, "missing manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad manifest: ") + e.what());
  }
  SampleCatalog catalog;
  catalog.parent_name = manifest.at("parent").at("name").get<std::string>();
  catalog.parent_hash = manifest.at("parent").at("content_hash").get<std::string>();
  catalog.parent_rows = manifest.at("parent").at("rows").get<std::size_t>();
  catalog.seed = manifest.at("seed").get<std::uint64_t>();
  if (catalog.parent_hash != parent.content_hash())
    throw Error(ErrorCode::InvalidConfig, "catalog was built for a different table");
  for (const auto& s : manifest.at("samples")) {
    SampleHandle h;
    h.sample_id = s.at("sample_id").get<std::string>();
    h.strategy = strategy_from_json(s.at("strategy"));
    h.strat_columns_used = s.at("strat_columns").get<std::vector<std::string>>();
    std::ifstream idx(dir / s.at("index_file").get<std::string>(), std::ios::binary);
    if (!idx) throw Error(ErrorCode::Io, "missing index file for " + h.sample_id);
    unsigned char bytes[8];
    while (idx.read(reinterpret_cast<char*>(bytes), 8)) {
      std::uint64_t v = 0;
      for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      if (v >= parent.row_count()) throw Error(ErrorCode::Io, "index out of range in " + h.sample_id);
      h.row_indices.push_back(static_cast<RowId>(v));
    }
    h.effective_sr = static_cast<double>(h.row_indices.size()) / static_cast<double>(parent.row_count());
    catalog.handles.push_back(std::move(h));
  }
  return catalog;
}

std::vector<StrategySpec> standard_grid(const GridOptions& grid, std::size_t row_count) {
  std::vector<StrategySpec> specs;
  for (double tau : grid.rates) specs.push_back({Uniform{tau}, {}});
  for (auto k : grid.systematic_k) specs.push_back({Systematic{k}, {}});
  for (double tau : grid.rates) specs.push_back({Cluster{grid.n_clusters, tau}, {}});
  if (grid.diversity_fraction > 0) {
    const auto size = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(grid.diversity_fraction * static_cast<double>(row_count))));
    const auto label = percent(grid.diversity_fraction);
    specs.push_back({MaxMinDiversity{size}, "MaxMin@" + label});
    specs.push_back({MaxSumDiversity{size}, "MaxSum@" + label});
  }
  for (const auto& col : grid.kstrat_columns)
    for (auto cap : grid.kstrat_caps) specs.push_back({StratAtMostK{col, cap}, {}});
  for (const auto& col : grid.strat_columns)
    for (double tau : grid.rates) specs.push_back({StratProportional{col, tau}, {}});
  return specs;
}

nlohmann::json grid_to_json(const GridOptions& g) {
  return {{"strat_columns", g.strat_columns},   {"kstrat_columns", g.kstrat_columns},
          {"rates", g.rates},                   {"systematic_k", g.systematic_k},
          {"kstrat_caps", g.kstrat_caps},       {"n_clusters", g.n_clusters},
          {"diversity_fraction", g.diversity_fraction}};
}

GridOptions grid_from_json(const nlohmann::json& j) {
  GridOptions g;
  try {
    g.strat_columns = j.value("strat_columns", g.strat_columns);
    g.kstrat_columns = j.value("kstrat_columns", g.kstrat_columns);
    g.rates = j.value("rates", g.rates);
    g.systematic_k = j.value("systematic_k", g.systematic_k);
    g.kstrat_caps = j.value("kstrat_caps", g.kstrat_caps);
    g.n_clusters = j.value("n_clusters", g.n_clusters);
    g.diversity_fraction = j.value("diversity_fraction", g.diversity_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad grid: ") + e.what());
  }
  return g;
}

}  // namespace samplepilot
