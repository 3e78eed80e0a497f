#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "samplepilot/query.hpp"
#include "samplepilot/table.hpp"

namespace samplepilot {

using TokenSeq = std::vector<std::string>;

// "F:attr:cmp:term" (numeric terms become their decile "d0".."d9"),
// "G:group_attr:agg:agg_attr" (agg_attr is ∅ for Count) or "B".
std::string query_token(const Table& table, const Query& q);
TokenSeq tokenize(const Table& table, std::span<const Query> queries);
TokenSeq tokenize(const Table& table, const std::vector<StepRecord>& steps);

// All C(m, 2) pairs (i < j) of a sequence; throws TooShort below 2 tokens.
std::vector<std::pair<std::string, std::string>> extract_biterms(const TokenSeq& tokens);

struct BtmParams {
  int k = 4;
  double alpha = -1.0;  // negative: 50 / k
  double beta = 0.01;
  int iterations = 500;
  std::uint64_t seed = 1;
};

struct IntentDistribution {
  std::vector<double> probs;
  int argmax_intent = 0;
};

struct BtmModel {
  int k = 0;
  double alpha = 0.0;
  double beta = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;
  std::unordered_map<std::string, int> word_id;
  std::vector<double> topic_word;  // k rows of |vocabulary|
  std::vector<double> topic_prior;

  double word_prob(int topic, int word) const {
    return topic_word[static_cast<std::size_t>(topic) * vocabulary.size() + static_cast<std::size_t>(word)];
  }
};

// Called after every Gibbs sweep with the per-topic biterm counts.
using SweepObserver = std::function<void(int sweep, const std::vector<std::size_t>& topic_counts)>;

// Collapsed Gibbs sampling. Sequences shorter than two tokens contribute no
// biterms; throws EmptyCorpus when no biterm remains.
BtmModel train_btm(const std::vector<TokenSeq>& corpus, const BtmParams& params,
                   const SweepObserver& observer = {});

// Sums P(topic | biterm) over the sequence's biterms. Unknown tokens are
// ignored; with no usable biterm the topic prior is returned.
IntentDistribution infer(const BtmModel& model, const TokenSeq& tokens);
IntentDistribution make_distribution(std::vector<double> probs);

// log p(a,b) / (p(a) p(b)) with document frequencies over the corpus;
// nullopt when the pair never co-occurs.
std::optional<double> uci_pair(const std::vector<TokenSeq>& corpus, const std::string& a, const std::string& b);

// Mean over intents of the mean pair score among the distinct tokens of the
// sequences assigned to each intent. Pairs that never co-occur score 0.
double uci_coherence(const std::vector<TokenSeq>& corpus, const std::vector<int>& intent_of_sequence, int k);

struct KSelection {
  int best_k = 0;
  std::map<int, double> scores;
};

// Trains one model per K in [k_min, k_max] and keeps the most coherent
// (ties go to the smaller K).
KSelection uci_select_k(const std::vector<TokenSeq>& corpus, int k_min, int k_max, BtmParams params);

nlohmann::json btm_to_json(const BtmModel& model);
BtmModel btm_from_json(const nlohmann::json& j);
void save_btm(const BtmModel& model, const std::filesystem::path& path);
BtmModel load_btm(const std::filesystem::path& path);

}  // namespace samplepilot
