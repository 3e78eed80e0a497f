#include "samplepilot/intent.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "samplepilot/error.hpp"
#include "samplepilot/rng.hpp"

namespace samplepilot {

namespace {

constexpr int kModelFormat = 1;
const std::string kNone = "\xe2\x88\x85";  // ∅

struct Biterm {
  int a = 0, b = 0;
};

}  // namespace

std::string query_token(const Table& table, const Query& q) {
  switch (q.op) {
    case OpType::Back: return "B";
    case OpType::Group:
      return "G:" + q.group_attr + ":" + std::string(to_string(q.agg)) + ":" +
             (q.agg == AggFunc::Count || q.agg_attr.empty() ? kNone : q.agg_attr);
    case OpType::Filter: {
      std::string term = q.term;
      const auto idx = table.column_index(q.attr);
      if (idx && table.column(*idx).numeric() && q.cmp != CmpOp::Contains) {
        double v = 0;
        const auto* end = q.term.data() + q.term.size();
        const auto [ptr, ec] = std::from_chars(q.term.data(), end, v);
        if (ec == std::errc{} && ptr == end) term = "d" + std::to_string(decile_bucket(table.stats(*idx), v));
      }
      return "F:" + q.attr + ":" + std::string(to_string(q.cmp)) + ":" + term;
    }
  }
  return "B";
}

TokenSeq tokenize(const Table& table, std::span<const Query> queries) {
  TokenSeq out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(query_token(table, q));
  return out;
}

TokenSeq tokenize(const Table& table, const std::vector<StepRecord>& steps) {
  TokenSeq out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(query_token(table, s.query));
  return out;
}

std::vector<std::pair<std::string, std::string>> extract_biterms(const TokenSeq& tokens) {
  if (tokens.size() < 2) throw Error(ErrorCode::TooShort, "a biterm needs at least two tokens");
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(tokens.size() * (tokens.size() - 1) / 2);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = i + 1; j < tokens.size(); ++j) out.emplace_back(tokens[i], tokens[j]);
  return out;
}

IntentDistribution make_distribution(std::vector<double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (total > 0.0)
    for (double& p : probs) p /= total;
  IntentDistribution d;
  d.argmax_intent = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  d.probs = std::move(probs);
  return d;
}

BtmModel train_btm(const std::vector<TokenSeq>& corpus, const BtmParams& params, const SweepObserver& observer) {
  if (params.k < 1) throw Error(ErrorCode::InvalidArgument, "K must be positive");
  if (params.iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be non-negative");
  BtmModel m;
  m.k = params.k;
  m.alpha = params.alpha > 0 ? params.alpha : 50.0 / params.k;
  m.beta = params.beta;
  m.iterations = params.iterations;
  m.seed = params.seed;

  // Vocabulary in sorted order so ids do not depend on corpus order.
  std::set<std::string> words;
  for (const auto& seq : corpus)
    if (seq.size() >= 2) words.insert(seq.begin(), seq.end());
  m.vocabulary.assign(words.begin(), words.end());
  for (std::size_t i = 0; i < m.vocabulary.size(); ++i) m.word_id[m.vocabulary[i]] = static_cast<int>(i);

  std::vector<Biterm> biterms;
  for (const auto& seq : corpus) {
    if (seq.size() < 2) continue;
    for (std::size_t i = 0; i < seq.size(); ++i)
      for (std::size_t j = i + 1; j < seq.size(); ++j)
        biterms.push_back({m.word_id.at(seq[i]), m.word_id.at(seq[j])});
  }
  if (biterms.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus yields no biterms");

  const std::size_t K = static_cast<std::size_t>(m.k);
  const std::size_t W = m.vocabulary.size();
  const double wbeta = static_cast<double>(W) * m.beta;
  std::vector<std::size_t> nz(K, 0);
  std::vector<std::size_t> nwz(K * W, 0);
  std::vector<int> z(biterms.size());

  // Initial topics come from hashing the biterm's words with the seed, so a
  // repeated corpus starts from exactly doubled counts.
  for (std::size_t i = 0; i < biterms.size(); ++i) {
    const auto& b = biterms[i];
    const std::uint64_t h = derive_seed(params.seed, fnv1a(m.vocabulary[static_cast<std::size_t>(b.a)] + "\x1f" +
                                                           m.vocabulary[static_cast<std::size_t>(b.b)]));
    z[i] = static_cast<int>(h % K);
    ++nz[static_cast<std::size_t>(z[i])];
    ++nwz[static_cast<std::size_t>(z[i]) * W + static_cast<std::size_t>(b.a)];
    ++nwz[static_cast<std::size_t>(z[i]) * W + static_cast<std::size_t>(b.b)];
  }

  Rng rng(derive_seed(params.seed, 0x6269));
  std::vector<double> p(K);
  for (int sweep = 0; sweep < params.iterations; ++sweep) {
    for (std::size_t i = 0; i < biterms.size(); ++i) {
      const auto a = static_cast<std::size_t>(biterms[i].a), b = static_cast<std::size_t>(biterms[i].b);
      auto t = static_cast<std::size_t>(z[i]);
      --nz[t];
      --nwz[t * W + a];
      --nwz[t * W + b];
      for (std::size_t k = 0; k < K; ++k) {
        const double denom = 2.0 * static_cast<double>(nz[k]) + wbeta;
        p[k] = (static_cast<double>(nz[k]) + m.alpha) * (static_cast<double>(nwz[k * W + a]) + m.beta) *
               (static_cast<double>(nwz[k * W + b]) + m.beta) / (denom * (denom + 1.0));
      }
      t = rng.categorical(p);
      z[i] = static_cast<int>(t);
      ++nz[t];
      ++nwz[t * W + a];
      ++nwz[t * W + b];
    }
    if (observer) observer(sweep, nz);
  }

  m.topic_prior.resize(K);
  m.topic_word.assign(K * W, 0.0);
  const double nb = static_cast<double>(biterms.size());
  for (std::size_t k = 0; k < K; ++k) {
    m.topic_prior[k] = (static_cast<double>(nz[k]) + m.alpha) / (nb + static_cast<double>(K) * m.alpha);
    const double denom = 2.0 * static_cast<double>(nz[k]) + wbeta;
    for (std::size_t w = 0; w < W; ++w)
      m.topic_word[k * W + w] = (static_cast<double>(nwz[k * W + w]) + m.beta) / denom;
  }
  return m;
}

IntentDistribution infer(const BtmModel& m, const TokenSeq& tokens) {
  std::vector<int> ids;
  for (const auto& t : tokens)
    if (auto it = m.word_id.find(t); it != m.word_id.end()) ids.push_back(it->second);
  const std::size_t K = static_cast<std::size_t>(m.k);
  std::vector<double> acc(K, 0.0), pb(K);
  std::size_t used = 0;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        pb[k] = m.topic_prior[k] * m.word_prob(static_cast<int>(k), ids[i]) * m.word_prob(static_cast<int>(k), ids[j]);
        total += pb[k];
      }
      if (!(total > 0.0)) continue;
      for (std::size_t k = 0; k < K; ++k) acc[k] += pb[k] / total;
      ++used;
    }
  if (used == 0) return make_distribution(m.topic_prior);
  return make_distribution(std::move(acc));
}

namespace {

// Document frequency of each token and of each co-occurring token pair.
struct DocFreq {
  std::size_t docs = 0;
  std::map<std::string, std::size_t> single;
  std::map<std::pair<std::string, std::string>, std::size_t> pair;

  explicit DocFreq(const std::vector<TokenSeq>& corpus) : docs(corpus.size()) {
    for (const auto& seq : corpus) {
      std::set<std::string> u(seq.begin(), seq.end());
      for (const auto& w : u) ++single[w];
      for (auto i = u.begin(); i != u.end(); ++i)
        for (auto j = std::next(i); j != u.end(); ++j) ++pair[{*i, *j}];
    }
  }

  std::optional<double> score(const std::string& a, const std::string& b) const {
    const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    const auto it = pair.find(key);
    if (it == pair.end() || docs == 0) return std::nullopt;
    const double m = static_cast<double>(docs);
    const double pab = static_cast<double>(it->second) / m;
    const double pa = static_cast<double>(single.at(a)) / m;
    const double pb = static_cast<double>(single.at(b)) / m;
    return std::log(pab / (pa * pb));
  }
};

}  // namespace

std::optional<double> uci_pair(const std::vector<TokenSeq>& corpus, const std::string& a, const std::string& b) {
  return DocFreq(corpus).score(a, b);
}

double uci_coherence(const std::vector<TokenSeq>& corpus, const std::vector<int>& intent_of_sequence, int k) {
  if (intent_of_sequence.size() != corpus.size())
    throw Error(ErrorCode::InvalidArgument, "one intent per sequence is required");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be positive");
  const DocFreq df(corpus);
  std::vector<std::set<std::string>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    members.at(static_cast<std::size_t>(intent_of_sequence[i])).insert(corpus[i].begin(), corpus[i].end());
  double total = 0.0;
  for (const auto& words : members) {
    if (words.size() < 2) continue;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (auto i = words.begin(); i != words.end(); ++i)
      for (auto j = std::next(i); j != words.end(); ++j) {
        sum += df.score(*i, *j).value_or(0.0);
        ++pairs;
      }
    total += sum / static_cast<double>(pairs);
  }
  return total / static_cast<double>(k);
}

KSelection uci_select_k(const std::vector<TokenSeq>& corpus, int k_min, int k_max, BtmParams params) {
  if (k_min < 2 || k_max > 15 || k_min > k_max)
    throw Error(ErrorCode::InvalidArgument, "K range must lie within [2, 15]");
  KSelection sel;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    params.k = k;
    params.alpha = -1.0;
    const auto model = train_btm(corpus, params);
    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const auto& seq : corpus) labels.push_back(infer(model, seq).argmax_intent);
    const double score = uci_coherence(corpus, labels, k);
    sel.scores[k] = score;
    if (score > best + 1e-12) {
      best = score;
      sel.best_k = k;
    }
  }
  return sel;
}

nlohmann::json btm_to_json(const BtmModel& m) {
  return {{"format", "btm"},
          {"version", kModelFormat},
          {"k", m.k},
          {"alpha", m.alpha},
          {"beta", m.beta},
          {"iterations", m.iterations},
          {"seed", m.seed},
          {"vocabulary", m.vocabulary},
          {"topic_word", m.topic_word},
          {"topic_prior", m.topic_prior}};
}

BtmModel btm_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "btm" || j.at("version").get<int>() != kModelFormat)
      throw Error(ErrorCode::InvalidConfig, "unsupported topic model format");
    BtmModel m;
    m.k = j.at("k").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.beta = j.at("beta").get<double>();
    m.iterations = j.at("iterations").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    m.topic_word = j.at("topic_word").get<std::vector<double>>();
    m.topic_prior = j.at("topic_prior").get<std::vector<double>>();
    if (m.k < 1 || m.topic_prior.size() != static_cast<std::size_t>(m.k) ||
        m.topic_word.size() != m.vocabulary.size() * static_cast<std::size_t>(m.k))
      throw Error(ErrorCode::InvalidConfig, "topic model dimensions disagree");
    for (std::size_t i = 0; i < m.vocabulary.size(); ++i) m.word_id[m.vocabulary[i]] = static_cast<int>(i);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("topic model: ") + e.what());
  }
}

void save_btm(const BtmModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << btm_to_json(model).dump() << '\n';
}

BtmModel load_btm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("topic model: ") + e.what());
  }
  return btm_from_json(j);
}

}  // namespace samplepilot
