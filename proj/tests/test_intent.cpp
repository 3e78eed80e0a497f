#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "samplepilot/error.hpp"
#include "samplepilot/intent.hpp"
#include "samplepilot/rng.hpp"

using namespace samplepilot;

namespace {

struct Planted {
  std::vector<TokenSeq> corpus;
  std::vector<int> label;
};

// Each sequence draws 5..9 tokens from one of `groups` disjoint vocabularies.
Planted planted_corpus(int groups, int sequences, std::uint64_t seed, int vocab = 8) {
  Planted p;
  Rng rng(seed);
  for (int s = 0; s < sequences; ++s) {
    const int g = s % groups;
    const auto len = 5 + rng.below(5);
    TokenSeq seq;
    for (std::uint64_t i = 0; i < len; ++i)
      seq.push_back("t" + std::to_string(g) + "_" + std::to_string(rng.below(static_cast<std::uint64_t>(vocab))));
    p.corpus.push_back(std::move(seq));
    p.label.push_back(g);
  }
  return p;
}

// Fraction of agreement under the best relabeling of `got`.
double best_permutation_accuracy(const std::vector<int>& truth, const std::vector<int>& got, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += perm[static_cast<std::size_t>(got[i])] == truth[i];
    best = std::max(best, static_cast<double>(hit) / static_cast<double>(truth.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<int> argmaxes(const BtmModel& m, const std::vector<TokenSeq>& corpus) {
  std::vector<int> out;
  for (const auto& s : corpus) out.push_back(infer(m, s).argmax_intent);
  return out;
}

Table tiny_schema() {
  return Table("t", {Column::categorical("carrier", {"AA", "UA"}), Column::categorical("month", {"JAN", "JUN"}),
                     Column::real("delay", {0, 100})});
}

}  // namespace

TEST(Tokenize, Rules) {
  const auto t = tiny_schema();
  const std::vector<Query> back{Query::back()};
  EXPECT_EQ(tokenize(t, back), TokenSeq{"B"});
  const std::vector<Query> two{Query::group("month", AggFunc::Count), Query::filter("carrier", CmpOp::Eq, "AA")};
  EXPECT_EQ(tokenize(t, two), (TokenSeq{"G:month:Count:\xe2\x88\x85", "F:carrier:Eq:AA"}));
  EXPECT_EQ(query_token(t, Query::filter("delay", CmpOp::Gt, "15")), "F:delay:Gt:d1");
  EXPECT_EQ(query_token(t, Query::filter("delay", CmpOp::Gt, "19.9")), "F:delay:Gt:d1");
  EXPECT_EQ(query_token(t, Query::filter("delay", CmpOp::Lt, "100")), "F:delay:Lt:d9");
  EXPECT_EQ(query_token(t, Query::group("carrier", AggFunc::Avg, "delay")), "G:carrier:Avg:delay");
  EXPECT_EQ(tokenize(t, two), tokenize(t, two));
}

TEST(Biterms, EnumerateAllPairs) {
  using P = std::pair<std::string, std::string>;
  EXPECT_EQ(extract_biterms({"a", "b"}), (std::vector<P>{{"a", "b"}}));
  EXPECT_EQ(extract_biterms({"a", "b", "c"}), (std::vector<P>{{"a", "b"}, {"a", "c"}, {"b", "c"}}));
  EXPECT_EQ(extract_biterms({"a", "a", "b"}), (std::vector<P>{{"a", "a"}, {"a", "b"}, {"a", "b"}}));
  EXPECT_THROW(extract_biterms({"a"}), Error);
  EXPECT_EQ(extract_biterms(TokenSeq(7, "x")).size(), 21u);
}

TEST(TrainBtm, RecoversTwoPlantedTopics) {
  const auto p = planted_corpus(2, 200, 3);
  BtmParams params;
  params.k = 2;
  params.iterations = 200;
  const auto m = train_btm(p.corpus, params);
  EXPECT_GE(best_permutation_accuracy(p.label, argmaxes(m, p.corpus), 2), 0.9);

  for (int k = 0; k < m.k; ++k) {
    double row = 0.0;
    for (std::size_t w = 0; w < m.vocabulary.size(); ++w) row += m.word_prob(k, static_cast<int>(w));
    EXPECT_NEAR(row, 1.0, 1e-9);
  }
  EXPECT_NEAR(std::accumulate(m.topic_prior.begin(), m.topic_prior.end(), 0.0), 1.0, 1e-9);

  // A sequence built only from group-0 words lands on the topic that holds group 0.
  const int topic_of_zero = infer(m, p.corpus[0]).argmax_intent;
  EXPECT_EQ(infer(m, {"t0_1", "t0_2", "t0_3"}).argmax_intent, topic_of_zero);
  EXPECT_NE(infer(m, {"t1_1", "t1_2", "t1_3"}).argmax_intent, topic_of_zero);
}

TEST(TrainBtm, SingleTopicHoldsAllMass) {
  const auto p = planted_corpus(2, 40, 1);
  BtmParams params;
  params.k = 1;
  params.iterations = 20;
  const auto m = train_btm(p.corpus, params);
  for (const auto& s : p.corpus) EXPECT_EQ(infer(m, s).probs, std::vector<double>{1.0});
}

TEST(TrainBtm, DeterministicForFixedSeed) {
  const auto p = planted_corpus(3, 90, 8);
  BtmParams params;
  params.k = 3;
  params.iterations = 50;
  EXPECT_EQ(train_btm(p.corpus, params).topic_word, train_btm(p.corpus, params).topic_word);
}

TEST(TrainBtm, EmptyCorpusRejected) {
  EXPECT_THROW(train_btm({}, {}), Error);
  try {
    train_btm({{"only"}, {"one"}}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
}

TEST(TrainBtm, SweepsPreserveBitermCount) {
  const auto p = planted_corpus(3, 60, 2);
  std::size_t biterms = 0;
  for (const auto& s : p.corpus) biterms += s.size() * (s.size() - 1) / 2;
  BtmParams params;
  params.k = 3;
  params.iterations = 30;
  int sweeps = 0;
  train_btm(p.corpus, params, [&](int, const std::vector<std::size_t>& counts) {
    ++sweeps;
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), biterms);
  });
  EXPECT_EQ(sweeps, 30);
}

TEST(TrainBtm, DuplicatedCorpusKeepsArgmaxIntents) {
  const auto p = planted_corpus(3, 120, 4);
  auto doubled = p.corpus;
  doubled.insert(doubled.end(), p.corpus.begin(), p.corpus.end());
  BtmParams params;
  params.k = 3;
  params.iterations = 150;
  const auto a = argmaxes(train_btm(p.corpus, params), p.corpus);
  const auto b = argmaxes(train_btm(doubled, params), p.corpus);
  EXPECT_EQ(best_permutation_accuracy(a, b, 3), 1.0);
}

TEST(Infer, ShortSequenceFallsBackToPrior) {
  const auto p = planted_corpus(2, 60, 5);
  BtmParams params;
  params.k = 2;
  params.iterations = 40;
  const auto m = train_btm(p.corpus, params);
  const auto d = infer(m, {"t0_1"});
  EXPECT_EQ(d.probs, make_distribution(m.topic_prior).probs);
  EXPECT_EQ(infer(m, {"unseen", "words"}).probs, make_distribution(m.topic_prior).probs);
  for (const auto& s : p.corpus) {
    const auto x = infer(m, s);
    EXPECT_NEAR(std::accumulate(x.probs.begin(), x.probs.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(Infer, ArgmaxTiesGoToLowestIndex) {
  EXPECT_EQ(make_distribution({0.25, 0.5, 0.25}).argmax_intent, 1);
  EXPECT_EQ(make_distribution({0.4, 0.2, 0.4}).argmax_intent, 0);
  EXPECT_EQ(make_distribution({1.0, 1.0}).probs, (std::vector<double>{0.5, 0.5}));
}

TEST(Uci, PairScoreFromDocumentFrequencies) {
  const std::vector<TokenSeq> corpus{{"x", "y"}, {"y", "x", "x"}, {"u", "v"}, {"v", "u"}};
  EXPECT_DOUBLE_EQ(*uci_pair(corpus, "x", "y"), std::log(2.0));
  EXPECT_FALSE(uci_pair(corpus, "x", "u").has_value());
}

TEST(Uci, CoherenceIsPermutationInvariant) {
  const auto p = planted_corpus(3, 60, 9);
  std::vector<int> relabeled;
  for (int l : p.label) relabeled.push_back((l + 1) % 3);
  EXPECT_DOUBLE_EQ(uci_coherence(p.corpus, p.label, 3), uci_coherence(p.corpus, relabeled, 3));
  // Intents holding fewer than two distinct tokens score 0.
  EXPECT_EQ(uci_coherence({{"a", "a"}}, {0}, 1), 0.0);
}

TEST(Uci, SelectsFourPlantedIntents) {
  const auto p = planted_corpus(4, 240, 12, 6);
  BtmParams params;
  params.iterations = 150;
  const auto sel = uci_select_k(p.corpus, 2, 6, params);
  EXPECT_EQ(sel.best_k, 4) << "scores: " << sel.scores.at(2) << " " << sel.scores.at(3) << " " << sel.scores.at(4)
                           << " " << sel.scores.at(5) << " " << sel.scores.at(6);
  EXPECT_EQ(sel.scores.size(), 5u);
  EXPECT_THROW(uci_select_k(p.corpus, 1, 4, params), Error);
}

TEST(ModelFile, RoundTrip) {
  const auto p = planted_corpus(2, 40, 6);
  BtmParams params;
  params.k = 2;
  params.iterations = 20;
  const auto m = train_btm(p.corpus, params);
  const auto path = std::filesystem::temp_directory_path() / "samplepilot_btm_test.json";
  save_btm(m, path);
  const auto back = load_btm(path);
  EXPECT_EQ(back.topic_word, m.topic_word);
  EXPECT_EQ(back.vocabulary, m.vocabulary);
  EXPECT_EQ(back.topic_prior, m.topic_prior);
  for (const auto& s : p.corpus) EXPECT_EQ(infer(back, s).probs, infer(m, s).probs);
  std::filesystem::remove(path);
}
