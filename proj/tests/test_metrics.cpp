#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "iptkit/error.hpp"
#include "iptkit/metrics.hpp"
#include "support/fuzz.hpp"
#include "support/hand_cases.hpp"

using namespace iptkit;

TEST(UasLas, HandCases) {
  const ParseEval same = uas_las({hand::gold()}, {hand::gold()});
  EXPECT_EQ(same.uas, 100.0);
  EXPECT_EQ(same.las, 100.0);
  EXPECT_EQ(same.tree_rate, 100.0);

  const ParseEval partial = uas_las({hand::three_of_four()}, {hand::gold()});
  EXPECT_EQ(partial.uas, 75.0);
  EXPECT_EQ(partial.las, 50.0);
  EXPECT_EQ(partial.head_correct, 3u);
  EXPECT_EQ(partial.labeled_correct, 2u);

  const ParseEval unlabeled = uas_las({hand::labels_wrong()}, {hand::gold()});
  EXPECT_EQ(unlabeled.uas, 100.0);
  EXPECT_EQ(unlabeled.las, 0.0);
}

TEST(UasLas, RejectsMisalignedInput) {
  EXPECT_THROW(uas_las({hand::gold()}, {hand::gold(), hand::gold()}), Error);
  EXPECT_THROW(uas_las({hand::sentence({0}, {"root"})}, {hand::gold()}), Error);
}

TEST(UasLas, TreeRateCountsMalformedPredictions) {
  const Sentence cyclic = hand::sentence({2, 1, 0, 3}, {"a", "b", "root", "c"});
  const ParseEval e = uas_las({cyclic, hand::gold()}, {hand::gold(), hand::gold()});
  EXPECT_EQ(e.tree_rate, 50.0);
  EXPECT_EQ(e.n_sentences, 2u);
  EXPECT_EQ(e.n_tokens, 8u);
}

TEST(UasLas, RandomCorporaObeyBoundsAndOrderInvariance) {
  Rng rng(1);
  const std::vector<std::string> labels{"a", "b", "c"};
  std::uniform_int_distribution<std::size_t> lab(0, 2);
  std::vector<Sentence> gold, pred;
  for (int k = 0; k < 40; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(k % 7);
    std::vector<std::string> gr(n), pr(n);
    for (std::size_t i = 0; i < n; ++i) {
      gr[i] = labels[lab(rng)];
      pr[i] = labels[lab(rng)];
    }
    gold.push_back(hand::sentence(fuzz::random_tree(n, rng), gr));
    pred.push_back(hand::sentence(fuzz::random_tree(n, rng), pr));
  }
  const ParseEval e = uas_las(pred, gold);
  EXPECT_LE(e.las, e.uas);
  EXPECT_GE(e.las, 0.0);
  EXPECT_LE(e.uas, 100.0);
  std::size_t heads = 0, labeled = 0, tokens = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      ++tokens;
      if (pred[s].tokens[i].head == gold[s].tokens[i].head) {
        ++heads;
        if (pred[s].tokens[i].deprel == gold[s].tokens[i].deprel) ++labeled;
      }
    }
  }
  EXPECT_EQ(e.head_correct, heads);
  EXPECT_EQ(e.labeled_correct, labeled);
  EXPECT_EQ(e.uas, round1(100.0 * static_cast<double>(heads) / static_cast<double>(tokens)));

  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Sentence> g2, p2;
  for (std::size_t i : order) {
    g2.push_back(gold[i]);
    p2.push_back(pred[i]);
  }
  const ParseEval e2 = uas_las(p2, g2);
  EXPECT_EQ(e2.head_correct, e.head_correct);
  EXPECT_EQ(e2.labeled_correct, e.labeled_correct);
}

TEST(UasLas, JsonFields) {
  const auto j = uas_las({hand::gold()}, {hand::gold()}).to_json();
  for (const char* k : {"uas", "las", "tree_rate", "n_sentences", "n_tokens"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Accuracy, EdgesAndLoopOracle) {
  EXPECT_EQ(accuracy({1, 2, 3}, {1, 2, 3}), 100.0);
  EXPECT_EQ(accuracy({0, 0}, {1, 1}), 0.0);
  EXPECT_THROW(accuracy({1}, {1, 2}), Error);
  EXPECT_THROW(accuracy({}, {}), Error);
  Rng rng(2);
  std::uniform_int_distribution<std::size_t> c(0, 3);
  std::vector<std::size_t> p(1000), g(1000);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    p[i] = c(rng);
    g[i] = c(rng);
    if (p[i] == g[i]) ++hits;
  }
  EXPECT_DOUBLE_EQ(accuracy(p, g), 100.0 * static_cast<double>(hits) / 1000.0);
}

TEST(MlmAccuracy, PlantedUniformAndEmpty) {
  Tensor planted({3, 4});
  planted(0, 2) = 5.0;
  planted(1, 0) = 5.0;
  planted(2, 3) = 5.0;
  EXPECT_EQ(mlm_accuracy(planted, {2, 0, 3}), 100.0);
  const Tensor uniform({4, 5});
  // Ties resolve to index 0.
  EXPECT_EQ(mlm_accuracy(uniform, {0, 1, 0, 4}), 50.0);
  EXPECT_EQ(argmax_rows(uniform), (std::vector<std::size_t>(4, 0)));
  EXPECT_THROW(mlm_accuracy(Tensor({0, 5}), {}), Error);
}

TEST(Round1, OneDecimal) {
  EXPECT_EQ(round1(66.66666), 66.7);
  EXPECT_EQ(round1(12.34), 12.3);
}
