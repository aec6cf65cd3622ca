#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "iptkit/encoder.hpp"
#include "iptkit/error.hpp"
#include "iptkit/optim.hpp"

using namespace iptkit;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.layers = 2;
  c.hidden = 16;
  c.heads = 4;
  c.ffn = 32;
  c.max_len = 24;
  c.vocab_size = 300;
  c.dropout = 0.1;
  return c;
}

std::vector<int> random_ids(std::size_t content, Rng& rng) {
  std::uniform_int_distribution<int> pick(kNumSpecials, 299);
  std::vector<int> ids{kCls};
  for (std::size_t i = 0; i < content; ++i) ids.push_back(pick(rng));
  ids.push_back(kSep);
  return ids;
}

bool bit_equal(const LayerStates& a, const LayerStates& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t l = 0; l < a.size(); ++l)
    if (a[l].shape() != b[l].shape() || a[l].storage() != b[l].storage()) return false;
  return true;
}

}  // namespace

TEST(Encoder, ShortestInputShapes) {
  Rng rng(1);
  Model m(tiny_config(), rng);
  const std::vector<int> ids{kCls, kSep};
  const LayerStates s = encode_eval(m, ids);
  ASSERT_EQ(s.size(), 3u);
  for (const auto& t : s) EXPECT_EQ(t.shape(), (Shape{2, 16}));
}

TEST(Encoder, EvalIsDeterministicAndFinite) {
  Rng rng(2);
  Model m(tiny_config(), rng);
  const auto ids = random_ids(10, rng);
  const LayerStates a = encode_eval(m, ids), b = encode_eval(m, ids);
  EXPECT_TRUE(bit_equal(a, b));
  for (const auto& t : a)
    for (double v : t.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Encoder, FinalLayerRowsAreNormalized) {
  Rng rng(3);
  Model m(tiny_config(), rng);
  const LayerStates s = encode_eval(m, random_ids(8, rng));
  const Tensor& top = s.back();
  for (std::size_t r = 0; r < top.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (double v : top.row(r)) mean += v;
    mean /= 16.0;
    for (double v : top.row(r)) var += (v - mean) * (v - mean);
    var /= 16.0;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(Encoder, SegmentsChangeEmbeddings) {
  Rng rng(4);
  Model m(tiny_config(), rng);
  const auto ids = random_ids(4, rng);
  std::vector<int> seg0(ids.size(), 0), seg1(ids.size(), 0);
  seg1.back() = 1;
  EXPECT_NE(encode_eval(m, ids, seg0)[0].storage(), encode_eval(m, ids, seg1)[0].storage());
  EXPECT_TRUE(bit_equal(encode_eval(m, ids), encode_eval(m, ids, seg0)));
}

TEST(Encoder, RejectsOverlongAndBadSegments) {
  Rng rng(5);
  Model m(tiny_config(), rng);
  EXPECT_THROW(encode_eval(m, random_ids(23, rng)), Error);
  const auto ids = random_ids(3, rng);
  const std::vector<int> short_seg(2, 0);
  EXPECT_THROW(encode_eval(m, ids, short_seg), Error);
}

TEST(Encoder, ConfigTextRoundTrip) {
  EncoderConfig c = tiny_config();
  c.dropout = 0.25;
  EXPECT_EQ(EncoderConfig::from_text(c.to_text()), c);
  EXPECT_THROW(EncoderConfig::from_text("layers = x\n"), Error);
}

TEST(Encoder, RejectsHiddenNotDivisibleByHeads) {
  EncoderConfig c = tiny_config();
  c.heads = 5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Adapters, ZeroInitPreservesOutputsBitExactly) {
  Rng rng(6);
  Model m(tiny_config(), rng);
  const auto ids = random_ids(9, rng);
  const LayerStates before = encode_eval(m, ids);
  m.inject_adapters({4}, rng);
  EXPECT_TRUE(bit_equal(before, encode_eval(m, ids)));
}

TEST(Adapters, ParameterCountDelta) {
  Rng rng(7);
  Model m(tiny_config(), rng);
  const std::size_t before = m.params().count_values();
  const std::size_t s = 4, h = 16, l = 2;
  m.inject_adapters({s}, rng);
  EXPECT_EQ(m.params().count_values() - before, l * 2 * (h * s + s + s * h + h));
  EXPECT_EQ(m.params().count_values("adapter/"), l * 2 * (h * s + s + s * h + h));
  EXPECT_THROW(m.inject_adapters({s}, rng), Error);
}

TEST(Adapters, NonBaseStepLeavesBaseUntouched) {
  Rng rng(8);
  Model m(tiny_config(), rng);
  m.inject_adapters({4}, rng);
  const ParamStore before = m.params();
  const auto ids = random_ids(6, rng);

  Gradients grads(m.params());
  Tape tape;
  ForwardPass pass(tape, m, &grads, TrainScope::non_base, Mode::train, &rng);
  Var top = encode(pass, ids).back();
  Rng wrng(9);
  Tensor w(top.value().shape());
  std::normal_distribution<double> nd;
  for (double& v : w.storage()) v = nd(wrng);
  tape.backward(sum(mul(top, tape.constant(w))));

  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (param_group(m.params()[i].name) == "base") EXPECT_FALSE(grads.has(i)) << m.params()[i].name;
  }
  Adam adam({1e-2});
  adam.step(m.params(), grads);

  bool adapter_moved = false;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    const auto& name = m.params()[i].name;
    if (param_group(name) == "base") {
      EXPECT_EQ(m.params()[i].value.storage(), before[i].value.storage()) << name;
    } else if (m.params()[i].value.storage() != before[i].value.storage()) {
      adapter_moved = true;
    }
  }
  EXPECT_TRUE(adapter_moved);
}

TEST(DropHeads, KeepsBaseAndAdapters) {
  Rng rng(10);
  Model m(tiny_config(), rng);
  m.inject_adapters({4}, rng);
  const std::size_t n = m.params().size();
  m.params().add("parse/x", Tensor({3}));
  m.params().add("mlm/y", Tensor({3}));
  m.drop_heads();
  EXPECT_EQ(m.params().size(), n);
  EXPECT_FALSE(m.params().has_prefix("parse/"));
}

TEST(PoolWords, MatchesSummationOracle) {
  Rng rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t words = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    Alignment a;
    std::size_t pos = 1;
    for (std::size_t w = 0; w < words; ++w) {
      const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      a.spans.emplace_back(pos, pos + len);
      pos += len;
    }
    Tensor state({pos + 1, 5});
    for (double& v : state.storage()) v = nd(rng);
    const Tensor pooled = pool_words(state, a);
    ASSERT_EQ(pooled.shape(), (Shape{words, 5}));
    for (std::size_t w = 0; w < words; ++w) {
      for (std::size_t c = 0; c < 5; ++c) {
        double s = 0.0;
        for (std::size_t r = a.spans[w].first; r < a.spans[w].second; ++r) s += state(r, c);
        EXPECT_NEAR(pooled(w, c), s / static_cast<double>(a.spans[w].second - a.spans[w].first),
                    1e-12);
      }
    }
  }
}

TEST(PoolWords, SinglePieceWordsAreIdentity) {
  Tensor state({5, 3});
  std::iota(state.storage().begin(), state.storage().end(), 0.0);
  Alignment a;
  a.spans = {{1, 2}, {2, 3}, {3, 4}};
  const Tensor pooled = pool_words(state, a);
  for (std::size_t w = 0; w < 3; ++w)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(pooled(w, c), state(w + 1, c));
}

TEST(PoolWords, ReorderedSpansReorderRows) {
  Tensor state({6, 2});
  std::iota(state.storage().begin(), state.storage().end(), 1.0);
  Alignment a, b;
  a.spans = {{1, 3}, {3, 4}, {4, 5}};
  b.spans = {{4, 5}, {1, 3}, {3, 4}};
  const Tensor pa = pool_words(state, a), pb = pool_words(state, b);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(pb(0, c), pa(2, c));
    EXPECT_EQ(pb(1, c), pa(0, c));
    EXPECT_EQ(pb(2, c), pa(1, c));
  }
}

TEST(ParserInputs, ClsRowThenWords) {
  Tensor state({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor words({2, 2}, {10, 20, 30, 40});
  const Tensor x = parser_inputs(state, words);
  EXPECT_EQ(x.shape(), (Shape{3, 2}));
  EXPECT_EQ(x.storage(), (std::vector<double>{1, 2, 10, 20, 30, 40}));
}

TEST(HeadDropout, IdentityInEvalAndExpectedRateInTrain) {
  Rng rng(12);
  EncoderConfig c = tiny_config();
  c.dropout = 0.1;
  Model m(c, rng);
  Tape tape;
  Var x = tape.constant(Tensor({1000, 100}, 1.0));
  {
    ForwardPass eval(tape, m, nullptr, TrainScope::all, Mode::eval, nullptr);
    EXPECT_EQ(head_dropout(eval, x).id(), x.id());
  }
  ForwardPass train(tape, m, nullptr, TrainScope::all, Mode::train, &rng);
  const Tensor y = head_dropout(train, x).value();
  std::size_t zeros = 0;
  double total = 0.0;
  for (double v : y.values()) {
    if (v == 0.0) ++zeros;
    else EXPECT_NEAR(v, 1.0 / 0.9, 1e-12);
    total += v;
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.1, 0.01);
  EXPECT_NEAR(total / 1e5, 1.0, 0.01);
}
