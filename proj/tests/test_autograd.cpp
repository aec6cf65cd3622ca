#include <gtest/gtest.h>

#include <cmath>

#include "iptkit/container.hpp"
#include "iptkit/error.hpp"
#include "iptkit/optim.hpp"
#include "support/gradcheck.hpp"

using namespace iptkit;

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = gradcheck::op_cases();
  const auto& c = cases.at(GetParam());
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    const double err = gradcheck::max_error(c.fn, c.inputs(rng), rng);
    EXPECT_LT(err, gradcheck::kMaxRelError) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Range<std::size_t>(0, gradcheck::op_cases().size()),
                         [](const auto& info) { return gradcheck::op_cases()[info.param].name; });

TEST(ModelGradient, ParserThroughEncoderWithAdapters) {
  EXPECT_LT(gradcheck::model_max_error(11), gradcheck::kMaxRelError);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), Error);
}

TEST(Tape, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  Var s = sum(mul_scalar(x, 3.0));
  tape.backward(s);
  tape.backward(s);
  EXPECT_DOUBLE_EQ(tape.grad(x.id())[0], 6.0);
  EXPECT_DOUBLE_EQ(tape.grad(x.id())[1], 6.0);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape tape;
  Tensor w = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
  Var c = tape.constant_ref(w);
  Var x = tape.leaf(Tensor::matrix({{1.0, 1.0}}));
  Var y = sum(matmul(x, c));
  EXPECT_FALSE(c.requires_grad());
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x.id())[0], 3.0);
  EXPECT_DOUBLE_EQ(tape.grad(x.id())[1], 7.0);
}

TEST(Ops, ShapeMismatchNamesTheOperation) {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 3}));
  Var b = tape.leaf(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Ops, DropoutIsIdentityInEvalAndAtZeroRate) {
  Tape tape;
  Rng rng(1);
  Var a = tape.leaf(Tensor({3, 3}, 2.0));
  EXPECT_EQ(dropout(a, 0.5, rng, false).id(), a.id());
  EXPECT_EQ(dropout(a, 0.0, rng, true).id(), a.id());
  EXPECT_THROW(dropout(a, 1.0, rng, true), Error);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(3);
  Tensor t = gradcheck::random_tensor({4, 7}, rng, 5.0);
  Tensor s = softmax_rows(t);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += s(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Init, XavierWithinBoundAndZerosAreZero) {
  Rng rng(5);
  Tensor w = init_param({16, 8}, InitScheme::xavier_uniform, rng);
  const double bound = std::sqrt(6.0 / 24.0);
  for (double v : w.values()) EXPECT_LE(std::abs(v), bound);
  Tensor z = init_param({4}, InitScheme::zeros, rng);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Init, SeededInitIsReproducible) {
  Rng a(9), b(9);
  EXPECT_EQ(init_param({5, 5}, InitScheme::normal, a), init_param({5, 5}, InitScheme::normal, b));
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  // With bias correction the first update is lr * g / (|g| + eps').
  ParamStore p;
  p.add("w", Tensor::vector({1.0, -1.0, 0.5}));
  Gradients g(p);
  g.at(0) = Tensor::vector({0.2, -3.0, 0.0});
  Adam opt(AdamConfig{.lr = 0.1});
  opt.step(p, g);
  const Tensor& w = p.value("w");
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 0.2 / (0.2 + 1e-8), 1e-12);
  EXPECT_NEAR(w[1], -1.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-12);
  EXPECT_DOUBLE_EQ(w[2], 0.5);
}

TEST(Adam, TwoStepsMatchHandComputedMoments) {
  ParamStore p;
  p.add("w", Tensor::vector({0.0}));
  Gradients g(p);
  Adam opt(AdamConfig{.lr = 0.01});
  double m = 0, v = 0, w = 0;
  const double grads[] = {1.0, -0.5};
  for (int t = 1; t <= 2; ++t) {
    g.at(0) = Tensor::vector({grads[t - 1]});
    opt.step(p, g);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p.value("w")[0], w, 1e-15);
}

TEST(Adam, NonFiniteGradientLeavesParametersUntouched) {
  ParamStore p;
  p.add("a", Tensor::vector({1.0}));
  p.add("b", Tensor::vector({2.0}));
  Gradients g(p);
  g.at(0) = Tensor::vector({1.0});
  g.at(1) = Tensor::vector({std::nan("")});
  Adam opt;
  EXPECT_THROW(opt.step(p, g), Error);
  EXPECT_EQ(p.value("a")[0], 1.0);
}

TEST(Adam, ParametersWithoutGradientsAreSkipped) {
  ParamStore p;
  p.add("frozen", Tensor::vector({4.0}));
  p.add("live", Tensor::vector({4.0}));
  Gradients g(p);
  g.at(1) = Tensor::vector({1.0});
  Adam opt;
  opt.step(p, g);
  EXPECT_EQ(p.value("frozen")[0], 4.0);
  EXPECT_NE(p.value("live")[0], 4.0);
}

TEST(ParamStore, RejectsDuplicatesAndRemovesByPrefix) {
  ParamStore p;
  p.add("base/x", Tensor({2}));
  p.add("parse/y", Tensor({3}));
  EXPECT_THROW(p.add("base/x", Tensor({1})), Error);
  EXPECT_EQ(p.count_values(), 5u);
  p.remove_prefix("parse/");
  EXPECT_FALSE(p.has_prefix("parse/"));
  EXPECT_EQ(param_group("adapter/layer0/attn/up_w"), "adapter");
}

TEST(Container, RoundTripIsByteIdentical) {
  Rng rng(2);
  ParamStore p;
  p.add("base/a", gradcheck::random_tensor({3, 4}, rng));
  p.add("parse/b", gradcheck::random_tensor({2, 2, 2}, rng));
  const nlohmann::json meta = {{"stage", "ipt"}, {"x", 1.25}};
  const std::string bytes = encode_container(p, meta);
  Container c = decode_container(bytes);
  EXPECT_EQ(c.params, p);
  EXPECT_EQ(c.meta, meta);
  EXPECT_EQ(encode_container(c.params, c.meta), bytes);
}

TEST(Container, CorruptInputIsAnErrorNotACrash) {
  ParamStore p;
  p.add("base/a", Tensor({4}, 1.0));
  const std::string good = encode_container(p, nlohmann::json::object());
  EXPECT_THROW(decode_container(""), ParseError);
  EXPECT_THROW(decode_container("NOTMAGIC" + good.substr(8)), ParseError);
  EXPECT_THROW(decode_container(good.substr(0, good.size() - 3)), ParseError);
  EXPECT_THROW(decode_container(good + "x"), ParseError);
  std::string wrong_version = good;
  wrong_version[8] = 7;
  EXPECT_THROW(decode_container(wrong_version), ParseError);
}
