#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "grad_check.hpp"
#include "numval/ops.hpp"
#include "numval/tensor.hpp"

using numval::Tape;
using numval::Tensor;

namespace {

using T64 = Tensor<double>;
using T32 = Tensor<float>;

TEST(Matmul, IdentityLeavesInputUnchanged) {
  auto i2 = T64::from({2, 2}, {1, 0, 0, 1});
  auto a = T64::from({2, 2}, {1, 2, 3, 4});
  auto c = numval::matmul<double>(nullptr, i2, a);
  EXPECT_EQ(c.shape, (numval::Shape{2, 2}));
  for (long i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(c.at(i), a.at(i));
}

TEST(Matmul, RowTimesColumn) {
  auto a = T64::from({1, 2}, {1, 2});
  auto b = T64::from({2, 1}, {3, 4});
  auto c = numval::matmul<double>(nullptr, a, b);
  EXPECT_EQ(c.shape, (numval::Shape{1, 1}));
  EXPECT_DOUBLE_EQ(c.at(0), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  auto a = T64::zeros({2, 3});
  auto b = T64::zeros({2, 2});
  try {
    numval::matmul<double>(nullptr, a, b);
    FAIL() << "expected DimensionError";
  } catch (const numval::DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  numval::Rng rng(11);
  auto a = T64::zeros({5, 4});
  auto b = T64::zeros({4, 3});
  gradcheck::fill_uniform(a, rng);
  gradcheck::fill_uniform(b, rng);
  auto res = gradcheck::check({&a, &b}, [&](Tape<double>* tp) {
    return numval::sum(tp, numval::matmul(tp, a, b));
  });
  EXPECT_EQ(res.entries, 5 * 4 + 4 * 3);
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Matmul, TransposedVariantsMatchFiniteDifferences) {
  numval::Rng rng(12);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto a = ta ? T64::zeros({4, 5}) : T64::zeros({5, 4});
      auto b = tb ? T64::zeros({3, 4}) : T64::zeros({4, 3});
      gradcheck::fill_uniform(a, rng);
      gradcheck::fill_uniform(b, rng);
      auto res = gradcheck::check({&a, &b}, [&](Tape<double>* tp) {
        return numval::sum(tp, numval::matmul(tp, a, b, ta, tb));
      });
      EXPECT_LT(res.max_rel_err, 1e-6) << "ta=" << ta << " tb=" << tb;
    }
  }
}

TEST(Elementwise, TanhOfZeroIsZero) {
  auto x = T64::scalar(0.0);
  EXPECT_DOUBLE_EQ(numval::tanh_op<double>(nullptr, x).item(), 0.0);
}

TEST(Elementwise, AddVectors) {
  auto a = T64::from({2}, {1, 2});
  auto b = T64::from({2}, {3, 4});
  auto c = numval::add<double>(nullptr, a, b);
  EXPECT_DOUBLE_EQ(c.at(0), 4.0);
  EXPECT_DOUBLE_EQ(c.at(1), 6.0);
}

TEST(Elementwise, RowVectorBroadcastsOverRows) {
  auto a = T64::from({2, 2}, {1, 2, 3, 4});
  auto b = T64::from({2}, {10, 20});
  auto c = numval::add<double>(nullptr, a, b);
  EXPECT_DOUBLE_EQ(c.at(0, 0), 11.0);
  EXPECT_DOUBLE_EQ(c.at(0, 1), 22.0);
  EXPECT_DOUBLE_EQ(c.at(1, 0), 13.0);
  EXPECT_DOUBLE_EQ(c.at(1, 1), 24.0);
}

TEST(Elementwise, IncompatibleShapesThrow) {
  auto a = T64::zeros({2, 3});
  auto b = T64::zeros({3, 2});
  EXPECT_THROW(numval::add<double>(nullptr, a, b), numval::DimensionError);
}

TEST(Elementwise, TanhGradientAtHalf) {
  auto x = T64::scalar(0.5);
  auto res =
      gradcheck::check({&x}, [&](Tape<double>* tp) { return numval::tanh_op(tp, x); });
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Elementwise, BinaryAndBroadcastGradients) {
  numval::Rng rng(13);
  auto a = T64::zeros({3, 4});
  auto b = T64::zeros({3, 4});
  auto v = T64::zeros({4});
  gradcheck::fill_uniform(a, rng);
  gradcheck::fill_uniform(b, rng);
  gradcheck::fill_uniform(v, rng);
  auto res = gradcheck::check({&a, &b, &v}, [&](Tape<double>* tp) {
    auto prod = numval::mul(tp, a, b);
    auto shifted = numval::sub(tp, prod, v);
    auto scaled = numval::affine(tp, shifted, 0.7, 0.1);
    return numval::sum(tp, numval::tanh_op(tp, scaled));
  });
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(Elementwise, SigmoidAndGeluGradients) {
  numval::Rng rng(14);
  auto x = T64::zeros({2, 5});
  gradcheck::fill_uniform(x, rng, -2.0, 2.0);
  auto res_s =
      gradcheck::check({&x}, [&](Tape<double>* tp) { return numval::sum(tp, numval::sigmoid(tp, x)); });
  EXPECT_LT(res_s.max_rel_err, 1e-4);
  auto res_g =
      gradcheck::check({&x}, [&](Tape<double>* tp) { return numval::sum(tp, numval::gelu(tp, x)); });
  EXPECT_LT(res_g.max_rel_err, 1e-4);
}

TEST(LayerNorm, ConstantRowMapsToZeros) {
  auto x = T64::from({1, 3}, {5, 5, 5});
  auto g = T64::full({3}, 1.0);
  auto b = T64::zeros({3});
  auto y = numval::layer_norm<double>(nullptr, x, g, b);
  for (long j = 0; j < 3; ++j) EXPECT_NEAR(y.at(0, j), 0.0, 1e-12);
}

TEST(LayerNorm, AlreadyNormalizedRowIsNearIdentity) {
  auto x = T64::from({1, 2}, {1, -1});
  auto g = T64::full({2}, 1.0);
  auto b = T64::zeros({2});
  auto y = numval::layer_norm<double>(nullptr, x, g, b);
  EXPECT_NEAR(y.at(0, 0), 1.0, 1e-4);
  EXPECT_NEAR(y.at(0, 1), -1.0, 1e-4);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  numval::Rng rng(15);
  auto x = T64::zeros({3, 8});
  auto g = T64::zeros({8});
  auto b = T64::zeros({8});
  gradcheck::fill_uniform(x, rng);
  gradcheck::fill_uniform(g, rng, 0.5, 1.5);
  gradcheck::fill_uniform(b, rng, -0.5, 0.5);
  // Weighted sum keeps the loss sensitive to directions a plain sum misses.
  auto w = T64::zeros({3, 8});
  gradcheck::fill_uniform(w, rng);
  auto res = gradcheck::check({&x, &g, &b}, [&](Tape<double>* tp) {
    return numval::sum(tp, numval::mul(tp, numval::layer_norm(tp, x, g, b), w.detach()));
  });
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(CrossEntropy, UniformLogitsGiveLogVocab) {
  auto logits = T64::zeros({1, 4});
  auto loss = numval::softmax_cross_entropy<double>(nullptr, logits, {2});
  EXPECT_NEAR(loss.item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, SaturatedCorrectPredictionNearZero) {
  auto logits = T64::zeros({1, 4});
  logits.at(0, 1) = 1000.0;
  auto loss = numval::softmax_cross_entropy<double>(nullptr, logits, {1});
  EXPECT_NEAR(loss.item(), 0.0, 1e-9);
}

TEST(CrossEntropy, AllIgnoredIsZeroLossZeroGradient) {
  auto logits = T64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tape<double> tape;
  tape.watch(logits);
  auto loss = numval::softmax_cross_entropy(&tape, logits, {-1, -1}, -1);
  EXPECT_DOUBLE_EQ(loss.item(), 0.0);
  tape.backward(loss);
  const auto* g = tape.grad(logits);
  if (g)
    for (double v : *g) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(CrossEntropy, RejectsOutOfRangeTarget) {
  auto logits = T64::zeros({1, 4});
  EXPECT_THROW(numval::softmax_cross_entropy<double>(nullptr, logits, {4}),
               numval::ContractError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  numval::Rng rng(16);
  auto logits = T64::zeros({6, 10});
  gradcheck::fill_uniform(logits, rng, -2.0, 2.0);
  std::vector<int> targets{3, -1, 0, 9, -1, 5};
  auto res = gradcheck::check({&logits}, [&](Tape<double>* tp) {
    return numval::softmax_cross_entropy(tp, logits, targets, -1);
  });
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Cosine, SelfSimilarityIsOne) {
  auto u = T64::from({3}, {0.3, -1.2, 4.0});
  EXPECT_NEAR(numval::cosine_similarity<double>(nullptr, u, u).item(), 1.0, 1e-12);
}

TEST(Cosine, OrthogonalVectorsGiveZero) {
  auto u = T64::from({2}, {1, 0});
  auto v = T64::from({2}, {0, 1});
  EXPECT_DOUBLE_EQ(numval::cosine_similarity<double>(nullptr, u, v).item(), 0.0);
}

TEST(Cosine, ScaleInvariance) {
  auto u = T64::from({2}, {1, 1});
  auto v = T64::from({2}, {2, 2});
  EXPECT_NEAR(numval::cosine_similarity<double>(nullptr, u, v).item(), 1.0, 1e-12);
}

TEST(Cosine, ZeroVectorYieldsZeroViaClamp) {
  auto u = T64::zeros({3});
  auto v = T64::from({3}, {1, 2, 3});
  EXPECT_DOUBLE_EQ(numval::cosine_similarity<double>(nullptr, u, v).item(), 0.0);
}

TEST(Cosine, GradientAgainstDetachedCopy) {
  numval::Rng rng(17);
  auto u = T64::zeros({6});
  gradcheck::fill_uniform(u, rng);
  auto frozen = u.clone();
  auto res = gradcheck::check({&u}, [&](Tape<double>* tp) {
    return numval::cosine_similarity(tp, u, frozen.detach());
  });
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Cosine, GradientInBothArguments) {
  numval::Rng rng(18);
  auto u = T64::zeros({5});
  auto v = T64::zeros({5});
  gradcheck::fill_uniform(u, rng);
  gradcheck::fill_uniform(v, rng);
  auto res = gradcheck::check({&u, &v}, [&](Tape<double>* tp) {
    return numval::cosine_similarity(tp, u, v);
  });
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Backward, SumGivesAllOnes) {
  auto x = T64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tape<double> tape;
  tape.watch(x);
  auto s = numval::sum(&tape, x);
  tape.backward(s);
  const auto* g = tape.grad(x);
  ASSERT_NE(g, nullptr);
  for (double v : *g) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Backward, RootMustBeTrackedScalar) {
  auto x = T64::from({2}, {1, 2});
  Tape<double> tape;
  EXPECT_THROW(tape.backward(x), numval::ContractError);
  tape.watch(x);
  EXPECT_THROW(tape.backward(x), numval::ContractError);
}

TEST(Backward, DiamondGraphSumsBothPaths) {
  // loss = sum(x*x) + sum(tanh(x)): x feeds two paths that rejoin.
  numval::Rng rng(19);
  auto x = T64::zeros({4});
  gradcheck::fill_uniform(x, rng);
  auto res = gradcheck::check({&x}, [&](Tape<double>* tp) {
    auto sq = numval::mul(tp, x, x);
    auto th = numval::tanh_op(tp, x);
    return numval::add(tp, numval::sum(tp, sq), numval::sum(tp, th));
  });
  EXPECT_LT(res.max_rel_err, 1e-6);

  // The analytic value is 2x + (1 - tanh^2 x); check one entry by hand.
  Tape<double> tape;
  tape.watch(x);
  auto sq = numval::mul(&tape, x, x);
  auto th = numval::tanh_op(&tape, x);
  auto loss = numval::add(&tape, numval::sum(&tape, sq), numval::sum(&tape, th));
  tape.backward(loss);
  const auto* g = tape.grad(x);
  ASSERT_NE(g, nullptr);
  double t0 = std::tanh(x.at(0));
  EXPECT_NEAR((*g)[0], 2.0 * x.at(0) + (1.0 - t0 * t0), 1e-12);
}

TEST(Backward, FreshTapePerStepSeesUpdatedParameters) {
  // The training pattern: long-lived parameters, a new tape every step. A
  // stale node id from a destroyed tape must not leak into the next one.
  auto w = T64::from({2}, {0.5, -0.25});
  for (int step = 0; step < 3; ++step) {
    Tape<double> tape;
    tape.watch(w);
    auto loss = numval::sum(&tape, numval::mul(&tape, w, w));
    tape.backward(loss);
    const auto* g = tape.grad(w);
    ASSERT_NE(g, nullptr);
    EXPECT_NEAR((*g)[0], 2.0 * w.at(0), 1e-12);
    EXPECT_NEAR((*g)[1], 2.0 * w.at(1), 1e-12);
    w.at(0) += 0.1;
  }
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = T64::from({2}, {1.0, 2.0});
  Tape<double> tape;
  tape.watch(x);
  auto s = numval::sum(&tape, x);
  tape.backward(s);
  tape.backward(s);
  const auto* g = tape.grad(x);
  ASSERT_NE(g, nullptr);
  EXPECT_DOUBLE_EQ((*g)[0], 2.0);
  tape.reset_grads();
  tape.backward(s);
  EXPECT_DOUBLE_EQ((*tape.grad(x))[0], 1.0);
}

TEST(Backward, EachNodeVisitedOnce) {
  auto x = T64::from({3}, {0.1, 0.2, 0.3});
  Tape<double> tape;
  tape.watch(x);
  auto a = numval::tanh_op(&tape, x);
  auto b = numval::mul(&tape, a, a);
  auto c = numval::add(&tape, a, b);
  auto s = numval::sum(&tape, c);
  tape.backward(s);
  // Four op nodes (leaf has no backward fn); each fires exactly once.
  EXPECT_EQ(tape.backward_visits(), 4u);
}

TEST(Backward, DetachBlocksGradient) {
  auto x = T64::from({2}, {0.5, -0.5});
  Tape<double> tape;
  tape.watch(x);
  auto y = numval::tanh_op(&tape, x);
  auto z = numval::mul(&tape, y.detach(), y.detach());
  auto s = numval::sum(&tape, z);
  EXPECT_THROW(tape.backward(s), numval::ContractError);  // z never reached the tape
}

TEST(Structural, BlockAndConcatRoundTrip) {
  numval::Rng rng(20);
  auto x = T64::zeros({4, 6});
  gradcheck::fill_uniform(x, rng);
  auto top = numval::block<double>(nullptr, x, 0, 2, 0, 6);
  auto bottom = numval::block<double>(nullptr, x, 2, 4, 0, 6);
  auto glued = numval::concat_rows<double>(nullptr, {top, bottom});
  for (long i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(glued.at(i), x.at(i));

  auto w = T64::zeros({4, 4});
  gradcheck::fill_uniform(w, rng);
  auto res = gradcheck::check({&x}, [&](Tape<double>* tp) {
    auto t = numval::block(tp, x, 0, 2, 1, 5);
    auto b = numval::block(tp, x, 2, 4, 1, 5);
    return numval::sum(tp, numval::mul(tp, numval::concat_rows(tp, {t, b}), w));
  });
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(Structural, BlockRangeValidation) {
  auto x = T64::zeros({2, 2});
  EXPECT_THROW(numval::block<double>(nullptr, x, 0, 3, 0, 2), numval::DimensionError);
  EXPECT_THROW(numval::block<double>(nullptr, x, 1, 1, 0, 2), numval::DimensionError);
}

TEST(Structural, GatherRowsScatterAddsGradient) {
  auto table = T64::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tape<double> tape;
  tape.watch(table);
  auto rows = numval::gather_rows(&tape, table, {2, 0, 2});
  EXPECT_DOUBLE_EQ(rows.at(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(rows.at(2, 1), 6.0);
  auto s = numval::sum(&tape, rows);
  tape.backward(s);
  const auto* g = tape.grad(table);
  ASSERT_NE(g, nullptr);
  // Row 2 appears twice, row 1 never.
  EXPECT_DOUBLE_EQ((*g)[0], 1.0);
  EXPECT_DOUBLE_EQ((*g)[2], 0.0);
  EXPECT_DOUBLE_EQ((*g)[4], 2.0);
}

TEST(Structural, GatherRowsRejectsBadIndex) {
  auto table = T64::zeros({3, 2});
  EXPECT_THROW(numval::gather_rows<double>(nullptr, table, {3}), numval::ContractError);
}

TEST(CausalSoftmax, RowsAreMaskedDistributions) {
  numval::Rng rng(21);
  auto s = T64::zeros({4, 4});
  gradcheck::fill_uniform(s, rng, -2.0, 2.0);
  auto p = numval::causal_softmax<double>(nullptr, s);
  for (long i = 0; i < 4; ++i) {
    double total = 0;
    for (long j = 0; j < 4; ++j) {
      if (j > i) EXPECT_DOUBLE_EQ(p.at(i, j), 0.0);
      total += p.at(i, j);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(p.at(0, 0), 1.0);
}

TEST(CausalSoftmax, GradientMatchesFiniteDifferences) {
  numval::Rng rng(22);
  auto s = T64::zeros({5, 5});
  auto w = T64::zeros({5, 5});
  gradcheck::fill_uniform(s, rng, -2.0, 2.0);
  gradcheck::fill_uniform(w, rng);
  auto res = gradcheck::check({&s}, [&](Tape<double>* tp) {
    return numval::sum(tp, numval::mul(tp, numval::causal_softmax(tp, s), w.detach()));
  });
  EXPECT_LT(res.max_rel_err, 1e-4);
}

TEST(ComposeEmbeddings, ReplacesRowsAndRoutesGradients) {
  auto tok = T64::from({3, 2}, {1, 1, 2, 2, 3, 3});
  auto pos = T64::from({4, 2}, {10, 10, 20, 20, 30, 30, 40, 40});
  auto repl = T64::from({1, 2}, {7, 8});
  std::vector<int> ids{0, 1, 2};
  std::vector<int> positions{0, 1, 2};
  Tape<double> tape;
  tape.watch(tok);
  tape.watch(pos);
  tape.watch(repl);
  auto e = numval::compose_embeddings(&tape, tok, pos, ids, positions, {1}, &repl);
  EXPECT_DOUBLE_EQ(e.at(0, 0), 11.0);
  EXPECT_DOUBLE_EQ(e.at(1, 0), 27.0);  // pos 20 + replacement 7, not token row 1
  EXPECT_DOUBLE_EQ(e.at(1, 1), 28.0);
  EXPECT_DOUBLE_EQ(e.at(2, 1), 33.0);

  auto s = numval::sum(&tape, e);
  tape.backward(s);
  const auto* gt = tape.grad(tok);
  const auto* gr = tape.grad(repl);
  const auto* gp = tape.grad(pos);
  ASSERT_NE(gt, nullptr);
  ASSERT_NE(gr, nullptr);
  ASSERT_NE(gp, nullptr);
  EXPECT_DOUBLE_EQ((*gt)[0], 1.0);  // token row 0 used
  EXPECT_DOUBLE_EQ((*gt)[2], 0.0);  // token row 1 replaced: no gradient
  EXPECT_DOUBLE_EQ((*gr)[0], 1.0);
  EXPECT_DOUBLE_EQ((*gp)[2], 1.0);  // every position row used once
  EXPECT_DOUBLE_EQ((*gp)[6], 0.0);  // position 3 unused
}

TEST(ComposeEmbeddings, ValidatesReplacementContract) {
  auto tok = T64::zeros({3, 2});
  auto pos = T64::zeros({4, 2});
  auto repl = T64::zeros({2, 2});
  EXPECT_THROW(numval::compose_embeddings<double>(nullptr, tok, pos, {0, 1}, {0, 1}, {0},
                                                  nullptr),
               numval::ContractError);
  EXPECT_THROW(
      numval::compose_embeddings<double>(nullptr, tok, pos, {0, 1}, {0, 1}, {0}, &repl),
      numval::ContractError);
}

TEST(Determinism, ForwardIsBitIdenticalAcrossRuns) {
  numval::Rng rng(23);
  auto a = T32::zeros({7, 9});
  auto b = T32::zeros({9, 5});
  gradcheck::fill_uniform(a, rng);
  gradcheck::fill_uniform(b, rng);
  auto c1 = numval::matmul<float>(nullptr, a, b);
  auto c2 = numval::matmul<float>(nullptr, a, b);
  for (long i = 0; i < c1.size(); ++i) EXPECT_EQ(c1.at(i), c2.at(i));
  auto g1 = numval::gelu<float>(nullptr, a);
  auto g2 = numval::gelu<float>(nullptr, a);
  for (long i = 0; i < g1.size(); ++i) EXPECT_EQ(g1.at(i), g2.at(i));
}

}  // namespace
