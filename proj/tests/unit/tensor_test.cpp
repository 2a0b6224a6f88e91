#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "agsfcos/errors.hpp"
#include "agsfcos/gradcheck.hpp"
#include "agsfcos/ops.hpp"
#include "agsfcos/serialize.hpp"
#include "../oracles/naive_conv.hpp"
#include "../test_support.hpp"

using namespace agsfcos;
using agsfcos::test::random_tensor;

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, GradHasSameShape) {
  Tensor w({3}, std::vector<double>{1, 2, 3});
  w.set_requires_grad(true);
  Tape tape;
  Tensor loss = sum(mul(w, w));
  tape.backward(loss);
  ASSERT_TRUE(w.has_grad());
  EXPECT_EQ(w.grad_tensor().shape(), w.shape());
}

TEST(Tensor, NonFiniteResultIsNumericError) {
  Tensor x({2}, std::vector<double>{1000.0, 1.0});
  EXPECT_THROW(exp(x), NumericError);
  Tensor bad({1}, std::vector<double>{std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(relu(bad), NumericError);
}

TEST(Conv2d, IdentityOneByOneKernel) {
  Tensor x = random_tensor({1, 1, 3, 3}, 1);
  Tensor w({1, 1, 1, 1}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, AllOnesWindowSums) {
  Tensor x({1, 1, 4, 4}, 1.0);
  Tensor w({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 1);
  EXPECT_DOUBLE_EQ(y[0], 4.0);
  EXPECT_DOUBLE_EQ(y[3], 4.0);
  EXPECT_DOUBLE_EQ(y[5], 9.0);
  EXPECT_DOUBLE_EQ(y[10], 9.0);
  EXPECT_DOUBLE_EQ(y[15], 4.0);
}

TEST(Conv2d, StrideTwoShape) {
  Tensor y = conv2d(Tensor({1, 1, 4, 4}, 1.0), Tensor({1, 1, 3, 3}, 1.0), Tensor(), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
}

TEST(Conv2d, MatchesNaiveOracle) {
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      oracle::ConvDims d{2, 3, 7, 6, 4, 3, 3, stride, pad};
      Tensor x = random_tensor({d.n, d.c, d.h, d.w}, 10 + stride + pad);
      Tensor w = random_tensor({d.k, d.c, d.kh, d.kw}, 20 + stride + pad);
      Tensor b = random_tensor({d.k}, 30);
      Tensor y = conv2d(x, w, b, stride, pad);
      const auto ref = oracle::naive_conv2d(
          {x.values().begin(), x.values().end()}, {w.values().begin(), w.values().end()},
          {b.values().begin(), b.values().end()}, d);
      ASSERT_EQ(y.numel(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
  }
}

// Detector-sized layers. Without bias the convolution is linear in x and in
// w, so <conv(x), p> must equal both <x, dL/dx> and <w, dL/dw>.
TEST(Conv2d, LargeLayersMatchOracleAndAdjoint) {
  for (std::size_t stride : {1u, 2u}) {
    oracle::ConvDims d{2, 64, 32, 32, 64, 3, 3, stride, 1};
    Tensor x = random_tensor({d.n, d.c, d.h, d.w}, 40 + stride).set_requires_grad(true);
    Tensor w = random_tensor({d.k, d.c, 3, 3}, 50 + stride).set_requires_grad(true);
    const Tensor p = random_tensor({d.n, d.k, d.out_h(), d.out_w()}, 60 + stride);
    const auto ref = oracle::naive_conv2d({x.values().begin(), x.values().end()},
                                          {w.values().begin(), w.values().end()},
                                          std::vector<double>(d.k, 0.0), d);
    Tape tape;
    const Tensor y = conv2d(x, w, Tensor(), stride, 1);
    ASSERT_EQ(y.numel(), ref.size());
    double worst = 0.0, inner = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst = std::max(worst, std::abs(y[i] - ref[i]));
      inner += ref[i] * p[i];
    }
    EXPECT_LT(worst, 1e-10) << "stride " << stride;
    tape.backward(sum(mul(y, p)));
    double via_x = 0.0, via_w = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) via_x += x[i] * x.grad()[i];
    for (std::size_t i = 0; i < w.numel(); ++i) via_w += w[i] * w.grad()[i];
    EXPECT_NEAR(via_x, inner, 1e-8 * std::abs(inner)) << "stride " << stride;
    EXPECT_NEAR(via_w, inner, 1e-8 * std::abs(inner)) << "stride " << stride;
  }
}

TEST(Conv2d, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor(), 1, 1),
               DimensionError);
  EXPECT_THROW(conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor(), 1, 0),
               DimensionError);
}

TEST(Upsample, ConstantStaysConstant) {
  Tensor x({1, 2, 3, 2}, 4.25);
  Tensor y = bilinear_upsample_2x(x);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 6, 4}));
  for (double v : y.values()) EXPECT_EQ(v, 4.25);
}

TEST(Upsample, SinglePixelFillsFootprint) {
  Tensor y = bilinear_upsample_2x(Tensor({1, 1, 1, 1}, 7.0));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.values()) EXPECT_EQ(v, 7.0);
}

TEST(Upsample, HandTracedRow) {
  Tensor y = bilinear_upsample_2x(Tensor({1, 1, 1, 2}, std::vector<double>{0, 2}));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  const double row[] = {0.0, 0.5, 1.5, 2.0};
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y[r * 4 + i], row[i]);
}

TEST(Softmax, UniformAndClosedForm) {
  Tensor u = softmax(Tensor({1, 5}, 3.0), 1);
  for (double v : u.values()) EXPECT_NEAR(v, 0.2, 1e-15);
  Tensor s = softmax(Tensor({2}, std::vector<double>{0.0, std::log(3.0)}), 0);
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndNormalization) {
  Tensor x = random_tensor({3, 7}, 5, -50.0, 50.0);
  Tensor shifted = add_scalar(x, 12.5);
  Tensor a = softmax(x, 1), b = softmax(shifted, 1);
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      EXPECT_NEAR(a[r * 7 + i], b[r * 7 + i], 1e-14);
      EXPECT_GT(a[r * 7 + i], 0.0);
      total += a[r * 7 + i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(LayerNorm, Examples) {
  const Tensor one({1}, 1.0), zero({1}, 0.0);
  Tensor c = layer_norm(Tensor({1, 4}, 3.0), 1, one, zero);
  for (double v : c.values()) EXPECT_EQ(v, 0.0);
  Tensor two = layer_norm(Tensor({1, 2}, std::vector<double>{1, 3}), 1, one, zero, 1e-14);
  EXPECT_NEAR(two[0], -1.0, 1e-12);
  EXPECT_NEAR(two[1], 1.0, 1e-12);
  Tensor five = layer_norm(random_tensor({2, 3}, 3), 1, zero, Tensor({1}, 5.0));
  for (double v : five.values()) EXPECT_EQ(v, 5.0);
}

TEST(Elementwise, BasicValues) {
  Tensor r = relu(Tensor({2}, std::vector<double>{-1, 2}));
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);
  EXPECT_EQ(sigmoid(Tensor({1}, 0.0))[0], 0.5);
  EXPECT_THROW(log(Tensor({1}, 0.0)), NumericError);
  EXPECT_THROW(log(Tensor({1}, -2.0)), NumericError);
  Tensor x = random_tensor({2, 3, 4, 4}, 8);
  Tensor same = broadcast_add(x, Tensor({2, 3, 1, 1}, 0.0));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same[i], x[i]);
}

TEST(Backward, LinearAndDeadRelu) {
  Tensor x = random_tensor({4}, 2);
  Tensor w({4}, 0.5);
  w.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(mul(w, x)));
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(w.grad()[i], x[i]);

  Tensor neg({3}, -1.0);
  neg.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(relu(neg)));
  for (double g : neg.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, AccumulatesAndIsLinear) {
  Tensor x = random_tensor({5}, 4);
  x.set_requires_grad(true);
  auto f1 = [&] { return sum(square(x)); };
  auto f2 = [&] { return sum(sigmoid(x)); };
  std::vector<double> g1, g2;
  {
    Tape t;
    t.backward(f1());
    g1.assign(x.grad().begin(), x.grad().end());
  }
  x.zero_grad();
  {
    Tape t;
    t.backward(f2());
    g2.assign(x.grad().begin(), x.grad().end());
  }
  x.zero_grad();
  {
    Tape t;
    t.backward(add(f1(), f2()));
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(x.grad()[i], g1[i] + g2[i], 1e-14);
  {
    Tape t;
    t.backward(add(f1(), f2()));
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(x.grad()[i], 2 * (g1[i] + g2[i]), 1e-13);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x({3}, 1.0);
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = mul(x, x);
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(Tape, ReverseVisitOrder) {
  Tensor x({2}, 1.0);
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = sum(exp(relu(x)));
  tape.backward(y);
  const auto names = tape.op_names();
  const auto order = tape.last_visit_order();
  ASSERT_EQ(order.size(), names.size());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], order.size() - 1 - i);
}

TEST(Tape, ReplayIsBitIdentical) {
  Tensor x = random_tensor({1, 3, 8, 8}, 6);
  Tensor w = random_tensor({4, 3, 3, 3}, 7);
  Tensor a = softmax(reshape(conv2d(x, w, Tensor(), 1, 1), {4, 64}), 1);
  Tensor b = softmax(reshape(conv2d(x, w, Tensor(), 1, 1), {4, 64}), 1);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Gradcheck, Examples) {
  Tensor x({2}, std::vector<double>{1, 2});
  EXPECT_LT(gradcheck([](const Tensor& v) { return sum(square(v)); }, x), 1e-9);
  Tensor r = random_tensor({5}, 11);
  EXPECT_LT(gradcheck([](const Tensor& v) { return sum(log(softmax(v, 0))); }, r), 1e-6);
  Tensor img = random_tensor({1, 2, 5, 5}, 12);
  Tensor w = random_tensor({3, 2, 3, 3}, 13);
  EXPECT_LT(gradcheck([&](const Tensor& v) { return sum(conv2d(v, w, Tensor(), 1, 1)); }, img),
            1e-6);
}

TEST(Gradcheck, EveryPrimitive) {
  const Tensor pos = random_tensor({6}, 21, 0.5, 2.0);
  const Tensor any = random_tensor({6}, 22);
  const Tensor other = random_tensor({6}, 23, 0.5, 2.0);
  auto check = [](const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    return gradcheck(f, x);
  };
  EXPECT_LT(check([](const Tensor& v) { return sum(relu(v)); }, any), 1e-6);
  EXPECT_LT(check([](const Tensor& v) { return sum(sigmoid(v)); }, any), 1e-6);
  EXPECT_LT(check([](const Tensor& v) { return sum(exp(v)); }, any), 1e-6);
  EXPECT_LT(check([](const Tensor& v) { return sum(log(v)); }, pos), 1e-6);
  EXPECT_LT(check([](const Tensor& v) { return sum(sqrt(v)); }, pos), 1e-6);
  EXPECT_LT(check([](const Tensor& v) { return sum(atan(v)); }, any), 1e-6);
  EXPECT_LT(check([&](const Tensor& v) { return sum(div(other, v)); }, pos), 1e-6);
  EXPECT_LT(check([&](const Tensor& v) { return sum(mul(minimum(v, other), maximum(v, other))); },
                  any),
            1e-6);
  EXPECT_LT(check([](const Tensor& v) { return mean(scale_by(v, Tensor({1}, 0.7))); }, any), 1e-6);
  const Tensor map = random_tensor({2, 3, 4, 4}, 24);
  EXPECT_LT(check([&](const Tensor& v) { return sum(square(broadcast_add(map, v))); },
                  random_tensor({2, 3, 1, 1}, 25)),
            1e-6);
  EXPECT_LT(check([&](const Tensor& v) { return sum(mul(bilinear_upsample_2x(v), random_tensor({2, 3, 8, 8}, 26))); },
                  random_tensor({2, 3, 4, 4}, 27)),
            1e-6);
  const Tensor g = random_tensor({8}, 28), b = random_tensor({8}, 29);
  EXPECT_LT(check([&](const Tensor& v) { return sum(square(group_norm(v, 2, g, b))); },
                  random_tensor({2, 8, 3, 3}, 30)),
            1e-6);
  EXPECT_LT(check([&](const Tensor& v) {
                  return sum(square(layer_norm(v, 1, random_tensor({4}, 31), random_tensor({4}, 32))));
                },
                  random_tensor({3, 4}, 33)),
            1e-6);
  EXPECT_LT(check([&](const Tensor& v) {
                  return sum(batched_matmul(v, random_tensor({2, 4, 2}, 34)));
                },
                  random_tensor({2, 3, 4}, 35)),
            1e-6);
  const std::vector<double> targets = {0.0, 1.0, 0.3, 0.7, 1.0, 0.0};
  EXPECT_LT(check([&](const Tensor& v) { return sum(bce_with_logits(v, targets)); }, any), 1e-6);
}

TEST(Gradcheck, DetectsCorruptedBackward) {
  Tensor x = random_tensor({4}, 40);
  agsfcos::testing::inject_backward_fault("exp", 1.01);
  const double err = gradcheck([](const Tensor& v) { return sum(exp(v)); }, x);
  agsfcos::testing::clear_backward_fault();
  EXPECT_GT(err, 1e-4);
}

TEST(Gradcheck, RefusesF32) {
  PrecisionScope f32(Precision::kF32);
  std::vector<Tensor> leaves = {random_tensor({2}, 41)};
  leaves[0].set_requires_grad(true);
  EXPECT_THROW(gradcheck_leaves([&] { return sum(leaves[0]); }, leaves), UsageError);
}

TEST(Precision, F32RoundsOutputs) {
  PrecisionScope f32(Precision::kF32);
  Tensor y = scale(Tensor({1}, 1.0), 0.1);
  EXPECT_EQ(y[0], static_cast<double>(0.1f));
}

TEST(Serialize, RoundTripAndErrors) {
  Tensor t = random_tensor({2, 3, 4}, 50);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), "AGSTENS1");
  EXPECT_EQ(bytes.size(), 8 + 4 + 3 * 8 + 24 * 8u);
  std::stringstream in(bytes);
  Tensor back = read_tensor(in);
  EXPECT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back[i], t[i]);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_tensor(truncated), FormatError);
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::stringstream bad(wrong);
  EXPECT_THROW(read_tensor(bad), FormatError);
}
