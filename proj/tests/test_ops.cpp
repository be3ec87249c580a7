#include <gtest/gtest.h>

#include <random>

#include "auhm/ops.hpp"
#include "auhm/optim.hpp"
#include "gradcheck.hpp"

using namespace auhm;
using gradcheck::random_tensor;

namespace {

// Direct nested-loop convolution, zero padding.
std::vector<double> naive_conv(const std::vector<double>& x, std::size_t B, std::size_t C, std::size_t H,
                               std::size_t W, const std::vector<double>& w, std::size_t F, std::size_t K,
                               const std::vector<double>& bias, std::size_t stride, std::size_t pad) {
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out(B * F * Ho * Wo);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = bias[f];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad), ix = long(ox * stride + kx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
                acc += x[((b * C + c) * H + iy) * W + ix] * w[((f * C + c) * K + ky) * K + kx];
              }
          out[((b * F + f) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST(Conv2d, OnesGiveNine) {
  Tensor<float> x({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  Tensor<float> w({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  Tensor<float> b({1});
  auto y = conv2d(x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.data()[0], 9.0f);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  auto xd = random_tensor({2, 1, 5, 4}, rng, false);
  Tensor<float> x(xd.shape(), std::vector<float>(xd.data().begin(), xd.data().end()));
  Tensor<float> w({1, 1, 1, 1}, std::vector<float>{1.0f});
  auto y = conv2d(x, w, Tensor<float>({1}), 1, 0);
  EXPECT_EQ(values(y), values(x));
}

TEST(Conv2d, MatchesNaiveLoop) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 3, 8, 8}, rng, false);
  auto w = random_tensor({4, 3, 3, 3}, rng, false);
  auto b = random_tensor({4}, rng, false);
  auto tof = [](const Tensor<double>& t) {
    return Tensor<float>(t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
  };
  auto y = conv2d(tof(x), tof(w), tof(b), 1, 1);
  const auto ref = naive_conv(values(x), 2, 3, 8, 8, values(w), 4, 3, values(b), 1, 1);
  ASSERT_EQ(y.numel(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-5);
}

TEST(Conv2d, RandomShapesMatchNaiveLoop) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(3, 9), ch(1, 4), k(1, 3), st(1, 2), pd(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = ch(rng), C = ch(rng), H = dim(rng), W = dim(rng), F = ch(rng), K = k(rng),
                      S = st(rng), P = pd(rng);
    auto x = random_tensor({B, C, H, W}, rng, false);
    auto w = random_tensor({F, C, K, K}, rng, false);
    auto b = random_tensor({F}, rng, false);
    auto y = conv2d(x, w, b, S, P);
    const auto ref = naive_conv(values(x), B, C, H, W, values(w), F, K, values(b), S, P);
    ASSERT_EQ(y.numel(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.data()[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchNamesAxis) {
  Tensor<float> x({1, 2, 4, 4}), w({1, 3, 3, 3}), b({1});
  try {
    conv2d(x, w, b, 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Conv2d, KernelLargerThanPaddedInput) {
  Tensor<float> x({1, 1, 2, 2}), w({1, 1, 5, 5}), b({1});
  EXPECT_THROW(conv2d(x, w, b, 1, 1), DimensionError);
}

TEST(Conv2d, Gradcheck) {
  std::mt19937_64 rng(4);
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, std::tuple{2, 3, 7}, std::tuple{1, 0, 1}, std::tuple{2, 0, 1}}) {
    auto x = random_tensor({2, 3, 9, 8}, rng);
    auto w = random_tensor({4, 3, std::size_t(k), std::size_t(k)}, rng);
    auto b = random_tensor({4}, rng);
    auto r = gradcheck::check([&] { return gradcheck::project(conv2d(x, w, b, stride, pad)); }, {x, w, b});
    EXPECT_LE(r.rel_error, 1e-4) << "stride " << stride << " pad " << pad;
  }
}

TEST(BatchNorm, TrainingNormalises) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({4, 3, 5, 5}, rng, false, -3.0, 7.0);
  Tensor<double> g({3}, {1, 1, 1}), b({3}), rm({3}), rv({3}, {1, 1, 1});
  auto y = batchnorm2d(x, g, b, rm, rv, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    const std::size_t n = 4 * 25;
    for (std::size_t bi = 0; bi < 4; ++bi)
      for (std::size_t i = 0; i < 25; ++i) m += y.data()[(bi * 3 + c) * 25 + i];
    m /= n;
    for (std::size_t bi = 0; bi < 4; ++bi)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(y.data()[(bi * 3 + c) * 25 + i] - m, 2);
    v /= n;
    EXPECT_NEAR(m, 0.0, 1e-4);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatsMomentum) {
  Tensor<double> x({2, 1, 1, 2}, {1, 2, 3, 4});
  Tensor<double> g({1}, std::vector<double>{1}), b({1}), rm({1}), rv({1}, std::vector<double>{1});
  batchnorm2d(x, g, b, rm, rv, true);
  EXPECT_NEAR(rm.data()[0], 0.1 * 2.5, 1e-12);
  // Unbiased batch variance of {1,2,3,4} is 5/3.
  EXPECT_NEAR(rv.data()[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(BatchNorm, EvalWithIdentityStats) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({2, 2, 3, 3}, rng, false);
  Tensor<double> g({2}, {1, 1}), b({2}), rm({2}), rv({2}, {1, 1});
  auto y = batchnorm2d(x, g, b, rm, rv, false);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5);
}

TEST(BatchNorm, DegenerateBatch) {
  Tensor<double> x({1, 2, 1, 1}), g({2}, {1, 1}), b({2}), rm({2}), rv({2}, {1, 1});
  EXPECT_THROW(batchnorm2d(x, g, b, rm, rv, true), DimensionError);
  EXPECT_NO_THROW(batchnorm2d(x, g, b, rm, rv, false));
}

TEST(BatchNorm, Gradcheck) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({3, 2, 3, 4}, rng);
  auto g = random_tensor({2}, rng, true, 0.5, 1.5);
  auto b = random_tensor({2}, rng);
  Tensor<double> rm({2}), rv({2}, {1, 1});
  auto r = gradcheck::check([&] { return gradcheck::project(batchnorm2d(x, g, b, rm, rv, true)); }, {x, g, b});
  EXPECT_LE(r.rel_error, 1e-4);
  auto r_eval = gradcheck::check([&] { return gradcheck::project(batchnorm2d(x, g, b, rm, rv, false)); }, {x, g, b});
  EXPECT_LE(r_eval.rel_error, 1e-4);
}

TEST(Relu, Values) {
  Tensor<float> x({2}, {-0.5f, 0.5f});
  auto y = relu(x);
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 0.5f);
}

TEST(Relu, Gradcheck) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({2, 3, 4, 4}, rng);
  EXPECT_LE(gradcheck::check([&] { return gradcheck::project(relu(x)); }, {x}).rel_error, 1e-4);
}

TEST(Resample, UpsampleThenPool) {
  Tensor<float> x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto up = upsample_nearest2(x);
  EXPECT_EQ(values(up), (std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_EQ(values(maxpool2(up)), values(x));
}

TEST(Resample, OddExtentRejected) {
  EXPECT_THROW(maxpool2(Tensor<float>({1, 1, 3, 4})), ShapeError);
}

TEST(Resample, MaxpoolTieGoesToFirst) {
  Tensor<double> x({1, 1, 2, 2}, {5, 5, 5, 5}, true);
  backward(sum(maxpool2(x)));
  const auto g = std::as_const(x).grad();
  EXPECT_EQ(std::vector<double>(g.begin(), g.end()), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Resample, Gradcheck) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({2, 2, 4, 6}, rng);
  EXPECT_LE(gradcheck::check([&] { return gradcheck::project(maxpool2(x)); }, {x}).rel_error, 1e-4);
  EXPECT_LE(gradcheck::check([&] { return gradcheck::project(upsample_nearest2(x)); }, {x}).rel_error, 1e-4);
}

TEST(Elementwise, Gradcheck) {
  std::mt19937_64 rng(10);
  auto a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  EXPECT_LE(gradcheck::check([&] { return gradcheck::project(add(a, b)); }, {a, b}).rel_error, 1e-4);
  EXPECT_LE(gradcheck::check([&] { return gradcheck::project(mul(a, b)); }, {a, b}).rel_error, 1e-4);
}

namespace {

Tensor<double> single_pixel_loss(double pred, double target) {
  Tensor<double> p({1, 1, 1, 1}, std::vector<double>{pred}), t({1, 1, 1, 1}, std::vector<double>{target});
  const double w = 1.0;
  return huber_loss(p, t, std::span<const double>(&w, 1));
}

}  // namespace

TEST(Huber, BranchValues) {
  EXPECT_EQ(single_pixel_loss(0.5, 0.0).item(), 0.125);
  EXPECT_EQ(single_pixel_loss(2.0, 0.0).item(), 1.5);
  EXPECT_EQ(single_pixel_loss(1.0, 0.0).item(), 0.5);
  EXPECT_EQ(single_pixel_loss(3.0, 3.0).item(), 0.0);
  EXPECT_EQ(huber(1.0), 0.5);
  EXPECT_EQ(huber(std::nextafter(1.0, 0.0)), 0.5 * std::pow(std::nextafter(1.0, 0.0), 2));
}

TEST(Huber, WeightedAverage) {
  // Two channels of two pixels; channel means 0.125 and 1.5 weighted by 2 and 0.5.
  Tensor<double> p({1, 2, 1, 2}, {0.5, -0.5, 2, -2}), t({1, 2, 1, 2});
  const std::vector<double> w{2.0, 0.5};
  EXPECT_DOUBLE_EQ(huber_loss(p, t, std::span<const double>(w)).item(), (2.0 * 0.125 + 0.5 * 1.5) / 2.0);
}

TEST(Huber, NonFiniteRejected) {
  Tensor<double> p({1, 1, 1, 1}, std::vector<double>{std::nan("")}), t({1, 1, 1, 1});
  const double w = 1.0;
  EXPECT_THROW(huber_loss(p, t, std::span<const double>(&w, 1)), NumericError);
}

TEST(Huber, Gradcheck) {
  std::mt19937_64 rng(11);
  auto p = random_tensor({2, 3, 4, 4}, rng, true, -3, 3);
  auto t = random_tensor({2, 3, 4, 4}, rng, false, -3, 3);
  // Keep residuals off the kink at |r| = 1.
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (std::abs(std::abs(p.data()[i] - t.data()[i]) - 1.0) < 1e-3) p.data()[i] += 0.01;
  }
  const std::vector<double> w{0.2, 1.0, 0.5};
  auto r = gradcheck::check([&] { return huber_loss(p, t, std::span<const double>(w)); }, {p});
  EXPECT_LE(r.rel_error, 1e-4);
}

TEST(RmsProp, ZeroGradLeavesParameter) {
  Tensor<float> p({1}, {0.7f}, true);
  p.zero_grad();
  std::vector<Tensor<float>> ps{p};
  RmsPropState<float> st;
  rmsprop_step(ps, st, {});
  EXPECT_EQ(p.data()[0], 0.7f);
}

TEST(RmsProp, FirstStepClosedForm) {
  Tensor<double> p({1}, {0.0}, true);
  p.grad()[0] = 1.0;
  std::vector<Tensor<double>> ps{p};
  RmsPropState<double> st;
  rmsprop_step(ps, st, {1e-3, 0.99, 1e-8});
  EXPECT_NEAR(p.data()[0], -1e-3 / (std::sqrt(0.01) + 1e-8), 1e-15);
  const double first = -p.data()[0];
  rmsprop_step(ps, st, {1e-3, 0.99, 1e-8});
  const double second = -p.data()[0] - first;
  EXPECT_LT(second, first);
}

TEST(RmsProp, NonPositiveLrRejected) {
  std::vector<Tensor<float>> ps{Tensor<float>({1}, {0.f}, true)};
  RmsPropState<float> st;
  EXPECT_THROW(rmsprop_step(ps, st, {0.0}), ConfigError);
}
