#include <gtest/gtest.h>

#include <random>

#include "auhm/metrics.hpp"

using namespace auhm;

namespace {

// Two-way ANOVA without replication, n targets x k raters, via sums of squares.
double anova_icc31(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  const double k = 2.0;
  double grand = 0;
  for (std::size_t i = 0; i < n; ++i) grand += a[i] + b[i];
  grand /= (k * n);
  double ss_total = 0, ss_rows = 0;
  double col_a = 0, col_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_total += (a[i] - grand) * (a[i] - grand) + (b[i] - grand) * (b[i] - grand);
    const double row = (a[i] + b[i]) / k;
    ss_rows += k * (row - grand) * (row - grand);
    col_a += a[i];
    col_b += b[i];
  }
  col_a /= n;
  col_b /= n;
  const double ss_cols = n * ((col_a - grand) * (col_a - grand) + (col_b - grand) * (col_b - grand));
  const double ss_err = ss_total - ss_rows - ss_cols;
  const double bms = ss_rows / (n - 1.0);
  const double ems = ss_err / ((n - 1.0) * (k - 1.0));
  return (bms - ems) / (bms + (k - 1.0) * ems);
}

}  // namespace

TEST(Icc, PerfectAgreement) {
  const std::vector<double> x{0, 1, 2.5, 3, 5};
  EXPECT_NEAR(icc31(x, x), 1.0, 1e-12);
}

TEST(Icc, ConstantOffsetIgnored) {
  const std::vector<double> x{0, 1, 2.5, 3, 5};
  std::vector<double> y = x;
  for (auto& v : y) v += 1.75;
  EXPECT_NEAR(icc31(x, y), 1.0, 1e-12);
}

TEST(Icc, SmallExampleMatchesAnova) {
  const std::vector<double> t{1, 2, 3, 4}, p{2, 2, 4, 3};
  EXPECT_NEAR(icc31(t, p), anova_icc31(t, p), 1e-10);
}

TEST(Icc, RandomPairsMatchAnova) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(50), b(50);
    for (std::size_t i = 0; i < 50; ++i) {
      a[i] = g(rng);
      b[i] = 0.6 * a[i] + 0.8 * g(rng) + 0.3;
    }
    const double v = icc31(a, b);
    EXPECT_NEAR(v, anova_icc31(a, b), 1e-10);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, icc31(b, a), 1e-12);
  }
}

TEST(Icc, Errors) {
  EXPECT_THROW(icc31(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), MetricError);
  EXPECT_THROW(icc31(std::vector<double>{1}, std::vector<double>{1}), MetricError);
  EXPECT_THROW(icc31(std::vector<double>{1, 2}, std::vector<double>{1}), MetricError);
}

TEST(Icc, ConstantPredictionIsDefined) {
  const double v = icc31(std::vector<double>{0, 1, 2, 3}, std::vector<double>{0, 0, 0, 0});
  EXPECT_LE(v, 1.0);
  EXPECT_GE(v, -1.0);
}

TEST(Mse, Examples) {
  EXPECT_EQ(mse(std::vector<double>{1, 2}, std::vector<double>{1, 2}), 0.0);
  EXPECT_EQ(mse(std::vector<double>{0, 0}, std::vector<double>{1, 3}), 5.0);
  EXPECT_THROW(mse(std::vector<double>{1}, std::vector<double>{1, 2}), MetricError);
  EXPECT_THROW(mse(std::vector<double>{}, std::vector<double>{}), MetricError);
}

TEST(Mse, MatchesLoop) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 5);
  std::vector<double> a(37), b(37);
  for (std::size_t i = 0; i < 37; ++i) a[i] = u(rng), b[i] = u(rng);
  double acc = 0;
  for (std::size_t i = 0; i < 37; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_EQ(mse(a, b), acc / 37);
  EXPECT_GT(mse(a, b), 0.0);
}
