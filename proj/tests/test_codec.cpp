#include <gtest/gtest.h>

#include <random>

#include "auhm/codec.hpp"
#include "auhm/io.hpp"
#include "auhm/synth.hpp"

using namespace auhm;

namespace {

LandmarkSet single_point(std::size_t idx, Point p) {
  LandmarkSet l;
  l[idx] = p;
  return l;
}

}  // namespace

TEST(Centers, DivideByFour) {
  AuSpec one{0, {{0}}};
  EXPECT_EQ(centers_for_au(single_point(0, {128, 128}), one, {}).front(), (HeatPoint{32, 32}));
  LandmarkSet two;
  two[0] = {100, 100};
  two[1] = {140, 140};
  EXPECT_EQ(centers_for_au(two, AuSpec{0, {{0, 1}}}, {}).front(), (HeatPoint{30, 30}));
}

TEST(Centers, OutOfBoundsKept) {
  AuSpec one{0, {{0}}};
  EXPECT_EQ(centers_for_au(single_point(0, {-40, 300}), one, {}).front(), (HeatPoint{-10, 75}));
}

TEST(Centers, Au12AtTemplateMouthCorners) {
  const auto& t = synth::template_landmarks();
  const auto specs = default_au_specs();
  const auto c = centers_for_au(t, specs[2], {});
  ASSERT_EQ(specs[2].au_id, 12);
  EXPECT_EQ(c[0], (HeatPoint{std::lround(t[48].x / 4), std::lround(t[48].y / 4)}));
  EXPECT_EQ(c[1], (HeatPoint{std::lround(t[54].x / 4), std::lround(t[54].y / 4)}));
}

TEST(Specs, DefaultInvariants) {
  const auto specs = default_au_specs();
  EXPECT_EQ(au_ids(specs), (std::vector<int>{6, 10, 12, 14, 17}));
  for (const auto& s : specs) {
    EXPECT_GE(s.centers.size(), 2u);
    EXPECT_LE(s.centers.size(), 3u);
  }
  std::size_t shared = 0;
  for (const auto& a : specs[1].centers)
    for (const auto& b : specs[3].centers) shared += a == b;
  EXPECT_EQ(shared, 2u);
}

TEST(Specs, ShippedFileMatchesDefaults) {
  const auto text = io::read_file(std::string(AUHM_SOURCE_DIR) + "/data/au_centers.txt");
  EXPECT_EQ(parse_au_specs(text), default_au_specs());
  EXPECT_EQ(parse_au_specs(format_au_specs(default_au_specs())), default_au_specs());
}

TEST(Specs, ParseErrors) {
  EXPECT_THROW(parse_au_specs("AU6 (1,2)"), FormatError);
  EXPECT_THROW(parse_au_specs("AU6: 1,2"), FormatError);
  EXPECT_THROW(parse_au_specs("AU6: (1,99)"), FormatError);
  EXPECT_THROW(parse_au_specs("AUx: (1)"), FormatError);
}

TEST(Encode, ZeroIntensityIsEmpty) {
  const std::vector<HeatPoint> c{{32, 32}, {10, 50}};
  for (double v : encode_au(0.0, c, {})) EXPECT_EQ(v, 0.0);
}

TEST(Encode, PeakEqualsIntensity) {
  const std::vector<HeatPoint> c{{32, 32}};
  EXPECT_EQ(encode_au(5.0, c, {})[32 * 64 + 32], 5.0);
}

TEST(Encode, ClosedFormOffset) {
  const std::vector<HeatPoint> c{{32, 32}};
  EXPECT_NEAR(encode_au(2.0, c, {})[32 * 64 + 34], 2.0 * std::exp(-0.5), 1e-9);
  EXPECT_NEAR(encode_au(2.0, c, {})[32 * 64 + 34], 1.21306, 1e-5);
}

TEST(Encode, MaxNotSum) {
  const std::vector<HeatPoint> c{{30, 32}, {33, 32}};
  const auto m = encode_au(3.0, c, {});
  // Pixel 31 is 1 px from the first centre and 2 px from the second.
  const double g1 = 3.0 * std::exp(-1.0 / 18.0), g2 = 3.0 * std::exp(-4.0 / 18.0);
  EXPECT_DOUBLE_EQ(m[32 * 64 + 31], std::max(g1, g2));
}

TEST(Encode, SupportBoundAndSymmetry) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double I = u(rng);
    const HeatPoint c{32, 30};
    const auto m = encode_au(I, std::vector<HeatPoint>{c}, {});
    const long half = static_cast<long>(std::floor(6 * I));
    for (long y = 0; y < 64; ++y)
      for (long x = 0; x < 64; ++x) {
        const double v = m[y * 64 + x];
        if (std::max(std::abs(x - c.x), std::abs(y - c.y)) > half) {
          ASSERT_EQ(v, 0.0);
        }
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, I);
        const long mx = 2 * c.x - x, my = 2 * c.y - y;
        if (mx >= 0 && mx < 64) {
          ASSERT_EQ(v, m[y * 64 + mx]);
        }
        if (my >= 0 && my < 64) {
          ASSERT_EQ(v, m[my * 64 + x]);
        }
      }
  }
}

TEST(Encode, MonotoneInIntensity) {
  const std::vector<HeatPoint> c{{32, 32}};
  std::vector<double> prev(64 * 64, 0.0);
  for (int k = 1; k <= 50; ++k) {
    const auto m = encode_au(k / 10.0, c, {});
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_GE(m[i], prev[i]);
    prev = m;
  }
}

TEST(Encode, OutOfRangeLabel) {
  const std::vector<HeatPoint> c{{32, 32}};
  EXPECT_THROW(encode_au(5.01, c, {}), LabelError);
  EXPECT_THROW(encode_au(-0.1, c, {}), LabelError);
}

TEST(EncodeAll, SharedCentresActivateIndependently) {
  const auto& t = synth::template_landmarks();
  const auto stack = encode_all({0, 3, 0, 0, 0}, t, default_au_specs(), {});
  const auto c10 = centers_for_au(t, default_au_specs()[1], {});
  EXPECT_EQ(stack.at(1, c10[0].y, c10[0].x), 3.0);
  EXPECT_EQ(stack.at(1, c10[1].y, c10[1].x), 3.0);
  for (double v : stack.channel(3)) EXPECT_EQ(v, 0.0);
  for (double v : encode_all({0, 0, 0, 0, 0}, t, default_au_specs(), {}).values) EXPECT_EQ(v, 0.0);
}

TEST(EncodeAll, CountMismatch) {
  EXPECT_THROW(encode_all({1, 2}, synth::template_landmarks(), default_au_specs(), {}), LabelError);
}

TEST(Decode, MaxAndClamp) {
  HeatmapStack s(3, 8);
  s.at(0, 2, 3) = 3.7;
  s.at(1, 0, 0) = 5.4;
  for (double& v : s.channel(2)) v = -0.2;
  EXPECT_EQ(decode(s), (AuLabels{3.7, 5.0, 0.0}));
  EXPECT_EQ(decode(HeatmapStack(5, 64)), AuLabels(5, 0.0));
}

TEST(Decode, RoundTripExact) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const auto& t = synth::template_landmarks();
  for (int trial = 0; trial < 200; ++trial) {
    AuLabels labels(5);
    for (auto& v : labels) v = u(rng);
    EXPECT_EQ(decode(encode_all(labels, t, default_au_specs(), {})), labels);
  }
}
