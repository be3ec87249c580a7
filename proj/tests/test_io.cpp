#include <gtest/gtest.h>

#include <random>

#include "auhm/io.hpp"
#include "auhm/synth.hpp"

using namespace auhm;

namespace {

Rgb8Image random_rgb(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rgb8Image img{w, h, std::vector<std::uint8_t>(3 * w * h)};
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Ppm, RoundTripBytes) {
  const auto img = random_rgb(256, 256, 1);
  const auto bytes = io::encode_ppm(img);
  EXPECT_EQ(io::decode_ppm(bytes), img);
  EXPECT_EQ(io::encode_ppm(io::decode_ppm(bytes)), bytes);
}

TEST(Ppm, FloatImageSurvivesQuantisedRoundTrip) {
  const auto s = synth::generate_sample(3);
  EXPECT_EQ(to_float(io::decode_ppm(io::encode_ppm(to_rgb8(s.image)))), s.image);
}

TEST(Ppm, CommentsInHeader) {
  const std::string bytes = std::string("P6\n# made by hand\n2 1\n255\n") + std::string("\x01\x02\x03\x04\x05\x06", 6);
  const auto img = io::decode_ppm(bytes);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.data[5], 6);
}

TEST(Ppm, ErrorsCarryByteOffset) {
  EXPECT_NE(error_of([] { io::decode_ppm("P5\n1 1\n255\n\x00"); }).find("at byte 0"), std::string::npos);
  EXPECT_NE(error_of([] { io::decode_ppm("P6\n2 x\n255\n"); }).find("at byte 5"), std::string::npos);
  const auto trunc = error_of([] { io::decode_ppm(std::string("P6\n2 2\n255\n") + "abc"); });
  EXPECT_NE(trunc.find("truncated"), std::string::npos);
  EXPECT_NE(trunc.find("at byte 11"), std::string::npos);
  EXPECT_NE(error_of([] { io::decode_ppm("P6\n1 1\n65535\n"); }), "");
}

TEST(Pgm, RoundTrip) {
  io::GrayImage g{3, 2, {0, 10, 20, 30, 40, 255}};
  EXPECT_EQ(io::decode_pgm(io::encode_pgm(g)), g);
}

TEST(Pgm, HeatmapScaling) {
  HeatmapStack s(1, 2);
  s.values = {0.0, 5.0, 2.5, 7.0};
  EXPECT_EQ(io::heatmap_to_gray(s, 0).data, (std::vector<std::uint8_t>{0, 255, 128, 255}));
}

TEST(Landmarks, RoundTripAtSixDecimals) {
  const auto& t = synth::generate_sample(8).landmarks;
  const auto text = io::encode_landmarks(t);
  EXPECT_EQ(io::decode_landmarks(text), t);
  EXPECT_EQ(io::encode_landmarks(io::decode_landmarks(text)), text);
  EXPECT_EQ(text.substr(0, 3), "66\n");
}

TEST(Landmarks, Malformed) {
  EXPECT_NE(error_of([] { io::decode_landmarks("65\n"); }).find("at byte 3"), std::string::npos);
  std::string text = "66\n";
  for (int i = 0; i < 10; ++i) text += "1.0 2.0\n";
  EXPECT_NE(error_of([&] { io::decode_landmarks(text); }).find("at byte " + std::to_string(text.size())), std::string::npos);
  EXPECT_NE(error_of([] { io::decode_landmarks("66\n1.0 abc\n"); }).find("at byte 7"), std::string::npos);
}

TEST(LabelsCsv, RoundTrip) {
  io::LabelTable t{{6, 10, 12, 14, 17}, {{"s000000.ppm", {0, 1.25, 5, 0.01, 3.33}}, {"b.ppm", {0.1, 0, 0, 0, 4}}}};
  const auto text = io::encode_labels_csv(t);
  EXPECT_EQ(text.substr(0, text.find('\n')), "file,AU6,AU10,AU12,AU14,AU17");
  EXPECT_EQ(io::decode_labels_csv(text), t);
}

TEST(LabelsCsv, Malformed) {
  EXPECT_NE(error_of([] { io::decode_labels_csv("name,AU6\n"); }), "");
  EXPECT_NE(error_of([] { io::decode_labels_csv("file,AU6\na.ppm,1,2\n"); }).find("at byte 9"), std::string::npos);
  EXPECT_NE(error_of([] { io::decode_labels_csv("file,AU6\na.ppm,zz\n"); }), "");
  EXPECT_THROW(io::decode_labels_csv("file,AU6\na.ppm,6\n"), LabelError);
}

TEST(KeyValues, Parse) {
  const auto kv = io::parse_key_values("a = 1\n# comment\n\nb=two # trailing\n");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  EXPECT_NE(error_of([] { io::parse_key_values("a=1\nnovalue\n"); }).find("at byte 4"), std::string::npos);
}

TEST(Checkpoint, RoundTripAndHeader) {
  Checkpoint ck;
  ck.config = ModelConfig::toy();
  ck.au_ids = {6, 10, 12, 14, 17};
  ck.header["seed"] = "7";
  ck.arrays.push_back({"x.weight", {2, 2}, {1.5f, -0.f, std::numeric_limits<float>::denorm_min(), 3e38f}});
  ck.arrays.push_back({"x.bias", {1}, {0.25f}});
  const auto bytes = io::encode_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 6), "AUHM1\n");
  const auto back = io::decode_checkpoint(bytes);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.au_ids, ck.au_ids);
  EXPECT_EQ(back.header, ck.header);
  ASSERT_EQ(back.arrays.size(), 2u);
  EXPECT_EQ(std::memcmp(back.arrays[0].values.data(), ck.arrays[0].values.data(), 16), 0);
  EXPECT_EQ(io::encode_checkpoint(back), bytes);
}

TEST(Checkpoint, BadMagicAndTruncation) {
  Checkpoint ck;
  ck.config = ModelConfig::toy();
  ck.au_ids = {6, 10, 12, 14, 17};
  ck.arrays.push_back({"w", {3}, {1, 2, 3}});
  auto bytes = io::encode_checkpoint(ck);
  auto bad = bytes;
  bad[3] = 'X';
  EXPECT_NE(error_of([&] { io::decode_checkpoint(bad); }).find("bad magic"), std::string::npos);
  EXPECT_NE(error_of([&] { io::decode_checkpoint(bytes.substr(0, bytes.size() - 2)); }).find("truncated"),
            std::string::npos);
}

TEST(Heatmaps, RoundTrip) {
  HeatmapStack s(2, 4);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = 0.1 * i - 0.3;
  const auto bytes = io::encode_heatmaps(s, {12, 17});
  const auto [back, ids] = io::decode_heatmaps(bytes);
  EXPECT_EQ(back.values, s.values);
  EXPECT_EQ(ids, (std::vector<int>{12, 17}));
  EXPECT_EQ(io::encode_heatmaps(back, ids), bytes);
  EXPECT_THROW(io::decode_heatmaps(bytes + "x"), FormatError);
  EXPECT_THROW(io::decode_heatmaps("AUHM1\n"), FormatError);
}
