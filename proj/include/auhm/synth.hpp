#pragma once

// Procedural faces with exact landmarks and AU intensity labels.
//
// A neutral template face is defined in a canonical 256x256 frame whose eye
// and mouth anchors sit on the default registration references. Every image
// is rendered analytically: each source pixel is mapped back through the
// per-seed pose into the canonical frame, undone through the AU displacement
// fields, and shaded from smooth primitives. All AU effects are linear in
// intensity and have compact support around that AU's centres:
//
//   AU6   cheek blush                    AU14  dimple darkening at 49/53
//   AU10  upper lip raised + tint        AU17  chin shading
//   AU12  mouth corners pulled up 8 px at intensity 5, plus tint

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "auhm/codec.hpp"
#include "auhm/image.hpp"
#include "auhm/registration.hpp"

namespace auhm::synth {

inline constexpr int kGeneratorVersion = 1;
inline constexpr std::size_t kCanonicalSize = 256;

struct SynthConfig {
  std::size_t image_size = 256;
  double zero_probability = 0.6;  // remaining mass uniform over {0.01, ..., 5.00}
  double max_shift = 20.0;
  double max_rotation_deg = 15.0;
  double min_scale = 0.85;
  double max_scale = 1.15;
};

/// Everything that determines one rendered face.
struct FaceParams {
  SimilarityTransform pose;  // canonical frame -> source image
  std::array<double, 3> skin_tone{1, 1, 1};
  std::array<double, 3> background_tone{1, 1, 1};
  double feature_tone = 1.0;
  AuLabels labels = AuLabels(5, 0.0);
};

struct SynthSample {
  Image image;
  LandmarkSet landmarks;
  AuLabels labels;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the i-th sample of a dataset.
inline std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t index) {
  return splitmix64(dataset_seed ^ splitmix64(0xA5A5A5A5ULL + index));
}

inline const LandmarkSet& template_landmarks() {
  static const LandmarkSet lms = [] {
    LandmarkSet l;
    const double pi = std::numbers::pi;
    for (std::size_t k = 0; k <= 16; ++k) {  // jaw, image-left to image-right
      const double t = pi - static_cast<double>(k) * pi / 16.0;
      l[k] = {128.0 + 88.0 * std::cos(t), 120.0 + 125.0 * std::sin(t)};
    }
    const Point brow[5] = {{56, 86}, {66, 80}, {77, 78}, {88, 79}, {97, 83}};
    for (std::size_t i = 0; i < 5; ++i) {
      l[17 + i] = brow[i];
      l[26 - i] = {256.0 - brow[i].x, brow[i].y};
    }
    for (std::size_t i = 0; i < 4; ++i) l[27 + i] = {128.0, 105.0 + 15.0 * static_cast<double>(i)};
    const Point nose[5] = {{113, 160}, {120, 163}, {128, 165}, {136, 163}, {143, 160}};
    for (std::size_t i = 0; i < 5; ++i) l[31 + i] = nose[i];
    // Eyes: offsets around the anchors (76.8,102.4) and (179.2,102.4).
    const Point eye[6] = {{-16, 0}, {-6, -6}, {6, -6}, {16, 0}, {6, 6}, {-6, 6}};
    for (std::size_t i = 0; i < 6; ++i) {
      l[36 + i] = Point{76.8, 102.4} + eye[i];
      // 42 is the inner corner of the right eye: mirror of 39.
      const std::size_t mirror[6] = {45, 44, 43, 42, 47, 46};
      l[mirror[i]] = {256.0 - l[36 + i].x, l[36 + i].y};
    }
    const Point lip[18] = {
        {100, 205}, {108, 199}, {118, 195}, {128, 197}, {138, 195}, {148, 199},  // 48-53
        {156, 205}, {148, 212}, {138, 216}, {128, 217}, {118, 216}, {108, 212},  // 54-59
        {116, 202}, {128, 203}, {140, 202}, {140, 207}, {128, 208}, {116, 207},  // 60-65
    };
    Point m;
    for (const auto& p : lip) m = m + p;
    m = (1.0 / 18.0) * m;
    const Point shift = Point{128.0, 204.8} - m;
    for (std::size_t i = 0; i < 18; ++i) l[48 + i] = lip[i] + shift;
    return l;
  }();
  return lms;
}

/// Anchor triple the template was built around.
inline Anchors template_anchors() { return {{76.8, 102.4}, {179.2, 102.4}, {128.0, 204.8}}; }

namespace detail {

inline double bump(double dist, double radius) {
  if (dist >= radius) return 0.0;
  const double t = dist / radius;
  const double u = 1.0 - t * t;
  return u * u;
}

/// 1 inside, 0 outside, smooth cubic ramp over [-w, w] of signed distance.
inline double coverage(double signed_dist, double w = 3.5) {
  if (signed_dist <= -w) return 1.0;
  if (signed_dist >= w) return 0.0;
  const double t = (w - signed_dist) / (2.0 * w);
  return t * t * (3.0 - 2.0 * t);
}

inline double segment_distance(Point p, Point a, Point b) {
  const Point ab = b - a, ap = p - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  const double t = std::clamp((ap.x * ab.x + ap.y * ab.y) / len2, 0.0, 1.0);
  return norm(ap - t * ab);
}

template <std::size_t N>
double polyline_distance(Point p, const std::array<Point, N>& pts) {
  double d = 1e300;
  for (std::size_t i = 0; i + 1 < N; ++i) d = std::min(d, segment_distance(p, pts[i], pts[i + 1]));
  return d;
}

/// Negative inside the closed polygon.
template <std::size_t N>
double polygon_signed_distance(Point p, const std::array<Point, N>& pts) {
  double d = 1e300;
  bool inside = false;
  for (std::size_t i = 0, j = N - 1; i < N; j = i++) {
    d = std::min(d, segment_distance(p, pts[j], pts[i]));
    if ((pts[i].y > p.y) != (pts[j].y > p.y) &&
        p.x < (pts[j].x - pts[i].x) * (p.y - pts[i].y) / (pts[j].y - pts[i].y) + pts[i].x) {
      inside = !inside;
    }
  }
  return inside ? -d : d;
}

inline double ellipse_signed_distance(Point p, Point c, double rx, double ry) {
  const double dx = p.x - c.x, dy = p.y - c.y;
  const double k = std::hypot(dx / rx, dy / ry);
  if (k < 1e-12) return -std::min(rx, ry);
  const double gx = dx / (rx * rx * k), gy = dy / (ry * ry * k);
  return (k - 1.0) / std::hypot(gx, gy);
}

struct Rgb {
  double r = 0, g = 0, b = 0;
};

inline Rgb mix(Rgb a, Rgb b, double alpha) {
  return {a.r + alpha * (b.r - a.r), a.g + alpha * (b.g - a.g), a.b + alpha * (b.b - a.b)};
}

/// Vertical upward displacement with compact support.
struct Lift {
  Point center;
  double amount;  // px at the centre
  double radius;
};

inline constexpr double kLiftRadius = 14.0;
inline constexpr double kBlobRadius = 14.0;
inline constexpr double kAu12Lift = 1.6;  // px per intensity unit
inline constexpr double kAu10Lift = 0.5;

// Additive colour per AU at intensity 5, in default-spec order.
inline constexpr std::array<Rgb, 5> kBlobColour = {{
    {0.28, 0.06, -0.10},    // AU6
    {-0.05, -0.16, 0.28},   // AU10
    {0.08, 0.28, -0.04},    // AU12
    {-0.26, -0.22, -0.14},  // AU14
    {-0.12, 0.20, 0.26},    // AU17
}};

class FaceRenderer {
 public:
  explicit FaceRenderer(const FaceParams& params) : params_(params) {
    validate_labels(params.labels);
    if (params.labels.size() != 5) throw LabelError("synthetic faces carry exactly 5 AU labels");
    const auto& t = template_landmarks();
    const auto& lab = params.labels;
    lifts_ = {Lift{t[48], kAu12Lift * lab[2], kLiftRadius}, Lift{t[54], kAu12Lift * lab[2], kLiftRadius},
              Lift{t[49], kAu10Lift * lab[1], kLiftRadius}, Lift{t[53], kAu10Lift * lab[1], kLiftRadius}};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) canonical_[i] = deform(t[i]);
    const auto specs = default_au_specs();
    for (std::size_t a = 0; a < specs.size(); ++a) {
      for (const auto& group : specs[a].centers) {
        Point m;
        for (std::size_t idx : group) m = m + t[idx];
        blobs_.push_back({(1.0 / static_cast<double>(group.size())) * m, a});
      }
    }
    const Point e0 = mean_of(t, 36, 41), e1 = mean_of(t, 42, 47);
    eyes_ = {e0, e1};
    for (std::size_t i = 0; i < 5; ++i) {
      brow_left_[i] = t[17 + i];
      brow_right_[i] = t[22 + i];
      nose_base_[i] = t[31 + i];
    }
    for (std::size_t i = 0; i < 4; ++i) bridge_[i] = t[27 + i];
    for (std::size_t i = 0; i < 12; ++i) outer_lip_[i] = t[48 + i];
    for (std::size_t i = 0; i < 6; ++i) inner_lip_[i] = t[60 + i];
    inverse_pose_ = params.pose.inverse();
  }

  /// Landmarks in source-image coordinates.
  LandmarkSet landmarks() const {
    LandmarkSet out;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) out[i] = params_.pose.apply(canonical_[i]);
    return out;
  }

  Image render(std::size_t size) const {
    Image img(size, size);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const Point q = inverse_pose_.apply({static_cast<double>(x), static_cast<double>(y)});
        const Rgb c = shade(q);
        img.at(0, y, x) = static_cast<float>(c.r);
        img.at(1, y, x) = static_cast<float>(c.g);
        img.at(2, y, x) = static_cast<float>(c.b);
      }
    }
    quantize_in_place(img);
    return img;
  }

 private:
  struct Blob {
    Point center;
    std::size_t au;
  };

  Point displacement(Point p) const {
    double dy = 0.0;
    for (const auto& l : lifts_) dy -= l.amount * bump(norm(p - l.center), l.radius);
    return {0.0, dy};
  }

  Point deform(Point p) const { return p + displacement(p); }

  /// Solves deform(p) = q by fixed-point iteration; the lift fields are
  /// contractions so this converges, and it is the identity off-support.
  Point undeform(Point q) const {
    Point p = q;
    for (int it = 0; it < 100; ++it) {
      const Point next = q - displacement(p);
      if (norm(next - p) < 1e-12) return next;
      p = next;
    }
    return p;
  }

  Rgb shade(Point q) const {
    const Point p = undeform(q);
    const auto& skin_t = params_.skin_tone;
    const auto& bg_t = params_.background_tone;
    const double ft = params_.feature_tone;
    const Rgb skin{0.72 * skin_t[0], 0.56 * skin_t[1], 0.46 * skin_t[2]};
    Rgb c{(0.30 + 0.0004 * (p.y - 128.0)) * bg_t[0], 0.34 * bg_t[1], 0.40 * bg_t[2]};

    const double head_sd = p.y < 120.0 ? ellipse_signed_distance(p, {128, 120}, 90, 140)
                                       : ellipse_signed_distance(p, {128, 120}, 90, 127);
    c = mix(c, skin, coverage(head_sd));

    const Rgb brow{0.30 * ft, 0.22 * ft, 0.18 * ft};
    if (p.y < 100 && p.y > 60) {
      const double d = std::min(polyline_distance(p, brow_left_), polyline_distance(p, brow_right_));
      c = mix(c, brow, 0.75 * coverage(d - 3.0));
    }
    if (p.y > 85 && p.y < 120) {
      for (const auto& e : eyes_) {
        if (std::abs(p.x - e.x) > 26) continue;
        c = mix(c, Rgb{0.92, 0.90, 0.88}, 0.8 * coverage(ellipse_signed_distance(p, e, 16, 7)));
        c = mix(c, Rgb{0.20 * ft, 0.15 * ft, 0.12 * ft}, coverage(norm(p - e) - 5.0));
      }
    }
    if (p.x > 100 && p.x < 156 && p.y > 95 && p.y < 175) {
      const Rgb light{std::min(1.0, skin.r * 1.08), std::min(1.0, skin.g * 1.08), std::min(1.0, skin.b * 1.08)};
      c = mix(c, light, 0.6 * coverage(polyline_distance(p, bridge_) - 3.0));
      c = mix(c, Rgb{skin.r * 0.72, skin.g * 0.72, skin.b * 0.72},
              0.8 * coverage(polyline_distance(p, nose_base_) - 2.5));
    }
    if (p.x > 85 && p.x < 171 && p.y > 180 && p.y < 232) {
      c = mix(c, Rgb{0.70 * ft, 0.32 * ft, 0.32 * ft}, 0.9 * coverage(polygon_signed_distance(p, outer_lip_)));
      c = mix(c, Rgb{0.30, 0.10, 0.10}, 0.8 * coverage(polygon_signed_distance(p, inner_lip_)));
    }

    for (const auto& b : blobs_) {
      // Tint rides on the skin, so another AU's lift carries it along.
      const double w = bump(norm(p - b.center), kBlobRadius);
      if (w == 0.0) continue;
      const double s = w * params_.labels[b.au] / kMaxIntensity;
      c.r += s * kBlobColour[b.au].r;
      c.g += s * kBlobColour[b.au].g;
      c.b += s * kBlobColour[b.au].b;
    }
    return {std::clamp(c.r, 0.0, 1.0), std::clamp(c.g, 0.0, 1.0), std::clamp(c.b, 0.0, 1.0)};
  }

  FaceParams params_;
  SimilarityTransform inverse_pose_;
  std::vector<Lift> lifts_;
  std::array<Point, kLandmarkCount> canonical_{};
  std::vector<Blob> blobs_;
  std::array<Point, 2> eyes_{};
  std::array<Point, 5> brow_left_{}, brow_right_{}, nose_base_{};
  std::array<Point, 4> bridge_{};
  std::array<Point, 12> outer_lip_{};
  std::array<Point, 6> inner_lip_{};
};

inline double quantize_micro(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace detail

/// Canonical-to-source similarity: scale and rotate about the frame centre,
/// then shift.
inline SimilarityTransform make_pose(double scale, double rotation_rad, double shift_x,
                                     double shift_y, std::size_t image_size = kCanonicalSize) {
  const double c = static_cast<double>(kCanonicalSize) / 2.0;
  const double o = static_cast<double>(image_size) / 2.0;
  SimilarityTransform to_origin{1.0, 0.0, -c, -c};
  SimilarityTransform rs{scale, rotation_rad, o + shift_x, o + shift_y};
  return rs.compose(to_origin);
}

/// Draws one label vector: each AU is 0 with probability zero_probability,
/// otherwise uniform over the 500 values {0.01, ..., 5.00}.
inline AuLabels draw_labels(std::mt19937_64& rng, const SynthConfig& cfg = {}) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> level(1, 500);
  AuLabels out(5);
  for (auto& v : out) v = unit(rng) < cfg.zero_probability ? 0.0 : level(rng) / 100.0;
  return out;
}

/// Per-seed pose and tones; labels are left at zero.
inline FaceParams draw_face_params(std::uint64_t seed, const SynthConfig& cfg = {}) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x1111111111111111ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  FaceParams p;
  const double scale = between(cfg.min_scale, cfg.max_scale);
  const double rot = between(-cfg.max_rotation_deg, cfg.max_rotation_deg) * std::numbers::pi / 180.0;
  const double sx = between(-cfg.max_shift, cfg.max_shift);
  const double sy = between(-cfg.max_shift, cfg.max_shift);
  p.pose = make_pose(scale, rot, sx, sy, cfg.image_size);
  for (auto& t : p.skin_tone) t = between(0.9, 1.1);
  for (auto& t : p.background_tone) t = between(0.7, 1.3);
  p.feature_tone = between(0.85, 1.15);
  return p;
}

inline SynthSample render_sample(const FaceParams& params, std::size_t image_size = kCanonicalSize) {
  detail::FaceRenderer renderer(params);
  SynthSample s;
  s.image = renderer.render(image_size);
  s.landmarks = renderer.landmarks();
  for (auto& p : s.landmarks.points) p = {detail::quantize_micro(p.x), detail::quantize_micro(p.y)};
  s.labels = params.labels;
  return s;
}

/// Deterministic in `seed`. Without explicit labels they are drawn from the
/// configured skewed distribution.
inline SynthSample generate_sample(std::uint64_t seed, std::optional<AuLabels> labels = std::nullopt,
                                   const SynthConfig& cfg = {}) {
  FaceParams params = draw_face_params(seed, cfg);
  if (labels) {
    params.labels = *labels;
  } else {
    std::mt19937_64 rng(splitmix64(seed ^ 0x2222222222222222ULL));
    params.labels = draw_labels(rng, cfg);
  }
  return render_sample(params, cfg.image_size);
}

}  // namespace auhm::synth
