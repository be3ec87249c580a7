#pragma once

// Similarity registration of a face to a canonical frame from its 66
// landmarks (Multi-PIE markup, 0-based indices).
//
// Coordinates are continuous pixel coordinates with pixel (u,v) centred at
// (u,v). A SimilarityTransform maps source coordinates to registered ones;
// warping samples the source at the inverse image of every output pixel.

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>

#include "auhm/errors.hpp"
#include "auhm/image.hpp"

namespace auhm {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }

inline constexpr std::size_t kLandmarkCount = 66;

struct LandmarkSet {
  std::array<Point, kLandmarkCount> points{};

  Point& operator[](std::size_t i) { return points[i]; }
  const Point& operator[](std::size_t i) const { return points[i]; }

  void validate() const {
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y)) {
        throw GeometryError("landmark " + std::to_string(i) + " is not finite");
      }
    }
  }
  bool operator==(const LandmarkSet&) const = default;
};

inline Point mean_of(const LandmarkSet& lms, std::size_t first, std::size_t last) {
  Point acc;
  for (std::size_t i = first; i <= last; ++i) acc = acc + lms[i];
  return (1.0 / static_cast<double>(last - first + 1)) * acc;
}

/// Left/right refer to image sides: left_eye has the smaller x in an upright face.
struct Anchors {
  Point left_eye, right_eye, mouth;

  std::array<Point, 3> as_array() const { return {left_eye, right_eye, mouth}; }
};

inline Anchors anchors_from_landmarks(const LandmarkSet& lms) {
  return {mean_of(lms, 36, 41), mean_of(lms, 42, 47), mean_of(lms, 48, 65)};
}

struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;  // radians
  double tx = 0.0;
  double ty = 0.0;

  Point apply(Point p) const {
    const double c = scale * std::cos(rotation), s = scale * std::sin(rotation);
    return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty};
  }

  SimilarityTransform inverse() const {
    SimilarityTransform inv{1.0 / scale, -rotation, 0.0, 0.0};
    const Point t = inv.apply({tx, ty});
    inv.tx = -t.x;
    inv.ty = -t.y;
    return inv;
  }

  /// (this ∘ other)(p) = this(other(p)).
  SimilarityTransform compose(const SimilarityTransform& other) const {
    SimilarityTransform out{scale * other.scale, rotation + other.rotation, 0, 0};
    const Point t = apply({other.tx, other.ty});
    out.tx = t.x;
    out.ty = t.y;
    return out;
  }
};

inline LandmarkSet transform_points(const LandmarkSet& lms, const SimilarityTransform& t) {
  LandmarkSet out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) out[i] = t.apply(lms[i]);
  return out;
}

/// Least-squares similarity (no reflection) taking `src` onto `ref`.
inline SimilarityTransform compute_similarity(std::span<const Point> src,
                                              std::span<const Point> ref) {
  if (src.size() != ref.size() || src.size() < 2) {
    throw GeometryError("similarity fit needs matching point lists of size >= 2");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t j = i + 1; j < src.size(); ++j) {
      if (norm(src[i] - src[j]) <= 1e-6) {
        throw GeometryError("degenerate source points " + std::to_string(i) +
                            " and " + std::to_string(j) + " coincide");
      }
    }
  }
  const double n = static_cast<double>(src.size());
  Point ms, mr;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms = ms + src[i];
    mr = mr + ref[i];
  }
  ms = (1.0 / n) * ms;
  mr = (1.0 / n) * mr;
  double dot = 0.0, cross = 0.0, var = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Point a = src[i] - ms, b = ref[i] - mr;
    dot += a.x * b.x + a.y * b.y;
    cross += a.x * b.y - a.y * b.x;
    var += a.x * a.x + a.y * a.y;
  }
  SimilarityTransform t;
  t.rotation = std::atan2(cross, dot);
  t.scale = std::hypot(dot, cross) / var;
  if (!(t.scale > 0.0) || !std::isfinite(t.scale)) {
    throw GeometryError("similarity fit produced non-positive scale");
  }
  const Point rs = t.apply(ms);  // tx, ty are still zero here
  t.tx = mr.x - rs.x;
  t.ty = mr.y - rs.y;
  return t;
}

/// Bilinear sample of one channel; taps outside the image read as black.
inline float sample_bilinear(const Image& img, std::size_t c, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const double ax = x - fx, ay = y - fy;
  auto tap = [&](long xx, long yy) -> double {
    if (xx < 0 || yy < 0 || xx >= static_cast<long>(img.width) ||
        yy >= static_cast<long>(img.height)) {
      return 0.0;
    }
    return img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
  };
  const double top = (1 - ax) * tap(x0, y0) + (ax > 0 ? ax * tap(x0 + 1, y0) : 0.0);
  const double bot = ay > 0 ? (1 - ax) * tap(x0, y0 + 1) +
                                  (ax > 0 ? ax * tap(x0 + 1, y0 + 1) : 0.0)
                            : 0.0;
  return static_cast<float>((1 - ay) * top + ay * bot);
}

/// out(u,v) = source(T^-1(u,v)). With supersample n > 1 each output pixel
/// averages an n x n grid of samples centred on (u,v).
inline Image warp_image(const Image& src, const SimilarityTransform& t,
                        std::size_t out_size, std::size_t supersample = 1) {
  if (out_size == 0) throw ConfigError("warp_image: out_size must be positive");
  if (supersample == 0) supersample = 1;
  const SimilarityTransform inv = t.inverse();
  Image out(out_size, out_size);
  const double step = 1.0 / static_cast<double>(supersample);
  const double norm_w = 1.0 / static_cast<double>(supersample * supersample);
  for (std::size_t v = 0; v < out_size; ++v) {
    for (std::size_t u = 0; u < out_size; ++u) {
      double acc[3] = {0, 0, 0};
      for (std::size_t sy = 0; sy < supersample; ++sy) {
        for (std::size_t sx = 0; sx < supersample; ++sx) {
          const double du = supersample == 1 ? 0.0 : (sx + 0.5) * step - 0.5;
          const double dv = supersample == 1 ? 0.0 : (sy + 0.5) * step - 0.5;
          const Point p = inv.apply({static_cast<double>(u) + du, static_cast<double>(v) + dv});
          for (std::size_t c = 0; c < 3; ++c) acc[c] += sample_bilinear(src, c, p.x, p.y);
        }
      }
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(c, v, u) = static_cast<float>(supersample == 1 ? acc[c] : acc[c] * norm_w);
      }
    }
  }
  return out;
}

struct RegisterConfig {
  std::size_t out_size = 256;
  // Reference anchors as fractions of out_size.
  Point left_eye{0.3, 0.4};
  Point right_eye{0.7, 0.4};
  Point mouth{0.5, 0.8};
  // 0 picks round(1/scale) so strong downscaling averages instead of aliasing.
  std::size_t supersample = 0;

  Anchors reference() const {
    const double s = static_cast<double>(out_size);
    return {s * left_eye, s * right_eye, s * mouth};
  }
};

struct Registered {
  Image image;
  LandmarkSet landmarks;
  SimilarityTransform transform;
};

inline SimilarityTransform registration_transform(const LandmarkSet& lms,
                                                  const RegisterConfig& cfg) {
  lms.validate();
  const auto src = anchors_from_landmarks(lms).as_array();
  const auto ref = cfg.reference().as_array();
  return compute_similarity(src, ref);
}

inline std::size_t auto_supersample(const SimilarityTransform& t) {
  const long n = std::lround(1.0 / t.scale);
  return n < 1 ? 1 : static_cast<std::size_t>(n);
}

inline Registered register_face(const Image& image, const LandmarkSet& lms,
                                const RegisterConfig& cfg) {
  Registered out;
  out.transform = registration_transform(lms, cfg);
  const std::size_t ss = cfg.supersample ? cfg.supersample : auto_supersample(out.transform);
  out.image = warp_image(image, out.transform, cfg.out_size, ss);
  out.landmarks = transform_points(lms, out.transform);
  return out;
}

/// Adds i.i.d. N(0, sigma^2) noise to every coordinate.
inline LandmarkSet perturb_landmarks(const LandmarkSet& lms, double sigma,
                                     std::mt19937_64& rng) {
  if (sigma < 0.0) throw ConfigError("perturb_landmarks: sigma must be >= 0");
  if (sigma == 0.0) return lms;
  std::normal_distribution<double> noise(0.0, sigma);
  LandmarkSet out = lms;
  for (auto& p : out.points) {
    p.x += noise(rng);
    p.y += noise(rng);
  }
  return out;
}

/// Index of each landmark's mirror partner in the 66-point markup.
inline const std::array<std::size_t, kLandmarkCount>& mirror_permutation() {
  static const std::array<std::size_t, kLandmarkCount> perm = [] {
    std::array<std::size_t, kLandmarkCount> p{};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) p[i] = i;
    auto pair = [&](std::size_t a, std::size_t b) {
      p[a] = b;
      p[b] = a;
    };
    for (std::size_t i = 0; i < 8; ++i) pair(i, 16 - i);        // jaw
    for (std::size_t i = 0; i < 5; ++i) pair(17 + i, 26 - i);   // brows
    pair(31, 35);
    pair(32, 34);                                                // nose base
    pair(36, 45); pair(37, 44); pair(38, 43);                    // eyes
    pair(39, 42); pair(40, 47); pair(41, 46);
    pair(48, 54); pair(49, 53); pair(50, 52);                    // outer lip
    pair(55, 59); pair(56, 58);
    pair(60, 62); pair(63, 65);                                  // inner lip
    return p;
  }();
  return perm;
}

/// Landmarks of the horizontally mirrored image (x -> width-1-x), relabelled
/// so every index keeps its anatomical meaning.
inline LandmarkSet mirror_landmarks(const LandmarkSet& lms, std::size_t width) {
  LandmarkSet out;
  const auto& perm = mirror_permutation();
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Point p = lms[perm[i]];
    out[i] = {static_cast<double>(width) - 1.0 - p.x, p.y};
  }
  return out;
}

}  // namespace auhm
