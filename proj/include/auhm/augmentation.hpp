#pragma once

#include <random>
#include <vector>

#include "auhm/codec.hpp"
#include "auhm/errors.hpp"
#include "auhm/image.hpp"
#include "auhm/registration.hpp"

namespace auhm {

enum class LabelNoiseRule {
  kMultiplicative,  // I * (1 + s*z), clamped to [0,5]
  kLiteral,         // s * I * |z|, the printed formula taken verbatim
};

struct AugmentConfig {
  double landmark_sigma = 2.0;  // px, source image
  double colour_strength = 0.2;
  double label_noise = 0.2;
  LabelNoiseRule label_rule = LabelNoiseRule::kMultiplicative;
  bool flip = false;  // mirror with probability 1/2

  static AugmentConfig none() { return {0.0, 0.0, 0.0, LabelNoiseRule::kMultiplicative, false}; }
};

inline AuLabels perturb_labels(const AuLabels& labels, std::mt19937_64& rng, double strength = 0.2,
                               LabelNoiseRule rule = LabelNoiseRule::kMultiplicative) {
  validate_labels(labels);
  std::normal_distribution<double> gauss(0.0, 1.0);
  AuLabels out = labels;
  for (auto& v : out) {
    const double z = gauss(rng);
    const double next = rule == LabelNoiseRule::kMultiplicative ? v * (1.0 + strength * z)
                                                                : strength * v * std::abs(z);
    v = std::clamp(next, 0.0, kMaxIntensity);
  }
  return out;
}

inline Image perturb_colour(const Image& image, std::mt19937_64& rng, double strength = 0.2) {
  if (strength < 0.0) throw ConfigError("colour strength must be >= 0");
  if (strength == 0.0) return image;
  std::uniform_real_distribution<double> gain(1.0 - strength, 1.0 + strength);
  std::uniform_real_distribution<double> offset(-strength / 2, strength / 2);
  Image out = image;
  const std::size_t plane = image.plane();
  for (std::size_t c = 0; c < 3; ++c) {
    const double g = gain(rng), o = offset(rng);
    for (std::size_t i = 0; i < plane; ++i) {
      float& v = out.data[c * plane + i];
      v = static_cast<float>(std::clamp(g * v + o, 0.0, 1.0));
    }
  }
  return out;
}

struct Prepared {
  Image image;              // registered network input
  HeatmapStack target;      // encoded from the (possibly perturbed) labels
  LandmarkSet landmarks;    // registered landmarks
  AuLabels target_labels;
};

/// Deterministic path: register, encode pristine labels.
inline Prepared preprocess(const Image& image, const LandmarkSet& lms, const AuLabels& labels,
                           const std::vector<AuSpec>& specs, const RegisterConfig& reg,
                           const CodecConfig& codec) {
  auto r = register_face(image, lms, reg);
  auto target = encode_all(labels, r.landmarks, specs, codec);
  return {std::move(r.image), std::move(target), r.landmarks, labels};
}

/// Optional flip, landmark noise, registration, colour jitter, label noise,
/// encoding. Zero strengths consume no randomness and give preprocess().
inline Prepared augment_sample(const Image& image, const LandmarkSet& lms, const AuLabels& labels,
                               const std::vector<AuSpec>& specs, const AugmentConfig& cfg,
                               const RegisterConfig& reg, const CodecConfig& codec,
                               std::mt19937_64& rng) {
  const Image* src = &image;
  LandmarkSet points = lms;
  Image mirrored;
  if (cfg.flip && std::bernoulli_distribution(0.5)(rng)) {
    mirrored = mirror_horizontal(image);
    src = &mirrored;
    points = mirror_landmarks(lms, image.width);
  }
  // The noisy points only pick the transform; targets follow the true
  // landmarks so they stay aligned with the image content.
  auto r = register_face(*src, perturb_landmarks(points, cfg.landmark_sigma, rng), reg);
  r.landmarks = transform_points(points, r.transform);
  Image img = perturb_colour(r.image, rng, cfg.colour_strength);
  AuLabels noisy = cfg.label_noise > 0.0 ? perturb_labels(labels, rng, cfg.label_noise, cfg.label_rule) : labels;
  auto target = encode_all(noisy, r.landmarks, specs, codec);
  return {std::move(img), std::move(target), r.landmarks, std::move(noisy)};
}

}  // namespace auhm
