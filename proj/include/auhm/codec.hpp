#pragma once

// AU intensity <-> heatmap coding.
//
// Each AU owns a few centres, each the mean of a group of registered
// landmarks, scaled into heatmap pixels and rounded. A label of intensity I
// draws I*exp(-(i^2+j^2)/(2 sigma^2)) inside a (2*6I+1)^2 box around every
// centre; the AU channel is the pointwise max of those Gaussians. Decoding is
// the channel max clamped to [0,5].

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "auhm/errors.hpp"
#include "auhm/registration.hpp"

namespace auhm {

inline constexpr double kMaxIntensity = 5.0;

/// Per-AU intensities in AU-spec order, each in [0,5].
using AuLabels = std::vector<double>;

inline void validate_labels(const AuLabels& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] >= 0.0 && labels[i] <= kMaxIntensity)) {
      throw LabelError("intensity " + std::to_string(labels[i]) + " at position " +
                       std::to_string(i) + " is outside [0,5]");
    }
  }
}

struct AuSpec {
  int au_id = 0;
  std::vector<std::vector<std::size_t>> centers;  // landmark-index groups
  bool operator==(const AuSpec&) const = default;
};

/// Shipped centre map for AUs 6, 10, 12, 14, 17. AU10 and AU14 share the two
/// upper-lip points 49 and 53.
inline std::vector<AuSpec> default_au_specs() {
  return {
      {6, {{1, 41}, {15, 46}}},
      {10, {{49}, {53}, {33}}},
      {12, {{48}, {54}}},
      {14, {{49}, {53}}},
      {17, {{7, 58}, {9, 56}}},
  };
}

inline std::vector<int> au_ids(const std::vector<AuSpec>& specs) {
  std::vector<int> ids;
  for (const auto& s : specs) ids.push_back(s.au_id);
  return ids;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename Int>
Int parse_int(std::string_view s, const std::string& context) {
  s = trim(s);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(context + ": expected integer, got '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses `AU<id>: (i,j,...);(k,...)` lines. Blank lines and `#` comments are
/// skipped.
inline std::vector<AuSpec> parse_au_specs(std::string_view text) {
  std::vector<AuSpec> specs;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string ctx = "au spec line " + std::to_string(line_no);
    const auto colon = line.find(':');
    if (line.substr(0, 2) != "AU" || colon == std::string_view::npos) {
      throw FormatError(ctx + ": expected 'AU<id>: (...)'");
    }
    AuSpec spec;
    spec.au_id = detail::parse_int<int>(line.substr(2, colon - 2), ctx);
    std::string_view rest = line.substr(colon + 1);
    while (!detail::trim(rest).empty()) {
      const auto semi = rest.find(';');
      std::string_view group = detail::trim(rest.substr(0, semi));
      rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
      if (group.size() < 2 || group.front() != '(' || group.back() != ')') {
        throw FormatError(ctx + ": centre group must be parenthesised");
      }
      group = group.substr(1, group.size() - 2);
      std::vector<std::size_t> indices;
      while (!group.empty()) {
        const auto comma = group.find(',');
        const auto idx = detail::parse_int<std::size_t>(group.substr(0, comma), ctx);
        if (idx >= kLandmarkCount) {
          throw FormatError(ctx + ": landmark index " + std::to_string(idx) + " out of range");
        }
        indices.push_back(idx);
        group = comma == std::string_view::npos ? std::string_view{} : group.substr(comma + 1);
      }
      if (indices.empty()) throw FormatError(ctx + ": empty centre group");
      spec.centers.push_back(std::move(indices));
    }
    if (spec.centers.empty()) throw FormatError(ctx + ": no centres");
    specs.push_back(std::move(spec));
  }
  return specs;
}

inline std::string format_au_specs(const std::vector<AuSpec>& specs) {
  std::ostringstream os;
  for (const auto& s : specs) {
    os << "AU" << s.au_id << ":";
    for (std::size_t g = 0; g < s.centers.size(); ++g) {
      os << (g ? ";" : " ") << "(";
      for (std::size_t i = 0; i < s.centers[g].size(); ++i) {
        os << (i ? "," : "") << s.centers[g][i];
      }
      os << ")";
    }
    os << "\n";
  }
  return os.str();
}

enum class SigmaRule {
  kProportional,  // sigma = sigma_param * I
  kConstant,      // sigma = sigma_param
};

struct CodecConfig {
  SigmaRule sigma_rule = SigmaRule::kProportional;
  double sigma_param = 1.0;
  double truncation_factor = 6.0;
  std::size_t heatmap_size = 64;
  double scale_divisor = 4.0;

  double sigma(double intensity) const {
    return sigma_rule == SigmaRule::kProportional ? sigma_param * intensity : sigma_param;
  }
};

/// Integer heatmap pixel; may lie outside the map.
struct HeatPoint {
  long x = 0;
  long y = 0;
  bool operator==(const HeatPoint&) const = default;
};

/// N_AU x size x size, channel-major.
struct HeatmapStack {
  std::size_t channels = 0;
  std::size_t size = 0;
  std::vector<double> values;

  HeatmapStack() = default;
  HeatmapStack(std::size_t n, std::size_t s) : channels(n), size(s), values(n * s * s, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * size + y) * size + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * size + y) * size + x];
  }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(values).subspan(c * size * size, size * size);
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(values).subspan(c * size * size, size * size);
  }
};

inline std::vector<HeatPoint> centers_for_au(const LandmarkSet& registered, const AuSpec& spec,
                                             const CodecConfig& cfg) {
  std::vector<HeatPoint> out;
  for (const auto& group : spec.centers) {
    Point acc;
    for (std::size_t idx : group) acc = acc + registered[idx];
    const Point m = (1.0 / static_cast<double>(group.size())) * acc;
    out.push_back({std::lround(m.x / cfg.scale_divisor), std::lround(m.y / cfg.scale_divisor)});
  }
  return out;
}

/// Writes the max over centres of the truncated Gaussians into `map`
/// (size*size, row-major). Pixels are max-combined with existing contents.
inline void encode_au_into(double intensity, std::span<const HeatPoint> centers,
                           const CodecConfig& cfg, std::span<double> map) {
  if (!(intensity >= 0.0 && intensity <= kMaxIntensity)) {
    throw LabelError("intensity " + std::to_string(intensity) + " is outside [0,5]");
  }
  if (intensity == 0.0) return;
  const double sigma = cfg.sigma(intensity);
  const double denom = 2.0 * sigma * sigma;
  const long half = static_cast<long>(std::floor(cfg.truncation_factor * intensity));
  const long size = static_cast<long>(cfg.heatmap_size);
  for (const auto& c : centers) {
    for (long j = -half; j <= half; ++j) {
      const long y = c.y + j;
      if (y < 0 || y >= size) continue;
      for (long i = -half; i <= half; ++i) {
        const long x = c.x + i;
        if (x < 0 || x >= size) continue;
        const double g = intensity * std::exp(-static_cast<double>(i * i + j * j) / denom);
        double& dst = map[static_cast<std::size_t>(y * size + x)];
        dst = std::max(dst, g);
      }
    }
  }
}

inline std::vector<double> encode_au(double intensity, std::span<const HeatPoint> centers,
                                     const CodecConfig& cfg) {
  std::vector<double> map(cfg.heatmap_size * cfg.heatmap_size, 0.0);
  encode_au_into(intensity, centers, cfg, map);
  return map;
}

inline HeatmapStack encode_all(const AuLabels& labels, const LandmarkSet& registered,
                               const std::vector<AuSpec>& specs, const CodecConfig& cfg) {
  if (labels.size() != specs.size()) {
    throw LabelError("got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(specs.size()) + " AUs");
  }
  validate_labels(labels);
  HeatmapStack stack(specs.size(), cfg.heatmap_size);
  for (std::size_t a = 0; a < specs.size(); ++a) {
    const auto centers = centers_for_au(registered, specs[a], cfg);
    encode_au_into(labels[a], centers, cfg, stack.channel(a));
  }
  return stack;
}

/// Per channel: clamp(max, 0, 5). Accepts any real input.
inline AuLabels decode(const HeatmapStack& stack) {
  AuLabels out;
  for (std::size_t c = 0; c < stack.channels; ++c) {
    const auto ch = stack.channel(c);
    const double m = *std::max_element(ch.begin(), ch.end());
    out.push_back(std::clamp(m, 0.0, kMaxIntensity));
  }
  return out;
}

}  // namespace auhm
