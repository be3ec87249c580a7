#pragma once

#include <cmath>
#include <span>
#include <string>

#include "auhm/errors.hpp"

namespace auhm {

/// ICC(3,1), consistency form, with the two vectors as k=2 raters of n
/// targets: (BMS - EMS) / (BMS + EMS).
inline double icc31(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw MetricError("icc31: length mismatch " + std::to_string(truth.size()) + " vs " +
                      std::to_string(pred.size()));
  }
  const std::size_t n = truth.size();
  if (n < 2) throw MetricError("icc31: needs at least 2 targets");
  bool constant = true;
  for (std::size_t i = 1; i < n; ++i) constant = constant && truth[i] == truth[0];
  if (constant) throw MetricError("icc31: undefined for constant ground truth");

  double mean_t = 0.0, mean_p = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_t += truth[i];
    mean_p += pred[i];
  }
  mean_t /= static_cast<double>(n);
  mean_p /= static_cast<double>(n);
  const double grand = 0.5 * (mean_t + mean_p);
  double bss = 0.0, ess = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = 0.5 * (truth[i] + pred[i]);
    bss += (m - grand) * (m - grand);
    const double et = truth[i] - m - mean_t + grand;
    const double ep = pred[i] - m - mean_p + grand;
    ess += et * et + ep * ep;
  }
  const double bms = 2.0 * bss / static_cast<double>(n - 1);
  const double ems = ess / static_cast<double>(n - 1);
  if (!(bms + ems > 0.0)) throw MetricError("icc31: zero total variance");
  return (bms - ems) / (bms + ems);
}

inline double mse(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw MetricError("mse: length mismatch " + std::to_string(truth.size()) + " vs " +
                      std::to_string(pred.size()));
  }
  if (truth.empty()) throw MetricError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(truth.size());
}

}  // namespace auhm
