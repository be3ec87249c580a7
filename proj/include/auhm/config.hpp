#pragma once

// Training run configuration as a key=value file, e.g.
//
//   model = toy            # toy | full; individual fields may follow
//   epochs = 40
//   au_subset = 12
//   landmark_sigma = 2

#include <set>
#include <string>

#include "auhm/io.hpp"
#include "auhm/trainer.hpp"

namespace auhm {

struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  std::uint64_t model_seed = 1;
  TrainConfig train;
};

namespace detail {

inline double parse_real(const std::string& s, const std::string& key) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + s + "'");
}

}  // namespace detail

inline RunConfig run_config_from(const io::KeyValues& kv) {
  RunConfig rc;
  if (auto it = kv.find("model"); it != kv.end()) {
    if (it->second == "toy") rc.model = ModelConfig::toy();
    else if (it->second == "full") rc.model = ModelConfig::full();
    else throw ConfigError("model must be 'toy' or 'full', got '" + it->second + "'");
  }
  static const std::set<std::string> known = {
      "model", "input_size", "heatmap_size", "base_channels", "mid_channels", "hourglass_depth",
      "model_seed", "batch_size", "lr", "lr_decay", "lr_decay_every", "weight_floor",
      "adaptive_weights", "epochs", "seed", "au_subset", "landmark_sigma", "colour_strength",
      "label_noise", "label_rule", "flip", "workers"};
  auto size = [](const std::string& v, const std::string& k) {
    return auhm::detail::parse_int<std::size_t>(v, "config key " + k);
  };
  for (const auto& [k, v] : kv) {
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
    auto& t = rc.train;
    if (k == "input_size") rc.model.input_size = size(v, k);
    else if (k == "heatmap_size") rc.model.heatmap_size = size(v, k);
    else if (k == "base_channels") rc.model.base_channels = size(v, k);
    else if (k == "mid_channels") rc.model.mid_channels = size(v, k);
    else if (k == "hourglass_depth") rc.model.hourglass_depth = size(v, k);
    else if (k == "model_seed") rc.model_seed = auhm::detail::parse_int<std::uint64_t>(v, k);
    else if (k == "batch_size") t.batch_size = size(v, k);
    else if (k == "lr") t.lr = detail::parse_real(v, k);
    else if (k == "lr_decay") t.lr_decay = detail::parse_real(v, k);
    else if (k == "lr_decay_every") t.lr_decay_every = size(v, k);
    else if (k == "weight_floor") t.weight_floor = detail::parse_real(v, k);
    else if (k == "adaptive_weights") t.adaptive_weights = detail::parse_bool(v, k);
    else if (k == "epochs") t.epochs = size(v, k);
    else if (k == "seed") t.seed = auhm::detail::parse_int<std::uint64_t>(v, k);
    else if (k == "au_subset") t.au_subset = io::parse_int_list(v, k);
    else if (k == "landmark_sigma") t.augment.landmark_sigma = detail::parse_real(v, k);
    else if (k == "colour_strength") t.augment.colour_strength = detail::parse_real(v, k);
    else if (k == "label_noise") t.augment.label_noise = detail::parse_real(v, k);
    else if (k == "label_rule") {
      if (v == "multiplicative") t.augment.label_rule = LabelNoiseRule::kMultiplicative;
      else if (v == "literal") t.augment.label_rule = LabelNoiseRule::kLiteral;
      else throw ConfigError("label_rule must be 'multiplicative' or 'literal'");
    } else if (k == "flip") t.augment.flip = detail::parse_bool(v, k);
    else if (k == "workers") t.workers = size(v, k);
  }
  if (!rc.train.au_subset.empty()) rc.model.n_aus = rc.train.au_subset.size();
  rc.model.validate();
  rc.train.validate();
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from(io::parse_key_values(io::read_file(path), path.string()));
}

}  // namespace auhm
