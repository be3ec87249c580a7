#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "auhm/augmentation.hpp"
#include "auhm/codec.hpp"
#include "auhm/dataset.hpp"
#include "auhm/metrics.hpp"
#include "auhm/model.hpp"
#include "auhm/ops.hpp"
#include "auhm/optim.hpp"
#include "auhm/parallel.hpp"

namespace auhm {

/// Everything needed to turn a raw sample into network input and target for
/// one model: which AUs it predicts and at what resolution.
struct Pipeline {
  std::vector<AuSpec> specs;            // one per output channel
  std::vector<std::size_t> label_index;  // position of each AU in the dataset labels
  RegisterConfig reg;
  CodecConfig codec;

  std::vector<int> ids() const { return au_ids(specs); }

  AuLabels select(const AuLabels& all) const {
    AuLabels out;
    for (auto i : label_index) out.push_back(all.at(i));
    return out;
  }
};

/// `subset` empty means every AU in `dataset_ids`.
inline Pipeline make_pipeline(const ModelConfig& model, const std::vector<int>& dataset_ids,
                              const std::vector<int>& subset = {},
                              const std::vector<AuSpec>& specs = default_au_specs()) {
  Pipeline p;
  const auto& wanted = subset.empty() ? dataset_ids : subset;
  for (int id : wanted) {
    auto ds = std::find(dataset_ids.begin(), dataset_ids.end(), id);
    if (ds == dataset_ids.end()) throw ConfigError("AU" + std::to_string(id) + " is not in the dataset");
    auto sp = std::find_if(specs.begin(), specs.end(), [&](const AuSpec& s) { return s.au_id == id; });
    if (sp == specs.end()) throw ConfigError("AU" + std::to_string(id) + " has no centre spec");
    p.specs.push_back(*sp);
    p.label_index.push_back(static_cast<std::size_t>(ds - dataset_ids.begin()));
  }
  if (p.specs.size() != model.n_aus) {
    throw ConfigError("model predicts " + std::to_string(model.n_aus) + " AUs but " +
                      std::to_string(p.specs.size()) + " were selected");
  }
  p.reg.out_size = model.input_size;
  p.codec.heatmap_size = model.heatmap_size;
  p.codec.scale_divisor = static_cast<double>(model.input_size) / static_cast<double>(model.heatmap_size);
  return p;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean unweighted per-pixel Huber loss over the epoch
  std::vector<double> icc, mse;
  double mean_icc = 0.0, mean_mse = 0.0;
  double lr = 0.0;
};

struct TrainConfig {
  std::size_t batch_size = 5;
  double lr = 1e-3;
  double lr_decay = 0.5;
  std::size_t lr_decay_every = 10;  // epochs; 0 disables decay
  double weight_floor = 0.1;
  bool adaptive_weights = true;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  std::vector<int> au_subset;
  AugmentConfig augment;
  std::size_t workers = 1;  // batch assembly only; results do not depend on it
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(weight_floor > 0.0 && weight_floor <= 1.0)) throw ConfigError("weight_floor must lie in (0,1]");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  }

  double lr_at(std::size_t epoch) const {
    if (lr_decay_every == 0) return lr;
    return lr * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
  }
};

/// w_a = max(floor, e_a / sum e); uniform when there is no usable history.
inline std::vector<double> compute_au_weights(const std::vector<double>& errors, std::size_t n_aus,
                                              double floor = 0.1) {
  if (errors.empty()) return std::vector<double>(n_aus, 1.0 / static_cast<double>(n_aus));
  if (errors.size() != n_aus) throw InternalError("weight history has the wrong AU count");
  double total = 0.0;
  for (double e : errors) {
    if (!(e >= 0.0)) throw InternalError("negative or NaN per-AU error in weight history");
    total += e;
  }
  if (total == 0.0) return std::vector<double>(n_aus, 1.0 / static_cast<double>(n_aus));
  std::vector<double> w;
  for (double e : errors) w.push_back(std::max(floor, e / total));
  return w;
}

struct Batch {
  Tensor<float> images;   // [B,3,S,S]
  Tensor<float> targets;  // [B,N,H,H]
};

inline Batch stack_batch(const std::vector<Prepared>& items) {
  const std::size_t b = items.size();
  const std::size_t s = items.front().image.width;
  const std::size_t n = items.front().target.channels, h = items.front().target.size;
  std::vector<float> img, tgt;
  img.reserve(b * 3 * s * s);
  tgt.reserve(b * n * h * h);
  for (const auto& it : items) {
    img.insert(img.end(), it.image.data.begin(), it.image.data.end());
    for (double v : it.target.values) tgt.push_back(static_cast<float>(v));
  }
  return {Tensor<float>({b, 3, s, s}, std::move(img)), Tensor<float>({b, n, h, h}, std::move(tgt))};
}

/// Seed of the augmentation stream for one draw of one sample.
inline std::uint64_t draw_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return synth::splitmix64(synth::splitmix64(seed ^ 0xA5A5A5A5ULL) + epoch * 0x100000001B3ULL + index);
}

inline std::vector<Prepared> prepare(const Dataset& ds, const std::vector<std::size_t>& indices,
                                     const Pipeline& p, const AugmentConfig& aug, std::uint64_t seed,
                                     std::uint64_t epoch, std::size_t workers) {
  std::vector<Prepared> out(indices.size());
  parallel_for(
      indices.size(),
      [&](std::size_t k) {
        const Sample& s = ds.samples[indices[k]];
        std::mt19937_64 rng(draw_seed(seed, epoch, indices[k]));
        out[k] = augment_sample(to_float(s.image), s.landmarks, p.select(s.labels), p.specs, aug, p.reg,
                                p.codec, rng);
      },
      workers);
  return out;
}

struct StepResult {
  double weighted_loss = 0.0;
  std::vector<double> per_au;  // unweighted mean per-pixel Huber loss
  double mean_loss() const {
    double a = 0;
    for (double v : per_au) a += v;
    return a / static_cast<double>(per_au.size());
  }
};

/// One optimisation step on a batch.
inline StepResult train_step(Model<float>& model, RmsPropState<float>& state, const Batch& batch,
                             const std::vector<double>& weights, double lr) {
  model.zero_grad();
  Tensor<float> pred = model.forward(batch.images, true);
  std::vector<float> w(weights.begin(), weights.end());
  Tensor<float> loss = huber_loss(pred, batch.targets, std::span<const float>(w));
  StepResult r;
  r.weighted_loss = loss.item();
  for (float v : huber_per_channel(pred, batch.targets)) r.per_au.push_back(v);
  if (!std::isfinite(r.weighted_loss)) return r;
  backward(loss);
  auto params = model.parameters();
  rmsprop_step(params, state, RmsPropConfig{lr});
  return r;
}

// --- evaluation -------------------------------------------------------------

/// Maps prepared (registered) samples to predicted heatmap stacks.
using Predictor = std::function<std::vector<HeatmapStack>(const std::vector<Prepared>&)>;

inline Predictor model_predictor(Model<float>& model) {
  return [&model](const std::vector<Prepared>& items) {
    NoGradGuard guard;
    Batch b = stack_batch(items);
    Tensor<float> out = model.forward(b.images, false);
    const std::size_t n = out.dim(1), h = out.dim(2);
    std::vector<HeatmapStack> stacks;
    const auto data = out.data();
    for (std::size_t i = 0; i < items.size(); ++i) {
      HeatmapStack st(n, h);
      for (std::size_t k = 0; k < st.values.size(); ++k) st.values[k] = data[i * st.values.size() + k];
      stacks.push_back(std::move(st));
    }
    return stacks;
  };
}

struct EvalOptions {
  double landmark_sigma = 0.0;  // noise on the landmarks used for registration
  std::uint64_t seed = 0;
  std::size_t batch_size = 20;
  std::size_t workers = 1;
};

struct EvalReport {
  std::vector<int> au_ids;
  std::vector<double> icc, mse;
  double mean_icc = 0.0, mean_mse = 0.0;
  std::vector<AuLabels> predictions;

  /// Rows ICC and MSE, one column per AU plus Avg.
  std::string table_csv() const {
    std::ostringstream os;
    os << "metric";
    for (int id : au_ids) os << ",AU" << id;
    os << ",Avg\n";
    auto row = [&](const char* name, const std::vector<double>& v, double avg) {
      char buf[32];
      os << name;
      for (double x : v) {
        std::snprintf(buf, sizeof(buf), ",%.4f", x);
        os << buf;
      }
      std::snprintf(buf, sizeof(buf), ",%.4f\n", avg);
      os << buf;
    };
    row("ICC", icc, mean_icc);
    row("MSE", mse, mean_mse);
    return os.str();
  }
};

inline EvalReport evaluate_with(const Predictor& predict, const Dataset& ds, const Pipeline& p,
                                const EvalOptions& opt = {}) {
  if (ds.samples.empty()) throw ConfigError("evaluation dataset is empty");
  AugmentConfig aug = AugmentConfig::none();
  aug.landmark_sigma = opt.landmark_sigma;
  EvalReport rep;
  rep.au_ids = p.ids();
  for (std::size_t start = 0; start < ds.size(); start += opt.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + opt.batch_size); ++i) idx.push_back(i);
    const auto items = prepare(ds, idx, p, aug, opt.seed, 0, opt.workers);
    for (const auto& st : predict(items)) rep.predictions.push_back(decode(st));
  }
  const std::size_t n_aus = p.specs.size();
  for (std::size_t a = 0; a < n_aus; ++a) {
    std::vector<double> truth, pred;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      truth.push_back(ds.samples[i].labels.at(p.label_index[a]));
      pred.push_back(rep.predictions[i][a]);
    }
    rep.icc.push_back(icc31(truth, pred));
    rep.mse.push_back(mse(truth, pred));
    rep.mean_icc += rep.icc.back() / static_cast<double>(n_aus);
    rep.mean_mse += rep.mse.back() / static_cast<double>(n_aus);
  }
  return rep;
}

inline EvalReport evaluate(Model<float>& model, const Dataset& ds, const Pipeline& p,
                           const EvalOptions& opt = {}) {
  return evaluate_with(model_predictor(model), ds, p, opt);
}

struct RobustnessPoint {
  double sigma = 0.0;
  double mean_icc = 0.0;
  double mean_mse = 0.0;
};

inline std::vector<RobustnessPoint> robustness_sweep(Model<float>& model, const Dataset& ds,
                                                     const Pipeline& p, const std::vector<double>& sigmas,
                                                     EvalOptions opt = {}) {
  std::vector<RobustnessPoint> out;
  for (double s : sigmas) {
    opt.landmark_sigma = s;
    const auto rep = evaluate(model, ds, p, opt);
    out.push_back({s, rep.mean_icc, rep.mean_mse});
  }
  return out;
}

inline std::string robustness_csv(const std::vector<RobustnessPoint>& pts) {
  std::string out = "sigma,mean_icc,mean_mse\n";
  char buf[96];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof(buf), "%g,%.6f,%.6f\n", p.sigma, p.mean_icc, p.mean_mse);
    out += buf;
  }
  return out;
}

// --- training loop ----------------------------------------------------------

struct History {
  std::vector<int> au_ids;
  std::vector<EpochRecord> epochs;

  std::string csv() const {
    std::ostringstream os;
    os << "epoch,loss";
    for (int id : au_ids) os << ",icc_AU" << id;
    for (int id : au_ids) os << ",mse_AU" << id;
    os << ",lr\n";
    for (const auto& e : epochs) {
      os << e.epoch << "," << io::detail::shortest(e.loss);
      for (double v : e.icc) os << "," << io::detail::shortest(v);
      for (double v : e.mse) os << "," << io::detail::shortest(v);
      os << "," << io::detail::shortest(e.lr) << "\n";
    }
    return os.str();
  }
};

struct TrainResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  double best_icc = 0.0;
  History history;
};

/// Fisher-Yates on raw engine output, so the order is the same on every
/// standard library.
inline void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline std::string format_values(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::detail::shortest(v[i]);
  return s;
}

inline TrainResult train(const Dataset& train_set, const Dataset& val_set, Model<float>& model,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.samples.empty() || val_set.samples.empty()) throw ConfigError("datasets must be non-empty");
  const Pipeline p = make_pipeline(model.config(), train_set.au_ids, cfg.au_subset);
  const std::size_t n_aus = p.specs.size();

  TrainResult result;
  result.history.au_ids = p.ids();
  RmsPropState<float> state;
  std::mt19937_64 order_rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> prev_errors;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    shuffle_indices(order, order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(std::min(order.size(), start + cfg.batch_size)));
      const Batch batch = stack_batch(prepare(train_set, idx, p, cfg.augment, cfg.seed, epoch + 1, cfg.workers));
      const auto weights = cfg.adaptive_weights ? compute_au_weights(prev_errors, n_aus, cfg.weight_floor)
                                                : std::vector<double>(n_aus, 1.0 / static_cast<double>(n_aus));
      StepResult r;
      try {
        r = train_step(model, state, batch, weights, lr);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                           ": " + e.what());
      }
      bool finite = std::isfinite(r.weighted_loss);
      for (double v : r.per_au) finite = finite && std::isfinite(v);
      if (!finite) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batches) + "; per-AU losses [" + format_values(r.per_au) + "]");
      }
      prev_errors = r.per_au;
      loss_sum += r.mean_loss();
      ++batches;
    }

    const EvalReport rep = evaluate(model, val_set, p, {0.0, cfg.seed, 20, cfg.workers});
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), rep.icc, rep.mse,
                    rep.mean_icc, rep.mean_mse, lr};
    if (!have_best || rec.mean_icc > result.best_icc) {
      have_best = true;
      result.best_icc = rec.mean_icc;
      result.best_epoch = epoch;
      result.best = snapshot(model, p.ids());
      result.best.header["seed"] = std::to_string(cfg.seed);
      result.best.header["epoch"] = std::to_string(epoch);
      result.best.header["val_mean_icc"] = io::detail::shortest(rec.mean_icc);
      result.best.header["codec.sigma_rule"] =
          p.codec.sigma_rule == SigmaRule::kProportional ? "proportional" : "constant";
      result.best.header["codec.sigma_param"] = io::detail::shortest(p.codec.sigma_param);
      result.best.header["codec.truncation_factor"] = io::detail::shortest(p.codec.truncation_factor);
    }
    result.history.epochs.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }
  return result;
}

}  // namespace auhm
