#pragma once

// Stem + single hourglass network regressing one heatmap per action unit.
//
//   image [B,3,S,S]
//     -> conv 7x7/2 (base/4)  -> bottleneck (base/2) -> maxpool
//     -> bottleneck (base/2)  -> bottleneck (base)                [B,base,S/4,S/4]
//     -> hourglass(depth)     -> bottleneck -> bn/relu/conv1x1/bn/relu
//     -> conv1x1 (n_aus)                                           [B,N,S/4,S/4]
//
// Bottlenecks are pre-activation: bn-relu-1x1, bn-relu-3x3, bn-relu-1x1 with an
// identity skip, or a 1x1 projection when the channel count changes.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "auhm/errors.hpp"
#include "auhm/ops.hpp"
#include "auhm/tensor.hpp"

namespace auhm {

struct ModelConfig {
  std::size_t input_size = 256;
  std::size_t heatmap_size = 64;
  std::size_t n_aus = 5;
  std::size_t base_channels = 256;
  std::size_t mid_channels = 128;
  std::size_t hourglass_depth = 4;

  static ModelConfig full() { return {}; }
  static ModelConfig toy() { return {64, 16, 5, 32, 16, 3}; }

  void validate() const {
    std::vector<std::string> bad;
    if (input_size != 4 * heatmap_size) bad.push_back("input_size == 4*heatmap_size");
    if (hourglass_depth == 0) bad.push_back("hourglass_depth >= 1");
    if (hourglass_depth >= 1 && hourglass_depth < 32 &&
        heatmap_size % (std::size_t{1} << hourglass_depth) != 0) {
      bad.push_back("heatmap_size divisible by 2^hourglass_depth");
    }
    if (n_aus == 0) bad.push_back("n_aus >= 1");
    if (base_channels < 4 || base_channels % 4 != 0) {
      bad.push_back("base_channels a positive multiple of 4");
    }
    if (mid_channels == 0) bad.push_back("mid_channels >= 1");
    if (!bad.empty()) {
      std::string msg = "invalid model config, violated:";
      for (const auto& b : bad) msg += " [" + b + "]";
      throw ConfigError(msg);
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
std::size_t param_count(std::span<const NamedTensor<T>> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Init init{std::mt19937_64(seed)};
    const std::size_t b = config_.base_channels, m = config_.mid_channels;
    stem_conv_ = make_conv("stem.conv", 3, b / 4, 7, 2, 3, init);
    stem_blocks_.push_back(make_block("stem.block0", b / 4, b / 2, b / 4, init));
    stem_blocks_.push_back(make_block("stem.block1", b / 2, b / 2, b / 4, init));
    stem_blocks_.push_back(make_block("stem.block2", b / 2, b, m, init));
    for (std::size_t l = 0; l < config_.hourglass_depth; ++l) {
      const std::string p = "hg.level" + std::to_string(l);
      Level level;
      level.up1 = make_block(p + ".up1", b, b, m, init);
      level.low1 = make_block(p + ".low1", b, b, m, init);
      level.low3 = make_block(p + ".low3", b, b, m, init);
      levels_.push_back(std::move(level));
    }
    hg_inner_ = make_block("hg.inner", b, b, m, init);
    head_block_ = make_block("head.block", b, b, m, init);
    head_conv_ = make_conv("head.conv", b, b, 1, 1, 0, init);
    head_bn_ = make_bn("head.bn", b);
    head_out_ = make_conv("head.out", b, config_.n_aus, 1, 1, 0, init);
  }

  const ModelConfig& config() const { return config_; }
  std::span<const NamedTensor<T>> named_parameters() const { return params_; }
  std::span<const NamedTensor<T>> named_buffers() const { return buffers_; }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
  }

  std::size_t param_count() const {
    return auhm::param_count<T>(named_parameters());
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Images [B,3,S,S] in [0,1] -> heatmaps [B,n_aus,S/4,S/4]. Training mode
  /// uses batch statistics and updates the running buffers.
  Tensor<T> forward(const Tensor<T>& images, bool training) {
    if (images.rank() != 4 || images.dim(1) != 3 ||
        images.dim(2) != config_.input_size ||
        images.dim(3) != config_.input_size) {
      throw ShapeError("model input must be [B,3," +
                       std::to_string(config_.input_size) + "," +
                       std::to_string(config_.input_size) + "], got " +
                       shape_str(images.shape()));
    }
    auto x = conv(stem_conv_, images);
    x = block(stem_blocks_[0], x, training);
    x = maxpool2(x);
    x = block(stem_blocks_[1], x, training);
    x = block(stem_blocks_[2], x, training);
    x = hourglass(0, x, training);
    x = block(head_block_, x, training);
    x = relu(bn(head_bn_, conv(head_conv_, x), training));
    return conv(head_out_, x);
  }

 private:
  struct Conv {
    Tensor<T> weight, bias;
    std::size_t stride = 1, padding = 0;
  };
  struct BatchNorm {
    Tensor<T> gamma, beta, running_mean, running_var;
  };
  struct Bottleneck {
    BatchNorm bn1, bn2, bn3;
    Conv conv1, conv2, conv3;
    bool projected = false;
    Conv skip;
  };
  struct Level {
    Bottleneck up1, low1, low3;
  };
  struct Init {
    std::mt19937_64 rng;
  };

  Conv make_conv(const std::string& name, std::size_t in, std::size_t out,
                 std::size_t k, std::size_t stride, std::size_t pad, Init& init) {
    Conv c;
    const std::size_t fan_in = in * k * k;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<T> w(out * fan_in);
    for (auto& v : w) v = static_cast<T>(dist(init.rng));
    c.weight = Tensor<T>({out, in, k, k}, std::move(w), true);
    c.bias = Tensor<T>({out}, true);
    c.stride = stride;
    c.padding = pad;
    params_.push_back({name + ".weight", c.weight});
    params_.push_back({name + ".bias", c.bias});
    return c;
  }

  BatchNorm make_bn(const std::string& name, std::size_t channels) {
    BatchNorm b;
    b.gamma = Tensor<T>({channels}, std::vector<T>(channels, T(1)), true);
    b.beta = Tensor<T>({channels}, true);
    b.running_mean = Tensor<T>({channels});
    b.running_var = Tensor<T>({channels}, std::vector<T>(channels, T(1)));
    params_.push_back({name + ".gamma", b.gamma});
    params_.push_back({name + ".beta", b.beta});
    buffers_.push_back({name + ".running_mean", b.running_mean});
    buffers_.push_back({name + ".running_var", b.running_var});
    return b;
  }

  Bottleneck make_block(const std::string& name, std::size_t in, std::size_t out,
                        std::size_t mid, Init& init) {
    Bottleneck blk;
    blk.bn1 = make_bn(name + ".bn1", in);
    blk.conv1 = make_conv(name + ".conv1", in, mid, 1, 1, 0, init);
    blk.bn2 = make_bn(name + ".bn2", mid);
    blk.conv2 = make_conv(name + ".conv2", mid, mid, 3, 1, 1, init);
    blk.bn3 = make_bn(name + ".bn3", mid);
    blk.conv3 = make_conv(name + ".conv3", mid, out, 1, 1, 0, init);
    if (in != out) {
      blk.projected = true;
      blk.skip = make_conv(name + ".skip", in, out, 1, 1, 0, init);
    }
    return blk;
  }

  static Tensor<T> conv(const Conv& c, const Tensor<T>& x) {
    return conv2d(x, c.weight, c.bias, c.stride, c.padding);
  }

  static Tensor<T> bn(BatchNorm& b, const Tensor<T>& x, bool training) {
    return batchnorm2d(x, b.gamma, b.beta, b.running_mean, b.running_var, training);
  }

  static Tensor<T> block(Bottleneck& blk, const Tensor<T>& x, bool training) {
    auto h = conv(blk.conv1, relu(bn(blk.bn1, x, training)));
    h = conv(blk.conv2, relu(bn(blk.bn2, h, training)));
    h = conv(blk.conv3, relu(bn(blk.bn3, h, training)));
    return add(h, blk.projected ? conv(blk.skip, x) : x);
  }

  Tensor<T> hourglass(std::size_t level, const Tensor<T>& x, bool training) {
    auto& lv = levels_[level];
    auto up = block(lv.up1, x, training);
    auto low = block(lv.low1, maxpool2(x), training);
    low = level + 1 < levels_.size() ? hourglass(level + 1, low, training)
                                     : block(hg_inner_, low, training);
    low = block(lv.low3, low, training);
    return add(up, upsample_nearest2(low));
  }

  ModelConfig config_;
  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
  Conv stem_conv_;
  std::vector<Bottleneck> stem_blocks_;
  std::vector<Level> levels_;
  Bottleneck hg_inner_;
  Bottleneck head_block_;
  Conv head_conv_;
  BatchNorm head_bn_;
  Conv head_out_;
};

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  return Model<T>(config, seed);
}

/// Persisted model: configuration, the AU ids its channels map to, free-form
/// header entries, and every parameter and buffer by name.
struct Checkpoint {
  ModelConfig config;
  std::vector<int> au_ids;
  std::map<std::string, std::string> header;
  struct Array {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  std::vector<Array> arrays;
};

template <typename T>
Checkpoint snapshot(const Model<T>& model, std::vector<int> au_ids) {
  Checkpoint ck;
  ck.config = model.config();
  ck.au_ids = std::move(au_ids);
  auto take = [&](std::span<const NamedTensor<T>> list) {
    for (const auto& nt : list) {
      Checkpoint::Array a{nt.name, nt.tensor.shape(), {}};
      for (T v : nt.tensor.data()) a.values.push_back(static_cast<float>(v));
      ck.arrays.push_back(std::move(a));
    }
  };
  take(model.named_parameters());
  take(model.named_buffers());
  return ck;
}

/// Copies every array of `ck` into the identically named tensor of `model`.
template <typename T>
void restore(Model<T>& model, const Checkpoint& ck) {
  std::map<std::string, Tensor<T>> by_name;
  for (const auto& nt : model.named_parameters()) by_name.emplace(nt.name, nt.tensor);
  for (const auto& nt : model.named_buffers()) by_name.emplace(nt.name, nt.tensor);
  if (by_name.size() != ck.arrays.size()) {
    throw FormatError("checkpoint has " + std::to_string(ck.arrays.size()) +
                      " arrays, model expects " + std::to_string(by_name.size()));
  }
  for (const auto& a : ck.arrays) {
    auto it = by_name.find(a.name);
    if (it == by_name.end()) throw FormatError("unknown array '" + a.name + "'");
    if (it->second.shape() != a.shape) {
      throw FormatError("array '" + a.name + "' has shape " + shape_str(a.shape) +
                        ", model expects " + shape_str(it->second.shape()));
    }
    auto dst = it->second.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a.values[i]);
  }
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ck) {
  Model<T> model(ck.config, 0);
  restore(model, ck);
  return model;
}

}  // namespace auhm
