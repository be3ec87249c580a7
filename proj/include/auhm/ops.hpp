#pragma once

// Differentiable operations used by the hourglass network and its loss.
// Layout is NCHW throughout; there is no broadcasting.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "auhm/errors.hpp"
#include "auhm/tensor.hpp"

namespace auhm {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void require_rank(const Shape& s, std::size_t rank, const char* op,
                         const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_str(s));
  }
}

inline void require_axis(std::size_t got, std::size_t want, const char* op,
                         const std::string& axis) {
  if (got != want) {
    throw DimensionError(std::string(op) + ": axis " + axis + " is " +
                         std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

template <typename T>
void accumulate(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
  std::size_t channels, height, width, kh, kw, stride, padding, out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t out_pixels() const { return out_h * out_w; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && padding == 0;
  }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const std::size_t npix = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * npix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) -
                          static_cast<long>(g.padding);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.height + iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) -
                            static_cast<long>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T(0)
                                                                   : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* image) {
  const std::size_t npix = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * npix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) -
                          static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = image + (c * g.height + iy) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) -
                            static_cast<long>(g.padding);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation, NCHW input, FCkk weight.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  constexpr const char* op = "conv2d";
  detail::require_rank(input.shape(), 4, op, "input");
  detail::require_rank(weight.shape(), 4, op, "weight");
  detail::require_rank(bias.shape(), 1, op, "bias");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t batch = input.dim(0);
  detail::ConvGeometry g{input.dim(1), input.dim(2), input.dim(3),
                         weight.dim(2), weight.dim(3), stride, padding, 0, 0};
  const std::size_t filters = weight.dim(0);
  detail::require_axis(weight.dim(1), g.channels, op, "weight[1] (channels)");
  detail::require_axis(bias.dim(0), filters, op, "bias[0] (filters)");
  if (g.kh > g.height + 2 * padding) {
    throw DimensionError("conv2d: axis H: kernel " + std::to_string(g.kh) +
                         " exceeds padded height " +
                         std::to_string(g.height + 2 * padding));
  }
  if (g.kw > g.width + 2 * padding) {
    throw DimensionError("conv2d: axis W: kernel " + std::to_string(g.kw) +
                         " exceeds padded width " +
                         std::to_string(g.width + 2 * padding));
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  const std::size_t patch = g.patch(), npix = g.out_pixels();
  const std::size_t in_stride = g.channels * g.height * g.width;
  std::vector<T> out(batch * filters * npix);
  std::vector<T> cols(g.pointwise() ? 0 : patch * npix);
  detail::CMapMat<T> w(weight.data().data(), filters, patch);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(
      bias.data().data(), filters);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* image = input.data().data() + n * in_stride;
    const T* colptr = image;
    if (!g.pointwise()) {
      detail::im2col(image, g, cols.data());
      colptr = cols.data();
    }
    detail::MapMat<T> o(out.data() + n * filters * npix, filters, npix);
    o.noalias() = w * detail::CMapMat<T>(colptr, patch, npix);
    o.colwise() += b;
  }

  auto in_node = input.node(), w_node = weight.node(), b_node = bias.node();
  return Tensor<T>::from_op(
      {batch, filters, g.out_h, g.out_w}, std::move(out),
      {in_node, w_node, b_node},
      [in_node, w_node, b_node, g, batch, filters](const detail::Node<T>& self) {
        const std::size_t patch = g.patch(), npix = g.out_pixels();
        const std::size_t in_stride = g.channels * g.height * g.width;
        detail::CMapMat<T> w(w_node->data.data(), filters, patch);
        std::vector<T> cols(g.pointwise() ? 0 : patch * npix);
        std::vector<T> dcols(g.pointwise() ? 0 : patch * npix);
        if (w_node->requires_grad) w_node->ensure_grad();
        if (b_node->requires_grad) b_node->ensure_grad();
        if (in_node->requires_grad) in_node->ensure_grad();
        for (std::size_t n = 0; n < batch; ++n) {
          detail::CMapMat<T> dout(self.grad.data() + n * filters * npix,
                                  filters, npix);
          const T* image = in_node->data.data() + n * in_stride;
          if (w_node->requires_grad) {
            const T* colptr = image;
            if (!g.pointwise()) {
              detail::im2col(image, g, cols.data());
              colptr = cols.data();
            }
            detail::MapMat<T> dw(w_node->grad.data(), filters, patch);
            dw.noalias() +=
                dout * detail::CMapMat<T>(colptr, patch, npix).transpose();
          }
          if (b_node->requires_grad) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(
                b_node->grad.data(), filters);
            db += dout.rowwise().sum();
          }
          if (in_node->requires_grad) {
            T* dimage = in_node->grad.data() + n * in_stride;
            if (g.pointwise()) {
              detail::MapMat<T>(dimage, patch, npix).noalias() +=
                  w.transpose() * dout;
            } else {
              detail::MapMat<T>(dcols.data(), patch, npix).noalias() =
                  w.transpose() * dout;
              detail::col2im_add(dcols.data(), g, dimage);
            }
          }
        }
      });
}

/// Per-channel batch normalisation. In training mode the batch statistics
/// normalise the input and are blended into the running buffers with
/// `momentum`; the running variance uses the unbiased estimate.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma,
                      const Tensor<T>& beta, Tensor<T>& running_mean,
                      Tensor<T>& running_var, bool training,
                      T momentum = T(0.1), T eps = T(1e-5)) {
  constexpr const char* op = "batchnorm2d";
  detail::require_rank(input.shape(), 4, op, "input");
  const std::size_t batch = input.dim(0), channels = input.dim(1),
                    plane = input.dim(2) * input.dim(3);
  detail::require_axis(gamma.numel(), channels, op, "gamma (channels)");
  detail::require_axis(beta.numel(), channels, op, "beta (channels)");
  detail::require_axis(running_mean.numel(), channels, op,
                       "running_mean (channels)");
  detail::require_axis(running_var.numel(), channels, op,
                       "running_var (channels)");
  const std::size_t count = batch * plane;
  if (training && count < 2) {
    throw DimensionError(
        "batchnorm2d: degenerate batch, B*H*W must be at least 2 in training");
  }

  const auto x = input.data();
  std::vector<T> out(x.size());
  std::vector<T> xhat(training ? x.size() : 0);
  std::vector<T> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    T mean, var;
    if (training) {
      double sum = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = x.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = static_cast<T>(sum / static_cast<double>(count));
      double sq = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = x.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          sq += d * d;
        }
      }
      var = static_cast<T>(sq / static_cast<double>(count));
      running_mean.data()[c] =
          (T(1) - momentum) * running_mean.data()[c] + momentum * mean;
      running_var.data()[c] =
          (T(1) - momentum) * running_var.data()[c] +
          momentum * var * static_cast<T>(count) / static_cast<T>(count - 1);
    } else {
      mean = running_mean.data()[c];
      var = running_var.data()[c];
    }
    const T istd = T(1) / std::sqrt(var + eps);
    inv_std[c] = istd;
    const T gm = gamma.data()[c], bt = beta.data()[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (x[base + i] - mean) * istd;
        if (training) xhat[base + i] = h;
        out[base + i] = gm * h + bt;
      }
    }
  }

  auto in_node = input.node(), g_node = gamma.node(), b_node = beta.node();
  std::vector<T> eval_mean;
  if (!training) {
    eval_mean.assign(running_mean.data().begin(), running_mean.data().end());
  }
  return Tensor<T>::from_op(
      input.shape(), std::move(out), {in_node, g_node, b_node},
      [in_node, g_node, b_node, batch, channels, plane, training,
       xhat = std::move(xhat), inv_std = std::move(inv_std),
       eval_mean = std::move(eval_mean)](const detail::Node<T>& self) {
        const T count = static_cast<T>(batch * plane);
        if (in_node->requires_grad) in_node->ensure_grad();
        if (g_node->requires_grad) g_node->ensure_grad();
        if (b_node->requires_grad) b_node->ensure_grad();
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const T dy = self.grad[base + i];
              const T h = training ? xhat[base + i]
                                   : (in_node->data[base + i] - eval_mean[c]) *
                                         inv_std[c];
              sum_dy += dy;
              sum_dy_xhat += dy * h;
            }
          }
          if (g_node->requires_grad) g_node->grad[c] += sum_dy_xhat;
          if (b_node->requires_grad) b_node->grad[c] += sum_dy;
          if (!in_node->requires_grad) continue;
          const T scale = g_node->data[c] * inv_std[c];
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const T dy = self.grad[base + i];
              if (training) {
                in_node->grad[base + i] +=
                    scale * (dy - sum_dy / count -
                             xhat[base + i] * sum_dy_xhat / count);
              } else {
                in_node->grad[base + i] += scale * dy;
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  auto in_node = input.node();
  return Tensor<T>::from_op(input.shape(), std::move(out), {in_node},
                            [in_node](const detail::Node<T>& self) {
                              in_node->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                if (in_node->data[i] > T(0)) {
                                  in_node->grad[i] += self.grad[i];
                                }
                              }
                            });
}

/// 2x2 max pooling with stride 2. The gradient goes to the first maximum in
/// row-major window order.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& input) {
  detail::require_rank(input.shape(), 4, "maxpool2", "input");
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  if (h % 2 != 0) throw ShapeError("maxpool2: axis H is odd (" + std::to_string(h) + ")");
  if (w % 2 != 0) throw ShapeError("maxpool2: axis W is odd (" + std::to_string(w) + ")");
  const std::size_t oh = h / 2, ow = w / 2;
  const auto x = input.data();
  std::vector<T> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t i0 = (2 * oy) * w + 2 * ox;
        const std::size_t cand[4] = {i0, i0 + 1, i0 + w, i0 + w + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (src[cand[k]] > src[best]) best = cand[k];
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  auto in_node = input.node();
  return Tensor<T>::from_op(
      {input.dim(0), input.dim(1), oh, ow}, std::move(out), {in_node},
      [in_node, argmax = std::move(argmax)](const detail::Node<T>& self) {
        in_node->ensure_grad();
        for (std::size_t o = 0; o < self.grad.size(); ++o) {
          in_node->grad[argmax[o]] += self.grad[o];
        }
      });
}

/// Nearest-neighbour x2 upsampling.
template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& input) {
  detail::require_rank(input.shape(), 4, "upsample_nearest2", "input");
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t oh = 2 * h, ow = 2 * w;
  const auto x = input.data();
  std::vector<T> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T* src = x.data() + (p * h + oy / 2) * w;
      T* dst = out.data() + (p * oh + oy) * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] = src[ox / 2];
    }
  }
  auto in_node = input.node();
  return Tensor<T>::from_op(
      {input.dim(0), input.dim(1), oh, ow}, std::move(out), {in_node},
      [in_node, planes, h, w](const detail::Node<T>& self) {
        in_node->ensure_grad();
        const std::size_t ow = 2 * w;
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t oy = 0; oy < 2 * h; ++oy) {
            T* dst = in_node->grad.data() + (p * h + oy / 2) * w;
            const T* src = self.grad.data() + (p * 2 * h + oy) * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) dst[ox / 2] += src[ox];
          }
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::from_op(a.shape(), std::move(out), {an, bn},
                            [an, bn](const detail::Node<T>& self) {
                              for (auto* n : {an.get(), bn.get()}) {
                                if (!n->requires_grad) continue;
                                n->ensure_grad();
                                detail::accumulate<T>(n->grad, self.grad);
                              }
                            });
}

/// Elementwise product of equal shapes.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  return Tensor<T>::from_op(
      a.shape(), std::move(out), {an, bn}, [an, bn](const detail::Node<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            bn->grad[i] += self.grad[i] * an->data[i];
        }
      });
}

/// Sum of all elements as a one-element tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  auto an = a.node();
  return Tensor<T>::from_op({1}, {total}, {an},
                            [an](const detail::Node<T>& self) {
                              an->ensure_grad();
                              for (T& g : an->grad) g += self.grad[0];
                            });
}

/// Smooth-L1 value of one residual.
template <typename T>
T huber(T r) {
  const T a = std::abs(r);
  return a < T(1) ? T(0.5) * r * r : a - T(0.5);
}

/// Weighted heatmap Huber loss over [B, N, H, W]. Each channel's per-pixel
/// losses are averaged, scaled by that channel's weight, then averaged over
/// channels and batch.
template <typename T>
Tensor<T> huber_loss(const Tensor<T>& pred, const Tensor<T>& target,
                     std::span<const T> weights) {
  constexpr const char* op = "huber_loss";
  detail::require_rank(pred.shape(), 4, op, "pred");
  if (pred.shape() != target.shape()) {
    throw ShapeError("huber_loss: pred " + shape_str(pred.shape()) +
                     " vs target " + shape_str(target.shape()));
  }
  const std::size_t batch = pred.dim(0), channels = pred.dim(1),
                    plane = pred.dim(2) * pred.dim(3);
  detail::require_axis(weights.size(), channels, op, "weights (channels)");
  const auto x = pred.data(), y = target.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw NumericError("huber_loss: non-finite value at flat index " +
                         std::to_string(i));
    }
  }
  for (T wv : weights) {
    if (!std::isfinite(wv)) throw NumericError("huber_loss: non-finite weight");
  }
  T total = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += huber(x[base + i] - y[base + i]);
      total += weights[c] * acc / static_cast<T>(plane);
    }
  }
  total /= static_cast<T>(batch * channels);

  auto pn = pred.node(), tn = target.node();
  std::vector<T> w(weights.begin(), weights.end());
  return Tensor<T>::from_op(
      {1}, {total}, {pn, tn},
      [pn, tn, w = std::move(w), batch, channels, plane](const detail::Node<T>& self) {
        const T scale = self.grad[0] / static_cast<T>(batch * channels * plane);
        const bool dp = pn->requires_grad, dt = tn->requires_grad;
        if (dp) pn->ensure_grad();
        if (dt) tn->ensure_grad();
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const T r = pn->data[base + i] - tn->data[base + i];
              const T g = scale * w[c] * std::clamp(r, T(-1), T(1));
              if (dp) pn->grad[base + i] += g;
              if (dt) tn->grad[base + i] -= g;
            }
          }
        }
      });
}

/// Unweighted mean per-pixel Huber loss of each channel, averaged over the
/// batch. Not recorded in the graph.
template <typename T>
std::vector<T> huber_per_channel(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape() || pred.rank() != 4) {
    throw ShapeError("huber_per_channel: pred " + shape_str(pred.shape()) +
                     " vs target " + shape_str(target.shape()));
  }
  const std::size_t batch = pred.dim(0), channels = pred.dim(1),
                    plane = pred.dim(2) * pred.dim(3);
  std::vector<T> out(channels, T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        acc += huber(pred.data()[base + i] - target.data()[base + i]);
      }
      out[c] += acc / static_cast<T>(plane * batch);
    }
  }
  return out;
}

}  // namespace auhm
