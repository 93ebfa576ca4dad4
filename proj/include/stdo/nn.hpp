#pragma once

// Layer primitives for the small SR backbones: convolution, ReLU, pixel shuffle,
// L1 loss and Adam. Each differentiable op has an explicit backward function;
// there is no tape.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/tensor.hpp"

namespace stdo {

namespace detail {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t cin, cout, k, pad, h, w;
  std::size_t taps() const { return cin * k * k; }
  std::size_t pixels() const { return h * w; }
};

inline ConvGeometry check_conv(const Tensor4& input, const Tensor4& weight,
                               std::size_t bias_len, int pad) {
  const Shape4& ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  }
  if (pad < 0 || static_cast<std::size_t>(pad) != (ws.h - 1) / 2) {
    throw ShapeError("conv2d: pad must equal (k-1)/2 = " + std::to_string((ws.h - 1) / 2));
  }
  if (ws.c != input.c()) {
    throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) +
                     " input channels, input has " + std::to_string(input.c()));
  }
  if (bias_len != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias_len) + " != out channels " +
                     std::to_string(ws.n));
  }
  return {input.c(), ws.n, ws.h, static_cast<std::size_t>(pad), input.h(), input.w()};
}

// Unfolds sample n into a (cin*k*k) x (h*w) row-major matrix, zero padded.
inline void im2col(const Tensor4& input, std::size_t n, const ConvGeometry& g, float* col) {
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.h);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.w);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t i = 0; i < g.cin; ++i) {
    const float* src = input.plane(n, i);
    for (std::size_t dy = 0; dy < g.k; ++dy) {
      for (std::size_t dx = 0; dx < g.k; ++dx) {
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
        // Valid columns [x0, x1); both clamped to [0, w] for kernels wider than the image.
        const std::ptrdiff_t x0 = std::min<std::ptrdiff_t>(w, std::max<std::ptrdiff_t>(0, -ox));
        const std::ptrdiff_t x1 = std::max<std::ptrdiff_t>(x0, std::min<std::ptrdiff_t>(w, w - ox));
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(dy) - pad;
          float* dst = col + y * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          const float* row = src + sy * w;
          std::fill(dst, dst + x0, 0.0f);
          for (std::ptrdiff_t x = x0; x < x1; ++x) dst[x] = row[x + ox];
          std::fill(dst + x1, dst + w, 0.0f);
        }
        col += h * w;
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back into sample n of grad.
inline void col2im(const float* col, const ConvGeometry& g, Tensor4& grad, std::size_t n) {
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.h);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.w);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t i = 0; i < g.cin; ++i) {
    float* dst = grad.plane(n, i);
    for (std::size_t dy = 0; dy < g.k; ++dy) {
      for (std::size_t dx = 0; dx < g.k; ++dx) {
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -ox);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - ox);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = y + static_cast<std::ptrdiff_t>(dy) - pad;
          if (sy < 0 || sy >= h) continue;
          const float* src = col + y * w;
          float* row = dst + sy * w;
          for (std::ptrdiff_t x = x0; x < x1; ++x) row[x + ox] += src[x];
        }
        col += h * w;
      }
    }
  }
}

// Per-thread im2col buffers, reused across calls.
inline float* scratch(std::size_t slot, std::size_t count) {
  thread_local std::vector<float> bufs[2];
  if (bufs[slot].size() < count) bufs[slot].resize(count);
  return bufs[slot].data();
}

}  // namespace detail

// Same-size 2D convolution (cross-correlation) with zero padding.
inline Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weight,
                              std::span<const float> bias, int pad) {
  const auto g = detail::check_conv(input, weight, bias.size(), pad);
  require_finite(input, "conv2d_forward");
  Tensor4 out(input.n(), g.cout, g.h, g.w);
  float* col = detail::scratch(0, g.taps() * g.pixels());
  detail::ConstRowMap wm(weight.data(), g.cout, g.taps());
  for (std::size_t n = 0; n < input.n(); ++n) {
    detail::im2col(input, n, g, col);
    detail::RowMap om(out.plane(n, 0), g.cout, g.pixels());
    om.noalias() = wm * detail::ConstRowMap(col, g.taps(), g.pixels());
    for (std::size_t o = 0; o < g.cout; ++o) om.row(o).array() += bias[o];
  }
  return out;
}

struct ConvGrads {
  Tensor4 input;
  Tensor4 weight;
  std::vector<float> bias;
};

// With input_grad = false the input gradient is left zero (first-layer shortcut).
inline ConvGrads conv2d_backward(const Tensor4& input, const Tensor4& weight,
                                 const Tensor4& grad_out, int pad, bool input_grad = true) {
  const auto g = detail::check_conv(input, weight, weight.n(), pad);
  if (grad_out.shape() != Shape4{input.n(), g.cout, g.h, g.w}) {
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                     " inconsistent with forward");
  }
  ConvGrads grads{Tensor4(input.shape()), Tensor4(weight.shape()),
                  std::vector<float>(g.cout, 0.0f)};
  float* col = detail::scratch(0, g.taps() * g.pixels());
  float* gcol = detail::scratch(1, g.taps() * g.pixels());
  detail::ConstRowMap wm(weight.data(), g.cout, g.taps());
  detail::RowMap gw(grads.weight.data(), g.cout, g.taps());
  for (std::size_t n = 0; n < input.n(); ++n) {
    detail::im2col(input, n, g, col);
    detail::ConstRowMap cm(col, g.taps(), g.pixels());
    detail::ConstRowMap go(grad_out.plane(n, 0), g.cout, g.pixels());
    gw.noalias() += go * cm.transpose();
    if (input_grad) {
      detail::RowMap(gcol, g.taps(), g.pixels()).noalias() = wm.transpose() * go;
      detail::col2im(gcol, g, grads.input, n);
    }
    for (std::size_t o = 0; o < g.cout; ++o) {
      double s = 0.0;
      const float* row = grad_out.plane(n, o);
      for (std::size_t p = 0; p < g.pixels(); ++p) s += row[p];
      grads.bias[o] += static_cast<float>(s);
    }
  }
  return grads;
}

inline Tensor4 relu_forward(const Tensor4& input) {
  require_finite(input, "relu");
  Tensor4 out(input.shape());
  const float* src = input.data();
  float* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  return out;
}

// Gradient passes only where the forward input was strictly positive.
inline Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out.data()[i] = input.data()[i] > 0.0f ? grad_out.data()[i] : 0.0f;
  }
  return out;
}

// (n, c*r*r, h, w) -> (n, c, r*h, r*w): out[n,k,r*y+a,r*x+b] = in[n, k*r*r + a*r + b, y, x].
inline Tensor4 pixel_shuffle(const Tensor4& input, std::size_t r) {
  if (r == 0 || input.c() % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(input.c()) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  const std::size_t c = input.c() / (r * r);
  Tensor4 out(input.n(), c, input.h() * r, input.w() * r);
  for (std::size_t n = 0; n < input.n(); ++n)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < r; ++b) {
          const float* src = input.plane(n, k * r * r + a * r + b);
          float* dst = out.plane(n, k);
          for (std::size_t y = 0; y < input.h(); ++y)
            for (std::size_t x = 0; x < input.w(); ++x)
              dst[(r * y + a) * out.w() + r * x + b] = src[y * input.w() + x];
        }
  return out;
}

// Inverse permutation of pixel_shuffle; also its backward.
inline Tensor4 pixel_unshuffle(const Tensor4& input, std::size_t r) {
  if (r == 0 || input.h() % r != 0 || input.w() % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial dims " + input.shape().str() +
                     " not divisible by r = " + std::to_string(r));
  }
  const std::size_t h = input.h() / r, w = input.w() / r;
  Tensor4 out(input.n(), input.c() * r * r, h, w);
  for (std::size_t n = 0; n < input.n(); ++n)
    for (std::size_t k = 0; k < input.c(); ++k)
      for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < r; ++b) {
          const float* src = input.plane(n, k);
          float* dst = out.plane(n, k * r * r + a * r + b);
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
              dst[y * w + x] = src[(r * y + a) * input.w() + r * x + b];
        }
  return out;
}

struct LossResult {
  double loss = 0.0;
  Tensor4 grad;
};

// Mean absolute error; gradient is sign(pred - target) / count with sign(0) = 0.
inline LossResult l1_loss(const Tensor4& pred, const Tensor4& target) {
  require_same_shape(pred, target, "l1_loss");
  LossResult res{0.0, Tensor4(pred.shape())};
  const std::size_t count = pred.size();
  if (count == 0) return res;
  const float inv = 1.0f / static_cast<float>(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const float d = pred.data()[i] - target.data()[i];
    sum += std::fabs(static_cast<double>(d));
    res.grad.data()[i] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
  }
  res.loss = sum / static_cast<double>(count);
  if (!std::isfinite(res.loss)) throw NumericError("l1_loss: non-finite loss");
  return res;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Trainable tensor with its gradient and Adam moments.
struct Parameter {
  Tensor4 value;
  Tensor4 grad;
  Tensor4 adam_m;
  Tensor4 adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor4 v)
      : value(std::move(v)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(0.0f); }
};

inline void adam_step(Parameter& p, const AdamConfig& cfg) {
  if (p.grad.shape() != p.value.shape() || p.adam_m.shape() != p.value.shape() ||
      p.adam_v.shape() != p.value.shape()) {
    throw ShapeError("adam_step: parameter state shapes disagree");
  }
  require_finite(p.grad, "adam_step");
  const std::uint64_t t = ++p.step_count;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  float* val = p.value.data();
  float* g = p.grad.data();
  float* m = p.adam_m.data();
  float* v = p.adam_v.data();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    val[i] = static_cast<float>(val[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    g[i] = 0.0f;
  }
}

}  // namespace stdo
