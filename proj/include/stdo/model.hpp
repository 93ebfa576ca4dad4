#pragma once

// The two lite SR backbones and their manual forward/backward passes.
//
// EspcnLite:  conv5(3->F1) relu conv3(F1->F2) relu conv3(F2->3r^2) shuffle(r)
// WdsrLite:   head conv3(3->F), B x {conv3(F->2F) relu conv3(2F->F) + skip},
//             tail conv3(F->3r^2) shuffle(r), plus conv5(3->3r^2) shuffle(r) on the input.
//
// Parameters are stored in graph order as [weight, bias] pairs per conv layer;
// that order is also the serialization order.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/nn.hpp"
#include "stdo/rng.hpp"
#include "stdo/tensor.hpp"

namespace stdo {

enum class Arch : std::uint8_t { EspcnLite = 0, WdsrLite = 1 };

inline const char* arch_name(Arch a) { return a == Arch::EspcnLite ? "espcn" : "wdsr"; }

struct ModelSpec {
  Arch arch = Arch::EspcnLite;
  int scale = 2;
  // EspcnLite widths.
  int f1 = 32;
  int f2 = 16;
  // WdsrLite width and residual block count.
  int feats = 16;
  int blocks = 4;

  static ModelSpec espcn(int r, int f1 = 32, int f2 = 16) {
    return {Arch::EspcnLite, r, f1, f2, 16, 4};
  }
  static ModelSpec wdsr(int r, int feats = 16, int blocks = 4) {
    return {Arch::WdsrLite, r, 32, 16, feats, blocks};
  }

  // Width fields that matter for the arch; the codec stores these two numbers.
  int width_a() const { return arch == Arch::EspcnLite ? f1 : feats; }
  int width_b() const { return arch == Arch::EspcnLite ? f2 : blocks; }

  void validate() const {
    if (scale < 2 || scale > 4) throw ShapeError("model spec: scale must be 2, 3 or 4");
    if (arch == Arch::EspcnLite && (f1 < 1 || f2 < 1))
      throw ShapeError("model spec: EspcnLite widths must be >= 1");
    if (arch == Arch::WdsrLite && (feats < 1 || blocks < 0))
      throw ShapeError("model spec: WdsrLite needs feats >= 1 and blocks >= 0");
  }

  bool operator==(const ModelSpec& o) const {
    return arch == o.arch && scale == o.scale && width_a() == o.width_a() &&
           width_b() == o.width_b();
  }
};

struct ConvDesc {
  std::size_t cin, cout, k;
  std::size_t weight_count() const { return cout * cin * k * k; }
  std::size_t param_count() const { return weight_count() + cout; }
  int pad() const { return static_cast<int>((k - 1) / 2); }
};

inline std::vector<ConvDesc> conv_layers(const ModelSpec& spec) {
  spec.validate();
  const std::size_t out_ch = 3 * static_cast<std::size_t>(spec.scale * spec.scale);
  std::vector<ConvDesc> layers;
  if (spec.arch == Arch::EspcnLite) {
    const std::size_t f1 = spec.f1, f2 = spec.f2;
    layers = {{3, f1, 5}, {f1, f2, 3}, {f2, out_ch, 3}};
  } else {
    const std::size_t f = spec.feats;
    layers.push_back({3, f, 3});
    for (int b = 0; b < spec.blocks; ++b) {
      layers.push_back({f, 2 * f, 3});
      layers.push_back({2 * f, f, 3});
    }
    layers.push_back({f, out_ch, 3});
    layers.push_back({3, out_ch, 5});
  }
  return layers;
}

inline std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& l : conv_layers(spec)) total += l.param_count();
  return total;
}

// Multiply-accumulates per LR input pixel; every conv runs at LR resolution.
inline std::size_t macs_per_lr_pixel(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& l : conv_layers(spec)) total += l.cin * l.cout * l.k * l.k;
  return total;
}

struct ModelWeights {
  ModelSpec spec;
  std::vector<Parameter> params;  // [w0, b0, w1, b1, ...]

  Parameter& weight(std::size_t layer) { return params[2 * layer]; }
  Parameter& bias(std::size_t layer) { return params[2 * layer + 1]; }
  const Parameter& weight(std::size_t layer) const { return params[2 * layer]; }
  const Parameter& bias(std::size_t layer) const { return params[2 * layer + 1]; }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }
};

// Fan-in uniform init, bound sqrt(6 / fan_in); zero biases.
inline ModelWeights model_init(const ModelSpec& spec, std::uint64_t seed) {
  ModelWeights m{spec, {}};
  Rng rng(seed);
  for (const auto& l : conv_layers(spec)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.cin * l.k * l.k));
    Tensor4 w(l.cout, l.cin, l.k, l.k);
    for (float& v : w.values()) {
      do {
        v = static_cast<float>(uniform(rng, -bound, bound));
      } while (!(std::fabs(static_cast<double>(v)) < bound));
    }
    m.params.emplace_back(std::move(w));
    m.params.emplace_back(Tensor4(1, l.cout, 1, 1));
  }
  return m;
}

inline void check_weights(const ModelWeights& m) {
  const auto layers = conv_layers(m.spec);
  if (m.params.size() != 2 * layers.size()) {
    throw ShapeError("model weights: expected " + std::to_string(2 * layers.size()) +
                     " parameter tensors, got " + std::to_string(m.params.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (m.weight(i).value.shape() != Shape4{l.cout, l.cin, l.k, l.k} ||
        m.bias(i).value.shape() != Shape4{1, l.cout, 1, 1}) {
      throw ShapeError("model weights: layer " + std::to_string(i) +
                       " does not match the model spec");
    }
  }
}

// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Tensor4> acts;
};

namespace detail {

inline Tensor4 conv(const ModelWeights& m, std::size_t layer, const Tensor4& x,
                    const ConvDesc& d) {
  return conv2d_forward(x, m.weight(layer).value, m.bias(layer).value.values(), d.pad());
}

inline void add_into(Tensor4& dst, const Tensor4& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

inline void accumulate(ModelWeights& m, std::size_t layer, const ConvGrads& g) {
  add_into(m.weight(layer).grad, g.weight);
  float* b = m.bias(layer).grad.data();
  for (std::size_t o = 0; o < g.bias.size(); ++o) b[o] += g.bias[o];
}

inline ConvGrads conv_back(const ModelWeights& m, std::size_t layer, const Tensor4& x,
                           const Tensor4& gout, const ConvDesc& d, bool input_grad = true) {
  return conv2d_backward(x, m.weight(layer).value, gout, d.pad(), input_grad);
}

}  // namespace detail

// lr_patch: (n, 3, h, w) -> (n, 3, r*h, r*w). Output is not clamped.
inline Tensor4 model_forward(const ModelWeights& m, const Tensor4& lr_patch,
                             ForwardCache* cache = nullptr) {
  check_weights(m);
  if (lr_patch.c() != 3) throw ShapeError("model_forward: input must have 3 channels");
  const auto layers = conv_layers(m.spec);
  const std::size_t r = static_cast<std::size_t>(m.spec.scale);
  std::vector<Tensor4> acts;

  if (m.spec.arch == Arch::EspcnLite) {
    Tensor4 c1 = detail::conv(m, 0, lr_patch, layers[0]);
    Tensor4 r1 = relu_forward(c1);
    Tensor4 c2 = detail::conv(m, 1, r1, layers[1]);
    Tensor4 r2 = relu_forward(c2);
    Tensor4 c3 = detail::conv(m, 2, r2, layers[2]);
    Tensor4 out = pixel_shuffle(c3, r);
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(lr_patch);
      cache->acts.push_back(std::move(c1));
      cache->acts.push_back(std::move(r1));
      cache->acts.push_back(std::move(c2));
      cache->acts.push_back(std::move(r2));
    }
    return out;
  }

  // WdsrLite. Cache layout: x, h_0, then per block (a, relu(a), h_{b+1}).
  const std::size_t blocks = static_cast<std::size_t>(m.spec.blocks);
  Tensor4 h = detail::conv(m, 0, lr_patch, layers[0]);
  if (cache) {
    acts.push_back(lr_patch);
    acts.push_back(h);
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t la = 1 + 2 * b, lb = la + 1;
    Tensor4 a = detail::conv(m, la, h, layers[la]);
    Tensor4 ra = relu_forward(a);
    Tensor4 c = detail::conv(m, lb, ra, layers[lb]);
    detail::add_into(c, h);
    h = std::move(c);
    if (cache) {
      acts.push_back(std::move(a));
      acts.push_back(std::move(ra));
      acts.push_back(h);
    }
  }
  const std::size_t lt = 1 + 2 * blocks, ls = lt + 1;
  Tensor4 t = detail::conv(m, lt, h, layers[lt]);
  detail::add_into(t, detail::conv(m, ls, lr_patch, layers[ls]));
  if (cache) cache->acts = std::move(acts);
  return pixel_shuffle(t, r);
}

// Accumulates d(loss)/d(param) into every Parameter::grad given d(loss)/d(output).
inline void model_backward(ModelWeights& m, const ForwardCache& cache, const Tensor4& grad_out) {
  check_weights(m);
  const auto layers = conv_layers(m.spec);
  const std::size_t r = static_cast<std::size_t>(m.spec.scale);
  const Tensor4 g = pixel_unshuffle(grad_out, r);

  if (m.spec.arch == Arch::EspcnLite) {
    if (cache.acts.size() != 5) throw ShapeError("model_backward: cache does not match model");
    const Tensor4& x = cache.acts[0];
    const Tensor4& c1 = cache.acts[1];
    const Tensor4& r1 = cache.acts[2];
    const Tensor4& c2 = cache.acts[3];
    const Tensor4& r2 = cache.acts[4];
    ConvGrads g3 = detail::conv_back(m, 2, r2, g, layers[2]);
    detail::accumulate(m, 2, g3);
    ConvGrads g2 = detail::conv_back(m, 1, r1, relu_backward(c2, g3.input), layers[1]);
    detail::accumulate(m, 1, g2);
    ConvGrads g1 = detail::conv_back(m, 0, x, relu_backward(c1, g2.input), layers[0], false);
    detail::accumulate(m, 0, g1);
    return;
  }

  const std::size_t blocks = static_cast<std::size_t>(m.spec.blocks);
  if (cache.acts.size() != 2 + 3 * blocks)
    throw ShapeError("model_backward: cache does not match model");
  const Tensor4& x = cache.acts[0];
  auto h_at = [&](std::size_t b) -> const Tensor4& {
    return b == 0 ? cache.acts[1] : cache.acts[1 + 3 * b];
  };
  const std::size_t lt = 1 + 2 * blocks, ls = lt + 1;
  ConvGrads gs = detail::conv_back(m, ls, x, g, layers[ls], false);
  detail::accumulate(m, ls, gs);
  ConvGrads gt = detail::conv_back(m, lt, h_at(blocks), g, layers[lt]);
  detail::accumulate(m, lt, gt);
  Tensor4 gh = std::move(gt.input);
  for (std::size_t bi = blocks; bi-- > 0;) {
    const std::size_t la = 1 + 2 * bi, lb = la + 1;
    const Tensor4& a = cache.acts[2 + 3 * bi];
    const Tensor4& ra = cache.acts[3 + 3 * bi];
    ConvGrads gb = detail::conv_back(m, lb, ra, gh, layers[lb]);
    detail::accumulate(m, lb, gb);
    ConvGrads ga = detail::conv_back(m, la, h_at(bi), relu_backward(a, gb.input), layers[la]);
    detail::accumulate(m, la, ga);
    detail::add_into(gh, ga.input);
  }
  ConvGrads g0 = detail::conv_back(m, 0, x, gh, layers[0], false);
  detail::accumulate(m, 0, g0);
}

// Flat weights in serialization order: per layer, weight row-major then bias.
inline std::vector<float> flatten_weights(const ModelWeights& m) {
  std::vector<float> out;
  out.reserve(m.value_count());
  for (const auto& p : m.params) out.insert(out.end(), p.value.values().begin(), p.value.values().end());
  return out;
}

inline ModelWeights unflatten_weights(const ModelSpec& spec, std::span<const float> flat) {
  if (flat.size() != parameter_count(spec)) {
    throw ShapeError("unflatten_weights: got " + std::to_string(flat.size()) +
                     " values, spec needs " + std::to_string(parameter_count(spec)));
  }
  ModelWeights m{spec, {}};
  std::size_t off = 0;
  auto take = [&](Shape4 s) {
    std::vector<float> v(flat.begin() + off, flat.begin() + off + s.count());
    off += s.count();
    return Tensor4(s, std::move(v));
  };
  for (const auto& l : conv_layers(spec)) {
    m.params.emplace_back(take({l.cout, l.cin, l.k, l.k}));
    m.params.emplace_back(take({1, l.cout, 1, 1}));
  }
  return m;
}

}  // namespace stdo
