#pragma once

// Minibatch Adam + L1 training of one model on a list of patch pairs, and
// the clamp-and-quantize inference path shared by evaluation and decoding.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/model.hpp"
#include "stdo/nn.hpp"
#include "stdo/rng.hpp"
#include "stdo/video_io.hpp"

namespace stdo {

inline double default_lr(Arch arch) { return arch == Arch::WdsrLite ? 1e-3 : 1e-4; }

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 1;
  double lr = 1e-4;
  bool lr_decay = true;  // x0.5 at 60% and again at 80% of the epochs
  AdamConfig adam;
  std::uint64_t seed = 0;

  static TrainConfig for_spec(const ModelSpec& spec) {
    TrainConfig c;
    c.lr = default_lr(spec.arch);
    return c;
  }
};

inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  if (cfg.lr_decay) {
    if (epoch >= cfg.epochs * 6 / 10) lr *= 0.5;
    if (epoch >= cfg.epochs * 8 / 10) lr *= 0.5;
  }
  return lr;
}

inline std::size_t steps_per_epoch(std::size_t patches, std::size_t batch) {
  return (patches + batch - 1) / batch;
}

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

using PatchRefs = std::vector<const PatchEntry*>;

inline PatchRefs all_patches(const PatchDataset& ds) {
  PatchRefs refs;
  refs.reserve(ds.size());
  for (const auto& e : ds.entries) refs.push_back(&e);
  return refs;
}

inline TrainResult train_on(const PatchRefs& patches, const ModelSpec& spec,
                            const TrainConfig& cfg) {
  if (patches.empty()) throw ShapeError("train_on: empty patch list");
  if (cfg.batch_size == 0) throw ShapeError("train_on: batch size must be >= 1");
  const Shape4 lr_shape = patches.front()->lr.shape();
  const Shape4 hr_shape = patches.front()->hr.shape();
  for (const PatchEntry* p : patches) {
    if (p->lr.shape() != lr_shape || p->hr.shape() != hr_shape)
      throw ShapeError("train_on: patches differ in size");
  }
  if (hr_shape.h != lr_shape.h * static_cast<std::size_t>(spec.scale))
    throw ShapeError("train_on: patch scale does not match model scale");

  TrainResult res{model_init(spec, cfg.seed), {}, 0};
  Rng rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(patches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    AdamConfig adam = cfg.adam;
    adam.lr = lr_at_epoch(cfg, epoch);
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      Tensor4 x(b, 3, lr_shape.h, lr_shape.w), y(b, 3, hr_shape.h, hr_shape.w);
      for (std::size_t s = 0; s < b; ++s) {
        copy_sample(patches[order[start + s]]->lr, 0, x, s);
        copy_sample(patches[order[start + s]]->hr, 0, y, s);
      }
      try {
        ForwardCache cache;
        const Tensor4 out = model_forward(res.weights, x, &cache);
        const LossResult loss = l1_loss(out, y);
        model_backward(res.weights, cache, loss.grad);
        for (auto& p : res.weights.params) adam_step(p, adam);
        loss_sum += loss.loss * static_cast<double>(b);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      ++res.steps;
    }
    res.log.push_back({epoch, loss_sum / static_cast<double>(order.size()), adam.lr});
  }
  return res;
}

// Model output clamped to [0,1] and rounded through 8 bits, exactly as a decoder emits it.
inline Tensor4 super_resolve(const ModelWeights& m, const Tensor4& lr_patch) {
  Tensor4 out = model_forward(m, lr_patch);
  quantize_in_place(out);
  return out;
}

// Bicubic upscale of an LR patch by r, through the same quantization.
inline Tensor4 bicubic_upscale(const Tensor4& lr_patch, std::size_t r) {
  Tensor4 out = bicubic_resize(lr_patch, r * lr_patch.w(), r * lr_patch.h());
  quantize_in_place(out);
  return out;
}

}  // namespace stdo
