#pragma once

// Per-chunk overfitting (STDO), the data-aware joint sampler and single-model
// trainer (JSTDO), and full-video evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "stdo/chunking.hpp"
#include "stdo/error.hpp"
#include "stdo/metrics.hpp"
#include "stdo/model.hpp"
#include "stdo/parallel.hpp"
#include "stdo/rng.hpp"
#include "stdo/trainer.hpp"
#include "stdo/video_io.hpp"

namespace stdo {

enum class EnsembleMode : std::uint8_t { Stdo = 0, Jstdo = 1 };

struct TrainedEnsemble {
  ModelSpec spec;
  EnsembleMode mode = EnsembleMode::Stdo;
  std::vector<ModelWeights> models;
  ChunkAssignment assignment;
  std::vector<std::vector<EpochLog>> logs;  // one per model
  std::size_t total_steps = 0;

  std::size_t parameter_total() const {
    std::size_t n = 0;
    for (const auto& m : models) n += m.value_count();
    return n;
  }
};

inline PatchRefs chunk_patches(const PatchDataset& ds, const ChunkAssignment& a, std::size_t c) {
  PatchRefs refs;
  for (std::size_t id : a.members(c)) refs.push_back(&ds.entries[id]);
  return refs;
}

inline void check_assignment(const PatchDataset& ds, const ChunkAssignment& a) {
  if (a.chunk_of.size() != ds.size()) {
    throw ShapeError("assignment covers " + std::to_string(a.chunk_of.size()) +
                     " patches, dataset has " + std::to_string(ds.size()));
  }
  for (auto c : a.chunk_of)
    if (c >= a.k) throw ShapeError("assignment references chunk " + std::to_string(c) + " >= k");
}

// One independent model per chunk; chunk c trains with seed + c.
inline TrainedEnsemble train_stdo(const PatchDataset& ds, const ChunkAssignment& a,
                                  const ModelSpec& spec, const TrainConfig& cfg,
                                  std::size_t threads = 1) {
  check_assignment(ds, a);
  std::vector<PatchRefs> chunks;
  for (std::size_t c = 0; c < a.k; ++c) {
    chunks.push_back(chunk_patches(ds, a, c));
    if (chunks.back().empty()) throw ShapeError("train_stdo: chunk " + std::to_string(c) + " is empty");
  }
  std::vector<TrainResult> results(a.k);
  parallel_for(a.k, threads, [&](std::size_t c) {
    TrainConfig cc = cfg;
    cc.seed = cfg.seed + c;
    results[c] = train_on(chunks[c], spec, cc);
  });
  TrainedEnsemble ens{spec, EnsembleMode::Stdo, {}, a, {}, 0};
  for (auto& r : results) {
    ens.total_steps += r.steps;
    ens.models.push_back(std::move(r.weights));
    ens.logs.push_back(std::move(r.log));
  }
  return ens;
}

struct SamplingSchedule {
  std::vector<double> rho;  // one proportion per chunk
  std::size_t mu = 0;       // target joint-dataset size
};

// rho_i = 1 - i/(k-1).
inline SamplingSchedule linear_schedule(std::size_t k, std::size_t mu) {
  SamplingSchedule s{std::vector<double>(k, 1.0), mu};
  for (std::size_t i = 0; i < k && k > 1; ++i)
    s.rho[i] = 1.0 - static_cast<double>(i) / static_cast<double>(k - 1);
  return s;
}

inline std::size_t default_mu(std::size_t n) { return (n + 1) / 2; }

namespace detail {

// Distributes `total` over weights by largest remainder, capping each slot at cap[i].
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& weight,
                                                  const std::vector<std::size_t>& cap,
                                                  std::size_t total) {
  const std::size_t n = weight.size();
  std::vector<std::size_t> out(n, 0);
  std::vector<bool> fixed(n, false);
  std::vector<double> share(n, 0.0);
  // Water-fill: slots whose proportional share exceeds their cap are pinned at the cap.
  for (bool changed = true; changed;) {
    changed = false;
    double free_weight = 0.0;
    std::size_t pinned = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) pinned += cap[i];
      else free_weight += weight[i];
    }
    const double left = total > pinned ? static_cast<double>(total - pinned) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      share[i] = free_weight > 0.0 ? weight[i] * left / free_weight : 0.0;
      if (share[i] > static_cast<double>(cap[i])) {
        fixed[i] = true;
        changed = true;
      }
    }
  }
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fixed[i] ? cap[i] : static_cast<std::size_t>(std::floor(share[i]));
    assigned += out[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = fixed[a] ? -1.0 : share[a] - std::floor(share[a]);
    const double fb = fixed[b] ? -1.0 : share[b] - std::floor(share[b]);
    return fa > fb;
  });
  for (std::size_t idx = 0; assigned < total && idx < n; ++idx) {
    const std::size_t i = order[idx];
    if (fixed[i] || out[i] >= cap[i] || weight[i] <= 0.0) continue;
    ++out[i];
    ++assigned;
  }
  return out;
}

}  // namespace detail

// Per-chunk sample counts for the joint dataset: all of chunk 0, none of chunk k-1,
// round(rho_i * |D_i|) in between. If those do not sum to mu, the middle counts are
// rescaled proportionally and rounded by largest remainder.
inline std::vector<std::size_t> jstdo_quotas(const std::vector<std::size_t>& sizes,
                                             const SamplingSchedule& s) {
  const std::size_t k = sizes.size();
  if (s.rho.size() != k) throw ShapeError("jstdo: schedule has " + std::to_string(s.rho.size()) +
                                          " proportions for " + std::to_string(k) + " chunks");
  if (k >= 2 && (s.rho.front() != 1.0 || s.rho.back() != 0.0))
    throw ShapeError("jstdo: schedule must keep all of chunk 0 and none of chunk k-1");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(s.rho[i] >= 0.0 && s.rho[i] <= 1.0)) throw ShapeError("jstdo: rho outside [0,1]");
    if (i > 0 && s.rho[i] > s.rho[i - 1]) throw ShapeError("jstdo: rho must be non-increasing");
  }
  if (s.mu < sizes.front()) {
    throw ShapeError("jstdo: mu = " + std::to_string(s.mu) + " is smaller than chunk 0 (" +
                     std::to_string(sizes.front()) + " patches)");
  }
  std::vector<std::size_t> n(k, 0);
  for (std::size_t i = 0; i < k; ++i)
    n[i] = static_cast<std::size_t>(std::lround(s.rho[i] * static_cast<double>(sizes[i])));
  const std::size_t sum = std::accumulate(n.begin(), n.end(), std::size_t{0});
  if (sum == s.mu || k <= 2) return n;

  std::vector<double> weight;
  std::vector<std::size_t> cap;
  for (std::size_t i = 1; i + 1 < k; ++i) {
    weight.push_back(s.rho[i] * static_cast<double>(sizes[i]));
    cap.push_back(sizes[i]);
  }
  const auto middle = detail::largest_remainder(weight, cap, s.mu - n.front());
  if (std::accumulate(weight.begin(), weight.end(), 0.0) <= 0.0) return n;
  for (std::size_t i = 1; i + 1 < k; ++i) n[i] = middle[i - 1];
  return n;
}

// Uniform sample without replacement of counts[c] patches from each chunk.
// A chunk whose count equals its size is taken whole, in ascending id order.
inline PatchRefs sample_chunks(const PatchDataset& ds, const ChunkAssignment& a,
                               const std::vector<std::size_t>& counts, std::uint64_t seed) {
  check_assignment(ds, a);
  if (counts.size() != a.k) throw ShapeError("sample_chunks: one count per chunk required");
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  PatchRefs out;
  for (std::size_t c = 0; c < a.k; ++c) {
    std::vector<std::size_t> ids = a.members(c);
    if (counts[c] > ids.size()) throw ShapeError("sample_chunks: count exceeds chunk size");
    if (counts[c] < ids.size()) {
      for (std::size_t i = 0; i < counts[c]; ++i) {
        std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
      }
      ids.resize(counts[c]);
      std::sort(ids.begin(), ids.end());
    }
    for (std::size_t id : ids) out.push_back(&ds.entries[id]);
  }
  return out;
}

// Proportional sample without the endpoint rules, for schedule ablations.
inline PatchRefs sample_with_proportions(const PatchDataset& ds, const ChunkAssignment& a,
                                         const std::vector<double>& rho, std::uint64_t seed) {
  const auto sizes = a.sizes();
  if (rho.size() != a.k) throw ShapeError("sample_with_proportions: one rho per chunk required");
  std::vector<std::size_t> counts(a.k);
  for (std::size_t c = 0; c < a.k; ++c) {
    if (!(rho[c] >= 0.0 && rho[c] <= 1.0)) throw ShapeError("sample_with_proportions: rho outside [0,1]");
    counts[c] = static_cast<std::size_t>(std::lround(rho[c] * static_cast<double>(sizes[c])));
  }
  return sample_chunks(ds, a, counts, seed);
}

inline PatchRefs jstdo_sample(const PatchDataset& ds, const ChunkAssignment& a,
                              const SamplingSchedule& s, std::uint64_t seed) {
  check_assignment(ds, a);
  return sample_chunks(ds, a, jstdo_quotas(a.sizes(), s), seed);
}

inline TrainedEnsemble train_on_joint(const PatchRefs& joint, const ChunkAssignment& a,
                                      const ModelSpec& spec, const TrainConfig& cfg) {
  TrainResult r = train_on(joint, spec, cfg);
  TrainedEnsemble ens{spec, EnsembleMode::Jstdo, {}, a, {}, r.steps};
  ens.models.push_back(std::move(r.weights));
  ens.logs.push_back(std::move(r.log));
  return ens;
}

inline TrainedEnsemble train_jstdo(const PatchDataset& ds, const ChunkAssignment& a,
                                   const SamplingSchedule& s, const ModelSpec& spec,
                                   const TrainConfig& cfg) {
  return train_on_joint(jstdo_sample(ds, a, s, cfg.seed), a, spec, cfg);
}

// A single model applied to every patch.
inline PsnrReport evaluate_single(const ModelWeights& m, const PatchDataset& ds,
                                  std::size_t threads = 1) {
  if (static_cast<std::size_t>(m.spec.scale) != ds.grid.scale)
    throw ShapeError("evaluate: model scale does not match dataset");
  std::vector<double> mses(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t k) {
    mses[k] = mse(super_resolve(m, ds.entries[k].lr), ds.entries[k].hr);
  });
  return make_report(ds.grid, ds.frames, std::move(mses));
}

// STDO: each patch goes through its chunk's model. JSTDO: the single model.
inline PsnrReport evaluate(const TrainedEnsemble& ens, const PatchDataset& ds,
                           std::size_t threads = 1) {
  if (static_cast<std::size_t>(ens.spec.scale) != ds.grid.scale)
    throw ShapeError("evaluate: ensemble scale does not match dataset");
  if (ens.models.empty()) throw ShapeError("evaluate: ensemble has no models");
  if (ens.mode == EnsembleMode::Jstdo || ens.models.size() == 1) {
    return evaluate_single(ens.models.front(), ds, threads);
  }
  check_assignment(ds, ens.assignment);
  if (ens.models.size() != ens.assignment.k)
    throw ShapeError("evaluate: model count does not match chunk count");
  std::vector<double> mses(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t k) {
    const ModelWeights& m = ens.models[ens.assignment.chunk_of[k]];
    mses[k] = mse(super_resolve(m, ds.entries[k].lr), ds.entries[k].hr);
  });
  return make_report(ds.grid, ds.frames, std::move(mses));
}

// "epoch,mean_loss,lr" per model.
inline void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << "epoch,mean_loss,lr\n";
  out.precision(9);
  for (const auto& e : log) out << e.epoch << ',' << e.mean_loss << ',' << e.lr << '\n';
  if (!out) throw IoError("write failed for " + p.string());
}

}  // namespace stdo
