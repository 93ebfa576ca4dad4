#pragma once

// Anchor-model profiling and the PSNR-ordered partition of all patches into k chunks.
// Chunk 0 holds the lowest-PSNR (most informative) patches, chunk k-1 the highest.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/metrics.hpp"
#include "stdo/model.hpp"
#include "stdo/parallel.hpp"
#include "stdo/trainer.hpp"
#include "stdo/video_io.hpp"

namespace stdo {

enum class PartitionMode : std::uint8_t { EqualCount = 0, EqualRange = 1 };

inline const char* partition_mode_name(PartitionMode m) {
  return m == PartitionMode::EqualCount ? "count" : "range";
}

// k-1 thresholds. Under EqualRange they are strictly ascending unless every PSNR is
// equal; under EqualCount they are the PSNRs of each chunk's first patch, so ties
// can make them equal.
struct ChunkBoundaries {
  std::vector<double> thresholds;
};

struct ChunkAssignment {
  std::vector<std::uint32_t> chunk_of;  // by linear PatchId
  std::size_t k = 1;
  PartitionMode mode = PartitionMode::EqualCount;

  std::size_t size() const { return chunk_of.size(); }

  // Linear ids of chunk c, ascending.
  std::vector<std::size_t> members(std::size_t c) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < chunk_of.size(); ++i)
      if (chunk_of[i] == c) ids.push_back(i);
    return ids;
  }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(k, 0);
    for (auto c : chunk_of) ++s.at(c);
    return s;
  }

  bool operator==(const ChunkAssignment&) const = default;
};

struct Partition {
  ChunkAssignment assignment;
  ChunkBoundaries boundaries;
};

inline Partition partition_chunks(const std::vector<double>& psnr, std::size_t k,
                                  PartitionMode mode = PartitionMode::EqualCount) {
  const std::size_t n = psnr.size();
  if (k < 1 || k > n) {
    throw ShapeError("partition_chunks: k = " + std::to_string(k) + " outside [1, " +
                     std::to_string(n) + "]");
  }
  Partition out{{std::vector<std::uint32_t>(n, 0), k, mode}, {}};

  if (mode == PartitionMode::EqualCount) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return psnr[a] < psnr[b]; });
    // The first n % k chunks get one extra patch.
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t len = base + (c < extra ? 1 : 0);
      if (c > 0) out.boundaries.thresholds.push_back(psnr[order[pos]]);
      for (std::size_t i = 0; i < len; ++i) out.assignment.chunk_of[order[pos++]] = static_cast<std::uint32_t>(c);
    }
    return out;
  }

  const auto [lo_it, hi_it] = std::minmax_element(psnr.begin(), psnr.end());
  const double lo = *lo_it, hi = *hi_it;
  for (std::size_t c = 1; c < k; ++c) {
    out.boundaries.thresholds.push_back(lo + (hi - lo) * static_cast<double>(c) / static_cast<double>(k));
  }
  const auto& th = out.boundaries.thresholds;
  for (std::size_t i = 0; i < n; ++i) {
    // Half-open [lambda_c, lambda_{c+1}); the last chunk is closed above.
    const auto c = std::upper_bound(th.begin(), th.end(), psnr[i]) - th.begin();
    out.assignment.chunk_of[i] = static_cast<std::uint32_t>(c);
  }
  return out;
}

inline Partition partition_chunks(const PsnrReport& rep, std::size_t k,
                                  PartitionMode mode = PartitionMode::EqualCount) {
  return partition_chunks(rep.patch_psnr, k, mode);
}

// f0: either a trained model or plain bicubic upscaling.
struct AnchorModel {
  enum class Kind { Bicubic, Pretrained };
  Kind kind = Kind::Bicubic;
  std::optional<ModelWeights> model;

  static AnchorModel bicubic() { return {}; }
  static AnchorModel pretrained(ModelWeights w) { return {Kind::Pretrained, std::move(w)}; }
};

inline constexpr double kAnchorLr = 1e-3;

struct AnchorConfig {
  std::size_t warmup_epochs = 20;
  TrainConfig train = [] {
    TrainConfig c;
    c.lr = kAnchorLr;
    return c;
  }();
};

// Warm-up stand-in for a pretrained f0: the training loop run on the whole video.
inline ModelWeights train_anchor(const PatchDataset& ds, const ModelSpec& spec,
                                 const AnchorConfig& cfg) {
  if (ds.entries.empty()) throw ShapeError("train_anchor: empty dataset");
  TrainConfig tc = cfg.train;
  tc.epochs = cfg.warmup_epochs;
  return train_on(all_patches(ds), spec, tc).weights;
}

inline PsnrReport profile_patches(const AnchorModel& anchor, const PatchDataset& ds,
                                  std::size_t threads = 1) {
  if (anchor.kind == AnchorModel::Kind::Pretrained) {
    if (!anchor.model) throw ShapeError("profile_patches: pretrained anchor without weights");
    if (static_cast<std::size_t>(anchor.model->spec.scale) != ds.grid.scale)
      throw ShapeError("profile_patches: anchor scale does not match dataset scale");
  }
  std::vector<double> mses(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t k) {
    const PatchEntry& e = ds.entries[k];
    const Tensor4 sr = anchor.kind == AnchorModel::Kind::Bicubic
                           ? bicubic_upscale(e.lr, ds.grid.scale)
                           : super_resolve(*anchor.model, e.lr);
    mses[k] = mse(sr, e.hr);
  });
  return make_report(ds.grid, ds.frames, std::move(mses));
}

// Debug export: "linear_index,chunk" per patch.
inline void write_assignment_csv(const ChunkAssignment& a, const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << "linear_index,chunk\n";
  for (std::size_t i = 0; i < a.chunk_of.size(); ++i) out << i << ',' << a.chunk_of[i] << '\n';
  if (!out) throw IoError("write failed for " + p.string());
}

}  // namespace stdo
