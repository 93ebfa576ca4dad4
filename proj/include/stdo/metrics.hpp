#pragma once

// PSNR at patch, frame and video level, plus heatmap/CSV emission.
// Aggregates pool squared error before taking the log.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/tensor.hpp"
#include "stdo/video_io.hpp"

namespace stdo {

inline constexpr double kPsnrCap = 100.0;

inline double mse_to_psnr(double mse) {
  if (mse < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(1.0 / mse);
}

inline double mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("mse: size mismatch");
  if (a.empty()) throw ShapeError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double mse(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "mse");
  return mse(a.values(), b.values());
}

// Values in [0,1], MAX = 1.
inline double psnr(const Tensor4& a, const Tensor4& b) { return mse_to_psnr(mse(a, b)); }

inline double psnr(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height) throw ShapeError("psnr: frame size mismatch");
  return psnr(frame_to_tensor(a), frame_to_tensor(b));
}

struct PsnrReport {
  PatchGrid grid;
  std::size_t frames = 0;
  std::vector<double> patch_mse;   // by linear PatchId
  std::vector<double> patch_psnr;
  std::vector<double> frame_mse;
  std::vector<double> frame_psnr;
  double video_mse = 0.0;
  double video_psnr = 0.0;

  double patch(const PatchId& id) const { return patch_psnr.at(id.linear(grid)); }
};

// Every patch carries the same pixel count, so pooled MSE is a plain mean.
inline PsnrReport make_report(const PatchGrid& grid, std::size_t frames,
                              std::vector<double> patch_mse) {
  const std::size_t per = grid.per_frame();
  if (patch_mse.size() != per * frames) throw ShapeError("make_report: wrong patch count");
  PsnrReport rep{grid, frames, std::move(patch_mse), {}, {}, {}, 0.0, 0.0};
  rep.patch_psnr.reserve(rep.patch_mse.size());
  for (double m : rep.patch_mse) rep.patch_psnr.push_back(mse_to_psnr(m));
  double total = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < per; ++k) s += rep.patch_mse[t * per + k];
    rep.frame_mse.push_back(s / static_cast<double>(per));
    rep.frame_psnr.push_back(mse_to_psnr(rep.frame_mse.back()));
    total += s;
  }
  rep.video_mse = total / static_cast<double>(per * frames);
  rep.video_psnr = mse_to_psnr(rep.video_mse);
  return rep;
}

// PSNR pooled over a subset of patches (e.g. one chunk).
inline double pooled_psnr(const PsnrReport& rep, std::span<const std::size_t> ids) {
  if (ids.empty()) throw ShapeError("pooled_psnr: empty patch set");
  double s = 0.0;
  for (std::size_t id : ids) s += rep.patch_mse.at(id);
  return mse_to_psnr(s / static_cast<double>(ids.size()));
}

namespace detail {

inline std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

}  // namespace detail

struct HeatmapFiles {
  std::filesystem::path csv;
  std::filesystem::path pgm;
};

// Writes <prefix>_<t>.csv (rows j, columns i, dB) and <prefix>_<t>.pgm where each
// patch is a cell_px square whose gray level maps the frame's [min, max] dB to [0, 255].
inline HeatmapFiles emit_heatmap(const PsnrReport& rep, std::size_t t, const std::string& prefix,
                                 std::size_t cell_px = 8) {
  if (t >= rep.frames) throw ShapeError("emit_heatmap: frame " + std::to_string(t) + " not in report");
  const PatchGrid& g = rep.grid;
  HeatmapFiles files{prefix + "_" + std::to_string(t) + ".csv",
                     prefix + "_" + std::to_string(t) + ".pgm"};
  auto value = [&](std::size_t i, std::size_t j) { return rep.patch(PatchId{i, j, t}); };

  {
    auto out = detail::open_out(files.csv);
    for (std::size_t j = 0; j < g.rows; ++j) {
      for (std::size_t i = 0; i < g.cols; ++i) {
        if (i) out << ',';
        out << detail::fmt4(value(i, j));
      }
      out << '\n';
    }
    if (!out) throw IoError("write failed for " + files.csv.string());
  }

  double lo = value(0, 0), hi = lo;
  for (std::size_t j = 0; j < g.rows; ++j)
    for (std::size_t i = 0; i < g.cols; ++i) {
      lo = std::min(lo, value(i, j));
      hi = std::max(hi, value(i, j));
    }
  const std::size_t w = g.cols * cell_px, h = g.rows * cell_px;
  std::string pgm = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t head = pgm.size();
  pgm.resize(head + w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = value(x / cell_px, y / cell_px);
      // A flat frame renders as white.
      const double level = hi > lo ? (v - lo) / (hi - lo) * 255.0 : 255.0;
      pgm[head + y * w + x] = static_cast<char>(static_cast<unsigned char>(std::floor(level + 0.5)));
    }
  auto out = detail::open_out(files.pgm);
  out.write(pgm.data(), static_cast<std::streamsize>(pgm.size()));
  if (!out) throw IoError("write failed for " + files.pgm.string());
  return files;
}

// <prefix>_video.csv, <prefix>_frames.csv, <prefix>_patches.csv
inline void write_report_csv(const PsnrReport& rep, const std::string& prefix) {
  {
    auto out = detail::open_out(prefix + "_video.csv");
    out << "mse,psnr\n" << rep.video_mse << ',' << detail::fmt4(rep.video_psnr) << '\n';
  }
  {
    auto out = detail::open_out(prefix + "_frames.csv");
    out << "t,mse,psnr\n";
    for (std::size_t t = 0; t < rep.frames; ++t)
      out << t << ',' << rep.frame_mse[t] << ',' << detail::fmt4(rep.frame_psnr[t]) << '\n';
  }
  auto out = detail::open_out(prefix + "_patches.csv");
  out << "linear_index,i,j,t,mse,psnr\n";
  for (std::size_t k = 0; k < rep.patch_mse.size(); ++k) {
    const PatchId id = PatchId::from_linear(k, rep.grid);
    out << k << ',' << id.i << ',' << id.j << ',' << id.t << ',' << rep.patch_mse[k] << ','
        << detail::fmt4(rep.patch_psnr[k]) << '\n';
  }
  if (!out) throw IoError("write failed for " + prefix + "_patches.csv");
}

}  // namespace stdo
