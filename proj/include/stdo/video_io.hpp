#pragma once

// Frames, PPM/raw I/O, bicubic resampling and the patch grid.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/rng.hpp"
#include "stdo/tensor.hpp"

namespace stdo {

// 8-bit RGB, interleaved, row-major.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Frame() = default;
  Frame(std::size_t w, std::size_t h) : width(w), height(h), rgb(3 * w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t ch) {
    return rgb[3 * (y * width + x) + ch];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t ch) const {
    return rgb[3 * (y * width + x) + ch];
  }
  bool operator==(const Frame&) const = default;
};

struct FrameSequence {
  std::vector<Frame> frames;

  std::size_t count() const { return frames.size(); }
  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }

  void validate() const {
    if (frames.empty()) throw ShapeError("frame sequence is empty");
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const Frame& f = frames[t];
      if (f.width != width() || f.height != height()) {
        throw ShapeError("frame " + std::to_string(t) + " is " + std::to_string(f.width) + "x" +
                         std::to_string(f.height) + ", expected " + std::to_string(width()) +
                         "x" + std::to_string(height()));
      }
      if (f.rgb.size() != 3 * f.width * f.height) {
        throw ShapeError("frame " + std::to_string(t) + " pixel buffer has wrong length");
      }
    }
  }
  bool operator==(const FrameSequence&) const = default;
};

// [0,1] float -> 8-bit: clamp, then round half up.
inline std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::floor(c * 255.0f + 0.5f));
}

inline float dequantize(std::uint8_t p) { return static_cast<float>(p) / 255.0f; }

// (1, 3, H, W) planar floats in [0,1].
inline Tensor4 frame_to_tensor(const Frame& f) {
  Tensor4 t(1, 3, f.height, f.width);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    float* dst = t.plane(0, ch);
    for (std::size_t i = 0; i < f.width * f.height; ++i) dst[i] = dequantize(f.rgb[3 * i + ch]);
  }
  return t;
}

inline Frame tensor_to_frame(const Tensor4& t, std::size_t n = 0) {
  if (t.c() != 3) throw ShapeError("tensor_to_frame: need 3 channels");
  Frame f(t.w(), t.h());
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const float* src = t.plane(n, ch);
    for (std::size_t i = 0; i < f.width * f.height; ++i) f.rgb[3 * i + ch] = quantize(src[i]);
  }
  return f;
}

// Rounds every value through 8 bits, in place.
inline void quantize_in_place(Tensor4& t) {
  for (float& v : t.values()) v = dequantize(quantize(v));
}

inline Frame crop_frame(const Frame& f, std::size_t w, std::size_t h) {
  if (w > f.width || h > f.height) throw ShapeError("crop_frame: crop larger than frame");
  Frame out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(f.rgb.begin() + 3 * y * f.width, 3 * w, out.rgb.begin() + 3 * y * w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PPM / raw I/O

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + p.string());
}

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string ppm_token(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return s.substr(start, pos - start);
}

inline std::size_t parse_dim(const std::string& tok, const std::string& what) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9) {
    throw FormatError(what + ": bad header value '" + tok + "'");
  }
  return std::stoul(tok);
}

inline std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", t);
  return buf;
}

inline std::filesystem::path raw_sidecar(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".hdr");
}

}  // namespace detail

inline Frame decode_ppm(const std::string& bytes, const std::string& what = "ppm") {
  std::size_t pos = 0;
  if (detail::ppm_token(bytes, pos) != "P6") throw FormatError(what + ": not a binary P6 PPM");
  const std::size_t w = detail::parse_dim(detail::ppm_token(bytes, pos), what);
  const std::size_t h = detail::parse_dim(detail::ppm_token(bytes, pos), what);
  const std::size_t maxval = detail::parse_dim(detail::ppm_token(bytes, pos), what);
  if (maxval != 255) throw FormatError(what + ": maxval must be 255");
  if (w == 0 || h == 0) throw FormatError(what + ": zero dimension");
  ++pos;  // single whitespace after maxval
  if (bytes.size() < pos + 3 * w * h) throw FormatError(what + ": truncated pixel data");
  Frame f(w, h);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), 3 * w * h, f.rgb.begin());
  return f;
}

inline std::vector<std::uint8_t> encode_ppm(const Frame& f) {
  const std::string head =
      "P6\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), f.rgb.begin(), f.rgb.end());
  return out;
}

inline Frame read_ppm(const std::filesystem::path& p) {
  return decode_ppm(detail::read_file(p), p.string());
}

inline void write_ppm(const std::filesystem::path& p, const Frame& f) {
  detail::write_file(p, encode_ppm(f));
}

// PpmDir: directory of frame_%06d.ppm numbered from 0.
// Raw8:   concatenated RGB frames; sidecar "<file>.hdr" holds "W H T".
enum class FrameFormat { PpmDir, Raw8 };

inline FrameSequence load_frames(const std::filesystem::path& path, FrameFormat format) {
  namespace fs = std::filesystem;
  FrameSequence seq;
  if (format == FrameFormat::PpmDir) {
    if (!fs::is_directory(path)) throw IoError("not a directory: " + path.string());
    std::size_t max_index = 0;
    std::size_t found = 0;
    std::vector<bool> present;
    for (const auto& entry : fs::directory_iterator(path)) {
      const std::string name = entry.path().filename().string();
      if (name.size() != 16 || name.rfind("frame_", 0) != 0 || name.substr(12) != ".ppm") continue;
      const std::string digits = name.substr(6, 6);
      if (!std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
      const std::size_t idx = std::stoul(digits);
      if (idx >= present.size()) present.resize(idx + 1, false);
      present[idx] = true;
      max_index = std::max(max_index, idx);
      ++found;
    }
    if (found == 0) throw IoError("no frame_*.ppm files in " + path.string());
    for (std::size_t t = 0; t <= max_index; ++t) {
      if (!present[t]) throw IoError("missing frame index " + std::to_string(t) + " in " + path.string());
    }
    for (std::size_t t = 0; t <= max_index; ++t) {
      seq.frames.push_back(read_ppm(path / detail::frame_name(t)));
    }
  } else {
    const std::string head = detail::read_file(detail::raw_sidecar(path));
    std::size_t pos = 0;
    const std::size_t w = detail::parse_dim(detail::ppm_token(head, pos), "raw header");
    const std::size_t h = detail::parse_dim(detail::ppm_token(head, pos), "raw header");
    const std::size_t t = detail::parse_dim(detail::ppm_token(head, pos), "raw header");
    if (w == 0 || h == 0 || t == 0) throw FormatError("raw header: zero dimension");
    const std::string body = detail::read_file(path);
    const std::size_t frame_bytes = 3 * w * h;
    if (body.size() < frame_bytes * t) {
      throw FormatError("raw file truncated: " + std::to_string(body.size()) + " bytes, need " +
                        std::to_string(frame_bytes * t));
    }
    for (std::size_t i = 0; i < t; ++i) {
      Frame f(w, h);
      std::copy_n(body.begin() + static_cast<std::ptrdiff_t>(i * frame_bytes), frame_bytes,
                  f.rgb.begin());
      seq.frames.push_back(std::move(f));
    }
  }
  seq.validate();
  return seq;
}

inline void write_frames(const FrameSequence& seq, const std::filesystem::path& path,
                         FrameFormat format) {
  namespace fs = std::filesystem;
  seq.validate();
  if (format == FrameFormat::PpmDir) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create " + path.string() + ": " + ec.message());
    for (std::size_t t = 0; t < seq.count(); ++t) {
      write_ppm(path / detail::frame_name(t), seq.frames[t]);
    }
    return;
  }
  std::vector<std::uint8_t> body;
  body.reserve(seq.count() * seq.frames[0].rgb.size());
  for (const auto& f : seq.frames) body.insert(body.end(), f.rgb.begin(), f.rgb.end());
  detail::write_file(path, body);
  const std::string head = std::to_string(seq.width()) + " " + std::to_string(seq.height()) +
                           " " + std::to_string(seq.count()) + "\n";
  detail::write_file(detail::raw_sidecar(path),
                     std::span(reinterpret_cast<const std::uint8_t*>(head.data()), head.size()));
}

// ---------------------------------------------------------------------------
// Bicubic resampling

// Cubic convolution kernel, a = -0.5.
inline double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

// Center-aligned source taps for each output coordinate, clamped at the edges.
inline std::vector<Taps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto idx = static_cast<std::ptrdiff_t>(base) - 1 + k;
      taps[o].index[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last));
      taps[o].weight[k] = cubic_weight(frac - static_cast<double>(k - 1));
    }
  }
  return taps;
}

}  // namespace detail

// Separable bicubic resize of every (n, c) plane. Output is not clamped.
inline Tensor4 bicubic_resize(const Tensor4& img, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw ShapeError("bicubic_resize: zero-size output");
  if (img.w() == 0 || img.h() == 0) throw ShapeError("bicubic_resize: empty input");
  const auto tx = detail::cubic_taps(img.w(), out_w);
  const auto ty = detail::cubic_taps(img.h(), out_h);
  Tensor4 out(img.n(), img.c(), out_h, out_w);
  std::vector<double> rows(img.h() * out_w);
  for (std::size_t n = 0; n < img.n(); ++n) {
    for (std::size_t c = 0; c < img.c(); ++c) {
      const float* src = img.plane(n, c);
      for (std::size_t y = 0; y < img.h(); ++y) {
        const float* row = src + y * img.w();
        for (std::size_t x = 0; x < out_w; ++x) {
          const auto& t = tx[x];
          rows[y * out_w + x] = t.weight[0] * row[t.index[0]] + t.weight[1] * row[t.index[1]] +
                                t.weight[2] * row[t.index[2]] + t.weight[3] * row[t.index[3]];
        }
      }
      float* dst = out.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        const auto& t = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
          const double v = t.weight[0] * rows[t.index[0] * out_w + x] +
                           t.weight[1] * rows[t.index[1] * out_w + x] +
                           t.weight[2] * rows[t.index[2] * out_w + x] +
                           t.weight[3] * rows[t.index[3] * out_w + x];
          dst[y * out_w + x] = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

inline void check_scale(int r) {
  if (r < 2 || r > 4) throw ShapeError("scale factor must be 2, 3 or 4, got " + std::to_string(r));
}

// HR frames cropped to multiples of r, downscaled by r, quantized to 8 bits.
inline FrameSequence make_lr_sequence(const FrameSequence& hr, int r) {
  check_scale(r);
  hr.validate();
  const std::size_t ru = static_cast<std::size_t>(r);
  const std::size_t lw = hr.width() / ru, lh = hr.height() / ru;
  if (lw == 0 || lh == 0) throw ShapeError("make_lr_sequence: frame smaller than scale factor");
  FrameSequence lr;
  for (const Frame& f : hr.frames) {
    const Tensor4 src = frame_to_tensor(crop_frame(f, lw * ru, lh * ru));
    lr.frames.push_back(tensor_to_frame(bicubic_resize(src, lw, lh)));
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Patch grid

struct PatchGrid {
  std::size_t patch_w = 0, patch_h = 0;  // on the LR raster
  std::size_t scale = 2;
  std::size_t cols = 0, rows = 0;  // I, J

  std::size_t crop_w() const { return cols * patch_w; }
  std::size_t crop_h() const { return rows * patch_h; }
  std::size_t hr_patch_w() const { return scale * patch_w; }
  std::size_t hr_patch_h() const { return scale * patch_h; }
  std::size_t per_frame() const { return cols * rows; }
  bool operator==(const PatchGrid&) const = default;
};

inline PatchGrid make_grid(std::size_t lr_w, std::size_t lr_h, std::size_t patch_w,
                           std::size_t patch_h, int r) {
  check_scale(r);
  if (patch_w == 0 || patch_h == 0) throw ShapeError("patch size must be positive");
  PatchGrid g{patch_w, patch_h, static_cast<std::size_t>(r), lr_w / patch_w, lr_h / patch_h};
  if (g.cols < 1 || g.rows < 1) {
    throw ShapeError("patch " + std::to_string(patch_w) + "x" + std::to_string(patch_h) +
                     " does not fit in LR frame " + std::to_string(lr_w) + "x" +
                     std::to_string(lr_h));
  }
  return g;
}

struct PatchId {
  std::size_t i = 0, j = 0, t = 0;

  std::size_t linear(const PatchGrid& g) const { return t * g.per_frame() + j * g.cols + i; }
  static PatchId from_linear(std::size_t idx, const PatchGrid& g) {
    const std::size_t per = g.per_frame();
    return {idx % per % g.cols, idx % per / g.cols, idx / per};
  }
  std::string str() const {
    return "(" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(t) + ")";
  }
  bool operator==(const PatchId&) const = default;
};

struct PatchEntry {
  PatchId id;
  Tensor4 lr;  // (1, 3, patch_h, patch_w)
  Tensor4 hr;  // (1, 3, r*patch_h, r*patch_w)
};

// Entries are ordered by linear index.
struct PatchDataset {
  PatchGrid grid;
  std::size_t frames = 0;
  std::vector<PatchEntry> entries;

  std::size_t size() const { return entries.size(); }
};

namespace detail {

inline Tensor4 cut_window(const Frame& f, std::size_t x0, std::size_t y0, std::size_t w,
                          std::size_t h) {
  Tensor4 t(1, 3, h, w);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) t.at(0, ch, y, x) = dequantize(f.at(x0 + x, y0 + y, ch));
  return t;
}

}  // namespace detail

inline PatchDataset slice_into_patches(const FrameSequence& hr, const FrameSequence& lr,
                                       const PatchGrid& grid) {
  hr.validate();
  lr.validate();
  const std::size_t r = grid.scale;
  if (hr.count() != lr.count()) throw ShapeError("slice: HR and LR frame counts differ");
  if (lr.width() < grid.crop_w() || lr.height() < grid.crop_h() ||
      hr.width() < r * grid.crop_w() || hr.height() < r * grid.crop_h() ||
      r * lr.width() > hr.width() || r * lr.height() > hr.height()) {
    throw ShapeError("slice: LR " + std::to_string(lr.width()) + "x" + std::to_string(lr.height()) +
                     " and HR " + std::to_string(hr.width()) + "x" + std::to_string(hr.height()) +
                     " are inconsistent with the grid at scale " + std::to_string(r));
  }
  PatchDataset ds{grid, hr.count(), {}};
  ds.entries.reserve(grid.per_frame() * hr.count());
  for (std::size_t t = 0; t < hr.count(); ++t)
    for (std::size_t j = 0; j < grid.rows; ++j)
      for (std::size_t i = 0; i < grid.cols; ++i) {
        ds.entries.push_back(
            {{i, j, t},
             detail::cut_window(lr.frames[t], i * grid.patch_w, j * grid.patch_h, grid.patch_w,
                                grid.patch_h),
             detail::cut_window(hr.frames[t], i * grid.hr_patch_w(), j * grid.hr_patch_h(),
                                grid.hr_patch_w(), grid.hr_patch_h())});
      }
  return ds;
}

struct HrPatch {
  PatchId id;
  Tensor4 pixels;  // (1, 3, r*patch_h, r*patch_w), floats
};

// Writes the I*J patches of frame t into a (r*crop_w, r*crop_h) frame.
inline Frame assemble_frame(std::span<const HrPatch> patches, const PatchGrid& grid,
                            std::size_t t) {
  std::vector<const HrPatch*> slot(grid.per_frame(), nullptr);
  const Shape4 want{1, 3, grid.hr_patch_h(), grid.hr_patch_w()};
  for (const HrPatch& p : patches) {
    if (p.id.t != t || p.id.i >= grid.cols || p.id.j >= grid.rows) {
      throw ShapeError("assemble_frame: patch " + p.id.str() + " does not belong to frame " +
                       std::to_string(t));
    }
    if (p.pixels.shape() != want) {
      throw ShapeError("assemble_frame: patch " + p.id.str() + " has shape " +
                       p.pixels.shape().str() + ", expected " + want.str());
    }
    const std::size_t k = p.id.j * grid.cols + p.id.i;
    if (slot[k]) throw ShapeError("assemble_frame: duplicate patch " + p.id.str());
    slot[k] = &p;
  }
  for (std::size_t k = 0; k < slot.size(); ++k) {
    if (!slot[k]) {
      throw ShapeError("assemble_frame: missing patch " +
                       PatchId{k % grid.cols, k / grid.cols, t}.str());
    }
  }
  Frame out(grid.scale * grid.crop_w(), grid.scale * grid.crop_h());
  const std::size_t pw = grid.hr_patch_w(), ph = grid.hr_patch_h();
  for (const HrPatch* p : slot) {
    const std::size_t x0 = p->id.i * pw, y0 = p->id.j * ph;
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) out.at(x0 + x, y0 + y, ch) = quantize(p->pixels.at(0, ch, y, x));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic test video

enum class Motif { NoiseBlocks, Stripes };

inline const char* motif_name(Motif m) { return m == Motif::NoiseBlocks ? "noise" : "stripes"; }

struct SynthConfig {
  std::size_t width = 192;
  std::size_t height = 192;
  std::size_t frames = 16;
  Motif motif = Motif::NoiseBlocks;
  std::uint64_t seed = 1;
};

namespace detail {

inline double hash01(std::uint64_t seed, std::int64_t a, std::int64_t b, std::uint64_t salt) {
  std::uint64_t x = seed * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(a) * 0xBF58476D1CE4E5B9ULL ^
                    static_cast<std::uint64_t>(b) * 0x94D049BB133111EBULL ^ salt;
  x ^= x >> 31;
  x *= 0xD6E8FEB86659FD93ULL;
  x ^= x >> 32;
  x *= 0xD6E8FEB86659FD93ULL;
  x ^= x >> 29;
  return static_cast<double>(x >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace detail

// A checkered gradient background with one textured region drifting across it.
// Pure function of the config.
inline FrameSequence synth_video(const SynthConfig& cfg) {
  if (cfg.width < 32 || cfg.height < 32) throw ShapeError("synth_video: dims must be >= 32");
  if (cfg.frames < 2) throw ShapeError("synth_video: need at least 2 frames");
  Rng rng(cfg.seed);
  const double W = static_cast<double>(cfg.width), H = static_cast<double>(cfg.height);
  std::array<double, 3> tint;
  for (double& c : tint) c = uniform(rng, 0.55, 1.0);
  const double cell = 20.0;
  const double cell_off = std::floor(uniform(rng, 0.0, cell));
  const double start_x = std::floor(uniform(rng, 0.05, 0.25) * W / 2) * 2;
  const double start_y = std::floor(uniform(rng, 0.05, 0.25) * H / 2) * 2;
  const double angle = uniform(rng, 0.3, 1.2);
  const std::array<double, 3> stripe_a{0.15, 0.2, 0.35}, stripe_b{0.95, 0.85, 0.55};

  FrameSequence seq;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    Frame f(cfg.width, cfg.height);
    // The motif moves 2 px per frame so block edges keep a fixed phase at x2.
    const double mx = start_x + 2.0 * static_cast<double>(t);
    const double my = start_y + 2.0 * static_cast<double>(t);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double fx = static_cast<double>(x), fy = static_cast<double>(y);
        const bool check = (static_cast<long>(std::floor((fx + cell_off) / cell)) +
                            static_cast<long>(std::floor((fy + cell_off) / cell))) % 2 == 0;
        std::array<double, 3> px{0.2 + 0.5 * fx / W, 0.3 + 0.4 * fy / H,
                                 0.65 - 0.3 * (fx + fy) / (W + H)};
        for (double& c : px) c += check ? 0.1 : -0.1;

        const double lx = fx - mx, ly = fy - my;
        if (cfg.motif == Motif::NoiseBlocks) {
          if (lx >= 0 && ly >= 0 && lx < 0.4 * W && ly < 0.4 * H) {
            const auto bx = static_cast<std::int64_t>(std::floor(lx / 4.0));
            const auto by = static_cast<std::int64_t>(std::floor(ly / 4.0));
            const double g = detail::hash01(cfg.seed, bx, by, 0x51);
            for (int c = 0; c < 3; ++c) px[c] = tint[c] * (0.1 + 0.85 * g);
          }
        } else {
          const double radius = 0.25 * std::min(W, H);
          const double cx = lx - radius, cy = ly - radius;
          if (cx * cx + cy * cy < radius * radius) {
            const double u = cx * std::cos(angle) + cy * std::sin(angle);
            const bool band = std::fmod(std::fmod(u, 7.0) + 7.0, 7.0) < 3.5;
            for (int c = 0; c < 3; ++c) px[c] = band ? stripe_a[c] : stripe_b[c] * tint[c];
          }
        }
        for (int c = 0; c < 3; ++c) f.at(x, y, c) = quantize(static_cast<float>(px[c]));
      }
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace stdo
