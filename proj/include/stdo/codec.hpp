#pragma once

// The .stdo container and its decoder.
//
// Layout, all integers little-endian:
//   header (38 bytes)
//     "STDO" | version u16 | arch u8 | scale u8 | k u8 | mode u8
//     lr_w u32 | lr_h u32 | T u32 | patch_w u16 | patch_h u16
//     orig_w u32 | orig_h u32 | width_a u16 | width_b u16
//   assignment: N bytes, chunk index per patch in linear PatchId order
//   model_count u8, then per model: param_count u64, param_count f32 values
//   LR payload: T frames of interleaved RGB8, lr_w x lr_h each
//
// width_a/width_b carry the backbone widths (F1/F2 for EspcnLite, F/B for WdsrLite).

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "stdo/error.hpp"
#include "stdo/metrics.hpp"
#include "stdo/model.hpp"
#include "stdo/parallel.hpp"
#include "stdo/trainer.hpp"
#include "stdo/training.hpp"
#include "stdo/video_io.hpp"

namespace stdo {

inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr std::size_t kHeaderBytes = 38;

enum class StreamErrc {
  BadMagic,
  VersionMismatch,
  Truncated,
  BadAssignment,
  ParamCountMismatch,
  BadHeader,
  TrailingBytes,
};

inline const char* stream_errc_name(StreamErrc e) {
  switch (e) {
    case StreamErrc::BadMagic: return "bad magic";
    case StreamErrc::VersionMismatch: return "version mismatch";
    case StreamErrc::Truncated: return "truncated stream";
    case StreamErrc::BadAssignment: return "bad assignment";
    case StreamErrc::ParamCountMismatch: return "param count mismatch";
    case StreamErrc::BadHeader: return "bad header";
    case StreamErrc::TrailingBytes: return "trailing bytes";
  }
  return "unknown";
}

class StreamError : public FormatError {
 public:
  StreamError(StreamErrc code, const std::string& what)
      : FormatError(std::string(stream_errc_name(code)) + ": " + what), code_(code) {}
  StreamErrc code() const noexcept { return code_; }

 private:
  StreamErrc code_;
};

struct StreamHeader {
  std::uint16_t version = kStreamVersion;
  Arch arch = Arch::EspcnLite;
  std::uint8_t scale = 2;
  std::uint8_t k = 1;
  EnsembleMode mode = EnsembleMode::Stdo;
  std::uint32_t lr_w = 0, lr_h = 0, frames = 0;
  std::uint16_t patch_w = 0, patch_h = 0;
  std::uint32_t orig_w = 0, orig_h = 0;
  std::uint16_t width_a = 32, width_b = 16;

  ModelSpec spec() const {
    return arch == Arch::EspcnLite ? ModelSpec::espcn(scale, width_a, width_b)
                                   : ModelSpec::wdsr(scale, width_a, width_b);
  }
  PatchGrid grid() const { return make_grid(lr_w, lr_h, patch_w, patch_h, scale); }
  std::size_t patch_count() const {
    return static_cast<std::size_t>(lr_w / patch_w) * (lr_h / patch_h) * frames;
  }
  bool operator==(const StreamHeader&) const = default;
};

struct StdoStream {
  StreamHeader header;
  std::vector<std::uint8_t> assignment;
  std::vector<std::vector<float>> models;  // flat weights, serialization order
  FrameSequence lr;
  bool operator==(const StdoStream&) const = default;
};

inline std::size_t stream_size(const StdoStream& s) {
  std::size_t n = kHeaderBytes + s.assignment.size() + 1;
  for (const auto& m : s.models) n += 8 + 4 * m.size();
  return n + 3 * static_cast<std::size_t>(s.header.lr_w) * s.header.lr_h * s.header.frames;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  void reserve(std::size_t n) { buf_.reserve(n); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1, "u8")); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2, "u16")); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4, "u32")); }
  std::uint64_t u64() { return le(8, "u64"); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw StreamError(StreamErrc::Truncated, std::string("need ") + std::to_string(n) +
                                                   " bytes for " + what + " at offset " +
                                                   std::to_string(pos_) + ", have " +
                                                   std::to_string(remaining()));
    }
  }

 private:
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline void check_header(const StreamHeader& h) {
  auto bad = [](const std::string& m) { throw StreamError(StreamErrc::BadHeader, m); };
  if (h.arch != Arch::EspcnLite && h.arch != Arch::WdsrLite) bad("unknown arch id");
  if (h.scale < 2 || h.scale > 4) bad("scale must be 2, 3 or 4");
  if (h.k < 1) bad("k must be >= 1");
  if (h.mode != EnsembleMode::Stdo && h.mode != EnsembleMode::Jstdo) bad("unknown mode");
  if (h.patch_w == 0 || h.patch_h == 0) bad("zero patch size");
  if (h.lr_w == 0 || h.lr_h == 0 || h.frames == 0) bad("zero frame geometry");
  if (h.lr_w % h.patch_w != 0 || h.lr_h % h.patch_h != 0)
    bad("LR dims not divisible by patch size");
  if (h.arch == Arch::EspcnLite && (h.width_a == 0 || h.width_b == 0)) bad("zero model width");
  if (h.arch == Arch::WdsrLite && h.width_a == 0) bad("zero model width");
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_stream(const StdoStream& s) {
  const StreamHeader& h = s.header;
  detail::check_header(h);
  const std::size_t n = h.patch_count();
  if (s.assignment.size() != n)
    throw ShapeError("encode: assignment has " + std::to_string(s.assignment.size()) +
                     " entries, grid has " + std::to_string(n));
  for (auto c : s.assignment)
    if (c >= h.k) throw ShapeError("encode: assignment byte >= k");
  if (s.models.empty() || s.models.size() > 255) throw ShapeError("encode: model count must be 1..255");
  if (h.mode == EnsembleMode::Jstdo && s.models.size() != 1)
    throw ShapeError("encode: JSTDO streams carry exactly one model");
  if (h.mode == EnsembleMode::Stdo && s.models.size() != h.k)
    throw ShapeError("encode: STDO streams carry one model per chunk");
  const std::size_t pc = parameter_count(h.spec());
  for (const auto& m : s.models)
    if (m.size() != pc) throw ShapeError("encode: model blob size does not match spec");
  if (s.lr.count() != h.frames || s.lr.width() != h.lr_w || s.lr.height() != h.lr_h)
    throw ShapeError("encode: LR frames do not match header geometry");
  s.lr.validate();

  detail::ByteWriter w;
  w.reserve(stream_size(s));
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("STDO"), 4));
  w.u16(h.version);
  w.u8(static_cast<std::uint8_t>(h.arch));
  w.u8(h.scale);
  w.u8(h.k);
  w.u8(static_cast<std::uint8_t>(h.mode));
  w.u32(h.lr_w);
  w.u32(h.lr_h);
  w.u32(h.frames);
  w.u16(h.patch_w);
  w.u16(h.patch_h);
  w.u32(h.orig_w);
  w.u32(h.orig_h);
  w.u16(h.width_a);
  w.u16(h.width_b);
  w.bytes(s.assignment);
  w.u8(static_cast<std::uint8_t>(s.models.size()));
  for (const auto& m : s.models) {
    w.u64(m.size());
    for (float v : m) w.f32(v);
  }
  for (const auto& f : s.lr.frames) w.bytes(f.rgb);
  return w.take();
}

// Validates everything before returning; no partial result on error.
inline StdoStream parse_stream(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "STDO", 4) != 0)
    throw StreamError(StreamErrc::BadMagic, "not an STDO stream");
  r.bytes(4, "magic");
  StdoStream s;
  StreamHeader& h = s.header;
  h.version = r.u16();
  if (h.version != kStreamVersion)
    throw StreamError(StreamErrc::VersionMismatch,
                      "stream version " + std::to_string(h.version) + ", decoder supports " +
                          std::to_string(kStreamVersion));
  h.arch = static_cast<Arch>(r.u8());
  h.scale = r.u8();
  h.k = r.u8();
  h.mode = static_cast<EnsembleMode>(r.u8());
  h.lr_w = r.u32();
  h.lr_h = r.u32();
  h.frames = r.u32();
  h.patch_w = r.u16();
  h.patch_h = r.u16();
  h.orig_w = r.u32();
  h.orig_h = r.u32();
  h.width_a = r.u16();
  h.width_b = r.u16();
  detail::check_header(h);

  const std::size_t n = h.patch_count();
  auto assign = r.bytes(n, "assignment");
  for (std::size_t i = 0; i < n; ++i) {
    if (assign[i] >= h.k)
      throw StreamError(StreamErrc::BadAssignment, "patch " + std::to_string(i) + " assigned to chunk " +
                                                       std::to_string(assign[i]) + " with k = " +
                                                       std::to_string(h.k));
  }
  s.assignment.assign(assign.begin(), assign.end());

  const std::size_t model_count = r.u8();
  if (h.mode == EnsembleMode::Jstdo && model_count != 1)
    throw StreamError(StreamErrc::BadHeader, "JSTDO stream must carry one model");
  if (h.mode == EnsembleMode::Stdo && model_count != h.k)
    throw StreamError(StreamErrc::BadHeader, "STDO stream must carry k models");
  const std::size_t expected = parameter_count(h.spec());
  for (std::size_t m = 0; m < model_count; ++m) {
    const std::uint64_t pc = r.u64();
    if (pc != expected)
      throw StreamError(StreamErrc::ParamCountMismatch,
                        "model " + std::to_string(m) + " has " + std::to_string(pc) +
                            " parameters, spec needs " + std::to_string(expected));
    r.need(4 * expected, "model weights");
    std::vector<float> w(expected);
    for (float& v : w) v = r.f32();
    s.models.push_back(std::move(w));
  }

  const std::size_t frame_bytes = 3 * static_cast<std::size_t>(h.lr_w) * h.lr_h;
  r.need(frame_bytes * h.frames, "LR payload");
  for (std::uint32_t t = 0; t < h.frames; ++t) {
    Frame f(h.lr_w, h.lr_h);
    auto px = r.bytes(frame_bytes, "LR frame");
    std::copy(px.begin(), px.end(), f.rgb.begin());
    s.lr.frames.push_back(std::move(f));
  }
  if (r.remaining() != 0)
    throw StreamError(StreamErrc::TrailingBytes, std::to_string(r.remaining()) + " bytes after payload");
  return s;
}

struct EncodeInfo {
  std::uint32_t orig_w = 0, orig_h = 0;  // pre-crop HR size
};

// Builds the stream from LR frames (cropped here to the grid's active region) and an ensemble.
inline StdoStream make_stream(const FrameSequence& lr, const PatchGrid& grid,
                              const TrainedEnsemble& ens, const EncodeInfo& info) {
  if (ens.assignment.k > 255) throw ShapeError("encode: k must be <= 255");
  StdoStream s;
  StreamHeader& h = s.header;
  h.arch = ens.spec.arch;
  h.scale = static_cast<std::uint8_t>(ens.spec.scale);
  h.k = static_cast<std::uint8_t>(ens.assignment.k);
  h.mode = ens.mode;
  h.lr_w = static_cast<std::uint32_t>(grid.crop_w());
  h.lr_h = static_cast<std::uint32_t>(grid.crop_h());
  h.frames = static_cast<std::uint32_t>(lr.count());
  h.patch_w = static_cast<std::uint16_t>(grid.patch_w);
  h.patch_h = static_cast<std::uint16_t>(grid.patch_h);
  h.orig_w = info.orig_w;
  h.orig_h = info.orig_h;
  h.width_a = static_cast<std::uint16_t>(ens.spec.width_a());
  h.width_b = static_cast<std::uint16_t>(ens.spec.width_b());
  if (grid.scale != h.scale) throw ShapeError("encode: grid scale differs from model scale");
  s.assignment.assign(ens.assignment.chunk_of.begin(), ens.assignment.chunk_of.end());
  for (const auto& m : ens.models) s.models.push_back(flatten_weights(m));
  for (const auto& f : lr.frames) s.lr.frames.push_back(crop_frame(f, h.lr_w, h.lr_h));
  return s;
}

inline std::vector<std::uint8_t> encode_stream(const FrameSequence& lr, const PatchGrid& grid,
                                               const TrainedEnsemble& ens, const EncodeInfo& info) {
  return serialize_stream(make_stream(lr, grid, ens, info));
}

struct DecodeTiming {
  std::vector<double> frame_ms;
  double parse_ms = 0.0;
  double inference_ms = 0.0;
  double assembly_ms = 0.0;
  double total_ms = 0.0;

  double fps() const {
    return total_ms > 0.0 ? 1000.0 * static_cast<double>(frame_ms.size()) / total_ms : 0.0;
  }
};

struct DecodeResult {
  StreamHeader header;
  FrameSequence hr;
  DecodeTiming timing;
};

// threads > 1 runs patch inference in parallel; output bytes are identical either way.
inline DecodeResult decode_stream(std::span<const std::uint8_t> bytes, std::size_t threads = 1) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  const auto t0 = clock::now();
  const StdoStream s = parse_stream(bytes);
  const StreamHeader& h = s.header;
  const ModelSpec spec = h.spec();
  std::vector<ModelWeights> models;
  for (const auto& flat : s.models) models.push_back(unflatten_weights(spec, flat));
  const PatchGrid grid = h.grid();
  DecodeResult out{h, {}, {}};
  out.timing.parse_ms = ms(t0, clock::now());

  const std::size_t per = grid.per_frame();
  std::vector<HrPatch> patches(per);
  for (std::size_t t = 0; t < h.frames; ++t) {
    const auto f0 = clock::now();
    const Frame& lf = s.lr.frames[t];
    parallel_for(per, threads, [&](std::size_t k) {
      const PatchId id{k % grid.cols, k / grid.cols, t};
      const std::size_t chunk = s.assignment[id.linear(grid)];
      const ModelWeights& m = h.mode == EnsembleMode::Jstdo ? models.front() : models[chunk];
      Tensor4 lr_patch(1, 3, grid.patch_h, grid.patch_w);
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < grid.patch_h; ++y)
          for (std::size_t x = 0; x < grid.patch_w; ++x)
            lr_patch.at(0, ch, y, x) =
                dequantize(lf.at(id.i * grid.patch_w + x, id.j * grid.patch_h + y, ch));
      patches[k] = {id, super_resolve(m, lr_patch)};
    });
    const auto f1 = clock::now();
    out.hr.frames.push_back(assemble_frame(patches, grid, t));
    const auto f2 = clock::now();
    out.timing.inference_ms += ms(f0, f1);
    out.timing.assembly_ms += ms(f1, f2);
    out.timing.frame_ms.push_back(ms(f0, f2));
  }
  out.timing.total_ms = ms(t0, clock::now());
  return out;
}

// Per-patch PSNR of decoded frames against the HR reference, cropped to the active region.
inline PsnrReport evaluate_decoded(const FrameSequence& decoded, const FrameSequence& hr,
                                   const PatchGrid& grid) {
  if (decoded.count() != hr.count()) throw ShapeError("eval: frame count mismatch");
  const std::size_t w = grid.crop_w() * grid.scale, h = grid.crop_h() * grid.scale;
  if (decoded.width() != w || decoded.height() != h)
    throw ShapeError("eval: decoded frames do not match the grid");
  if (hr.width() < w || hr.height() < h) throw ShapeError("eval: HR reference smaller than stream");
  const std::size_t pw = grid.hr_patch_w(), ph = grid.hr_patch_h(), per = grid.per_frame();
  std::vector<double> mses(per * hr.count());
  for (std::size_t t = 0; t < hr.count(); ++t) {
    const Frame& a = decoded.frames[t];
    const Frame& b = hr.frames[t];
    for (std::size_t k = 0; k < per; ++k) {
      const PatchId id{k % grid.cols, k / grid.cols, t};
      double acc = 0.0;
      for (std::size_t y = id.j * ph; y < (id.j + 1) * ph; ++y)
        for (std::size_t x = id.i * pw; x < (id.i + 1) * pw; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = (static_cast<double>(a.at(x, y, c)) - b.at(x, y, c)) / 255.0;
            acc += d * d;
          }
      mses[id.linear(grid)] = acc / static_cast<double>(3 * pw * ph);
    }
  }
  return make_report(grid, hr.count(), std::move(mses));
}

struct BenchReport {
  std::size_t repeats = 0;
  std::size_t frames = 0;
  double ms_per_frame = 0.0;
  double fps = 0.0;
  double parse_ms = 0.0;      // I/O stage, per decode
  double inference_ms = 0.0;  // per decode
  double assembly_ms = 0.0;   // per decode
  std::size_t macs_per_lr_pixel = 0;
  std::size_t flops_per_lr_pixel = 0;
  double gflops_per_frame = 0.0;
};

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Medians over `repeats` full decodes.
inline BenchReport bench_decode(std::span<const std::uint8_t> bytes, std::size_t repeats,
                                std::size_t threads = 1) {
  if (repeats < 1) throw ShapeError("bench_decode: repeats must be >= 1");
  std::vector<double> total, parse, infer, assemble;
  StreamHeader h;
  for (std::size_t i = 0; i < repeats; ++i) {
    DecodeResult d = decode_stream(bytes, threads);
    h = d.header;
    total.push_back(d.timing.total_ms);
    parse.push_back(d.timing.parse_ms);
    infer.push_back(d.timing.inference_ms);
    assemble.push_back(d.timing.assembly_ms);
  }
  BenchReport b;
  b.repeats = repeats;
  b.frames = h.frames;
  b.ms_per_frame = detail::median(total) / static_cast<double>(h.frames);
  b.fps = 1000.0 / b.ms_per_frame;
  b.parse_ms = detail::median(parse);
  b.inference_ms = detail::median(infer);
  b.assembly_ms = detail::median(assemble);
  b.macs_per_lr_pixel = macs_per_lr_pixel(h.spec());
  b.flops_per_lr_pixel = 2 * b.macs_per_lr_pixel;
  b.gflops_per_frame = static_cast<double>(b.flops_per_lr_pixel) * h.lr_w * h.lr_h / 1e9;
  return b;
}

inline void write_bench_csv(const BenchReport& b, const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << "repeats,frames,ms_per_frame,fps,io_ms,inference_ms,assembly_ms,macs_per_lr_pixel,"
         "flops_per_lr_pixel,gflops_per_frame\n";
  out << b.repeats << ',' << b.frames << ',' << b.ms_per_frame << ',' << b.fps << ','
      << b.parse_ms << ',' << b.inference_ms << ',' << b.assembly_ms << ','
      << b.macs_per_lr_pixel << ',' << b.flops_per_lr_pixel << ',' << b.gflops_per_frame << '\n';
  if (!out) throw IoError("write failed for " + p.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> b) {
  detail::write_file(p, b);
}

}  // namespace stdo
