// stdo: synth / profile / encode / decode / eval / bench.
//
// Every subcommand writes a key=value manifest next to its outputs. Passing
// --manifest FILE fills any option not given on the command line from FILE.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stdo/stdo.hpp"

namespace fs = std::filesystem;
using namespace stdo;

namespace {

struct Patch {
  std::size_t w = 24, h = 24;
};

Patch parse_patch(const std::string& s) {
  const auto x = s.find('x');
  Patch p;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    p.w = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    p.h = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ShapeError("--patch expects WxH, got '" + s + "'");
  }
  if (p.w == 0 || p.h == 0) throw ShapeError("--patch dimensions must be positive");
  return p;
}

FrameFormat pick_format(const std::string& flag, const fs::path& p) {
  if (flag == "ppm") return FrameFormat::PpmDir;
  if (flag == "raw8") return FrameFormat::Raw8;
  return fs::is_directory(p) ? FrameFormat::PpmDir : FrameFormat::Raw8;
}

std::uint64_t digest(const FrameSequence& seq) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : seq.frames) h = fnv1a64(f.rgb, h);
  return h;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Option values for the manifest: given values, else the captured defaults.
RunManifest manifest_for(const CLI::App& sub) {
  RunManifest m;
  m.set("command", sub.get_name());
  m.set("tool_version", STDO_VERSION);
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "manifest" || name.empty()) continue;
    std::string v;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = opt->get_default_str();
    }
    m.set(name, v);
  }
  return m;
}

struct Common {
  std::string hr, format = "auto", patch = "24x24", anchor = "warmup", mode = "count";
  int scale = 2;
  std::size_t k = 4, warmup_epochs = 20, batch = 1, threads = 1;
  std::uint64_t seed = 0;
  std::string lr = "auto";
  double anchor_lr = kAnchorLr;
};

void add_common(CLI::App* s, Common& c) {
  s->add_option("--hr", c.hr, "HR frames: PPM directory or raw8 file")->required();
  s->add_option("--format", c.format, "frame format")->check(CLI::IsMember({"auto", "ppm", "raw8"}));
  s->add_option("--scale", c.scale, "upscaling factor")->check(CLI::Range(2, 4));
  s->add_option("--patch", c.patch, "LR patch size WxH");
  s->add_option("--anchor", c.anchor, "profiling anchor")->check(CLI::IsMember({"warmup", "bicubic"}));
  s->add_option("--warmup-epochs", c.warmup_epochs, "anchor warm-up epochs");
  s->add_option("--anchor-lr", c.anchor_lr, "anchor warm-up learning rate")->check(CLI::PositiveNumber);
  s->add_option("--k", c.k, "chunk count")->check(CLI::Range(1, 255));
  s->add_option("--mode", c.mode, "partition mode")->check(CLI::IsMember({"count", "range"}));
  s->add_option("--batch", c.batch, "minibatch size")->check(CLI::PositiveNumber);
  s->add_option("--lr", c.lr, "learning rate, or auto for the arch default");
  s->add_option("--seed", c.seed, "seed");
  s->add_option("--threads", c.threads, "worker threads (1 = sequential reference mode)")
      ->check(CLI::PositiveNumber);
}

double resolve_lr(const std::string& s, Arch arch) {
  if (s == "auto") return default_lr(arch);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && v > 0.0) return v;
  } catch (const std::exception&) {
  }
  throw ShapeError("--lr expects a positive number or auto, got '" + s + "'");
}

struct Prepared {
  FrameSequence hr;
  PatchGrid grid;
  FrameSequence lr;
  PatchDataset ds;
  Partition part;
  PsnrReport profile;
};

Prepared prepare(const Common& c, RunManifest& man) {
  Prepared p;
  p.hr = load_frames(c.hr, pick_format(c.format, c.hr));
  man.set("digest.hr", hex64(digest(p.hr)));
  const Patch patch = parse_patch(c.patch);
  p.lr = make_lr_sequence(p.hr, c.scale);
  p.grid = make_grid(p.lr.width(), p.lr.height(), patch.w, patch.h, static_cast<std::size_t>(c.scale));
  p.ds = slice_into_patches(p.hr, p.lr, p.grid);
  std::cerr << "patches: " << p.ds.size() << " (" << p.grid.cols << "x" << p.grid.rows << " x "
            << p.ds.frames << " frames)\n";

  const ModelSpec anchor_spec = ModelSpec::espcn(c.scale);
  AnchorModel anchor = AnchorModel::bicubic();
  if (c.anchor == "warmup") {
    AnchorConfig ac;
    ac.warmup_epochs = c.warmup_epochs;
    ac.train.batch_size = c.batch;
    ac.train.lr = c.anchor_lr;
    ac.train.seed = c.seed;
    anchor = AnchorModel::pretrained(train_anchor(p.ds, anchor_spec, ac));
  }
  p.profile = profile_patches(anchor, p.ds, c.threads);
  p.part = partition_chunks(p.profile, c.k,
                            c.mode == "range" ? PartitionMode::EqualRange : PartitionMode::EqualCount);
  std::cerr << "anchor video PSNR: " << detail::fmt4(p.profile.video_psnr) << " dB\n";
  return p;
}

int run_synth(const CLI::App& sub, const SynthConfig& cfg, const std::string& out,
              const std::string& format) {
  RunManifest man = manifest_for(sub);
  const FrameSequence seq = synth_video(cfg);
  const FrameFormat f = format == "raw8" ? FrameFormat::Raw8 : FrameFormat::PpmDir;
  write_frames(seq, out, f);
  man.set("digest.out", hex64(digest(seq)));
  man.write(f == FrameFormat::PpmDir ? fs::path(out) / "manifest.txt" : fs::path(out + ".manifest"));
  std::cout << "wrote " << seq.count() << " frames to " << out << "\n";
  return 0;
}

int run_profile(const CLI::App& sub, const Common& c, const std::string& out, std::size_t stride) {
  RunManifest man = manifest_for(sub);
  Prepared p = prepare(c, man);
  write_assignment_csv(p.part.assignment, out + "_assignment.csv");
  write_report_csv(p.profile, out);
  std::size_t maps = 0;
  for (std::size_t t = 0; t < p.ds.frames; t += stride, ++maps) emit_heatmap(p.profile, t, out + "_heatmap");
  std::string th;
  for (double v : p.part.boundaries.thresholds) th += (th.empty() ? "" : ",") + fmt(v);
  man.set("thresholds", th);
  man.write(out + ".manifest");
  std::cout << "chunks:";
  for (auto s : p.part.assignment.sizes()) std::cout << ' ' << s;
  std::cout << "  heatmaps: " << maps << "\n";
  return 0;
}

struct EncodeOpts {
  std::string arch = "espcn", method = "stdo", rho = "linear", out;
  int f1 = 32, f2 = 16, feats = 16, blocks = 4;
  std::size_t epochs = 200, mu = 0;
};

int run_encode(const CLI::App& sub, const Common& c, const EncodeOpts& e) {
  RunManifest man = manifest_for(sub);
  const ModelSpec spec = e.arch == "wdsr" ? ModelSpec::wdsr(c.scale, e.feats, e.blocks)
                                          : ModelSpec::espcn(c.scale, e.f1, e.f2);
  spec.validate();
  TrainConfig tc;
  tc.epochs = e.epochs;
  tc.batch_size = c.batch;
  tc.lr = resolve_lr(c.lr, spec.arch);
  tc.seed = c.seed;
  man.set("lr", fmt(tc.lr));
  Prepared p = prepare(c, man);

  TrainedEnsemble ens;
  if (e.method == "jstdo") {
    const std::size_t mu = e.mu == 0 ? default_mu(p.ds.size()) : e.mu;
    man.set("mu", std::to_string(mu));
    ens = train_jstdo(p.ds, p.part.assignment, linear_schedule(c.k, mu), spec, tc);
  } else {
    ens = train_stdo(p.ds, p.part.assignment, spec, tc, c.threads);
  }
  const auto bytes = encode_stream(p.lr, p.grid, ens,
                                   {static_cast<std::uint32_t>(p.hr.width()),
                                    static_cast<std::uint32_t>(p.hr.height())});
  write_bytes(e.out, bytes);
  for (std::size_t m = 0; m < ens.logs.size(); ++m)
    write_training_log(ens.logs[m], e.out + ".train_" + std::to_string(m) + ".csv");
  const PsnrReport rep = evaluate(ens, p.ds, c.threads);
  man.set("models", std::to_string(ens.models.size()));
  man.set("parameters", std::to_string(ens.parameter_total()));
  man.set("steps", std::to_string(ens.total_steps));
  man.set("video_psnr", detail::fmt4(rep.video_psnr));
  man.set("digest.out", hex64(fnv1a64(bytes)));
  man.write(e.out + ".manifest");
  std::cout << "wrote " << e.out << " (" << bytes.size() << " bytes, " << ens.models.size()
            << " model(s), video PSNR " << detail::fmt4(rep.video_psnr) << " dB)\n";
  return 0;
}

int run_decode(const CLI::App& sub, const std::string& in, const std::string& out,
               std::size_t threads) {
  RunManifest man = manifest_for(sub);
  const auto bytes = read_bytes(in);
  man.set("digest.in", hex64(fnv1a64(bytes)));
  DecodeResult d = decode_stream(bytes, threads);
  write_frames(d.hr, out, FrameFormat::PpmDir);
  {
    std::ofstream csv(fs::path(out) / "timing.csv");
    if (!csv) throw IoError("cannot write timing.csv in " + out);
    csv << "frame,ms\n";
    for (std::size_t t = 0; t < d.timing.frame_ms.size(); ++t) csv << t << ',' << d.timing.frame_ms[t] << '\n';
    csv << "total," << d.timing.total_ms << '\n';
  }
  man.set("digest.out", hex64(digest(d.hr)));
  man.write(fs::path(out) / "manifest.txt");
  std::cout << "decoded " << d.hr.count() << " frames, " << detail::fmt4(d.timing.fps()) << " fps\n";
  return 0;
}

int run_eval(const CLI::App& sub, const std::string& in, const std::string& hr_path,
             const std::string& format, std::string out, std::size_t threads) {
  RunManifest man = manifest_for(sub);
  const auto bytes = read_bytes(in);
  const FrameSequence hr = load_frames(hr_path, pick_format(format, hr_path));
  man.set("digest.in", hex64(fnv1a64(bytes)));
  man.set("digest.hr", hex64(digest(hr)));
  const DecodeResult d = decode_stream(bytes, threads);
  const PsnrReport rep = evaluate_decoded(d.hr, hr, d.header.grid());
  if (out.empty()) out = in + ".eval";
  write_report_csv(rep, out);
  man.set("video_psnr", detail::fmt4(rep.video_psnr));
  man.write(out + ".manifest");
  std::cout << "video PSNR " << detail::fmt4(rep.video_psnr) << " dB\n";
  return 0;
}

int run_bench(const CLI::App& sub, const std::string& in, std::size_t repeats, std::size_t threads,
              std::string out) {
  RunManifest man = manifest_for(sub);
  const auto bytes = read_bytes(in);
  man.set("digest.in", hex64(fnv1a64(bytes)));
  const BenchReport b = bench_decode(bytes, repeats, threads);
  if (out.empty()) out = in + ".bench.csv";
  write_bench_csv(b, out);
  man.write(out + ".manifest");
  std::cout << "ms/frame " << detail::fmt4(b.ms_per_frame) << "  fps " << detail::fmt4(b.fps) << "  FLOPs/LR px "
            << b.flops_per_lr_pixel << "  GFLOPs/frame " << detail::fmt4(b.gflops_per_frame) << "\n";
  return 0;
}

// Appends "--key value" for manifest keys the subcommand knows and argv lacks.
std::vector<std::string> merge_manifest(const CLI::App& app, std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--manifest") path = args[i + 1];
  if (path.empty() || args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args.front());
  if (sub == nullptr) return args;
  const RunManifest m = RunManifest::read(path);
  if (const auto* cmd = m.get("command"); cmd && *cmd != args.front())
    throw ShapeError("manifest is for '" + *cmd + "', not '" + args.front() + "'");
  for (const auto& [key, value] : m.entries()) {
    const std::string flag = "--" + key;
    if (sub->get_option_no_throw(flag) == nullptr || key == "manifest") continue;
    bool given = false;
    for (const auto& a : args) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (!given) {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-temporal overfitted super-resolution streams"};
  app.set_help_flag("--help", "print help");
  app.set_version_flag("--version", STDO_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string manifest;

  SynthConfig synth;
  std::string synth_out, synth_motif = "noise", synth_format = "ppm";
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic test video");
  s_synth->add_option("--out", synth_out, "output directory (or file for raw8)")->required();
  s_synth->add_option("--w", synth.width, "width");
  s_synth->add_option("--h", synth.height, "height");
  s_synth->add_option("--t", synth.frames, "frame count");
  s_synth->add_option("--seed", synth.seed, "seed");
  s_synth->add_option("--motif", synth_motif, "texture motif")->check(CLI::IsMember({"noise", "stripes"}));
  s_synth->add_option("--format", synth_format, "output format")->check(CLI::IsMember({"ppm", "raw8"}));

  Common prof;
  std::string prof_out;
  std::size_t stride = 1;
  auto* s_profile = app.add_subcommand("profile", "profile patches and partition them into chunks");
  add_common(s_profile, prof);
  s_profile->add_option("--out", prof_out, "output prefix")->required();
  s_profile->add_option("--heatmap-stride", stride, "emit a heatmap every N frames")->check(CLI::PositiveNumber);

  Common enc;
  EncodeOpts eo;
  auto* s_encode = app.add_subcommand("encode", "train chunk models and write a .stdo stream");
  add_common(s_encode, enc);
  s_encode->add_option("--arch", eo.arch, "backbone")->check(CLI::IsMember({"espcn", "wdsr"}));
  s_encode->add_option("--f1", eo.f1, "EspcnLite first width")->check(CLI::Range(1, 65535));
  s_encode->add_option("--f2", eo.f2, "EspcnLite second width")->check(CLI::Range(1, 65535));
  s_encode->add_option("--feats", eo.feats, "WdsrLite width")->check(CLI::Range(1, 65535));
  s_encode->add_option("--blocks", eo.blocks, "WdsrLite residual blocks")->check(CLI::Range(0, 65535));
  s_encode->add_option("--method", eo.method, "stdo or jstdo")->check(CLI::IsMember({"stdo", "jstdo"}));
  s_encode->add_option("--epochs", eo.epochs, "epochs per model");
  s_encode->add_option("--mu", eo.mu, "JSTDO joint size, 0 = ceil(N/2)");
  s_encode->add_option("--rho", eo.rho, "JSTDO schedule")->check(CLI::IsMember({"linear"}));
  s_encode->add_option("--out", eo.out, "output .stdo file")->required();

  std::string dec_in, dec_out;
  std::size_t dec_threads = 1;
  auto* s_decode = app.add_subcommand("decode", "decode a .stdo stream to PPM frames");
  s_decode->add_option("--in", dec_in, "input stream")->required();
  s_decode->add_option("--out", dec_out, "output directory")->required();
  s_decode->add_option("--threads", dec_threads, "worker threads")->check(CLI::PositiveNumber);

  std::string ev_in, ev_hr, ev_format = "auto", ev_out;
  std::size_t ev_threads = 1;
  auto* s_eval = app.add_subcommand("eval", "PSNR of a decoded stream against HR frames");
  s_eval->add_option("--in", ev_in, "input stream")->required();
  s_eval->add_option("--hr", ev_hr, "HR reference frames")->required();
  s_eval->add_option("--format", ev_format, "frame format")->check(CLI::IsMember({"auto", "ppm", "raw8"}));
  s_eval->add_option("--out", ev_out, "report prefix (default <in>.eval)");
  s_eval->add_option("--threads", ev_threads, "worker threads")->check(CLI::PositiveNumber);

  std::string b_in, b_out;
  std::size_t repeats = 5, b_threads = 1;
  auto* s_bench = app.add_subcommand("bench", "decode throughput");
  s_bench->add_option("--in", b_in, "input stream")->required();
  s_bench->add_option("--repeats", repeats, "full decodes; the median is reported")->check(CLI::PositiveNumber);
  s_bench->add_option("--threads", b_threads, "worker threads")->check(CLI::PositiveNumber);
  s_bench->add_option("--out", b_out, "CSV path (default <in>.bench.csv)");

  for (auto* s : {s_synth, s_profile, s_encode, s_decode, s_eval, s_bench})
    s->add_option("--manifest", manifest, "fill unset options from a manifest");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_manifest(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  } catch (const Error& e) {
    std::cerr << "stdo: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  }

  try {
    if (*s_synth) {
      synth.motif = synth_motif == "stripes" ? Motif::Stripes : Motif::NoiseBlocks;
      return run_synth(*s_synth, synth, synth_out, synth_format);
    }
    if (*s_profile) return run_profile(*s_profile, prof, prof_out, stride);
    if (*s_encode) return run_encode(*s_encode, enc, eo);
    if (*s_decode) return run_decode(*s_decode, dec_in, dec_out, dec_threads);
    if (*s_eval) return run_eval(*s_eval, ev_in, ev_hr, ev_format, ev_out, ev_threads);
    if (*s_bench) return run_bench(*s_bench, b_in, repeats, b_threads, b_out);
  } catch (const Error& e) {
    std::cerr << "stdo: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "stdo: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Io);
  } catch (const std::exception& e) {
    std::cerr << "stdo: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Usage);
  }
  return static_cast<int>(ErrorKind::Usage);
}
