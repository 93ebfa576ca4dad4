#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "suites.hpp"

using namespace stdo;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = STDO_FIXTURE_DIR;

struct Golden {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

// Deterministic streams rebuilt from seeds; must match the committed files byte for byte.
std::vector<Golden> golden_streams() {
  SynthConfig c;
  c.width = 64;
  c.height = 64;
  c.frames = 2;
  c.seed = 3;
  const FrameSequence hr = synth_video(c);
  const FrameSequence lr = make_lr_sequence(hr, 2);
  const PatchGrid grid = make_grid(lr.width(), lr.height(), 16, 16, 2);
  const PatchDataset ds = slice_into_patches(hr, lr, grid);
  const ChunkAssignment a = partition_chunks(profile_patches(AnchorModel::bicubic(), ds), 2).assignment;

  TrainedEnsemble stdo{ModelSpec::espcn(2, 8, 4), EnsembleMode::Stdo, {}, a, {}, 0};
  stdo.models = {model_init(stdo.spec, 11), model_init(stdo.spec, 12)};
  TrainedEnsemble joint{ModelSpec::wdsr(2, 4, 1), EnsembleMode::Jstdo, {}, a, {}, 0};
  joint.models = {model_init(joint.spec, 13)};
  const EncodeInfo info{64, 64};
  return {{"golden_stdo_espcn.stdo", encode_stream(lr, grid, stdo, info)},
          {"golden_jstdo_wdsr.stdo", encode_stream(lr, grid, joint, info)}};
}

std::string decoded_digest(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = fnv1a64({});
  for (const auto& f : decode_stream(bytes).hr.frames) h = fnv1a64(f.rgb, h);
  return hex64(h);
}

std::map<std::string, std::string> read_digests() {
  std::map<std::string, std::string> out;
  std::ifstream in(kFixtures / "golden_decoded.txt");
  std::string name, digest;
  while (in >> name >> digest) out[name] = digest;
  return out;
}

// Writes the fixtures instead of checking them when STDO_REGEN_FIXTURES is set.
bool regen() { return std::getenv("STDO_REGEN_FIXTURES") != nullptr; }

StdoStream small_stream(std::uint8_t k, EnsembleMode mode) {
  StdoStream s;
  s.header.k = k;
  s.header.mode = mode;
  s.header.lr_w = 48;
  s.header.lr_h = 48;
  s.header.frames = 1;
  s.header.patch_w = 24;
  s.header.patch_h = 24;
  s.header.orig_w = 96;
  s.header.orig_h = 96;
  s.assignment.assign(4, 0);
  const std::size_t models = mode == EnsembleMode::Jstdo ? 1 : k;
  for (std::size_t m = 0; m < models; ++m) s.models.push_back(flatten_weights(model_init(s.header.spec(), m)));
  s.lr.frames.assign(1, Frame(48, 48));
  return s;
}

StreamErrc code_of(std::span<const std::uint8_t> b) {
  try {
    parse_stream(b);
  } catch (const StreamError& e) {
    return e.code();
  }
  ADD_FAILURE() << "stream was accepted";
  return StreamErrc::BadHeader;
}

}  // namespace

TEST(Stream, RandomRoundTrips) {
  const auto c = suite::codec_roundtrip_check(300, 17);
  EXPECT_TRUE(c.pass) << c.name << ": " << c.value << " failures";
}

TEST(Stream, MalformedClasses) {
  std::mt19937_64 g(8);
  for (const auto& m : suite::malformed_cases(g)) EXPECT_EQ(code_of(m.bytes), m.expect) << m.name;
  const auto c = suite::malformed_check();
  EXPECT_TRUE(c.pass) << c.name;
}

TEST(Stream, HeaderLayout) {
  StdoStream s = small_stream(1, EnsembleMode::Stdo);
  s.header.orig_w = 0x01020304;
  const auto b = serialize_stream(s);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "STDO");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[7], 2);
  EXPECT_EQ(b[10], 48);
  EXPECT_EQ(b[22], 24);
  EXPECT_EQ(b[26], 0x04);
  EXPECT_EQ(b[29], 0x01);
  EXPECT_EQ(b[34], 32);
  EXPECT_EQ(b[36], 16);
}

TEST(Stream, KOneAssignmentIsFourZeroBytes) {
  const StdoStream s = small_stream(1, EnsembleMode::Stdo);
  const auto b = serialize_stream(s);
  EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + kHeaderBytes, b.begin() + kHeaderBytes + 4),
            std::vector<std::uint8_t>(4, 0));
  EXPECT_EQ(b[kHeaderBytes + 4], 1);  // model count
  std::uint64_t count = 0;
  for (int i = 7; i >= 0; --i) count = count << 8 | b[kHeaderBytes + 5 + i];
  EXPECT_EQ(count, 8796u);
}

TEST(Stream, LengthFormula) {
  std::mt19937_64 g(23);
  for (int i = 0; i < 50; ++i) {
    const StdoStream s = suite::random_stream(g);
    std::size_t want = 38 + s.header.patch_count() + 1;
    for (const auto& m : s.models) want += 8 + 4 * m.size();
    want += 3ull * s.header.lr_w * s.header.lr_h * s.header.frames;
    EXPECT_EQ(serialize_stream(s).size(), want);
  }
}

TEST(Stream, SerializeRejectsInconsistentCounts) {
  StdoStream s = small_stream(2, EnsembleMode::Stdo);
  s.models.pop_back();
  EXPECT_THROW(serialize_stream(s), Error);
  StdoStream t = small_stream(1, EnsembleMode::Stdo);
  t.assignment.push_back(0);
  EXPECT_THROW(serialize_stream(t), Error);
}

TEST(Stream, BadMagicMessage) {
  auto b = serialize_stream(small_stream(1, EnsembleMode::Stdo));
  b[0] ^= 0xFF;
  try {
    parse_stream(b);
    FAIL();
  } catch (const StreamError& e) {
    EXPECT_NE(std::string(e.what()).find("not an STDO stream"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_stream(b), StreamError);
}

TEST(Stream, JstdoStillValidatesAssignment) {
  StdoStream s = small_stream(2, EnsembleMode::Jstdo);
  s.assignment = {0, 1, 1, 0};
  const auto good = serialize_stream(s);
  EXPECT_NO_THROW(parse_stream(good));
  auto bad = good;
  bad[kHeaderBytes + 2] = 2;
  EXPECT_EQ(code_of(bad), StreamErrc::BadAssignment);
}

TEST(Golden, StreamsMatchFixtures) {
  auto digests = read_digests();
  for (const auto& g : golden_streams()) {
    const fs::path p = kFixtures / g.name;
    if (regen()) {
      write_bytes(p, g.bytes);
      digests[g.name] = decoded_digest(g.bytes);
      continue;
    }
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_EQ(read_bytes(p), g.bytes) << g.name;
    EXPECT_EQ(decoded_digest(read_bytes(p)), digests[g.name]) << g.name;
  }
  if (regen()) {
    std::ofstream out(kFixtures / "golden_decoded.txt");
    for (const auto& [n, d] : digests) out << n << ' ' << d << '\n';
  }
}

TEST(Golden, FixtureHeaders) {
  const StdoStream a = parse_stream(read_bytes(kFixtures / "golden_stdo_espcn.stdo"));
  EXPECT_EQ(a.header.arch, Arch::EspcnLite);
  EXPECT_EQ(a.header.k, 2);
  EXPECT_EQ(a.header.mode, EnsembleMode::Stdo);
  EXPECT_EQ(a.header.lr_w, 32u);
  EXPECT_EQ(a.header.frames, 2u);
  EXPECT_EQ(a.assignment.size(), 8u);
  EXPECT_EQ(a.models.size(), 2u);
  EXPECT_EQ(a.models[0], flatten_weights(model_init(ModelSpec::espcn(2, 8, 4), 11)));
  const StdoStream b = parse_stream(read_bytes(kFixtures / "golden_jstdo_wdsr.stdo"));
  EXPECT_EQ(b.header.arch, Arch::WdsrLite);
  EXPECT_EQ(b.header.mode, EnsembleMode::Jstdo);
  EXPECT_EQ(b.header.width_a, 4);
  EXPECT_EQ(b.header.width_b, 1);
  EXPECT_EQ(b.models.size(), 1u);
}

TEST(Decode, MatchesEvaluate) {
  SynthConfig c;
  c.width = 96;
  c.height = 100;
  c.frames = 3;
  const FrameSequence hr = synth_video(c);
  const FrameSequence lr = make_lr_sequence(hr, 2);
  const PatchGrid grid = make_grid(lr.width(), lr.height(), 16, 16, 2);
  const PatchDataset ds = slice_into_patches(hr, lr, grid);
  const ChunkAssignment a = partition_chunks(profile_patches(AnchorModel::bicubic(), ds), 3).assignment;
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr = 1e-3;
  const TrainedEnsemble ens = train_stdo(ds, a, ModelSpec::espcn(2, 8, 4), tc);
  const auto bytes = encode_stream(lr, grid, ens, {96, 100});
  const DecodeResult d = decode_stream(bytes);
  EXPECT_EQ(d.hr.width(), 96u);
  EXPECT_EQ(d.hr.height(), 96u);
  EXPECT_EQ(d.header.orig_h, 100u);
  const PsnrReport dec = evaluate_decoded(d.hr, hr, grid);
  const PsnrReport ev = evaluate(ens, ds);
  EXPECT_NEAR(dec.video_psnr, ev.video_psnr, 1e-4);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NEAR(dec.patch_psnr[i], ev.patch_psnr[i], 1e-4);
  EXPECT_EQ(decode_stream(bytes, 4).hr, d.hr);
  EXPECT_EQ(d.timing.frame_ms.size(), 3u);
}

TEST(Decode, JstdoUsesSingleModel) {
  StdoStream s = small_stream(2, EnsembleMode::Jstdo);
  s.assignment = {0, 1, 1, 0};
  std::mt19937_64 g(2);
  for (auto& b : s.lr.frames[0].rgb) b = static_cast<std::uint8_t>(g());
  const auto d = decode_stream(serialize_stream(s));
  s.assignment = {0, 0, 0, 0};
  EXPECT_EQ(decode_stream(serialize_stream(s)).hr, d.hr);
}

TEST(Bench, ReportArithmetic) {
  const auto bytes = serialize_stream(small_stream(1, EnsembleMode::Stdo));
  const BenchReport b = bench_decode(bytes, 3);
  EXPECT_EQ(b.repeats, 3u);
  EXPECT_EQ(b.frames, 1u);
  EXPECT_NEAR(b.fps, 1000.0 / b.ms_per_frame, 1e-9);
  EXPECT_EQ(b.flops_per_lr_pixel, 2 * b.macs_per_lr_pixel);
  EXPECT_EQ(b.macs_per_lr_pixel, macs_per_lr_pixel(ModelSpec::espcn(2)));
  EXPECT_NEAR(b.gflops_per_frame, b.flops_per_lr_pixel * 48.0 * 48.0 / 1e9, 1e-12);
  EXPECT_THROW(bench_decode(bytes, 0), ShapeError);
  const auto p = fs::temp_directory_path() / "stdo_bench.csv";
  write_bench_csv(b, p);
  std::ifstream in(p);
  std::string head;
  std::getline(in, head);
  EXPECT_EQ(head.rfind("repeats,frames,ms_per_frame,fps", 0), 0u);
}

TEST(Bench, EspcnX4Flops) {
  // 5x5 3->32, 3x3 32->16, 3x3 16->48 per LR pixel.
  const std::size_t macs = 5 * 5 * 3 * 32 + 3 * 3 * 32 * 16 + 3 * 3 * 16 * 48;
  EXPECT_EQ(macs_per_lr_pixel(ModelSpec::espcn(4)), macs);
  EXPECT_EQ(macs, 13920u);
}
