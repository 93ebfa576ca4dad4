#include <gtest/gtest.h>

#include <numeric>

#include "suites.hpp"

using namespace stdo;

namespace {

std::vector<float> vals(const Tensor4& t) { return {t.data(), t.data() + t.size()}; }

// Largest elementwise |a - n| / max(|a|, |n|) over the sampled entries.
double worst_rel(const std::vector<double>& a, const std::vector<double>& n) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::max(std::fabs(a[i]), std::fabs(n[i]));
    if (den > 0) w = std::max(w, std::fabs(a[i] - n[i]) / den);
  }
  return w;
}

}  // namespace

TEST(Tensor4, ShapeAndStorage) {
  Tensor4 t(2, 3, 4, 5, 1.5f);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.shape(), (Shape4{2, 3, 4, 5}));
  t.at(1, 2, 3, 4) = 7.0f;
  EXPECT_EQ(t.data()[t.size() - 1], 7.0f);
  EXPECT_THROW(Tensor4(Shape4{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 g(1);
  const Tensor4 x = oracle::random_tensor(g, {2, 3, 4, 5});
  Tensor4 w({3, 3, 1, 1}, 0.0f);
  for (std::size_t c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0f;
  const Tensor4 y = conv2d_forward(x, w, std::vector<float>(3, 0.0f), 0);
  EXPECT_EQ(vals(y), vals(x));
}

TEST(Conv2d, OnesKernelCountsTaps) {
  const Tensor4 x({1, 1, 5, 5}, 1.0f);
  const Tensor4 w({1, 1, 3, 3}, 1.0f);
  const Tensor4 y = conv2d_forward(x, w, std::vector<float>{0.0f}, 1);
  EXPECT_FLOAT_EQ(y.at(0, 0, 2, 2), 9.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 4, 4), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 2), 6.0f);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  std::mt19937_64 g(42);
  const Tensor4 x = oracle::random_tensor(g, {1, 2, 5, 5});
  const Tensor4 w = oracle::random_tensor(g, {3, 2, 3, 3});
  const std::vector<float> b{0.25f, -0.5f, 0.125f};
  const Tensor4 y = conv2d_forward(x, w, b, 1);
  const auto ref = oracle::conv(x, w, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-5);
}

TEST(Conv2d, HundredRandomCasesMatchOracle) {
  std::mt19937_64 g(7);
  const auto c = suite::conv_oracle_check(g, 100);
  EXPECT_TRUE(c.pass) << c.value;
}

TEST(Conv2d, KernelWiderThanImage) {
  std::mt19937_64 g(3);
  const Tensor4 x = oracle::random_tensor(g, {1, 2, 1, 2});
  const Tensor4 w = oracle::random_tensor(g, {2, 2, 5, 5});
  const std::vector<float> b{0.0f, 0.0f};
  const Tensor4 y = conv2d_forward(x, w, b, 2);
  const auto ref = oracle::conv(x, w, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-5);
}

TEST(Conv2d, Errors) {
  const Tensor4 x({1, 2, 4, 4}, 0.5f);
  EXPECT_THROW(conv2d_forward(x, Tensor4(Shape4{1, 3, 3, 3}), std::vector<float>{0}, 1), ShapeError);
  EXPECT_THROW(conv2d_forward(x, Tensor4(Shape4{1, 2, 2, 2}), std::vector<float>{0}, 0), ShapeError);
  EXPECT_THROW(conv2d_forward(x, Tensor4(Shape4{1, 2, 3, 3}), std::vector<float>{0}, 0), ShapeError);
  EXPECT_THROW(conv2d_forward(x, Tensor4(Shape4{1, 2, 3, 3}), std::vector<float>{0, 0}, 1), ShapeError);
  Tensor4 bad = x;
  bad.at(0, 1, 2, 2) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(conv2d_forward(bad, Tensor4(Shape4{1, 2, 3, 3}), std::vector<float>{0}, 1), NumericError);
}

TEST(Conv2dBackward, ZeroCotangent) {
  std::mt19937_64 g(2);
  const Tensor4 x = oracle::random_tensor(g, {2, 3, 4, 4});
  const Tensor4 w = oracle::random_tensor(g, {2, 3, 3, 3});
  const ConvGrads gr = conv2d_backward(x, w, Tensor4(Shape4{2, 2, 4, 4}), 1);
  for (float v : vals(gr.input)) EXPECT_EQ(v, 0.0f);
  for (float v : vals(gr.weight)) EXPECT_EQ(v, 0.0f);
  for (float v : gr.bias) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dBackward, IdentityKernelPassesGradient) {
  std::mt19937_64 g(4);
  const Tensor4 x = oracle::random_tensor(g, {1, 1, 3, 4});
  const Tensor4 go = oracle::random_tensor(g, {1, 1, 3, 4});
  const ConvGrads gr = conv2d_backward(x, Tensor4({1, 1, 1, 1}, 1.0f), go, 0);
  EXPECT_EQ(vals(gr.input), vals(go));
  double s = 0;
  for (float v : vals(go)) s += v;
  EXPECT_NEAR(gr.bias[0], s, 1e-5);
}

TEST(Conv2dBackward, FiniteDifferencesElementwise) {
  std::mt19937_64 g(11);
  const Tensor4 x0 = oracle::random_tensor(g, {2, 3, 5, 4});
  Tensor4 w = oracle::random_tensor(g, {4, 3, 3, 3});
  std::vector<float> b{0.1f, 0.2f, -0.3f, 0.4f};
  const Tensor4 probe = oracle::random_tensor(g, {2, 4, 5, 4});
  Tensor4 x = x0;
  const ConvGrads an = conv2d_backward(x, w, probe, 1);
  // Differentiate the double-precision oracle; conv2d_forward is matched to it separately.
  auto f = [&] {
    const auto y = oracle::conv(x, w, b);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe.data()[i];
    return s;
  };
  std::vector<std::size_t> all_x(x.size()), all_w(w.size());
  std::iota(all_x.begin(), all_x.end(), 0);
  std::iota(all_w.begin(), all_w.end(), 0);
  auto check = [&](const float* grad, float* data, const std::vector<std::size_t>& idx) {
    const auto num = oracle::numeric_grad(data, idx, f, 1e-3);
    std::vector<double> a;
    for (auto i : idx) a.push_back(grad[i]);
    return worst_rel(a, num);
  };
  EXPECT_LT(check(an.input.data(), x.data(), all_x), 1e-3);
  EXPECT_LT(check(an.weight.data(), w.data(), all_w), 1e-3);
  EXPECT_LT(check(an.bias.data(), b.data(), {0, 1, 2, 3}), 1e-3);
}

TEST(Relu, Examples) {
  const Tensor4 x({1, 1, 1, 3}, std::vector<float>{-1, 0, 2});
  EXPECT_EQ(vals(relu_forward(x)), (std::vector<float>{0, 0, 2}));
  const Tensor4 neg({1, 2, 2, 2}, -0.5f);
  for (float v : vals(relu_forward(neg))) EXPECT_EQ(v, 0.0f);
  for (float v : vals(relu_backward(neg, Tensor4(neg.shape(), 1.0f)))) EXPECT_EQ(v, 0.0f);
  // Gradient is zero at exactly 0.
  EXPECT_EQ(vals(relu_backward(x, Tensor4(x.shape(), 1.0f))), (std::vector<float>{0, 0, 1}));
}

TEST(Relu, FiniteDifferences) {
  std::mt19937_64 g(5);
  const auto c = suite::relu_grad_check(g);
  EXPECT_TRUE(c.pass) << c.value;
}

TEST(PixelShuffle, Definition) {
  const Tensor4 x({1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  const Tensor4 y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.shape(), (Shape4{1, 1, 2, 2}));
  EXPECT_EQ(vals(y), (std::vector<float>{1, 2, 3, 4}));
}

TEST(PixelShuffle, GeneralIndexLaw) {
  std::mt19937_64 g(6);
  const std::size_t r = 3;
  const Tensor4 x = oracle::random_tensor(g, {2, 2 * r * r, 2, 3});
  const Tensor4 y = pixel_shuffle(x, r);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t yy = 0; yy < 2; ++yy)
        for (std::size_t xx = 0; xx < 3; ++xx)
          for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = 0; b < r; ++b)
              ASSERT_EQ(y.at(n, k, r * yy + a, r * xx + b), x.at(n, k * r * r + a * r + b, yy, xx));
}

TEST(PixelShuffle, IdentityAndBijection) {
  std::mt19937_64 g(8);
  const Tensor4 x = oracle::random_tensor(g, {2, 12, 3, 5});
  EXPECT_EQ(vals(pixel_shuffle(x, 1)), vals(x));
  EXPECT_EQ(vals(pixel_unshuffle(pixel_shuffle(x, 2), 2)), vals(x));
  EXPECT_THROW(pixel_shuffle(oracle::random_tensor(g, {1, 5, 2, 2}), 2), ShapeError);
}

TEST(PixelShuffle, FiniteDifferences) {
  std::mt19937_64 g(9);
  const auto c = suite::shuffle_grad_check(g);
  EXPECT_TRUE(c.pass) << c.value;
}

TEST(L1Loss, Examples) {
  const Tensor4 a({1, 1, 1, 2}, std::vector<float>{1, 3});
  const LossResult same = l1_loss(a, a);
  EXPECT_EQ(same.loss, 0.0);
  for (float v : vals(same.grad)) EXPECT_EQ(v, 0.0f);
  const LossResult r = l1_loss(a, Tensor4({1, 1, 1, 2}, 0.0f));
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_EQ(vals(r.grad), (std::vector<float>{0.5f, 0.5f}));
  EXPECT_THROW(l1_loss(a, Tensor4(Shape4{1, 1, 2, 1})), ShapeError);
}

TEST(L1Loss, FiniteDifferences) {
  std::mt19937_64 g(10);
  const auto c = suite::l1_grad_check(g);
  EXPECT_TRUE(c.pass) << c.value;
}

TEST(Adam, ZeroGradientIsNoOp) {
  Parameter p(Tensor4({1, 2, 2, 2}, 0.75f));
  adam_step(p, AdamConfig{});
  for (float v : vals(p.value)) EXPECT_EQ(v, 0.75f);
  EXPECT_EQ(p.step_count, 1u);
}

TEST(Adam, FirstStepIsSignTimesLr) {
  Parameter p(Tensor4({1, 1, 1, 3}, std::vector<float>{0, 0, 0}));
  p.grad = Tensor4({1, 1, 1, 3}, std::vector<float>{0.3f, -2.0f, 1e-3f});
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(p, cfg);
  EXPECT_NEAR(p.value.data()[0], -0.01, 1e-7);
  EXPECT_NEAR(p.value.data()[1], 0.01, 1e-7);
  EXPECT_NEAR(p.value.data()[2], -0.01, 1e-6);
  for (float v : vals(p.grad)) EXPECT_EQ(v, 0.0f);
}

TEST(Adam, FiveStepReferenceTrajectory) {
  const auto c = suite::adam_trajectory_check();
  EXPECT_TRUE(c.pass) << c.value;
}

TEST(Adam, RandomGradientsTrackReference) {
  std::mt19937_64 g(12);
  std::normal_distribution<double> d(0.0, 1.0);
  Parameter p(Tensor4({1, 1, 1, 1}, 0.25f));
  AdamConfig cfg;
  cfg.lr = 1e-3;
  oracle::AdamState ref{0.25};
  for (int s = 0; s < 50; ++s) {
    const float gr = static_cast<float>(d(g));
    p.grad.data()[0] = gr;
    adam_step(p, cfg);
    oracle::adam(ref, gr, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    ASSERT_NEAR(p.value.data()[0], ref.value, 1e-6) << "step " << s;
  }
}

TEST(Adam, RejectsNonFiniteGradient) {
  Parameter p(Tensor4({1, 1, 1, 1}, 0.0f));
  p.grad.data()[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(adam_step(p, AdamConfig{}), NumericError);
}

TEST(Model, ParameterCounts) {
  // (3*32*25 + 32) + (32*16*9 + 16) + (16*12*9 + 12)
  EXPECT_EQ(parameter_count(ModelSpec::espcn(2)), 2432u + 4624u + 1740u);
  EXPECT_EQ(parameter_count(ModelSpec::espcn(2)), 8796u);
  // head + 4 blocks of (F->2F, 2F->F) + tail + 5x5 skip, F = 16, r = 2
  const std::size_t wdsr = (3 * 16 * 9 + 16) + 4 * ((16 * 32 * 9 + 32) + (32 * 16 * 9 + 16)) +
                           (16 * 12 * 9 + 12) + (3 * 12 * 25 + 12);
  EXPECT_EQ(parameter_count(ModelSpec::wdsr(2)), wdsr);
  EXPECT_EQ(model_init(ModelSpec::espcn(2), 0).value_count(), 8796u);
}

TEST(Model, InitDeterministicAndBounded) {
  const ModelSpec spec = ModelSpec::wdsr(3);
  const auto a = flatten_weights(model_init(spec, 17));
  const auto b = flatten_weights(model_init(spec, 17));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, flatten_weights(model_init(spec, 18)));
  const ModelWeights m = model_init(spec, 17);
  const auto layers = conv_layers(spec);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layers[l].cin * layers[l].k * layers[l].k));
    for (float v : vals(m.weight(l).value)) {
      EXPECT_GT(v, -bound);
      EXPECT_LT(v, bound);
    }
    for (float v : vals(m.bias(l).value)) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Model, ZeroWeightsGiveZeroOutput) {
  ModelWeights m = model_init(ModelSpec::espcn(2), 1);
  for (auto& p : m.params) p.value.fill(0.0f);
  std::mt19937_64 g(1);
  const Tensor4 y = model_forward(m, oracle::random_tensor(g, {1, 3, 6, 6}, 0, 1));
  for (float v : vals(y)) EXPECT_EQ(v, 0.0f);
}

TEST(Model, ShapeLaw) {
  std::mt19937_64 g(1);
  const Tensor4 x = oracle::random_tensor(g, {2, 3, 24, 24}, 0, 1);
  EXPECT_EQ(model_forward(model_init(ModelSpec::espcn(3), 1), x).shape(), (Shape4{2, 3, 72, 72}));
  EXPECT_EQ(model_forward(model_init(ModelSpec::wdsr(4, 8, 1), 1), x).shape(), (Shape4{2, 3, 96, 96}));
}

TEST(Model, SpecWeightsMismatch) {
  ModelWeights m = model_init(ModelSpec::espcn(2), 1);
  m.spec = ModelSpec::espcn(3);
  std::mt19937_64 g(1);
  EXPECT_THROW(model_forward(m, oracle::random_tensor(g, {1, 3, 4, 4}, 0, 1)), ShapeError);
  EXPECT_THROW(unflatten_weights(ModelSpec::espcn(2), std::vector<float>(10)), ShapeError);
}

TEST(Model, EndToEndGradients) {
  std::mt19937_64 g(13);
  for (const ModelSpec& spec : {ModelSpec::espcn(2, 6, 5), ModelSpec::espcn(4, 4, 3), ModelSpec::wdsr(2, 6, 2),
                                ModelSpec::wdsr(3, 4, 0)}) {
    const auto c = suite::model_grad_check(g, spec);
    EXPECT_TRUE(c.pass) << c.name << " " << c.value;
  }
}

TEST(Model, FlattenRoundTrip) {
  const ModelWeights m = model_init(ModelSpec::wdsr(2), 3);
  const auto flat = flatten_weights(m);
  EXPECT_EQ(flatten_weights(unflatten_weights(m.spec, flat)), flat);
}

TEST(Model, MacsPerPixel) {
  EXPECT_EQ(macs_per_lr_pixel(ModelSpec::espcn(4)), 3u * 32 * 25 + 32 * 16 * 9 + 16 * 48 * 9);
  EXPECT_EQ(macs_per_lr_pixel(ModelSpec::espcn(2)), 3u * 32 * 25 + 32 * 16 * 9 + 16 * 12 * 9);
}
