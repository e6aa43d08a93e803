#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "sonardn/baselines.hpp"
#include "sonardn/metrics.hpp"
#include "sonardn/noise.hpp"
#include "sonardn/synthetic.hpp"
#include "test_util.hpp"

using namespace sonardn;

TEST(Baselines, MeanOfConstantIsConstant) {
  const ImageF img(20, 15, 1, 0.42);
  for (int k : {1, 3, 5}) {
    const ImageF out = mean_filter(img, k);
    for (double v : out.data()) EXPECT_NEAR(v, 0.42, 1e-15);
  }
}

TEST(Baselines, MedianRemovesSparseSalt) {
  ImageF img(64, 64, 1, 0.4);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pos(0, 64 * 64 - 1);
  for (int i = 0; i < 41; ++i) img.data()[pos(rng)] = 1.0;
  const ImageF out = median_filter(img, 3);
  int residual = 0;
  for (int y = 1; y < 63; ++y)
    for (int x = 1; x < 63; ++x) residual += out.at(x, y) != 0.4;
  EXPECT_EQ(residual, 0);
}

TEST(Baselines, ZeroIterationDiffusionIsIdentity) {
  const ImageF img = test::random_field(16, 12, 1);
  EXPECT_EQ(anisotropic_diffusion(img, 0, 0.1, 0.2).data(), img.data());
}

TEST(Baselines, DiffusionConservesMean) {
  const ImageF img = test::random_field(33, 27, 2, 0.2, 0.8);
  const ImageF out = anisotropic_diffusion(img, 25, 0.1, 0.25);
  EXPECT_NEAR(masked_mean(out), masked_mean(img), 1e-6);
  EXPECT_LT(tv(out), tv(img));
}

TEST(Baselines, EveryKindStaysInUnitRange) {
  const ImageF img = test::random_field(40, 36, 3);
  for (const auto& spec : default_baselines()) {
    const ImageF out = apply_baseline(img, spec);
    ASSERT_EQ(out.width(), 40);
    ASSERT_EQ(out.height(), 36);
    for (double v : out.data()) {
      EXPECT_GE(v, 0.0) << spec.to_string();
      EXPECT_LE(v, 1.0) << spec.to_string();
    }
  }
}

TEST(Baselines, GaussianKernelNormalized) {
  for (double s : {0.5, 1.0, 2.3, 7.0}) {
    const auto k = gaussian_kernel1d(s, static_cast<int>(std::ceil(3 * s)));
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Wavelet, PerfectReconstruction) {
  for (auto [w, h, levels] : {std::tuple{64, 64, 2}, {37, 29, 2}, {50, 41, 3}, {8, 8, 1}}) {
    const ImageF img = test::random_field(w, h, static_cast<std::uint64_t>(w * h));
    const ImageF back = wavelet::idwt2(wavelet::dwt2(img, levels));
    ASSERT_EQ(back.width(), w);
    ASSERT_EQ(back.height(), h);
    EXPECT_LE(test::max_abs_diff(back, img), 1e-9);
  }
}

TEST(Wavelet, VanishingMomentsOnRamp) {
  // Two vanishing moments: details of a linear ramp vanish away from the ends.
  std::vector<double> x(32);
  for (int i = 0; i < 32; ++i) x[i] = 0.1 + 0.02 * i;
  std::vector<double> lo, hi;
  wavelet::analyze(x.data(), 32, 1, lo, hi);
  ASSERT_EQ(hi.size(), 17u);
  for (std::size_t k = 2; k + 2 < hi.size(); ++k) EXPECT_NEAR(hi[k], 0.0, 1e-12);
  std::vector<double> c(20, 0.3);
  wavelet::analyze(c.data(), 20, 1, lo, hi);
  for (double d : hi) EXPECT_NEAR(d, 0.0, 1e-12);
}

TEST(Wavelet, ShrinkageDenoises) {
  const ImageF clean = make_piecewise_scene(96, 96, 4);
  const ImageF noisy = add_synthetic_noise(clean, NoiseSpec{0.08, 0, 0}, 5);
  EXPECT_GT(psnr(wavelet_denoise(noisy, 2), clean), psnr(noisy, clean) + 1.0);
  ImageF ident = wavelet_denoise(clean, 2, 0.0);
  EXPECT_LE(test::max_abs_diff(ident, clean), 1e-9);
}

TEST(Baselines, BilateralKeepsStep) {
  const ImageF step = test::vertical_step(30, 20, 15, 0.2, 0.8);
  const ImageF out = bilateral_filter(step, 3.0, 0.1);
  for (int y = 0; y < 20; ++y) {
    EXPECT_NEAR(out.at(14, y), 0.2, 1e-6);
    EXPECT_NEAR(out.at(15, y), 0.8, 1e-6);
  }
}

TEST(BaselineSpec, Parsing) {
  auto g = parse_baseline_spec("gaussian:sigma=2.5");
  EXPECT_EQ(g.kind, BaselineKind::Gaussian);
  EXPECT_DOUBLE_EQ(g.sigma, 2.5);
  auto m = parse_baseline_spec("median:k=5");
  EXPECT_EQ(m.window, 5);
  auto a = parse_baseline_spec("anisotropic:iterations=4,kappa=0.05,lambda=0.1");
  EXPECT_EQ(a.iterations, 4);
  EXPECT_DOUBLE_EQ(a.kappa, 0.05);
  EXPECT_EQ(parse_baseline_spec("wavelet").levels, 2);
  EXPECT_EQ(parse_baseline_spec(a.to_string()).to_string(), a.to_string());

  EXPECT_THROW(parse_baseline_spec("mean:k=4"), Error);
  EXPECT_THROW(parse_baseline_spec("blur"), Error);
  EXPECT_THROW(parse_baseline_spec("gaussian:sigma=abc"), Error);
  EXPECT_THROW(parse_baseline_spec("gaussian:width=3"), Error);
  EXPECT_THROW(parse_baseline_spec("anisotropic:lambda=0.3"), Error);
  EXPECT_THROW(parse_baseline_spec("gaussian:sigma=0"), Error);
}
