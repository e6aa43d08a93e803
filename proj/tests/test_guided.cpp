#include <gtest/gtest.h>

#include <algorithm>

#include "sonardn/guided.hpp"
#include "sonardn/metrics.hpp"
#include "sonardn/noise.hpp"
#include "test_util.hpp"

using namespace sonardn;

namespace {

// Direct oracle for a constant guide: every window contributes b_k = mean of p
// over the clipped window, and q_i averages b_k over the windows covering i.
ImageF cascaded_box_oracle(const ImageF& p, int r) {
  const int w = p.width(), h = p.height();
  ImageF b(w, h), q(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int yy = y - r; yy <= y + r; ++yy)
        for (int xx = x - r; xx <= x + r; ++xx)
          if (xx >= 0 && yy >= 0 && xx < w && yy < h) {
            s += p.at(xx, yy);
            ++n;
          }
      b.at(x, y) = s / n;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int yy = y - r; yy <= y + r; ++yy)
        for (int xx = x - r; xx <= x + r; ++xx)
          if (xx >= 0 && yy >= 0 && xx < w && yy < h) {
            s += b.at(xx, yy);
            ++n;
          }
      q.at(x, y) = s / n;
    }
  return q;
}

ImageF block_checker(int w, int h, int block) {
  ImageF img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = ((x / block + y / block) % 2) ? 0.8 : 0.2;
  return img;
}

}  // namespace

TEST(GuidedFilter, ZeroRadiusIsIdentity) {
  const ImageF p = test::random_field(13, 9, 1);
  const ImageF I = test::random_field(13, 9, 2);
  EXPECT_EQ(guided_filter(p, I, 0, 1e-4).data(), p.data());
}

TEST(GuidedFilter, ConstantGuideIsCascadedBoxMean) {
  const ImageF p = test::random_field(17, 12, 3);
  const ImageF I(17, 12, 1, 0.4);
  for (int r : {1, 2, 4}) EXPECT_LT(test::max_abs_diff(guided_filter(p, I, r, 1e-3), cascaded_box_oracle(p, r)), 1e-12);
}

TEST(GuidedFilter, SelfGuidedStepIsPreserved) {
  const ImageF step = test::vertical_step(40, 30, 20, 0.1, 0.9);
  const int r = 4;
  const ImageF q = guided_filter(step, step, r, 1e-4);
  double worst = 0.0;
  for (int y = r; y < 30 - r; ++y)
    for (int x = r; x < 40 - r; ++x) worst = std::max(worst, std::abs(q.at(x, y) - step.at(x, y)));
  EXPECT_LE(worst, 0.05);
}

TEST(GuidedFilter, LinearInInput) {
  const ImageF I = test::random_field(24, 20, 4);
  const ImageF p1 = test::random_field(24, 20, 5);
  const ImageF p2 = test::random_field(24, 20, 6);
  ImageF sum = p1;
  for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += p2.data()[i];
  const ImageF q1 = guided_filter(p1, I, 4, 1e-4), q2 = guided_filter(p2, I, 4, 1e-4);
  const ImageF qs = guided_filter(sum, I, 4, 1e-4);
  for (std::size_t i = 0; i < qs.data().size(); ++i) EXPECT_NEAR(qs.data()[i], q1.data()[i] + q2.data()[i], 1e-10);
}

TEST(GuidedFilter, OutputStaysNearInputRange) {
  const GuidedParams d;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ImageF p = test::random_field(32, 32, 100 + s);
    const ImageF I = test::random_field(32, 32, 200 + s);
    const auto [lo, hi] = masked_min_max(p);
    for (const auto& q : {guided_filter(p, I, d.radiusDetail, d.epsDetail), guided_filter(p, I, d.radiusMask, d.epsMask),
                          guided_filter(p, p, d.radiusDetail, d.epsDetail)}) {
      const auto [qlo, qhi] = masked_min_max(q);
      EXPECT_GE(qlo, lo - 0.01);
      EXPECT_LE(qhi, hi + 0.01);
    }
  }
}

TEST(GuidedFilter, InvalidPixelsDoNotLeak) {
  ImageF p = test::random_field(20, 16, 7);
  ImageF I = test::random_field(20, 16, 8);
  std::vector<std::uint8_t> m(p.pixel_count(), 1);
  for (int x = 5; x < 12; ++x) m[6 * 20 + x] = 0;
  p.set_mask(m);
  I.set_mask(m);
  const ImageF q1 = guided_filter(p, I, 3, 1e-3);
  ImageF p2 = p;
  for (int x = 5; x < 12; ++x) p2.at(x, 6) = 123.0;
  const ImageF q2 = guided_filter(p2, I, 3, 1e-3);
  for (std::size_t i = 0; i < q1.pixel_count(); ++i) {
    if (m[i]) {
      EXPECT_EQ(q1.data()[i], q2.data()[i]);
    }
  }
  ASSERT_TRUE(q1.has_mask());
  EXPECT_EQ(*q1.mask(), m);
}

TEST(GuidedFilter, RejectsBadArguments) {
  EXPECT_THROW(guided_filter(ImageF(4, 4), ImageF(5, 4), 1, 1e-3), Error);
  EXPECT_THROW(guided_filter(ImageF(4, 4), ImageF(4, 4), -1, 1e-3), Error);
  EXPECT_THROW(guided_filter(ImageF(4, 4), ImageF(4, 4), 1, 0.0), Error);
}

TEST(Refine, FlatGuideReturnsGuide) {
  const ImageF I(30, 20, 1, 0.35);
  const ImageF p = test::random_field(30, 20, 9);
  EXPECT_EQ(refine(p, I).data(), I.data());
}

TEST(Refine, FullSaliencyReturnsGuidedDetail) {
  const ImageF I = block_checker(33, 33, 2);
  const auto sal = gradient_saliency(I);
  ASSERT_TRUE(std::all_of(sal.mask.begin(), sal.mask.end(), [](auto v) { return v == 1; }));
  const ImageF p = test::random_field(33, 33, 10, 0.2, 0.8);
  const GuidedParams gp;
  ImageF expect = guided_filter(p, I, gp.radiusDetail, gp.epsDetail);
  expect.clamp01();
  EXPECT_EQ(refine(p, I, gp).data(), expect.data());
}

TEST(Refine, AlphaInUnitRangeAndMaskPassthrough) {
  ImageF I = gaussian_blur(test::vertical_step(48, 32, 24), 2.0);
  ImageF p = add_synthetic_noise(test::vertical_step(48, 32, 24), NoiseSpec{0.05, 0, 0}, 3);
  std::vector<std::uint8_t> m(p.pixel_count(), 1);
  for (int x = 0; x < 48; ++x) m[x] = 0;
  p.set_mask(m);
  I.set_mask(m);
  const auto res = refine_detailed(p, I, {});
  for (double a : res.alpha.data()) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
  ASSERT_TRUE(res.output.has_mask());
  EXPECT_EQ(*res.output.mask(), m);
}

TEST(Refine, SelfRefineBoundedBySelfFilter) {
  const ImageF I = gaussian_blur(test::random_field(40, 40, 11), 1.5);
  const GuidedParams gp;
  const ImageF q = refine(I, I, gp);
  const ImageF g = guided_filter(I, I, gp.radiusDetail, gp.epsDetail);
  for (std::size_t i = 0; i < q.pixel_count(); ++i)
    EXPECT_LE(std::abs(q.data()[i] - I.data()[i]), std::abs(g.data()[i] - I.data()[i]) + 1e-15);
}

TEST(Refine, RecoversEdgesOfOverSmoothedStep) {
  const ImageF clean = test::vertical_step(64, 48, 32, 0.2, 0.8);
  const ImageF raw = add_synthetic_noise(clean, NoiseSpec{0.02, 0, 0}, 12);
  const ImageF stage1 = gaussian_blur(raw, 2.0);
  const ImageF q = refine(raw, stage1);
  EXPECT_GT(epi(q, clean), epi(stage1, clean));
}

TEST(Refine, DimensionMismatch) {
  EXPECT_THROW(refine(ImageF(8, 8), ImageF(8, 9)), Error);
}
