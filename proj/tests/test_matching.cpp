#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "sonardn/matching.hpp"
#include "sonardn/noise.hpp"
#include "sonardn/synthetic.hpp"
#include "test_util.hpp"

using namespace sonardn;

namespace {

ImageF blob(int w, int h, double cx, double cy, double sigma) {
  ImageF img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = 0.2 + 0.6 * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma));
  return img;
}

Descriptor unit(int hot) {
  Descriptor d{};
  d[hot] = 1.0;
  return d;
}

double cosine(const Descriptor& a, const Descriptor& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST(TranslatedPair, ShiftSemantics) {
  const ImageF img = test::random_field(100, 100, 1);
  const auto p = translated_pair_with_shift(img, 5, 0);
  ASSERT_EQ(p.imgA.width(), 95);
  ASSERT_EQ(p.imgA.height(), 100);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x + 5 < 95; ++x) ASSERT_EQ(p.imgB.at(x, y), p.imgA.at(x + 5, y));
  EXPECT_EQ(p.tx, -5);
  EXPECT_EQ(p.ty, 0);

  const auto n = translated_pair_with_shift(img, -3, 4);
  for (int y = 0; y + 4 < n.imgA.height(); ++y)
    for (int x = 3; x < n.imgA.width(); ++x) ASSERT_EQ(n.imgB.at(x, y), n.imgA.at(x - 3, y + 4));

  const auto z = translated_pair_with_shift(img, 0, 0);
  EXPECT_EQ(z.imgA.data(), z.imgB.data());
}

TEST(TranslatedPair, SeededAndBounded) {
  const ImageF img = test::random_field(64, 64, 2);
  const auto a = gen_translated_pair(img, 10, 7), b = gen_translated_pair(img, 10, 7);
  EXPECT_EQ(a.tx, b.tx);
  EXPECT_EQ(a.ty, b.ty);
  EXPECT_EQ(a.imgB.data(), b.imgB.data());
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto p = gen_translated_pair(img, 10, s);
    EXPECT_LE(std::abs(p.tx), 10);
    EXPECT_LE(std::abs(p.ty), 10);
    EXPECT_EQ(p.imgA.width(), 64 - std::abs(p.tx));
  }
  EXPECT_THROW(gen_translated_pair(img, 16, 1), Error);
}

TEST(TranslatedPair, MaskShiftsWithImage) {
  ImageF img = test::random_field(80, 60, 3);
  img.set_mask(make_fan_mask(80, 60));
  const auto p = translated_pair_with_shift(img, 6, -2);
  ASSERT_TRUE(p.imgA.has_mask() && p.imgB.has_mask());
  for (int y = 2; y < p.imgA.height(); ++y)
    for (int x = 0; x + 6 < p.imgA.width(); ++x) ASSERT_EQ(p.imgB.valid(x, y), p.imgA.valid(x + 6, y - 2));
}

TEST(Detect, ConstantImageHasNoKeypoints) {
  EXPECT_TRUE(detect(ImageF(64, 64, 1, 0.5)).empty());
  EXPECT_THROW(detect(ImageF(31, 64)), Error);
}

TEST(Detect, LocalizesBlob) {
  const double cx = 40.3, cy = 37.6;
  const auto kps = detect(blob(80, 80, cx, cy, 4.0));
  ASSERT_FALSE(kps.empty());
  double best = INFINITY;
  for (const auto& k : kps) {
    best = std::min(best, std::hypot(k.x - cx, k.y - cy));
    EXPECT_GT(k.scale, 0.0);
  }
  EXPECT_LE(best, 2.0);
}

TEST(Detect, RespectsMask) {
  ImageF img = blob(80, 80, 40, 40, 4.0);
  std::vector<std::uint8_t> m(img.pixel_count(), 1);
  for (int y = 30; y < 50; ++y)
    for (int x = 30; x < 50; ++x) m[y * 80 + x] = 0;
  img.set_mask(m);
  for (const auto& k : detect(img)) EXPECT_TRUE(img.valid(static_cast<int>(std::lround(k.x)), static_cast<int>(std::lround(k.y))));
}

TEST(Detect, TranslationCovariant) {
  const ImageF scene = make_cluttered_scene(160, 160, 11);
  const int sx = 8, sy = -4;
  const auto p = translated_pair_with_shift(scene, sx, sy);
  const auto ka = detect(p.imgA), kb = detect(p.imgB);
  ASSERT_GT(ka.size(), 5u);
  const double margin = 24.0;
  int checked = 0;
  for (const auto& a : ka) {
    const double bx = a.x + p.tx, by = a.y + p.ty;
    if (bx < margin || by < margin || bx > p.imgB.width() - margin || by > p.imgB.height() - margin) continue;
    if (a.x < margin || a.y < margin || a.x > p.imgA.width() - margin || a.y > p.imgA.height() - margin) continue;
    double best = INFINITY;
    for (const auto& b : kb) best = std::min(best, std::hypot(b.x - bx, b.y - by));
    EXPECT_LE(best, 1.0) << a.x << "," << a.y;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Describe, NormalizedAndDeterministic) {
  const ImageF img = make_cluttered_scene(128, 128, 4);
  const auto kps = detect(img);
  const auto a = describe(img, kps), b = describe(img, kps);
  ASSERT_FALSE(a.descriptors.empty());
  EXPECT_EQ(a.keypoints.size() + a.dropped, kps.size());
  for (std::size_t i = 0; i < a.descriptors.size(); ++i) {
    EXPECT_NEAR(std::sqrt(cosine(a.descriptors[i], a.descriptors[i])), 1.0, 1e-6);
    EXPECT_EQ(a.descriptors[i], b.descriptors[i]);
    for (double v : a.descriptors[i]) EXPECT_GE(v, 0.0);
  }
}

TEST(Describe, DropsWindowsLeavingImage) {
  const ImageF img = gaussian_blur(make_piecewise_scene(64, 64, 5), 1.0);
  Keypoint k;
  k.x = 1.0;
  k.y = 1.0;
  k.layer = 1;
  k.scale = 2.0;
  const auto r = describe(img, std::vector<Keypoint>{k});
  EXPECT_TRUE(r.descriptors.empty());
  EXPECT_EQ(r.dropped, 1u);
}

TEST(Describe, QuarterTurnInvariance) {
  // W - 1 divisible by 4 keeps the decimation grid aligned after rotation.
  const int n = 97;
  const ImageF img = make_cluttered_scene(n, n, 6);
  const ImageF rot = rotate90(img);
  const auto kps = detect(img);
  std::vector<Keypoint> mapped;
  for (auto k : kps) {
    const double x = k.x;
    k.x = k.y;
    k.y = (n - 1) - x;
    mapped.push_back(k);
  }
  const auto a = describe(img, kps), b = describe(rot, mapped);
  ASSERT_EQ(a.keypoints.size(), b.keypoints.size());
  ASSERT_FALSE(a.keypoints.empty());
  for (std::size_t i = 0; i < a.descriptors.size(); ++i) EXPECT_GE(cosine(a.descriptors[i], b.descriptors[i]), 0.9);
}

TEST(Match, IdentitySets) {
  std::vector<Descriptor> d;
  for (int i = 0; i < 10; ++i) d.push_back(unit(i * 7));
  const auto m = match(d, d);
  ASSERT_EQ(m.size(), d.size());
  for (const auto& mm : m) EXPECT_EQ(mm.query, mm.train);
}

TEST(Match, EmptyAndTooFew) {
  std::vector<Descriptor> d{unit(0), unit(1), unit(2)};
  EXPECT_TRUE(match(d, {}).empty());
  EXPECT_TRUE(match(d, std::vector<Descriptor>{unit(0)}).empty());
}

TEST(Match, AmbiguousQueryRejected) {
  const std::vector<Descriptor> d1{unit(0), unit(5)};
  const std::vector<Descriptor> d2{unit(0), unit(0), unit(5), unit(9)};
  const auto m = match(d1, d2);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].query, 1);
  EXPECT_EQ(m[0].train, 2);
}

TEST(Match, MutualBestOnly) {
  // Query 0 and 1 both prefer train 0; only the closer one survives.
  Descriptor a = unit(0), b = unit(0), t0 = unit(0), t1 = unit(100);
  b[1] = 0.3;
  const std::vector<Descriptor> d1{a, b}, d2{t0, t1};
  const auto m = match(d1, d2);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].query, 0);
}

TEST(Evaluate, ScoreArithmetic) {
  MatchEval e;
  e.keypoints1 = 10;
  e.keypoints2 = 8;
  e.putative = 6;
  e.correct = 3;
  fill_scores(e);
  EXPECT_EQ(e.recall, 0.3);
  EXPECT_EQ(e.precision, 0.5);
  EXPECT_FALSE(e.recallDegenerate || e.precisionDegenerate);
}

TEST(Evaluate, IdenticalPairIsPrecise) {
  const ImageF img = gaussian_blur(make_piecewise_scene(128, 128, 8), 1.0);
  const auto e = evaluate_pair(img, img, 0, 0, {});
  ASSERT_GT(e.putative, 0u);
  EXPECT_EQ(e.precision, 1.0);
  EXPECT_LE(e.correct, e.putative);
  EXPECT_LE(e.putative, std::min(e.keypoints1, e.keypoints2));
}

TEST(Evaluate, BlankPairIsDegenerate) {
  const ImageF img(64, 64, 1, 0.3);
  const auto e = evaluate_pair(img, img, 0, 0, {});
  EXPECT_EQ(e.keypoints1, 0u);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_TRUE(e.recallDegenerate);
  EXPECT_TRUE(e.precisionDegenerate);
}

TEST(Evaluate, TranslatedPairMatches) {
  const ImageF scene = make_cluttered_scene(192, 192, 9);
  const auto p = gen_translated_pair(scene, 12, 3);
  const auto e = evaluate_pair(p.imgA, p.imgB, p.tx, p.ty, {});
  EXPECT_GT(e.correct, 0u);
  EXPECT_GE(e.precision, 0.9);
  MatchParams conv;
  conv.recallMode = RecallMode::Correspondences;
  const auto c = evaluate_pair(p.imgA, p.imgB, p.tx, p.ty, conv);
  EXPECT_GE(c.recall, e.recall);
  EXPECT_LE(c.recall, 1.0);
}

TEST(Evaluate, SetRowsAndMeans) {
  const ImageF scene = make_cluttered_scene(128, 128, 10);
  std::vector<TranslatedPair> same(5, gen_translated_pair(scene, 8, 1));
  const auto r = evaluate_set(same, {}, 2);
  ASSERT_EQ(r.rows.size(), 5u);
  for (const auto& e : r.rows) {
    EXPECT_EQ(e.precision, r.rows[0].precision);
    EXPECT_EQ(e.recall, r.rows[0].recall);
    EXPECT_EQ(e.correct, r.rows[0].correct);
  }
  std::vector<TranslatedPair> mixed;
  for (std::uint64_t s = 0; s < 5; ++s) mixed.push_back(gen_translated_pair(make_cluttered_scene(96, 96, 20 + s), 6, s));
  const auto m = evaluate_set(mixed, {});
  double rec = 0.0, prec = 0.0;
  for (const auto& e : m.rows) {
    rec += e.recall;
    prec += e.precision;
  }
  EXPECT_NEAR(m.meanRecall, rec / 5, 1e-15);
  EXPECT_NEAR(m.meanPrecision, prec / 5, 1e-15);

  std::ostringstream os;
  write_match_csv(m, os);
  std::istringstream is(os.str());
  const auto t = csv::read(is);
  EXPECT_EQ(t.header, (std::vector<std::string>{"pair", "kps1", "kps2", "putative", "correct", "recall", "precision", "time_ms"}));
  ASSERT_EQ(t.rows.size(), 6u);
  EXPECT_EQ(t.rows.back()[0], "mean");
  EXPECT_THROW(evaluate_set(std::vector<TranslatedPair>{}, {}), Error);
}

TEST(Evaluate, NoiseDoesNotRaisePrecision) {
  double clean = 0.0, noisy = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const ImageF scene = make_cluttered_scene(192, 192, 100 + s);
    const auto p = gen_translated_pair(scene, 16, s);
    clean += evaluate_pair(p.imgA, p.imgB, p.tx, p.ty, {}).precision;
    const NoiseSpec ns{25.0 / 255.0, 0, 0};
    const ImageF a = add_synthetic_noise(p.imgA, ns, 1000 + s), b = add_synthetic_noise(p.imgB, ns, 2000 + s);
    noisy += evaluate_pair(a, b, p.tx, p.ty, {}).precision;
  }
  EXPECT_LE(noisy / seeds, clean / seeds);
}

TEST(Evaluate, SmoothingNoisyPairsHelps) {
  double raw = 0.0, smoothed = 0.0;
  const int seeds = 20;
  const NoiseSpec ns{25.0 / 255.0, 0, 0};
  for (int s = 0; s < seeds; ++s) {
    const auto p = gen_translated_pair(make_cluttered_scene(192, 192, 300 + s), 16, s);
    const ImageF a = add_synthetic_noise(p.imgA, ns, 10 + s), b = add_synthetic_noise(p.imgB, ns, 50 + s);
    raw += evaluate_pair(a, b, p.tx, p.ty, {}).precision;
    smoothed += evaluate_pair(gaussian_blur(a, 1.5), gaussian_blur(b, 1.5), p.tx, p.ty, {}).precision;
  }
  EXPECT_GE(smoothed / seeds, raw / seeds);
}

TEST(Render, SideBySide) {
  const ImageF img = gaussian_blur(make_piecewise_scene(96, 96, 12), 1.0);
  const auto e = evaluate_pair(img, img, 0, 0, {});
  const ImageF vis = render_matches(img, img, e);
  EXPECT_EQ(vis.width(), 96 * 2 + 4);
  EXPECT_EQ(vis.height(), 96);
  for (double v : vis.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
