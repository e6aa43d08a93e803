#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sonardn/noise.hpp"
#include "sonardn/subsampler.hpp"
#include "test_util.hpp"

using namespace sonardn;

namespace {

// Independent provenance oracle: each output value must come from its own
// cell, sub1/sub2 positions must differ and be horizontal or vertical neighbors.
void check_provenance(const ImageF& img, const SubsamplePair& pair) {
  ASSERT_EQ(pair.sub1.width(), img.width() / 2);
  ASSERT_EQ(pair.sub1.height(), img.height() / 2);
  for (int cy = 0; cy < img.height() / 2; ++cy)
    for (int cx = 0; cx < img.width() / 2; ++cx) {
      int p1 = -1, p2 = -1;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const double v = img.at(2 * cx + dx, 2 * cy + dy);
          if (v == pair.sub1.at(cx, cy)) p1 = dy * 2 + dx;
          if (v == pair.sub2.at(cx, cy)) p2 = dy * 2 + dx;
        }
      ASSERT_GE(p1, 0);
      ASSERT_GE(p2, 0);
      ASSERT_NE(p1, p2);
      const int manhattan = std::abs((p1 & 1) - (p2 & 1)) + std::abs((p1 >> 1) - (p2 >> 1));
      ASSERT_EQ(manhattan, 1);
    }
}

}  // namespace

TEST(Subsampler, ConstantTwoByTwo) {
  const auto pair = make_subsample_pair(ImageF(2, 2, 1, 0.37), 5);
  ASSERT_EQ(pair.sub1.width(), 1);
  ASSERT_EQ(pair.sub1.height(), 1);
  EXPECT_DOUBLE_EQ(pair.sub1.at(0, 0), 0.37);
  EXPECT_DOUBLE_EQ(pair.sub2.at(0, 0), 0.37);
}

TEST(Subsampler, Deterministic) {
  const ImageF img = test::random_field(10, 8, 1);
  const auto a = make_subsample_pair(img, 99);
  const auto b = make_subsample_pair(img, 99);
  EXPECT_EQ(a.sub1.data(), b.sub1.data());
  EXPECT_EQ(a.sub2.data(), b.sub2.data());
  EXPECT_EQ(a.choices, b.choices);
}

TEST(Subsampler, ProvenanceOnDistinctValues) {
  ImageF img(4, 4);
  for (int i = 0; i < 16; ++i) img.data()[i] = (i + 1) / 16.0;
  for (std::uint64_t s = 0; s < 200; ++s) check_provenance(img, make_subsample_pair(img, s));
}

TEST(Subsampler, OddDimensionsTruncate) {
  const ImageF img = test::random_field(7, 5, 3);
  const auto pair = make_subsample_pair(img, 1);
  EXPECT_EQ(pair.sub1.width(), 3);
  EXPECT_EQ(pair.sub1.height(), 2);
  EXPECT_THROW(make_subsample_pair(ImageF(1, 5), 0), Error);
}

TEST(Subsampler, AllEightOrderedPairsOccur) {
  ImageF img(64, 64);
  const auto pair = make_subsample_pair(img, 11);
  std::array<int, 8> seen{};
  for (auto c : pair.choices.codes) ++seen[c];
  for (int k = 0; k < 8; ++k) EXPECT_GT(seen[k], 0);
}

TEST(Subsampler, ReplayIdentity) {
  const ImageF img = test::random_field(12, 10, 2);
  const auto pair = make_subsample_pair(img, 17);
  const auto [s1, s2] = resample_with(img, pair.choices);
  EXPECT_EQ(s1.data(), pair.sub1.data());
  EXPECT_EQ(s2.data(), pair.sub2.data());

  const auto [z1, z2] = resample_with(ImageF(12, 10), pair.choices);
  for (double v : z1.data()) EXPECT_EQ(v, 0.0);
  for (double v : z2.data()) EXPECT_EQ(v, 0.0);

  EXPECT_THROW(resample_with(ImageF(10, 10), pair.choices), Error);
}

TEST(Subsampler, ReplayOfShiftedImageIsShifted) {
  const ImageF img = test::random_field(12, 10, 4, 0.0, 0.8);
  ImageF shifted = img;
  for (double& v : shifted.data()) v += 0.1;
  const auto pair = make_subsample_pair(img, 23);
  const auto [s1, s2] = resample_with(shifted, pair.choices);
  for (std::size_t i = 0; i < s1.data().size(); ++i) {
    EXPECT_DOUBLE_EQ(s1.data()[i], pair.sub1.data()[i] + 0.1);
    EXPECT_DOUBLE_EQ(s2.data()[i], pair.sub2.data()[i] + 0.1);
  }
}

TEST(Subsampler, MaskNeverValidatesInvalidSource) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    ImageF img = test::random_field(8, 8, s);
    std::mt19937_64 rng(s);
    std::vector<std::uint8_t> m(64);
    for (auto& v : m) v = rng() % 3 != 0;
    img.set_mask(m);
    const auto pair = make_subsample_pair(img, s);
    ASSERT_TRUE(pair.sub1.has_mask());
    for (int cy = 0; cy < 4; ++cy)
      for (int cx = 0; cx < 4; ++cx) {
        const auto [a, b] = kAdjacentPairs[pair.choices.code(cx, cy)];
        EXPECT_EQ(pair.sub1.valid(cx, cy), img.valid(2 * cx + cell_dx(a), 2 * cy + cell_dy(a)));
        EXPECT_EQ(pair.sub2.valid(cx, cy), img.valid(2 * cx + cell_dx(b), 2 * cy + cell_dy(b)));
      }
  }
}

TEST(Subsampler, PairDifferenceIsUnbiased) {
  // |mean(sub1 - sub2)| averaged over seeds shrinks roughly as 1/sqrt(N).
  const ImageF flat(16, 16, 1, 0.5);
  auto mean_diff = [&](int seeds) {
    double acc = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const ImageF noisy = add_synthetic_noise(flat, NoiseSpec{0.1, 0, 0}, 1000 + s);
      const auto p = make_subsample_pair(noisy, s);
      for (std::size_t i = 0; i < p.sub1.data().size(); ++i) acc += p.sub1.data()[i] - p.sub2.data()[i];
    }
    return std::abs(acc) / (seeds * 64.0);
  };
  const double sd = 0.1 * std::sqrt(2.0);
  EXPECT_LT(mean_diff(1000), 4.0 * sd / std::sqrt(1000.0 * 64.0));
}

TEST(Subsampler, SerializationRoundTrip) {
  const auto pair = make_subsample_pair(test::random_field(9, 6, 5), 3);
  std::stringstream csv;
  write_cell_choices_csv(pair.choices, csv);
  EXPECT_EQ(read_cell_choices_csv(csv), pair.choices);
  std::stringstream bin;
  write_cell_choices_binary(pair.choices, bin);
  EXPECT_EQ(read_cell_choices_binary(bin), pair.choices);
  std::stringstream bad("SDNCELLX");
  EXPECT_THROW(read_cell_choices_binary(bad), Error);
}
