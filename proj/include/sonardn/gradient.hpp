#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sonardn/image.hpp"

namespace sonardn {

struct Gradients {
  ImageF gx;
  ImageF gy;
};

/// Unnormalized 3x3 Sobel with reflect border. gx is positive where intensity
/// increases left to right, gy positive where it increases top to bottom.
inline Gradients sobel_gradients(const ImageF& img) {
  require_gray(img, "sobel_gradients");
  const int w = img.width(), h = img.height();
  Gradients g{ImageF(w, h), ImageF(w, h)};
  auto px = [&](int x, int y) { return img.at_border(x, y, BorderMode::Reflect); };
  // Differences before sums, so flat regions give exact zeros.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.gx.at(x, y) = (px(x + 1, y - 1) - px(x - 1, y - 1)) + 2.0 * (px(x + 1, y) - px(x - 1, y)) +
                      (px(x + 1, y + 1) - px(x - 1, y + 1));
      g.gy.at(x, y) = (px(x - 1, y + 1) - px(x - 1, y - 1)) + 2.0 * (px(x, y + 1) - px(x, y - 1)) +
                      (px(x + 1, y + 1) - px(x + 1, y - 1));
    }
  g.gx.set_mask(img.mask());
  g.gy.set_mask(img.mask());
  return g;
}

constexpr int kOtsuBins = 256;

// Magnitude spreads at or below this are rounding noise, not structure.
inline constexpr double kFlatGradient = 1e-12;

/// Histogram bin of a value in [0,1].
inline int otsu_bin(double v) {
  const int b = static_cast<int>(std::floor(v * kOtsuBins));
  return std::clamp(b, 0, kOtsuBins - 1);
}

struct OtsuResult {
  int bin = -1;            // last bin of the lower class; -1 if degenerate
  double threshold = 0.0;  // values >= threshold fall in the upper class
};

namespace detail {

/// Exact three-way comparison of a/b against c/d (b, d > 0).
inline int compare_fractions(unsigned __int128 a, unsigned __int128 b, unsigned __int128 c, unsigned __int128 d) {
  int sign = 1;
  while (true) {
    const auto q1 = a / b, q2 = c / d;
    if (q1 != q2) return q1 < q2 ? -sign : sign;
    const auto r1 = a % b, r2 = c % d;
    if (r1 == 0 && r2 == 0) return 0;
    if (r1 == 0) return -sign;
    if (r2 == 0) return sign;
    // r1/b vs r2/d orders opposite to b/r1 vs d/r2.
    a = b;
    b = r1;
    c = d;
    d = r2;
    sign = -sign;
  }
}

}  // namespace detail

/// Otsu threshold over a 256-bin histogram. The between-class variance
/// (s0*N - S*n0)^2 / (n0*n1) is compared exactly; ties go to the lowest bin.
/// Exact for up to ~1e7 samples.
inline OtsuResult otsu_threshold(const std::array<std::uint64_t, kOtsuBins>& hist) {
  using i128 = __int128;
  using u128 = unsigned __int128;
  i128 total = 0, totalSum = 0;
  for (int b = 0; b < kOtsuBins; ++b) {
    total += hist[b];
    totalSum += static_cast<i128>(hist[b]) * b;
  }
  OtsuResult best;
  u128 bestNum = 0, bestDen = 1;
  i128 n0 = 0, s0 = 0;
  for (int t = 0; t < kOtsuBins - 1; ++t) {
    n0 += hist[t];
    s0 += static_cast<i128>(hist[t]) * t;
    const i128 n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const i128 diff = s0 * total - totalSum * n0;
    const u128 mag = static_cast<u128>(diff < 0 ? -diff : diff);
    const u128 num = mag * mag;
    const u128 den = static_cast<u128>(n0) * static_cast<u128>(n1);
    if (best.bin < 0 || detail::compare_fractions(num, den, bestNum, bestDen) > 0) {
      bestNum = num;
      bestDen = den;
      best.bin = t;
    }
  }
  if (best.bin >= 0) best.threshold = static_cast<double>(best.bin + 1) / kOtsuBins;
  return best;
}

struct SaliencyResult {
  ImageF magnitude;                   // min-max normalized over valid pixels
  std::vector<std::uint8_t> salient;  // magnitude above the Otsu threshold
  std::vector<std::uint8_t> mask;     // salient dilated by one 3x3 step
  double threshold = 0.0;
};

inline std::vector<std::uint8_t> dilate3x3(const std::vector<std::uint8_t>& bits, int width, int height) {
  std::vector<std::uint8_t> out(bits.size(), 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy)
        for (int dx = -1; dx <= 1 && !any; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= width || yy >= height) continue;
          any = bits[static_cast<std::size_t>(yy) * width + xx] != 0;
        }
      out[static_cast<std::size_t>(y) * width + x] = any ? 1 : 0;
    }
  return out;
}

/// Sobel magnitude, normalized, Otsu-thresholded and dilated into a support mask.
/// A flat image yields an empty mask and threshold 0.
inline SaliencyResult gradient_saliency(const ImageF& img) {
  require_gray(img, "gradient_saliency");
  const auto [gx, gy] = sobel_gradients(img);
  SaliencyResult res;
  res.magnitude = ImageF(img.width(), img.height());
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i)
    res.magnitude.data()[i] = std::sqrt(gx.data()[i] * gx.data()[i] + gy.data()[i] * gy.data()[i]);
  res.magnitude.set_mask(img.mask());

  const auto [lo, hi] = masked_min_max(res.magnitude);
  res.salient.assign(n, 0);
  res.mask.assign(n, 0);
  if (!(hi - lo > kFlatGradient)) {
    std::fill(res.magnitude.data().begin(), res.magnitude.data().end(), 0.0);
    return res;
  }
  std::array<std::uint64_t, kOtsuBins> hist{};
  for (std::size_t i = 0; i < n; ++i) {
    double& v = res.magnitude.data()[i];
    v = img.valid(i) ? (v - lo) / (hi - lo) : 0.0;
    if (img.valid(i)) ++hist[otsu_bin(v)];
  }
  const OtsuResult otsu = otsu_threshold(hist);
  if (otsu.bin < 0) return res;
  res.threshold = otsu.threshold;
  for (std::size_t i = 0; i < n; ++i)
    res.salient[i] = (img.valid(i) && otsu_bin(res.magnitude.data()[i]) > otsu.bin) ? 1 : 0;
  res.mask = dilate3x3(res.salient, img.width(), img.height());
  for (std::size_t i = 0; i < n; ++i)
    if (!img.valid(i)) res.mask[i] = 0;
  return res;
}

}  // namespace sonardn
