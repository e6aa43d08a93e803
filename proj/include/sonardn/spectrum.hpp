#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include "sonardn/image.hpp"

namespace sonardn {

struct RadialBin {
  double freqNorm;  // bin center, 1.0 = Nyquist
  double power;     // mean power over the annulus
};

struct PsdResult {
  ImageF power;    // |F|^2 / N, DC at (W/2, H/2)
  ImageF display;  // log10(1 + power), min-max scaled to [0,1]
  std::vector<RadialBin> radial;
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Forward 2-D DFT of a real image (row-major complex output, no normalization).
inline std::vector<std::complex<double>> dft2d(const ImageF& img) {
  const int w = img.width(), h = img.height();
  const std::size_t n = img.pixel_count();
  fftw_complex* in = fftw_alloc_complex(n);
  fftw_complex* out = fftw_alloc_complex(n);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_2d(h, w, in, out, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    in[i][0] = img.data()[i];
    in[i][1] = 0.0;
  }
  fftw_execute(plan);
  std::vector<std::complex<double>> result(n);
  for (std::size_t i = 0; i < n; ++i) result[i] = {out[i][0], out[i][1]};
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return result;
}

/// Power spectral density of the mean-subtracted image. Invalid pixels are
/// set to the valid mean before the transform, so they contribute no power.
inline PsdResult psd_map(const ImageF& img) {
  require_gray(img, "psd_map");
  const int w = img.width(), h = img.height();
  const std::size_t n = img.pixel_count();
  const double mean = masked_mean(img);
  ImageF centered(w, h);
  for (std::size_t i = 0; i < n; ++i) centered.data()[i] = img.valid(i) ? img.data()[i] - mean : 0.0;

  const auto spectrum = dft2d(centered);
  PsdResult res;
  res.power = ImageF(w, h);
  const double inv = 1.0 / static_cast<double>(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = (x + w / 2) % w;
      const int sy = (y + h / 2) % h;
      res.power.at(sx, sy) = std::norm(spectrum[static_cast<std::size_t>(y) * w + x]) * inv;
    }
  }

  res.display = ImageF(w, h);
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::log10(1.0 + res.power.data()[i]);
    res.display.data()[i] = v;
    if (i == 0 || v < lo) lo = v;
    if (i == 0 || v > hi) hi = v;
  }
  for (double& v : res.display.data()) v = hi > lo ? (v - lo) / (hi - lo) : 0.0;

  // Radial profile out to Nyquist; corners beyond radius 1 are left out.
  const int bins = std::max(1, std::min(w, h) / 2);
  std::vector<double> sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x - w / 2) / (w / 2.0 > 0 ? w / 2.0 : 1.0);
      const double fy = static_cast<double>(y - h / 2) / (h / 2.0 > 0 ? h / 2.0 : 1.0);
      const double r = std::sqrt(fx * fx + fy * fy);
      if (r > 1.0) continue;
      const int b = std::min(bins - 1, static_cast<int>(r * bins));
      sum[b] += res.power.at(x, y);
      ++count[b];
    }
  }
  for (int b = 0; b < bins; ++b)
    res.radial.push_back({(b + 0.5) / bins, count[b] ? sum[b] / static_cast<double>(count[b]) : 0.0});
  return res;
}

}  // namespace sonardn
