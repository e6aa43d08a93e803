#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sonardn/blind_quality.hpp"
#include "sonardn/csv.hpp"
#include "sonardn/error.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

/// Peak-1 PSNR over pixels valid in both images; +inf for identical inputs.
inline double psnr(const ImageF& test, const ImageF& ref) {
  require_gray(test, "psnr");
  require_gray(ref, "psnr");
  require_same_dims(test, ref, "psnr");
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < test.pixel_count(); ++i) {
    if (!test.valid(i) || !ref.valid(i)) continue;
    const double d = test.data()[i] - ref.data()[i];
    se += d * d;
    ++n;
  }
  if (n == 0) fail_data("psnr: empty valid region");
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(n) / se);
}

inline constexpr int kSsimRadius = 5;
inline constexpr double kSsimSigma = 1.5;

/// Single-scale SSIM, 11x11 Gaussian window, averaged over centres whose
/// window lies inside the image and whose centre pixel is valid.
inline double ssim(const ImageF& test, const ImageF& ref) {
  require_gray(test, "ssim");
  require_gray(ref, "ssim");
  require_same_dims(test, ref, "ssim");
  const int r = kSsimRadius;
  const int w = test.width(), h = test.height();
  if (w < 2 * r + 1 || h < 2 * r + 1) fail_data("ssim: image smaller than the 11x11 window");
  const auto k = gaussian_kernel1d(kSsimSigma, r);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int ow = w - 2 * r;

  // Horizontal pass restricted to valid columns, five moment planes.
  std::vector<std::array<double, 5>> horiz(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      std::array<double, 5> acc{};
      for (int j = 0; j <= 2 * r; ++j) {
        const double a = test.at(x + j, y), b = ref.at(x + j, y);
        acc[0] += k[j] * a;
        acc[1] += k[j] * b;
        acc[2] += k[j] * a * a;
        acc[3] += k[j] * b * b;
        acc[4] += k[j] * a * b;
      }
      horiz[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = r; y < h - r; ++y)
    for (int x = r; x < w - r; ++x) {
      if (!test.valid(x, y) || !ref.valid(x, y)) continue;
      std::array<double, 5> m{};
      for (int j = 0; j <= 2 * r; ++j) {
        const auto& row = horiz[static_cast<std::size_t>(y - r + j) * ow + (x - r)];
        for (int q = 0; q < 5; ++q) m[q] += k[j] * row[q];
      }
      const double vx = m[2] - m[0] * m[0], vy = m[3] - m[1] * m[1], cxy = m[4] - m[0] * m[1];
      sum += ((2 * m[0] * m[1] + c1) * (2 * cxy + c2)) / ((m[0] * m[0] + m[1] * m[1] + c1) * (vx + vy + c2));
      ++n;
    }
  if (n == 0) fail_data("ssim: no valid window centres");
  return sum / static_cast<double>(n);
}

inline ImageF laplacian(const ImageF& img) {
  KernelSpec k{3, 3, {0, 1, 0, 1, -4, 1, 0, 1, 0}, BorderMode::Reflect};
  return convolve2d(img, k);
}

/// Pearson correlation over paired samples; nullopt when either side is constant.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n == 0 || b.size() != n) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Edge preservation: correlation of Laplacian responses over jointly valid pixels.
inline double epi(const ImageF& test, const ImageF& ref) {
  require_gray(test, "epi");
  require_gray(ref, "epi");
  require_same_dims(test, ref, "epi");
  const ImageF lt = laplacian(test), lr = laplacian(ref);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < test.pixel_count(); ++i) {
    if (!test.valid(i) || !ref.valid(i)) continue;
    a.push_back(lt.data()[i]);
    b.push_back(lr.data()[i]);
  }
  const auto c = pearson(a, b);
  if (!c) fail_numeric("EPI undefined: Laplacian response is constant");
  return *c;
}

/// Isotropic total variation, forward differences; a difference is zero when
/// it would leave the image or touch an invalid pixel.
inline double tv(const ImageF& img) {
  require_gray(img, "tv");
  const int w = img.width(), h = img.height();
  double sum = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!img.valid(x, y)) continue;
      const double c = img.at(x, y);
      const double dx = (x + 1 < w && img.valid(x + 1, y)) ? img.at(x + 1, y) - c : 0.0;
      const double dy = (y + 1 < h && img.valid(x, y + 1)) ? img.at(x, y + 1) - c : 0.0;
      sum += std::sqrt(dx * dx + dy * dy);
    }
  return sum;
}

struct MetricReport {
  std::string methodId;
  std::string imageId;
  std::optional<std::string> referenceId;
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::optional<double> epi;
  double tv = 0.0;
  std::optional<double> blindQuality;
};

inline MetricReport metric_report(const ImageF& test, const ImageF* ref, const BlindModel* blind,
                                  std::string methodId = {}, std::string imageId = {},
                                  std::optional<std::string> referenceId = std::nullopt) {
  MetricReport r;
  r.methodId = std::move(methodId);
  r.imageId = std::move(imageId);
  if (ref) {
    r.referenceId = referenceId ? *referenceId : std::string("reference");
    r.psnr = psnr(test, *ref);
    r.ssim = ssim(test, *ref);
    r.epi = epi(test, *ref);
  }
  r.tv = tv(test);
  if (blind) r.blindQuality = blind_quality(test, *blind);
  return r;
}

inline const char* kReportHeader = "method,image,psnr,ssim,epi,tv,blind_quality";

inline void write_report_csv(const std::vector<MetricReport>& rows, std::ostream& out) {
  out << kReportHeader << "\n";
  for (const auto& r : rows)
    out << csv::join({r.methodId, r.imageId, csv::num(r.psnr), csv::num(r.ssim), csv::num(r.epi), csv::num(r.tv),
                      csv::num(r.blindQuality)})
        << "\n";
}

}  // namespace sonardn
