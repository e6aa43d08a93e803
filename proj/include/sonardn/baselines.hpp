#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sonardn/error.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

enum class BaselineKind { Mean, Median, Gaussian, Bilateral, Wavelet, Anisotropic };

inline const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::Mean: return "mean";
    case BaselineKind::Median: return "median";
    case BaselineKind::Gaussian: return "gaussian";
    case BaselineKind::Bilateral: return "bilateral";
    case BaselineKind::Wavelet: return "wavelet";
    case BaselineKind::Anisotropic: return "anisotropic";
  }
  return "?";
}

struct BaselineSpec {
  BaselineKind kind = BaselineKind::Gaussian;
  int window = 3;             // mean, median
  double sigma = 1.0;         // gaussian
  double sigmaSpatial = 3.0;  // bilateral
  double sigmaRange = 0.1;
  int levels = 2;             // wavelet
  double thresholdScale = 1.0;
  int iterations = 10;        // anisotropic
  double kappa = 0.1;
  double lambda = 0.2;

  void validate() const {
    if ((kind == BaselineKind::Mean || kind == BaselineKind::Median) && (window < 1 || window % 2 == 0))
      fail_usage("baseline window must be odd and positive");
    if (kind == BaselineKind::Gaussian && !(sigma > 0.0)) fail_usage("gaussian sigma must be > 0");
    if (kind == BaselineKind::Bilateral && (!(sigmaSpatial > 0.0) || !(sigmaRange > 0.0)))
      fail_usage("bilateral sigmas must be > 0");
    if (kind == BaselineKind::Wavelet && (levels < 1 || thresholdScale < 0.0))
      fail_usage("wavelet levels must be >= 1 and threshold scale >= 0");
    if (kind == BaselineKind::Anisotropic) {
      if (iterations < 0) fail_usage("anisotropic iterations must be >= 0");
      if (!(kappa > 0.0)) fail_usage("anisotropic kappa must be > 0");
      if (!(lambda > 0.0) || lambda > 0.25) fail_usage("anisotropic lambda must be in (0, 0.25]");
    }
  }

  /// Canonical "kind:key=value,..." form listing only the parameters the kind uses.
  std::string to_string() const {
    std::ostringstream os;
    os << baseline_name(kind) << ":";
    switch (kind) {
      case BaselineKind::Mean:
      case BaselineKind::Median: os << "k=" << window; break;
      case BaselineKind::Gaussian: os << "sigma=" << sigma; break;
      case BaselineKind::Bilateral: os << "sigma_s=" << sigmaSpatial << ",sigma_r=" << sigmaRange; break;
      case BaselineKind::Wavelet: os << "levels=" << levels << ",scale=" << thresholdScale; break;
      case BaselineKind::Anisotropic:
        os << "iterations=" << iterations << ",kappa=" << kappa << ",lambda=" << lambda;
        break;
    }
    return os.str();
  }
};

/// Parses strings such as "gaussian:sigma=1.0" or "median:k=5". Unspecified
/// parameters keep their defaults.
inline BaselineSpec parse_baseline_spec(const std::string& text) {
  static const std::map<std::string, BaselineKind> kinds{
      {"mean", BaselineKind::Mean},         {"median", BaselineKind::Median},
      {"gaussian", BaselineKind::Gaussian}, {"bilateral", BaselineKind::Bilateral},
      {"wavelet", BaselineKind::Wavelet},   {"anisotropic", BaselineKind::Anisotropic}};
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const auto it = kinds.find(name);
  if (it == kinds.end()) fail_usage("unknown baseline kind '" + name + "'");
  BaselineSpec spec;
  spec.kind = it->second;
  if (colon != std::string::npos) {
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) fail_usage("baseline parameter '" + item + "' lacks '='");
      const std::string key = item.substr(0, eq);
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(item.substr(eq + 1), &used);
        if (used != item.size() - eq - 1) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        fail_usage("baseline parameter '" + item + "' is not numeric");
      }
      if (key == "k" || key == "window") spec.window = static_cast<int>(v);
      else if (key == "sigma") spec.sigma = v;
      else if (key == "sigma_s") spec.sigmaSpatial = v;
      else if (key == "sigma_r") spec.sigmaRange = v;
      else if (key == "levels") spec.levels = static_cast<int>(v);
      else if (key == "scale") spec.thresholdScale = v;
      else if (key == "iterations") spec.iterations = static_cast<int>(v);
      else if (key == "kappa") spec.kappa = v;
      else if (key == "lambda") spec.lambda = v;
      else fail_usage("unknown baseline parameter '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

inline ImageF mean_filter(const ImageF& img, int k) { return convolve2d(img, KernelSpec::box(k)); }

inline ImageF median_filter(const ImageF& img, int k) {
  require_gray(img, "median_filter");
  const int r = k / 2;
  ImageF out(img.width(), img.height());
  std::vector<double> win(static_cast<std::size_t>(k) * k);
  const std::size_t mid = win.size() / 2;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      std::size_t i = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) win[i++] = img.at_border(x + dx, y + dy, BorderMode::Reflect);
      std::nth_element(win.begin(), win.begin() + static_cast<std::ptrdiff_t>(mid), win.end());
      out.at(x, y) = win[mid];
    }
  out.set_mask(img.mask());
  return out;
}

/// Spatial x range Gaussian weights over a window of radius ceil(2 sigma_s).
inline ImageF bilateral_filter(const ImageF& img, double sigmaSpatial, double sigmaRange) {
  require_gray(img, "bilateral_filter");
  const int r = static_cast<int>(std::ceil(2.0 * sigmaSpatial));
  const int side = 2 * r + 1;
  std::vector<double> spatial(static_cast<std::size_t>(side) * side);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      spatial[static_cast<std::size_t>(dy + r) * side + dx + r] =
          std::exp(-0.5 * (dx * dx + dy * dy) / (sigmaSpatial * sigmaSpatial));
  const double rangeScale = -0.5 / (sigmaRange * sigmaRange);
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double c = img.at(x, y);
      double num = 0.0, den = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double v = img.at_border(x + dx, y + dy, BorderMode::Reflect);
          const double wgt =
              spatial[static_cast<std::size_t>(dy + r) * side + dx + r] * std::exp(rangeScale * (v - c) * (v - c));
          num += wgt * v;
          den += wgt;
        }
      out.at(x, y) = num / den;
    }
  out.set_mask(img.mask());
  return out;
}

// ---- Daubechies-2 wavelet, half-sample symmetric extension ----

namespace wavelet {

inline constexpr std::array<double, 4> kDecLo{-0.12940952255092145, 0.22414386804185735, 0.836516303737469,
                                              0.48296291314469025};
inline constexpr std::array<double, 4> kDecHi{-0.48296291314469025, 0.836516303737469, -0.22414386804185735,
                                              -0.12940952255092145};

/// Index into [0, n) under half-sample symmetric extension (x[-1] = x[0]).
inline int symmetric_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

inline int coeff_length(int n) { return (n + 3) / 2; }

/// One analysis step along a strided line.
inline void analyze(const double* x, int n, std::ptrdiff_t stride, std::vector<double>& lo, std::vector<double>& hi) {
  const int m = coeff_length(n);
  lo.assign(m, 0.0);
  hi.assign(m, 0.0);
  for (int k = 0; k < m; ++k) {
    const int i = 2 * k + 1;
    double a = 0.0, d = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double v = x[symmetric_index(i - j, n) * stride];
      a += kDecLo[j] * v;
      d += kDecHi[j] * v;
    }
    lo[k] = a;
    hi[k] = d;
  }
}

/// Synthesis step: upsample, convolve with the time-reversed analysis
/// filters and keep the n samples aligned with the original signal.
inline void synthesize(const std::vector<double>& lo, const std::vector<double>& hi, int n, double* y,
                       std::ptrdiff_t stride) {
  const int m = static_cast<int>(lo.size());
  for (int t = 0; t < n; ++t) {
    const int pos = t + 2;  // index into the full convolution
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
      const int u = pos - j;
      if (u < 0 || (u & 1) || u / 2 >= m) continue;
      acc += kDecLo[3 - j] * lo[u / 2] + kDecHi[3 - j] * hi[u / 2];
    }
    y[t * stride] = acc;
  }
}

/// Subbands of one 2-D level; each band is (w x h) row-major.
struct Level {
  int srcW = 0, srcH = 0;
  int w = 0, h = 0;
  std::vector<double> lh, hl, hh;  // detail bands: horizontal-high, vertical-high, diagonal
};

struct Decomposition {
  std::vector<Level> levels;  // finest first
  std::vector<double> approx;
  int approxW = 0, approxH = 0;
};

inline void dwt2_level(const std::vector<double>& src, int w, int h, std::vector<double>& ll, Level& lev) {
  const int cw = coeff_length(w), ch = coeff_length(h);
  std::vector<double> rowLo(static_cast<std::size_t>(cw) * h), rowHi(rowLo.size());
  std::vector<double> lo, hi;
  for (int y = 0; y < h; ++y) {
    analyze(src.data() + static_cast<std::size_t>(y) * w, w, 1, lo, hi);
    std::copy(lo.begin(), lo.end(), rowLo.begin() + static_cast<std::ptrdiff_t>(y) * cw);
    std::copy(hi.begin(), hi.end(), rowHi.begin() + static_cast<std::ptrdiff_t>(y) * cw);
  }
  const std::size_t bands = static_cast<std::size_t>(cw) * ch;
  ll.assign(bands, 0.0);
  lev = Level{w, h, cw, ch, std::vector<double>(bands), std::vector<double>(bands), std::vector<double>(bands)};
  for (int x = 0; x < cw; ++x) {
    analyze(rowLo.data() + x, h, cw, lo, hi);
    for (int y = 0; y < ch; ++y) {
      ll[static_cast<std::size_t>(y) * cw + x] = lo[y];
      lev.hl[static_cast<std::size_t>(y) * cw + x] = hi[y];
    }
    analyze(rowHi.data() + x, h, cw, lo, hi);
    for (int y = 0; y < ch; ++y) {
      lev.lh[static_cast<std::size_t>(y) * cw + x] = lo[y];
      lev.hh[static_cast<std::size_t>(y) * cw + x] = hi[y];
    }
  }
}

inline std::vector<double> idwt2_level(const std::vector<double>& ll, const Level& lev) {
  const int cw = lev.w, ch = lev.h, w = lev.srcW, h = lev.srcH;
  std::vector<double> rowLo(static_cast<std::size_t>(cw) * h), rowHi(rowLo.size());
  std::vector<double> a(ch), d(ch);
  for (int x = 0; x < cw; ++x) {
    for (int y = 0; y < ch; ++y) {
      a[y] = ll[static_cast<std::size_t>(y) * cw + x];
      d[y] = lev.hl[static_cast<std::size_t>(y) * cw + x];
    }
    synthesize(a, d, h, rowLo.data() + x, cw);
    for (int y = 0; y < ch; ++y) {
      a[y] = lev.lh[static_cast<std::size_t>(y) * cw + x];
      d[y] = lev.hh[static_cast<std::size_t>(y) * cw + x];
    }
    synthesize(a, d, h, rowHi.data() + x, cw);
  }
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const auto off = static_cast<std::ptrdiff_t>(y) * cw;
    std::vector<double> lo(rowLo.begin() + off, rowLo.begin() + off + cw);
    std::vector<double> hi(rowHi.begin() + off, rowHi.begin() + off + cw);
    synthesize(lo, hi, w, out.data() + static_cast<std::size_t>(y) * w, 1);
  }
  return out;
}

inline Decomposition dwt2(const ImageF& img, int levels) {
  require_gray(img, "dwt2");
  Decomposition dec;
  dec.approx = img.data();
  dec.approxW = img.width();
  dec.approxH = img.height();
  for (int l = 0; l < levels; ++l) {
    if (dec.approxW < 4 || dec.approxH < 4) fail_data("wavelet: image too small for the requested levels");
    Level lev;
    std::vector<double> ll;
    dwt2_level(dec.approx, dec.approxW, dec.approxH, ll, lev);
    dec.approx = std::move(ll);
    dec.approxW = lev.w;
    dec.approxH = lev.h;
    dec.levels.push_back(std::move(lev));
  }
  return dec;
}

inline ImageF idwt2(const Decomposition& dec) {
  std::vector<double> cur = dec.approx;
  for (auto it = dec.levels.rbegin(); it != dec.levels.rend(); ++it) cur = idwt2_level(cur, *it);
  const Level& top = dec.levels.front();
  return ImageF(top.srcW, top.srcH, std::move(cur));
}

inline double median_abs(std::vector<double> v) {
  for (double& x : v) x = std::abs(x);
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double soft(double x, double t) {
  const double m = std::abs(x) - t;
  return m > 0.0 ? std::copysign(m, x) : 0.0;
}

}  // namespace wavelet

/// Universal-threshold soft shrinkage of all detail bands; noise level from
/// the finest diagonal band's median absolute deviation.
inline ImageF wavelet_denoise(const ImageF& img, int levels, double thresholdScale = 1.0) {
  auto dec = wavelet::dwt2(img, levels);
  const double sigmaHat = wavelet::median_abs(dec.levels.front().hh) / 0.6745;
  const double tau = thresholdScale * sigmaHat * std::sqrt(2.0 * std::log(static_cast<double>(img.pixel_count())));
  for (auto& lev : dec.levels)
    for (auto* band : {&lev.lh, &lev.hl, &lev.hh})
      for (double& c : *band) c = wavelet::soft(c, tau);
  ImageF out = wavelet::idwt2(dec);
  out.clamp01();
  out.set_mask(img.mask());
  return out;
}

/// Explicit Perona-Malik diffusion, 4-neighbour, zero flux across the border.
inline ImageF anisotropic_diffusion(const ImageF& img, int iterations, double kappa, double lambda) {
  require_gray(img, "anisotropic_diffusion");
  const int w = img.width(), h = img.height();
  ImageF cur = img;
  cur.clear_mask();
  std::vector<double> next(cur.data().size());
  auto g = [kappa](double d) { return std::exp(-(d / kappa) * (d / kappa)); };
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double c = cur.at(x, y);
        double flux = 0.0;
        if (x > 0) { const double d = cur.at(x - 1, y) - c; flux += g(d) * d; }
        if (x + 1 < w) { const double d = cur.at(x + 1, y) - c; flux += g(d) * d; }
        if (y > 0) { const double d = cur.at(x, y - 1) - c; flux += g(d) * d; }
        if (y + 1 < h) { const double d = cur.at(x, y + 1) - c; flux += g(d) * d; }
        next[static_cast<std::size_t>(y) * w + x] = c + lambda * flux;
      }
    cur.data().swap(next);
  }
  cur.clamp01();
  cur.set_mask(img.mask());
  return cur;
}

inline ImageF apply_baseline(const ImageF& img, const BaselineSpec& spec) {
  require_gray(img, "apply_baseline");
  spec.validate();
  switch (spec.kind) {
    case BaselineKind::Mean: return mean_filter(img, spec.window);
    case BaselineKind::Median: return median_filter(img, spec.window);
    case BaselineKind::Gaussian: return gaussian_blur(img, spec.sigma);
    case BaselineKind::Bilateral: return bilateral_filter(img, spec.sigmaSpatial, spec.sigmaRange);
    case BaselineKind::Wavelet: return wavelet_denoise(img, spec.levels, spec.thresholdScale);
    case BaselineKind::Anisotropic: return anisotropic_diffusion(img, spec.iterations, spec.kappa, spec.lambda);
  }
  fail_usage("unknown baseline kind");
}

/// Parameter set used for the default comparison table.
inline std::vector<BaselineSpec> default_baselines() {
  std::vector<BaselineSpec> out;
  for (auto k : {BaselineKind::Mean, BaselineKind::Median, BaselineKind::Gaussian, BaselineKind::Bilateral,
                 BaselineKind::Wavelet, BaselineKind::Anisotropic}) {
    BaselineSpec s;
    s.kind = k;
    out.push_back(s);
  }
  return out;
}

}  // namespace sonardn
