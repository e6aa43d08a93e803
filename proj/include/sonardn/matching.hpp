#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sonardn/csv.hpp"
#include "sonardn/error.hpp"
#include "sonardn/image.hpp"
#include "sonardn/parallel.hpp"

namespace sonardn {

// ---- translated pairs ----

struct TranslatedPair {
  ImageF imgA;
  ImageF imgB;
  int tx = 0;  // B coordinate = A coordinate + (tx, ty)
  int ty = 0;
};

/// Crops both views to the common overlap of a pure integer translation so
/// that imgB(x, y) = imgA(x + sx, y + sy).
inline TranslatedPair translated_pair_with_shift(const ImageF& img, int sx, int sy) {
  const int w = img.width() - std::abs(sx), h = img.height() - std::abs(sy);
  if (w <= 0 || h <= 0) fail_data("translated pair: shift leaves no overlap");
  const int ax = sx >= 0 ? 0 : -sx, ay = sy >= 0 ? 0 : -sy;
  TranslatedPair p;
  p.imgA = crop(img, ax, ay, w, h);
  p.imgB = crop(img, ax + sx, ay + sy, w, h);
  p.tx = -sx;
  p.ty = -sy;
  return p;
}

inline TranslatedPair gen_translated_pair(const ImageF& img, int maxShift, std::uint64_t seed) {
  require_gray(img, "gen_translated_pair");
  if (maxShift < 0) fail_usage("maxShift must be >= 0");
  if (4 * maxShift >= std::min(img.width(), img.height()))
    fail_data("gen_translated_pair: maxShift must be below a quarter of the smaller image side");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-maxShift, maxShift);
  const int sx = d(rng);
  const int sy = d(rng);
  return translated_pair_with_shift(img, sx, sy);
}

// ---- detection ----

struct Keypoint {
  double x = 0.0;  // full-resolution coordinates
  double y = 0.0;
  double scale = 0.0;
  double response = 0.0;
  int octave = 0;
  int layer = 0;
  double layerOffset = 0.0;
  double angle = 0.0;  // radians, filled by describe()
};

using Descriptor = std::array<double, 128>;

struct DetectorParams {
  int octaves = 3;
  int scalesPerOctave = 3;
  double sigma0 = 1.6;
  double assumedBlur = 0.5;
  double contrastThreshold = 0.03;
  double edgeRatio = 10.0;
  int border = 5;

  void validate() const {
    if (octaves < 1 || scalesPerOctave < 1) fail_usage("detector needs >= 1 octave and scale");
    if (!(sigma0 > 0.0) || !(contrastThreshold >= 0.0) || !(edgeRatio > 1.0)) fail_usage("bad detector parameters");
  }
};

struct ScaleSpace {
  std::vector<std::vector<ImageF>> gauss;  // [octave][0 .. s+2]
  std::vector<std::vector<ImageF>> dog;    // [octave][0 .. s+1]
};

inline ImageF decimate2(const ImageF& img) {
  ImageF out(img.width() / 2, img.height() / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

inline ScaleSpace build_scale_space(const ImageF& img, const DetectorParams& p) {
  const int s = p.scalesPerOctave;
  ImageF base = img;
  base.clear_mask();
  const double initial = std::sqrt(std::max(p.sigma0 * p.sigma0 - p.assumedBlur * p.assumedBlur, 0.01));
  base = gaussian_blur(base, initial);
  std::vector<double> inc(static_cast<std::size_t>(s + 3), 0.0);
  const double k = std::pow(2.0, 1.0 / s);
  for (int i = 1; i < s + 3; ++i) {
    const double prev = p.sigma0 * std::pow(k, i - 1), cur = prev * k;
    inc[i] = std::sqrt(cur * cur - prev * prev);
  }
  ScaleSpace ss;
  for (int o = 0; o < p.octaves; ++o) {
    if (o > 0) {
      const ImageF& src = ss.gauss.back()[s];
      if (src.width() < 2 * (2 * p.border + 3) || src.height() < 2 * (2 * p.border + 3)) break;
      base = decimate2(src);
    }
    std::vector<ImageF> g{base};
    for (int i = 1; i < s + 3; ++i) g.push_back(gaussian_blur(g.back(), inc[i]));
    std::vector<ImageF> d;
    for (int i = 0; i + 1 < s + 3; ++i) {
      ImageF diff(base.width(), base.height());
      for (std::size_t q = 0; q < diff.data().size(); ++q) diff.data()[q] = g[i + 1].data()[q] - g[i].data()[q];
      d.push_back(std::move(diff));
    }
    ss.gauss.push_back(std::move(g));
    ss.dog.push_back(std::move(d));
  }
  return ss;
}

namespace detail {

inline bool is_extremum(const std::vector<ImageF>& dog, int l, int x, int y) {
  const double v = dog[l].at(x, y);
  const bool isMax = v > 0;
  for (int dl = -1; dl <= 1; ++dl)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (!dl && !dy && !dx) continue;
        const double n = dog[l + dl].at(x + dx, y + dy);
        if (isMax ? n >= v : n <= v) return false;
      }
  return true;
}

}  // namespace detail

/// Difference-of-Gaussians extrema with quadratic subpixel refinement,
/// low-contrast and edge-response rejection. Only positions valid in the
/// image's mask are kept.
inline std::vector<Keypoint> detect(const ImageF& img, const DetectorParams& p = {}) {
  require_gray(img, "detect");
  p.validate();
  if (img.width() < 32 || img.height() < 32) fail_data("detect: image must be at least 32x32");
  const int s = p.scalesPerOctave;
  const auto ss = build_scale_space(img, p);
  const double prelim = 0.5 * p.contrastThreshold;
  const double edgeLimit = (p.edgeRatio + 1.0) * (p.edgeRatio + 1.0) / p.edgeRatio;
  std::vector<Keypoint> out;
  for (std::size_t o = 0; o < ss.dog.size(); ++o) {
    const auto& dog = ss.dog[o];
    const int w = dog[0].width(), h = dog[0].height();
    for (int l = 1; l <= s; ++l)
      for (int y = p.border; y < h - p.border; ++y)
        for (int x = p.border; x < w - p.border; ++x) {
          if (std::abs(dog[l].at(x, y)) <= prelim || !detail::is_extremum(dog, l, x, y)) continue;
          int cx = x, cy = y, cl = l;
          Eigen::Vector3d off, grad;
          bool ok = false;
          for (int it = 0; it < 5; ++it) {
            const auto& D0 = dog[cl];
            const auto& Dm = dog[cl - 1];
            const auto& Dp = dog[cl + 1];
            const double v = D0.at(cx, cy);
            grad << 0.5 * (D0.at(cx + 1, cy) - D0.at(cx - 1, cy)), 0.5 * (D0.at(cx, cy + 1) - D0.at(cx, cy - 1)),
                0.5 * (Dp.at(cx, cy) - Dm.at(cx, cy));
            Eigen::Matrix3d H;
            H(0, 0) = D0.at(cx + 1, cy) + D0.at(cx - 1, cy) - 2 * v;
            H(1, 1) = D0.at(cx, cy + 1) + D0.at(cx, cy - 1) - 2 * v;
            H(2, 2) = Dp.at(cx, cy) + Dm.at(cx, cy) - 2 * v;
            H(0, 1) = H(1, 0) =
                0.25 * (D0.at(cx + 1, cy + 1) - D0.at(cx - 1, cy + 1) - D0.at(cx + 1, cy - 1) + D0.at(cx - 1, cy - 1));
            H(0, 2) = H(2, 0) = 0.25 * (Dp.at(cx + 1, cy) - Dp.at(cx - 1, cy) - Dm.at(cx + 1, cy) + Dm.at(cx - 1, cy));
            H(1, 2) = H(2, 1) = 0.25 * (Dp.at(cx, cy + 1) - Dp.at(cx, cy - 1) - Dm.at(cx, cy + 1) + Dm.at(cx, cy - 1));
            const auto lu = H.fullPivLu();
            if (!lu.isInvertible()) break;
            off = -lu.solve(grad);
            if (std::abs(off[0]) < 0.5 && std::abs(off[1]) < 0.5 && std::abs(off[2]) < 0.5) {
              ok = true;
              break;
            }
            if (!off.allFinite() || off.cwiseAbs().maxCoeff() > 1e6) break;
            cx += static_cast<int>(std::lround(off[0]));
            cy += static_cast<int>(std::lround(off[1]));
            cl += static_cast<int>(std::lround(off[2]));
            if (cl < 1 || cl > s || cx < p.border || cy < p.border || cx >= w - p.border || cy >= h - p.border) break;
          }
          if (!ok) continue;
          const auto& D0 = dog[cl];
          const double v = D0.at(cx, cy);
          const double contrast = v + 0.5 * grad.dot(off);
          if (std::abs(contrast) < p.contrastThreshold) continue;
          const double dxx = D0.at(cx + 1, cy) + D0.at(cx - 1, cy) - 2 * v;
          const double dyy = D0.at(cx, cy + 1) + D0.at(cx, cy - 1) - 2 * v;
          const double dxy =
              0.25 * (D0.at(cx + 1, cy + 1) - D0.at(cx - 1, cy + 1) - D0.at(cx + 1, cy - 1) + D0.at(cx - 1, cy - 1));
          const double tr = dxx + dyy, det = dxx * dyy - dxy * dxy;
          if (det <= 0 || tr * tr / det >= edgeLimit) continue;

          const double f = std::ldexp(1.0, static_cast<int>(o));
          Keypoint kp;
          kp.x = (cx + off[0]) * f;
          kp.y = (cy + off[1]) * f;
          kp.octave = static_cast<int>(o);
          kp.layer = cl;
          kp.layerOffset = off[2];
          kp.scale = p.sigma0 * std::pow(2.0, (cl + off[2]) / s) * f;
          kp.response = contrast;
          const int ix = static_cast<int>(std::lround(kp.x)), iy = static_cast<int>(std::lround(kp.y));
          if (ix < 0 || iy < 0 || ix >= img.width() || iy >= img.height() || !img.valid(ix, iy)) continue;
          // Refinement from neighbouring seeds can converge on the same point.
          const bool dup = std::any_of(out.begin(), out.end(), [&](const Keypoint& q) {
            return q.octave == kp.octave && q.layer == kp.layer && std::abs(q.x - kp.x) < 1e-9 &&
                   std::abs(q.y - kp.y) < 1e-9;
          });
          if (!dup) out.push_back(kp);
        }
  }
  return out;
}

// ---- description ----

struct DescribeResult {
  std::vector<Keypoint> keypoints;  // kept keypoints with orientation set
  std::vector<Descriptor> descriptors;
  std::size_t dropped = 0;  // windows leaving the image or without gradient energy
};

namespace detail {

inline constexpr int kOriBins = 36;
inline constexpr int kDescWidth = 4;
inline constexpr int kDescBins = 8;
inline constexpr double kDescMagThreshold = 0.2;

inline double dominant_orientation(const ImageF& g, int px, int py, double sclOct) {
  const int radius = static_cast<int>(std::lround(3.0 * 1.5 * sclOct));
  const double wScale = -1.0 / (2.0 * (1.5 * sclOct) * (1.5 * sclOct));
  std::array<double, kOriBins> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = py + i;
    if (y <= 0 || y >= g.height() - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = px + j;
      if (x <= 0 || x >= g.width() - 1) continue;
      const double dx = g.at(x + 1, y) - g.at(x - 1, y);
      const double dy = g.at(x, y + 1) - g.at(x, y - 1);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag == 0.0) continue;
      double ang = std::atan2(dy, dx);
      if (ang < 0) ang += 2 * std::numbers::pi;
      int bin = static_cast<int>(std::lround(ang * kOriBins / (2 * std::numbers::pi)));
      bin = ((bin % kOriBins) + kOriBins) % kOriBins;
      hist[bin] += std::exp((i * i + j * j) * wScale) * mag;
    }
  }
  std::array<double, kOriBins> sm{};
  for (int b = 0; b < kOriBins; ++b) {
    auto at = [&](int k) { return hist[((b + k) % kOriBins + kOriBins) % kOriBins]; };
    sm[b] = (at(-2) + at(2)) * (1.0 / 16) + (at(-1) + at(1)) * (4.0 / 16) + at(0) * (6.0 / 16);
  }
  const int best = static_cast<int>(std::max_element(sm.begin(), sm.end()) - sm.begin());
  const double l = sm[(best + kOriBins - 1) % kOriBins], r = sm[(best + 1) % kOriBins], c = sm[best];
  const double denom = l - 2 * c + r;
  const double shift = denom != 0.0 ? 0.5 * (l - r) / denom : 0.0;
  double ang = (best + shift) * 2 * std::numbers::pi / kOriBins;
  if (ang < 0) ang += 2 * std::numbers::pi;
  if (ang >= 2 * std::numbers::pi) ang -= 2 * std::numbers::pi;
  return ang;
}

/// Returns false when the sampling window leaves the image or holds no gradient.
inline bool compute_descriptor(const ImageF& g, double ox, double oy, double sclOct, double angle, Descriptor& out) {
  const int d = kDescWidth, n = kDescBins;
  const double histWidth = 3.0 * sclOct;
  const int radius = static_cast<int>(std::lround(histWidth * std::numbers::sqrt2 * (d + 1) * 0.5));
  const int px = static_cast<int>(std::lround(ox)), py = static_cast<int>(std::lround(oy));
  if (px - radius - 1 < 0 || py - radius - 1 < 0 || px + radius + 1 >= g.width() || py + radius + 1 >= g.height())
    return false;
  const double c = std::cos(angle) / histWidth, s = std::sin(angle) / histWidth;
  const double expScale = -1.0 / (d * d * 0.5);
  std::array<double, kDescWidth * kDescWidth * kDescBins> hist{};
  for (int i = -radius; i <= radius; ++i)
    for (int j = -radius; j <= radius; ++j) {
      // Offset expressed in the keypoint frame, in histogram-cell units.
      const double cRot = j * c + i * s;
      const double rRot = -j * s + i * c;
      const double rbin = rRot + d / 2.0 - 0.5;
      const double cbin = cRot + d / 2.0 - 0.5;
      if (rbin <= -1 || rbin >= d || cbin <= -1 || cbin >= d) continue;
      const int x = px + j, y = py + i;
      const double dx = g.at(x + 1, y) - g.at(x - 1, y);
      const double dy = g.at(x, y + 1) - g.at(x, y - 1);
      const double mag = std::sqrt(dx * dx + dy * dy) * std::exp((cRot * cRot + rRot * rRot) * expScale);
      if (mag == 0.0) continue;
      double ori = std::atan2(dy, dx) - angle;
      ori = std::fmod(ori, 2 * std::numbers::pi);
      if (ori < 0) ori += 2 * std::numbers::pi;
      const double obin = ori * n / (2 * std::numbers::pi);
      const int r0 = static_cast<int>(std::floor(rbin)), c0 = static_cast<int>(std::floor(cbin));
      const int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
      for (int dr = 0; dr <= 1; ++dr) {
        const int rr = r0 + dr;
        if (rr < 0 || rr >= d) continue;
        const double wr = dr ? fr : 1 - fr;
        for (int dc = 0; dc <= 1; ++dc) {
          const int cc = c0 + dc;
          if (cc < 0 || cc >= d) continue;
          const double wc = dc ? fc : 1 - fc;
          for (int dob = 0; dob <= 1; ++dob) {
            const int oo = (o0 + dob) % n;
            const double wo = dob ? fo : 1 - fo;
            hist[(rr * d + cc) * n + oo] += mag * wr * wc * wo;
          }
        }
      }
    }
  double norm = 0.0;
  for (double v : hist) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) return false;
  const double cap = kDescMagThreshold * norm;
  double norm2 = 0.0;
  for (double& v : hist) {
    v = std::min(v, cap);
    norm2 += v * v;
  }
  norm2 = std::sqrt(norm2);
  for (std::size_t k = 0; k < hist.size(); ++k) out[k] = hist[k] / norm2;
  return true;
}

}  // namespace detail

/// Orientation-aligned 4x4x8 gradient histograms, L2-normalized with 0.2
/// clamping. Keypoints whose window leaves the image are dropped.
inline DescribeResult describe(const ImageF& img, std::span<const Keypoint> kps, const DetectorParams& p = {}) {
  require_gray(img, "describe");
  DescribeResult res;
  if (kps.empty()) return res;
  const auto ss = build_scale_space(img, p);
  for (const auto& kp0 : kps) {
    if (kp0.octave < 0 || kp0.octave >= static_cast<int>(ss.gauss.size())) {
      ++res.dropped;
      continue;
    }
    Keypoint kp = kp0;
    const ImageF& g = ss.gauss[kp.octave][kp.layer];
    const double f = std::ldexp(1.0, kp.octave);
    const double ox = kp.x / f, oy = kp.y / f;
    const double sclOct = p.sigma0 * std::pow(2.0, (kp.layer + kp.layerOffset) / p.scalesPerOctave);
    kp.angle = detail::dominant_orientation(g, static_cast<int>(std::lround(ox)), static_cast<int>(std::lround(oy)),
                                            sclOct);
    Descriptor desc{};
    if (!detail::compute_descriptor(g, ox, oy, sclOct, kp.angle, desc)) {
      ++res.dropped;
      continue;
    }
    res.keypoints.push_back(kp);
    res.descriptors.push_back(desc);
  }
  return res;
}

// ---- matching ----

struct Match {
  int query = 0;  // index into the first set
  int train = 0;  // index into the second set
  double distance = 0.0;
};

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Nearest/second-nearest ratio test plus mutual-best filtering.
inline std::vector<Match> match(std::span<const Descriptor> d1, std::span<const Descriptor> d2, double ratio = 0.75) {
  std::vector<Match> out;
  if (d1.size() < 2 || d2.size() < 2) return out;
  const std::size_t n1 = d1.size(), n2 = d2.size();
  std::vector<double> dist(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) dist[i * n2 + j] = descriptor_distance(d1[i], d2[j]);
  std::vector<std::size_t> back(n2, 0);
  for (std::size_t j = 0; j < n2; ++j) {
    double best = INFINITY;
    for (std::size_t i = 0; i < n1; ++i)
      if (dist[i * n2 + j] < best) {
        best = dist[i * n2 + j];
        back[j] = i;
      }
  }
  for (std::size_t i = 0; i < n1; ++i) {
    double b1 = INFINITY, b2 = INFINITY;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n2; ++j) {
      const double v = dist[i * n2 + j];
      if (v < b1) {
        b2 = b1;
        b1 = v;
        arg = j;
      } else if (v < b2) {
        b2 = v;
      }
    }
    if (!(b1 < ratio * b2) || back[arg] != i) continue;
    out.push_back({static_cast<int>(i), static_cast<int>(arg), b1});
  }
  return out;
}

// ---- evaluation ----

enum class RecallMode { MaxKeypoints, Correspondences };

struct MatchParams {
  DetectorParams detector;
  double ratio = 0.75;
  double tolerance = 3.0;
  RecallMode recallMode = RecallMode::MaxKeypoints;
};

struct MatchEval {
  std::size_t keypoints1 = 0;
  std::size_t keypoints2 = 0;
  std::size_t putative = 0;
  std::size_t correct = 0;
  double recall = 0.0;
  double precision = 0.0;
  bool recallDegenerate = false;
  bool precisionDegenerate = false;
  double timeMs = 0.0;
  int tx = 0;
  int ty = 0;
  double tolerance = 3.0;
  std::vector<Keypoint> kps1, kps2;
  std::vector<Match> matches;
  std::vector<std::uint8_t> matchCorrect;
};

/// recall = correct / max(k1, k2), precision = correct / putative; zero
/// denominators yield 0 and set the matching flag.
inline void fill_scores(MatchEval& e, std::optional<std::size_t> recallDenominator = std::nullopt) {
  const std::size_t rd = recallDenominator ? *recallDenominator : std::max(e.keypoints1, e.keypoints2);
  e.recallDegenerate = rd == 0;
  e.recall = rd ? static_cast<double>(e.correct) / static_cast<double>(rd) : 0.0;
  e.precisionDegenerate = e.putative == 0;
  e.precision = e.putative ? static_cast<double>(e.correct) / static_cast<double>(e.putative) : 0.0;
}

/// Interface for pluggable feature pipelines.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual DescribeResult extract(const ImageF& img) const = 0;
};

class DogExtractor : public FeatureExtractor {
 public:
  explicit DogExtractor(DetectorParams p = {}) : p_(p) {}
  DescribeResult extract(const ImageF& img) const override {
    const auto kps = detect(img, p_);
    return describe(img, kps, p_);
  }

 private:
  DetectorParams p_;
};

inline MatchEval evaluate_pair(const ImageF& imgA, const ImageF& imgB, int tx, int ty, const MatchParams& params,
                               const FeatureExtractor* extractor = nullptr) {
  const DogExtractor fallback(params.detector);
  const FeatureExtractor& fx = extractor ? *extractor : fallback;
  const auto t0 = std::chrono::steady_clock::now();
  auto fa = fx.extract(imgA);
  auto fb = fx.extract(imgB);
  const auto m = match(fa.descriptors, fb.descriptors, params.ratio);
  const auto t1 = std::chrono::steady_clock::now();

  MatchEval e;
  e.tx = tx;
  e.ty = ty;
  e.tolerance = params.tolerance;
  e.timeMs = std::chrono::duration<double, std::milli>(t1 - t0).count();
  e.keypoints1 = fa.keypoints.size();
  e.keypoints2 = fb.keypoints.size();
  e.putative = m.size();
  auto agrees = [&](const Keypoint& a, const Keypoint& b) {
    return std::hypot(b.x - (a.x + tx), b.y - (a.y + ty)) <= params.tolerance;
  };
  for (const auto& mm : m) {
    const bool ok = agrees(fa.keypoints[mm.query], fb.keypoints[mm.train]);
    e.matchCorrect.push_back(ok);
    e.correct += ok;
  }
  std::optional<std::size_t> denom;
  if (params.recallMode == RecallMode::Correspondences) {
    std::size_t c = 0;
    for (const auto& a : fa.keypoints)
      c += std::any_of(fb.keypoints.begin(), fb.keypoints.end(), [&](const Keypoint& b) { return agrees(a, b); });
    denom = c;
  }
  fill_scores(e, denom);
  e.kps1 = std::move(fa.keypoints);
  e.kps2 = std::move(fb.keypoints);
  e.matches = m;
  return e;
}

struct MatchSetResult {
  std::vector<MatchEval> rows;
  double meanRecall = 0.0;
  double meanPrecision = 0.0;
  double meanTimeMs = 0.0;
};

inline MatchSetResult evaluate_set(std::span<const TranslatedPair> pairs, const MatchParams& params, int jobs = 1) {
  if (pairs.empty()) fail_data("evaluate_set: no pairs");
  MatchSetResult r;
  r.rows.resize(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    r.rows[i] = evaluate_pair(pairs[i].imgA, pairs[i].imgB, pairs[i].tx, pairs[i].ty, params);
  });
  for (const auto& e : r.rows) {
    r.meanRecall += e.recall;
    r.meanPrecision += e.precision;
    r.meanTimeMs += e.timeMs;
  }
  const double n = static_cast<double>(pairs.size());
  r.meanRecall /= n;
  r.meanPrecision /= n;
  r.meanTimeMs /= n;
  return r;
}

inline void write_match_csv(const MatchSetResult& r, std::ostream& out, bool includeTime = true) {
  out << "pair,kps1,kps2,putative,correct,recall,precision" << (includeTime ? ",time_ms" : "") << "\n";
  auto row = [&](const std::string& name, const std::string& k1, const std::string& k2, const std::string& put,
                 const std::string& cor, double rec, double prec, double t) {
    out << name << "," << k1 << "," << k2 << "," << put << "," << cor << "," << csv::num(rec) << "," << csv::num(prec);
    if (includeTime) out << "," << csv::num(t);
    out << "\n";
  };
  double k1 = 0, k2 = 0, put = 0, cor = 0;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& e = r.rows[i];
    row(std::to_string(i), std::to_string(e.keypoints1), std::to_string(e.keypoints2), std::to_string(e.putative),
        std::to_string(e.correct), e.recall, e.precision, e.timeMs);
    k1 += static_cast<double>(e.keypoints1);
    k2 += static_cast<double>(e.keypoints2);
    put += static_cast<double>(e.putative);
    cor += static_cast<double>(e.correct);
  }
  const double n = static_cast<double>(r.rows.size());
  row("mean", csv::num(k1 / n), csv::num(k2 / n), csv::num(put / n), csv::num(cor / n), r.meanRecall,
      r.meanPrecision, r.meanTimeMs);
}

/// Side-by-side rendering: images dimmed into [0.25, 0.75], correct matches
/// drawn at 1.0 and incorrect ones at 0.0.
inline ImageF render_matches(const ImageF& a, const ImageF& b, const MatchEval& e) {
  const int gap = 4;
  const int w = a.width() + gap + b.width(), h = std::max(a.height(), b.height());
  ImageF out(w, h, 1, 0.5);
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out.at(x, y) = 0.25 + 0.5 * a.at(x, y);
  for (int y = 0; y < b.height(); ++y)
    for (int x = 0; x < b.width(); ++x) out.at(a.width() + gap + x, y) = 0.25 + 0.5 * b.at(x, y);
  auto line = [&](double x0, double y0, double x1, double y1, double v) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int k = 0; k <= steps; ++k) {
      const double t = static_cast<double>(k) / steps;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      if (x >= 0 && y >= 0 && x < w && y < h) out.at(x, y) = v;
    }
  };
  for (std::size_t i = 0; i < e.matches.size(); ++i) {
    const auto& ka = e.kps1[e.matches[i].query];
    const auto& kb = e.kps2[e.matches[i].train];
    line(ka.x, ka.y, kb.x + a.width() + gap, kb.y, e.matchCorrect[i] ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace sonardn
