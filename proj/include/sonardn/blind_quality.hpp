#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "sonardn/error.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

// Natural-scene-statistics features on MSCN coefficients, scored as the
// Mahalanobis distance from a corpus-fitted Gaussian. Lower = more corpus-like.

inline constexpr int kBlindFeatureCount = 36;
inline constexpr int kBlindScales = 2;
inline constexpr int kMscnRadius = 3;  // 7x7 window
inline constexpr double kMscnSigma = 7.0 / 6.0;
inline constexpr double kMscnC = 1.0 / 255.0;
inline constexpr double kBlindRidge = 1e-6;

namespace nss {

struct ShapeTable {
  std::vector<double> alpha, ggdRatio, aggdRatio;
};

// Shape grid 0.2 .. 10 in steps of 0.001.
inline const ShapeTable& shape_table() {
  static const ShapeTable table = [] {
    ShapeTable t;
    for (int i = 200; i <= 10000; ++i) {
      const double a = i / 1000.0;
      const double g1 = std::tgamma(1.0 / a), g2 = std::tgamma(2.0 / a), g3 = std::tgamma(3.0 / a);
      t.alpha.push_back(a);
      t.ggdRatio.push_back(g1 * g3 / (g2 * g2));
      t.aggdRatio.push_back(g2 * g2 / (g1 * g3));
    }
    return t;
  }();
  return table;
}

inline double nearest_alpha(const std::vector<double>& ratios, double target) {
  const auto& t = shape_table();
  std::size_t best = 0;
  double bestErr = INFINITY;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double e = std::abs(ratios[i] - target);
    if (e < bestErr) {
      bestErr = e;
      best = i;
    }
  }
  return t.alpha[best];
}

struct GgdFit {
  double shape = 0.0;
  double variance = 0.0;
};

/// Moment-matching generalized Gaussian fit (zero mean).
inline GgdFit fit_ggd(std::span<const double> x) {
  double s2 = 0.0, s1 = 0.0;
  for (double v : x) {
    s2 += v * v;
    s1 += std::abs(v);
  }
  if (x.empty() || s2 == 0.0) return {shape_table().alpha.back(), 0.0};
  const double n = static_cast<double>(x.size());
  const double rho = (s2 / n) / ((s1 / n) * (s1 / n));
  return {nearest_alpha(shape_table().ggdRatio, rho), s2 / n};
}

struct AggdFit {
  double shape = 0.0;
  double mean = 0.0;
  double leftVar = 0.0;
  double rightVar = 0.0;
};

inline AggdFit fit_aggd(std::span<const double> x) {
  double l2 = 0.0, r2 = 0.0, a1 = 0.0;
  std::size_t nl = 0, nr = 0;
  for (double v : x) {
    if (v < 0.0) {
      l2 += v * v;
      ++nl;
    } else if (v > 0.0) {
      r2 += v * v;
      ++nr;
    }
    a1 += std::abs(v);
  }
  if (x.empty() || l2 + r2 == 0.0) return {shape_table().alpha.back(), 0.0, 0.0, 0.0};
  const double n = static_cast<double>(x.size());
  const double leftStd = nl ? std::sqrt(l2 / nl) : 0.0;
  const double rightStd = nr ? std::sqrt(r2 / nr) : 0.0;
  const double tiny = 1e-12;
  const double gamma = std::max(leftStd, tiny) / std::max(rightStd, tiny);
  const double meanAbs = a1 / n, meanSq = (l2 + r2) / n;
  const double rhat = meanAbs * meanAbs / meanSq;
  const double g3 = gamma * gamma * gamma;
  const double rnorm = rhat * (g3 + 1.0) * (gamma + 1.0) / ((gamma * gamma + 1.0) * (gamma * gamma + 1.0));
  const double alpha = nearest_alpha(shape_table().aggdRatio, rnorm);
  const double ga1 = std::tgamma(1.0 / alpha), ga2 = std::tgamma(2.0 / alpha), ga3 = std::tgamma(3.0 / alpha);
  const double scale = std::sqrt(ga1 / ga3);
  const double mean = (rightStd * scale - leftStd * scale) * ga2 / ga1;
  return {alpha, mean, leftStd * leftStd, rightStd * rightStd};
}

/// Mean-subtracted contrast-normalized coefficients.
inline std::vector<double> mscn(const ImageF& img) {
  const auto k = gaussian_kernel1d(kMscnSigma, kMscnRadius);
  ImageF plain = img;
  plain.clear_mask();
  ImageF sq = plain;
  for (double& v : sq.data()) v *= v;
  const ImageF mu = convolve_separable(plain, k);
  const ImageF mu2 = convolve_separable(sq, k);
  std::vector<double> out(img.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mu.data()[i];
    const double sd = std::sqrt(std::abs(mu2.data()[i] - m * m));
    out[i] = (plain.data()[i] - m) / (sd + kMscnC);
  }
  return out;
}

inline void scale_features(const ImageF& img, std::vector<double>& feats) {
  const auto c = mscn(img);
  const int w = img.width(), h = img.height();
  std::vector<double> vals;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (img.valid(i)) vals.push_back(c[i]);
  const auto g = fit_ggd(vals);
  feats.push_back(g.shape);
  feats.push_back(g.variance);
  // Horizontal, vertical, main-diagonal and anti-diagonal neighbour products.
  constexpr std::array<std::array<int, 2>, 4> shifts{{{1, 0}, {0, 1}, {1, 1}, {-1, 1}}};
  for (const auto& s : shifts) {
    vals.clear();
    for (int y = 0; y + s[1] < h; ++y)
      for (int x = std::max(0, -s[0]); x < w && x + s[0] < w; ++x) {
        const int x2 = x + s[0], y2 = y + s[1];
        if (!img.valid(x, y) || !img.valid(x2, y2)) continue;
        vals.push_back(c[static_cast<std::size_t>(y) * w + x] * c[static_cast<std::size_t>(y2) * w + x2]);
      }
    const auto a = fit_aggd(vals);
    feats.insert(feats.end(), {a.shape, a.mean, a.leftVar, a.rightVar});
  }
}

/// 2x2 block average; a block is valid only when all four sources are.
inline ImageF downsample2(const ImageF& img) {
  const int w = img.width() / 2, h = img.height() / 2;
  ImageF out(w, h);
  std::vector<std::uint8_t> m(static_cast<std::size_t>(w) * h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.at(x, y) = 0.25 * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) +
                             img.at(2 * x + 1, 2 * y + 1));
      m[static_cast<std::size_t>(y) * w + x] = img.valid(2 * x, 2 * y) && img.valid(2 * x + 1, 2 * y) &&
                                               img.valid(2 * x, 2 * y + 1) && img.valid(2 * x + 1, 2 * y + 1);
    }
  if (img.has_mask()) out.set_mask(std::move(m));
  return out;
}

}  // namespace nss

/// 36 features: per scale, GGD (shape, variance) of MSCN plus AGGD
/// (shape, mean, left variance, right variance) of four neighbour products.
inline std::vector<double> blind_features(const ImageF& img) {
  require_gray(img, "blind_features");
  if (img.width() < 32 || img.height() < 32) fail_data("blind quality needs images of at least 32x32");
  std::vector<double> feats;
  feats.reserve(kBlindFeatureCount);
  ImageF cur = img;
  for (int s = 0; s < kBlindScales; ++s) {
    nss::scale_features(cur, feats);
    if (s + 1 < kBlindScales) cur = nss::downsample2(cur);
  }
  return feats;
}

struct BlindModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // ridge already added
  std::size_t corpusSize = 0;

  bool fitted() const noexcept { return mean.size() == kBlindFeatureCount; }
};

inline BlindModel fit_blind_model(std::span<const ImageF> corpus) {
  if (corpus.size() < 20) fail_data("blind model needs at least 20 corpus images");
  const int d = kBlindFeatureCount;
  Eigen::MatrixXd f(static_cast<Eigen::Index>(corpus.size()), d);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto v = blind_features(corpus[i]);
    for (int j = 0; j < d; ++j) f(static_cast<Eigen::Index>(i), j) = v[j];
  }
  BlindModel m;
  m.corpusSize = corpus.size();
  m.mean = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - m.mean.transpose();
  m.covariance = centered.transpose() * centered / static_cast<double>(corpus.size() - 1);
  m.covariance.diagonal().array() += kBlindRidge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(m.covariance);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    fail_numeric("blind model covariance is singular after ridge");
  return m;
}

inline double blind_distance(std::span<const double> features, const BlindModel& model) {
  if (!model.fitted()) fail_usage("blind quality model is not fitted");
  if (features.size() != static_cast<std::size_t>(kBlindFeatureCount)) fail_data("blind feature count mismatch");
  const Eigen::VectorXd diff = Eigen::Map<const Eigen::VectorXd>(features.data(), kBlindFeatureCount) - model.mean;
  const Eigen::VectorXd sol = model.covariance.ldlt().solve(diff);
  return std::sqrt(std::max(0.0, diff.dot(sol)));
}

inline double blind_quality(const ImageF& img, const BlindModel& model) {
  if (!model.fitted()) fail_usage("blind quality model is not fitted");
  const auto f = blind_features(img);
  return blind_distance(f, model);
}

// "SDNBLIND", u32 version, u32 feature count, f64 MSCN constant, f64 window
// sigma, i32 window radius, i32 scales, f64 ridge, u64 corpus size,
// mean (f64 x d), covariance (f64 x d*d, row-major).
inline constexpr std::uint32_t kBlindModelVersion = 1;

inline void save_blind_model(const BlindModel& m, const std::filesystem::path& path) {
  if (!m.fitted()) fail_usage("cannot save an unfitted blind model");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write " + path.string());
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write("SDNBLIND", 8);
  put(kBlindModelVersion);
  put(static_cast<std::uint32_t>(kBlindFeatureCount));
  put(kMscnC);
  put(kMscnSigma);
  put(static_cast<std::int32_t>(kMscnRadius));
  put(static_cast<std::int32_t>(kBlindScales));
  put(kBlindRidge);
  put(static_cast<std::uint64_t>(m.corpusSize));
  for (int i = 0; i < kBlindFeatureCount; ++i) put(m.mean[i]);
  for (int i = 0; i < kBlindFeatureCount; ++i)
    for (int j = 0; j < kBlindFeatureCount; ++j) put(m.covariance(i, j));
  if (!out) fail_data("failed writing " + path.string());
}

inline BlindModel load_blind_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open " + path.string());
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail_data("blind model: truncated file");
  };
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "SDNBLIND") fail_data("blind model: bad magic");
  std::uint32_t version = 0, count = 0;
  get(version);
  get(count);
  if (version != kBlindModelVersion) fail_data("blind model: unsupported version");
  if (count != static_cast<std::uint32_t>(kBlindFeatureCount)) fail_data("blind model: feature count mismatch");
  double c = 0, sigma = 0, ridge = 0;
  std::int32_t radius = 0, scales = 0;
  std::uint64_t corpus = 0;
  get(c);
  get(sigma);
  get(radius);
  get(scales);
  get(ridge);
  get(corpus);
  if (c != kMscnC || sigma != kMscnSigma || radius != kMscnRadius || scales != kBlindScales)
    fail_data("blind model: feature configuration differs from this build");
  BlindModel m;
  m.corpusSize = corpus;
  m.mean.resize(kBlindFeatureCount);
  m.covariance.resize(kBlindFeatureCount, kBlindFeatureCount);
  for (int i = 0; i < kBlindFeatureCount; ++i) get(m.mean[i]);
  for (int i = 0; i < kBlindFeatureCount; ++i)
    for (int j = 0; j < kBlindFeatureCount; ++j) get(m.covariance(i, j));
  return m;
}

}  // namespace sonardn
