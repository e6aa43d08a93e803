#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sonardn/error.hpp"

namespace sonardn {

enum class BorderMode { Reflect, Replicate, Zero };

/// Maps an out-of-range index into [0, n) using the given border rule.
/// Reflect mirrors about the edge sample without repeating it (-1 -> 1).
/// Returns -1 for Zero mode when the index is outside.
inline int border_index(int i, int n, BorderMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case BorderMode::Zero:
      return -1;
    case BorderMode::Replicate:
      return std::clamp(i, 0, n - 1);
    case BorderMode::Reflect:
    default: {
      if (n == 1) return 0;
      const int period = 2 * (n - 1);
      int m = i % period;
      if (m < 0) m += period;
      return m < n ? m : period - m;
    }
  }
}

/// Row-major raster of doubles, interleaved channels, with an optional
/// per-pixel validity mask (nonzero = valid). No mask means every pixel is valid.
class ImageF {
 public:
  ImageF() = default;

  ImageF(int width, int height, int channels = 1, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0) fail_data("negative image dimension");
    if (channels != 1 && channels != 3) fail_data("channels must be 1 or 3");
    samples_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  ImageF(int width, int height, std::vector<double> samples, int channels = 1)
      : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    if (channels != 1 && channels != 3) fail_data("channels must be 1 or 3");
    if (samples_.size() != static_cast<std::size_t>(width) * height * channels)
      fail_data("sample count does not match dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  double& at(int x, int y, int c = 0) {
    return samples_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return samples_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  /// Sample fetch with border handling; Zero mode yields 0 outside.
  double at_border(int x, int y, BorderMode mode, int c = 0) const {
    const int bx = border_index(x, width_, mode);
    const int by = border_index(y, height_, mode);
    if (bx < 0 || by < 0) return 0.0;
    return at(bx, by, c);
  }

  std::span<double> samples() noexcept { return samples_; }
  std::span<const double> samples() const noexcept { return samples_; }
  std::vector<double>& data() noexcept { return samples_; }
  const std::vector<double>& data() const noexcept { return samples_; }

  bool has_mask() const noexcept { return mask_.has_value(); }
  const std::optional<std::vector<std::uint8_t>>& mask() const noexcept { return mask_; }

  void set_mask(std::vector<std::uint8_t> mask) {
    if (mask.size() != pixel_count()) fail_data("mask dimension mismatch");
    mask_ = std::move(mask);
  }
  void set_mask(const std::optional<std::vector<std::uint8_t>>& mask) {
    if (mask) set_mask(*mask);
    else mask_.reset();
  }
  void clear_mask() noexcept { mask_.reset(); }

  bool valid(int x, int y) const {
    return !mask_ || (*mask_)[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  bool valid(std::size_t idx) const { return !mask_ || (*mask_)[idx] != 0; }

  std::size_t valid_count() const {
    if (!mask_) return pixel_count();
    return static_cast<std::size_t>(std::count_if(mask_->begin(), mask_->end(),
                                                   [](std::uint8_t m) { return m != 0; }));
  }

  void clamp01() {
    for (double& v : samples_) v = std::clamp(v, 0.0, 1.0);
  }

  bool same_shape(const ImageF& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> samples_;
  std::optional<std::vector<std::uint8_t>> mask_;
};

inline void require_gray(const ImageF& img, const char* what) {
  if (img.channels() != 1) fail_data(std::string(what) + ": expected a single-channel image");
}

inline void require_same_dims(const ImageF& a, const ImageF& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    fail_data(std::string(what) + ": dimension mismatch");
}

/// Pixels valid in both images.
inline std::vector<std::uint8_t> joint_mask(const ImageF& a, const ImageF& b) {
  std::vector<std::uint8_t> m(a.pixel_count(), 1);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (a.valid(i) && b.valid(i)) ? 1 : 0;
  return m;
}

inline ImageF flip_horizontal(const ImageF& img) {
  ImageF out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
  if (img.has_mask()) {
    std::vector<std::uint8_t> m(img.pixel_count());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        m[static_cast<std::size_t>(y) * img.width() + img.width() - 1 - x] = img.valid(x, y);
    out.set_mask(std::move(m));
  }
  return out;
}

inline ImageF transpose(const ImageF& img) {
  ImageF out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(x, y, c);
  if (img.has_mask()) {
    std::vector<std::uint8_t> m(img.pixel_count());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        m[static_cast<std::size_t>(x) * img.height() + y] = img.valid(x, y);
    out.set_mask(std::move(m));
  }
  return out;
}

/// Rotates a quarter turn counter-clockwise: out(y, W-1-x) = in(x, y).
inline ImageF rotate90(const ImageF& img) {
  ImageF out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, img.width() - 1 - x, c) = img.at(x, y, c);
  return out;
}

inline ImageF crop(const ImageF& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > img.width() || y0 + h > img.height())
    fail_data("crop window outside image");
  ImageF out(w, h, img.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
  if (img.has_mask()) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m[static_cast<std::size_t>(y) * w + x] = img.valid(x0 + x, y0 + y);
    out.set_mask(std::move(m));
  }
  return out;
}

/// Pads on the right and bottom so the result is (w + padRight) x (h + padBottom).
inline ImageF pad_reflect(const ImageF& img, int padRight, int padBottom) {
  const int w = img.width() + padRight;
  const int h = img.height() + padBottom;
  ImageF out(w, h, img.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at_border(x, y, BorderMode::Reflect, c);
  return out;
}

/// Mean over valid pixels of a single-channel image.
inline double masked_mean(const ImageF& img) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!img.valid(i)) continue;
    sum += img.data()[i];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline std::pair<double, double> masked_min_max(const ImageF& img) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!img.valid(i)) continue;
    const double v = img.data()[i];
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return {lo, hi};
}

/// Separable kernel / filter description. Weights are row-major, applied as
/// correlation (no flip): out(x,y) = sum_k w(kx,ky) in(x + kx - cx, y + ky - cy).
struct KernelSpec {
  int width = 1;
  int height = 1;
  std::vector<double> weights{1.0};
  BorderMode border = BorderMode::Reflect;

  void validate() const {
    if (width <= 0 || height <= 0 || width % 2 == 0 || height % 2 == 0)
      fail_data("kernel dimensions must be odd and positive");
    if (weights.size() != static_cast<std::size_t>(width) * height)
      fail_data("kernel weight count does not match dimensions");
    for (double w : weights)
      if (!std::isfinite(w)) fail_data("kernel weights must be finite");
  }

  static KernelSpec box(int size, BorderMode border = BorderMode::Reflect) {
    const double w = 1.0 / (static_cast<double>(size) * size);
    return KernelSpec{size, size, std::vector<double>(static_cast<std::size_t>(size) * size, w), border};
  }
};

inline ImageF convolve2d(const ImageF& img, const KernelSpec& k) {
  require_gray(img, "convolve2d");
  k.validate();
  const int cx = k.width / 2;
  const int cy = k.height / 2;
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < k.height; ++ky)
        for (int kx = 0; kx < k.width; ++kx)
          acc += k.weights[static_cast<std::size_t>(ky) * k.width + kx] *
                 img.at_border(x + kx - cx, y + ky - cy, k.border);
      out.at(x, y) = acc;
    }
  }
  out.set_mask(img.mask());
  return out;
}

/// Separable filtering with a 1-D kernel applied along x then y.
inline ImageF convolve_separable(const ImageF& img, std::span<const double> kernel,
                                 BorderMode border = BorderMode::Reflect) {
  require_gray(img, "convolve_separable");
  const int r = static_cast<int>(kernel.size()) / 2;
  ImageF tmp(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += kernel[k + r] * img.at_border(x + k, y, border);
      tmp.at(x, y) = acc;
    }
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += kernel[k + r] * tmp.at_border(x, y + k, border);
      out.at(x, y) = acc;
    }
  out.set_mask(img.mask());
  return out;
}

/// Normalized 1-D Gaussian of the given radius.
inline std::vector<double> gaussian_kernel1d(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[i + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

inline ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (!(sigma > 0.0)) fail_data("gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const auto k = gaussian_kernel1d(sigma, radius);
  return convolve_separable(img, k);
}

}  // namespace sonardn
