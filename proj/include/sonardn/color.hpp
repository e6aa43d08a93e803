#pragma once

#include <algorithm>
#include <cmath>

#include "sonardn/image.hpp"

namespace sonardn {

/// sRGB gamma expansion of one component in [0,1].
inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

/// CIE L* (0..100) from relative luminance Y with a D65 white of Y = 1.
inline double lab_lightness(double y) {
  constexpr double delta = 6.0 / 29.0;
  const double f = y > delta * delta * delta ? std::cbrt(y) : y / (3.0 * delta * delta) + 4.0 / 29.0;
  return 116.0 * f - 16.0;
}

/// Lightness channel of CIE L*a*b* scaled to [0,1]. Gray input is copied as is.
inline ImageF to_luminance(const ImageF& img) {
  if (img.channels() == 1) return img;
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double r = srgb_to_linear(img.at(x, y, 0));
      const double g = srgb_to_linear(img.at(x, y, 1));
      const double b = srgb_to_linear(img.at(x, y, 2));
      const double lum = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
      out.at(x, y) = std::clamp(lab_lightness(lum) / 100.0, 0.0, 1.0);
    }
  }
  out.set_mask(img.mask());
  return out;
}

}  // namespace sonardn
