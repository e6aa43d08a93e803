#pragma once

#include <random>

#include "sonardn/error.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

/// Composable noise layers, applied per pixel in the order speckle,
/// additive Gaussian, impulse clutter.
struct NoiseSpec {
  double gaussianSigma = 0.0;   // additive N(0, sigma^2)
  double impulseDensity = 0.0;  // probability a pixel becomes a bright clutter point
  double speckleSigma = 0.0;    // multiplicative (1 + N(0, sigma^2))

  void validate() const {
    if (gaussianSigma < 0.0 || impulseDensity < 0.0 || speckleSigma < 0.0)
      fail_usage("noise parameters must be non-negative");
    if (impulseDensity > 1.0) fail_usage("impulse density must be <= 1");
  }
};

inline ImageF add_synthetic_noise(const ImageF& img, const NoiseSpec& spec, std::uint64_t seed) {
  spec.validate();
  ImageF out = img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (double& v : out.data()) {
    if (spec.speckleSigma > 0.0) v *= 1.0 + spec.speckleSigma * normal(rng);
    if (spec.gaussianSigma > 0.0) v += spec.gaussianSigma * normal(rng);
    if (spec.impulseDensity > 0.0 && uniform(rng) < spec.impulseDensity) v = 1.0;
  }
  out.clamp01();
  return out;
}

}  // namespace sonardn
