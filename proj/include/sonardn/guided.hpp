#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "sonardn/error.hpp"
#include "sonardn/gradient.hpp"
#include "sonardn/image.hpp"

namespace sonardn {

struct GuidedParams {
  int radiusDetail = 4;
  double epsDetail = 1e-4;
  int radiusMask = 8;
  double epsMask = 1e-3;

  void validate() const {
    if (radiusDetail < 0 || radiusMask < 0) fail_usage("guided filter radius must be >= 0");
    if (!(epsDetail > 0.0) || !(epsMask > 0.0)) fail_usage("guided filter eps must be > 0");
  }
};

namespace detail {

/// Sum over the (2r+1)^2 window clipped to the image, computed separably by
/// direct accumulation so r = 0 returns the input bit-for-bit.
inline std::vector<double> box_sum(const std::vector<double>& v, int w, int h, int r) {
  std::vector<double> tmp(v.size()), out(v.size());
  for (int y = 0; y < h; ++y) {
    const double* row = v.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) acc += row[xx];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
        acc += tmp[static_cast<std::size_t>(yy) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Edge-preserving guided filter of p steered by I, with box windows of
/// radius r clipped at the border. Pixels invalid in either image are left
/// out of every window statistic; windows with no valid pixel are skipped.
inline ImageF guided_filter(const ImageF& p, const ImageF& I, int r, double eps) {
  require_gray(p, "guided_filter");
  require_gray(I, "guided_filter");
  require_same_dims(p, I, "guided_filter");
  if (r < 0) fail_usage("guided_filter: radius must be >= 0");
  if (!(eps > 0.0)) fail_usage("guided_filter: eps must be > 0");
  const int w = p.width(), h = p.height();
  const std::size_t n = p.pixel_count();

  std::vector<double> cnt(n), sI(n), sP(n), sII(n), sIP(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!p.valid(i) || !I.valid(i)) continue;
    const double iv = I.data()[i], pv = p.data()[i];
    cnt[i] = 1.0;
    sI[i] = iv;
    sP[i] = pv;
    sII[i] = iv * iv;
    sIP[i] = iv * pv;
  }
  cnt = detail::box_sum(cnt, w, h, r);
  sI = detail::box_sum(sI, w, h, r);
  sP = detail::box_sum(sP, w, h, r);
  sII = detail::box_sum(sII, w, h, r);
  sIP = detail::box_sum(sIP, w, h, r);

  std::vector<double> a(n, 0.0), b(n, 0.0), live(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (cnt[k] == 0.0) continue;
    const double mI = sI[k] / cnt[k], mP = sP[k] / cnt[k];
    const double var = std::max(0.0, sII[k] / cnt[k] - mI * mI);
    const double cov = sIP[k] / cnt[k] - mI * mP;
    a[k] = cov / (var + eps);
    b[k] = mP - a[k] * mI;
    live[k] = 1.0;
  }
  const auto sa = detail::box_sum(a, w, h, r);
  const auto sb = detail::box_sum(b, w, h, r);
  const auto sl = detail::box_sum(live, w, h, r);

  ImageF q(w, h);
  for (std::size_t i = 0; i < n; ++i)
    q.data()[i] = sl[i] > 0.0 ? (sa[i] / sl[i]) * I.data()[i] + sb[i] / sl[i] : p.data()[i];
  q.set_mask(p.mask());
  return q;
}

struct RefineResult {
  ImageF output;
  ImageF alpha;
  ImageF detail;
  std::vector<std::uint8_t> saliency;
};

/// Second stage: transfers raw detail through a guided filter, but only where
/// the denoised guide is salient, blending with a feathered saliency matte.
inline RefineResult refine_detailed(const ImageF& pRaw, const ImageF& iDenoised, const GuidedParams& params) {
  require_gray(pRaw, "refine");
  require_gray(iDenoised, "refine");
  require_same_dims(pRaw, iDenoised, "refine");
  params.validate();
  const auto sal = gradient_saliency(iDenoised);
  ImageF m(iDenoised.width(), iDenoised.height());
  for (std::size_t i = 0; i < m.pixel_count(); ++i) m.data()[i] = sal.mask[i] ? 1.0 : 0.0;
  m.set_mask(iDenoised.mask());

  RefineResult res;
  res.saliency = sal.mask;
  res.alpha = guided_filter(m, iDenoised, params.radiusMask, params.epsMask);
  res.alpha.clamp01();
  res.detail = guided_filter(pRaw, iDenoised, params.radiusDetail, params.epsDetail);
  res.output = ImageF(pRaw.width(), pRaw.height());
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    const double al = res.alpha.data()[i];
    res.output.data()[i] = std::clamp(al * res.detail.data()[i] + (1.0 - al) * iDenoised.data()[i], 0.0, 1.0);
  }
  res.output.set_mask(pRaw.has_mask() ? pRaw.mask() : iDenoised.mask());
  return res;
}

inline ImageF refine(const ImageF& pRaw, const ImageF& iDenoised, const GuidedParams& params = {}) {
  return refine_detailed(pRaw, iDenoised, params).output;
}

}  // namespace sonardn
