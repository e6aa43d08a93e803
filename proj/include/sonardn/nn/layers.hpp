#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace sonardn::nn {

/// Channel-major (C, H, W) activation tensor.
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0)
      : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  double& at(int ch, int y, int x) { return v[ch * plane() + static_cast<std::size_t>(y) * w + x]; }
  double at(int ch, int y, int x) const { return v[ch * plane() + static_cast<std::size_t>(y) * w + x]; }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

/// Square same-size convolution with zero padding. Weights are laid out
/// (cout, cin, k, k) followed by cout biases.
struct ConvShape {
  int cin = 1;
  int cout = 1;
  int k = 3;
  std::size_t offset = 0;  // into the flat parameter vector

  std::size_t weight_count() const noexcept { return static_cast<std::size_t>(cout) * cin * k * k; }
  std::size_t param_count() const noexcept { return weight_count() + cout; }
};

/// Column buffer: row (ci, ky, kx), column pixel.
inline void im2col(const Tensor& in, int k, RowMatrix& col) {
  const int r = k / 2;
  const std::size_t hw = in.plane();
  col.resize(static_cast<Eigen::Index>(in.c) * k * k, static_cast<Eigen::Index>(hw));
  for (int ci = 0; ci < in.c; ++ci) {
    const double* src = in.v.data() + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - r, dx = kx - r;
        for (int y = 0; y < in.h; ++y) {
          const int sy = y + dy;
          double* row = dst + static_cast<std::size_t>(y) * in.w;
          if (sy < 0 || sy >= in.h) {
            std::fill(row, row + in.w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(sy) * in.w;
          const int x0 = std::max(0, -dx), x1 = std::min(in.w, in.w - dx);
          std::fill(row, row + std::max(0, x0), 0.0);
          for (int x = x0; x < x1; ++x) row[x] = srow[x + dx];
          if (x1 < in.w) std::fill(row + std::max(x1, 0), row + in.w, 0.0);
        }
      }
    }
  }
}

/// Scatter-add of a column buffer back into an input-shaped gradient.
inline void col2im(const RowMatrix& col, int k, Tensor& grad) {
  const int r = k / 2;
  const std::size_t hw = grad.plane();
  for (int ci = 0; ci < grad.c; ++ci) {
    double* dst = grad.v.data() + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - r, dx = kx - r;
        for (int y = 0; y < grad.h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= grad.h) continue;
          const double* row = src + static_cast<std::size_t>(y) * grad.w;
          double* drow = dst + static_cast<std::size_t>(sy) * grad.w;
          const int x0 = std::max(0, -dx), x1 = std::min(grad.w, grad.w - dx);
          for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
        }
      }
    }
  }
}

inline Tensor conv_forward(const Tensor& in, const ConvShape& s, std::span<const double> params) {
  RowMatrix col;
  im2col(in, s.k, col);
  ConstRowMap weights(params.data() + s.offset, s.cout, static_cast<Eigen::Index>(s.cin) * s.k * s.k);
  Tensor out(s.cout, in.h, in.w);
  RowMap o(out.v.data(), s.cout, static_cast<Eigen::Index>(out.plane()));
  o.noalias() = weights * col;
  const double* bias = params.data() + s.offset + s.weight_count();
  for (int co = 0; co < s.cout; ++co) o.row(co).array() += bias[co];
  return out;
}

/// Accumulates weight/bias gradients into `grads`; returns the input gradient
/// when requested (an empty tensor otherwise).
inline Tensor conv_backward(const Tensor& in, const Tensor& dout, const ConvShape& s, std::span<const double> params,
                            std::span<double> grads, bool needInputGrad) {
  RowMatrix col;
  im2col(in, s.k, col);
  ConstRowMap g(dout.v.data(), s.cout, static_cast<Eigen::Index>(dout.plane()));
  RowMap dw(grads.data() + s.offset, s.cout, static_cast<Eigen::Index>(s.cin) * s.k * s.k);
  dw.noalias() += g * col.transpose();
  double* db = grads.data() + s.offset + s.weight_count();
  // Fixed-order sum: bitwise reproducible regardless of buffer alignment.
  const std::size_t hw = dout.plane();
  for (int co = 0; co < s.cout; ++co) {
    const double* row = dout.v.data() + co * hw;
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += row[i];
    db[co] += acc;
  }
  if (!needInputGrad) return {};
  ConstRowMap weights(params.data() + s.offset, s.cout, static_cast<Eigen::Index>(s.cin) * s.k * s.k);
  RowMatrix dcol = weights.transpose() * g;
  Tensor din(in.c, in.h, in.w);
  col2im(dcol, s.k, din);
  return din;
}

inline constexpr double kLeakySlope = 0.1;

inline void leaky_relu_inplace(Tensor& t) {
  for (double& x : t.v)
    if (x < 0.0) x *= kLeakySlope;
}

/// Backward through leaky ReLU using its output (sign is preserved).
inline void leaky_relu_backward(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.v.size(); ++i)
    if (out.v[i] < 0.0) grad.v[i] *= kLeakySlope;
}

inline Tensor avg_pool2(const Tensor& in) {
  Tensor out(in.c, in.h / 2, in.w / 2);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x)
        out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) + in.at(c, 2 * y + 1, 2 * x) +
                                  in.at(c, 2 * y + 1, 2 * x + 1));
  return out;
}

inline Tensor avg_pool2_backward(const Tensor& dout, int h, int w) {
  Tensor din(dout.c, h, w);
  for (int c = 0; c < dout.c; ++c)
    for (int y = 0; y < dout.h; ++y)
      for (int x = 0; x < dout.w; ++x) {
        const double g = 0.25 * dout.at(c, y, x);
        din.at(c, 2 * y, 2 * x) = g;
        din.at(c, 2 * y, 2 * x + 1) = g;
        din.at(c, 2 * y + 1, 2 * x) = g;
        din.at(c, 2 * y + 1, 2 * x + 1) = g;
      }
  return din;
}

inline Tensor upsample2(const Tensor& in) {
  Tensor out(in.c, in.h * 2, in.w * 2);
  for (int c = 0; c < in.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
  return out;
}

inline Tensor upsample2_backward(const Tensor& dout) {
  Tensor din(dout.c, dout.h / 2, dout.w / 2);
  for (int c = 0; c < dout.c; ++c)
    for (int y = 0; y < dout.h; ++y)
      for (int x = 0; x < dout.w; ++x) din.at(c, y / 2, x / 2) += dout.at(c, y, x);
  return din;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

inline std::pair<Tensor, Tensor> split_channels(const Tensor& t, int firstChannels) {
  Tensor a(firstChannels, t.h, t.w), b(t.c - firstChannels, t.h, t.w);
  std::copy(t.v.begin(), t.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()), a.v.begin());
  std::copy(t.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()), t.v.end(), b.v.begin());
  return {std::move(a), std::move(b)};
}

inline void add_inplace(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace sonardn::nn
