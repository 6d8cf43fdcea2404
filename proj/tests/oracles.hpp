#pragma once
// Brute-force reference implementations shared by the tests. They work on
// plain vectors and never call into the library's kernels.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "polypseg/tensor.hpp"

namespace oracle {

struct Dims {
  std::size_t n, c, h, w;
  std::size_t numel() const { return n * c * h * w; }
  std::size_t at(std::size_t in, std::size_t ic, std::size_t y, std::size_t x) const {
    return ((in * c + ic) * h + y) * w + x;
  }
};

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <class T = double>
polypseg::Tensor<T> random_tensor(const polypseg::Shape& shape, std::uint64_t seed, double lo = -1.0,
                                  double hi = 1.0, bool requires_grad = false) {
  auto v = random_values(shape.numel(), seed, lo, hi);
  return polypseg::Tensor<T>::from(shape, std::vector<T>(v.begin(), v.end()), requires_grad);
}

// Zero padding before the first row for "same" convolution: the total
// padding needed to produce ceil(in / stride) outputs, with the odd unit
// going after the last row.
inline std::ptrdiff_t same_pad_before(std::size_t in, std::size_t k, std::size_t stride, std::size_t dilation) {
  const std::ptrdiff_t out = static_cast<std::ptrdiff_t>((in + stride - 1) / stride);
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>((k - 1) * dilation + 1);
  const std::ptrdiff_t total = std::max<std::ptrdiff_t>(0, (out - 1) * static_cast<std::ptrdiff_t>(stride) + span -
                                                               static_cast<std::ptrdiff_t>(in));
  return total / 2;
}

struct ConvResult {
  Dims dims;
  std::vector<double> values;
};

// Direct grouped, strided, dilated convolution with zero padding.
// weight layout (C_out, C_in / groups, kh, kw); pad < 0 selects "same".
inline ConvResult direct_conv(const std::vector<double>& in, Dims d, const std::vector<double>& weight,
                              std::size_t c_out, std::size_t kh, std::size_t kw, const std::vector<double>& bias,
                              std::size_t stride = 1, std::size_t dilation = 1, std::size_t groups = 1,
                              std::ptrdiff_t pad = -1) {
  std::ptrdiff_t pt, pl;
  std::size_t oh, ow;
  if (pad < 0) {
    pt = same_pad_before(d.h, kh, stride, dilation);
    pl = same_pad_before(d.w, kw, stride, dilation);
    oh = (d.h + stride - 1) / stride;
    ow = (d.w + stride - 1) / stride;
  } else {
    pt = pl = pad;
    oh = (d.h + 2 * pad - (kh - 1) * dilation - 1) / stride + 1;
    ow = (d.w + 2 * pad - (kw - 1) * dilation - 1) / stride + 1;
  }
  const std::size_t cin_g = d.c / groups, cout_g = c_out / groups;
  Dims od{d.n, c_out, oh, ow};
  std::vector<double> out(od.numel(), 0.0);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t co = 0; co < c_out; ++co) {
      const std::size_t g = co / cout_g;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky * dilation) - pt;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx * dilation) - pl;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(d.h) ||
                    ix >= static_cast<std::ptrdiff_t>(d.w))
                  continue;
                acc += weight[((co * cin_g + ci) * kh + ky) * kw + kx] *
                       in[d.at(n, g * cin_g + ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix))];
              }
          out[od.at(n, co, oy, ox)] = acc;
        }
    }
  return {od, out};
}

// Kernel (C_out, C_in_g, kh, kw) dilated by inserting d-1 zeros between taps.
inline std::vector<double> zero_inflate(const std::vector<double>& w, std::size_t c_out, std::size_t cin_g,
                                        std::size_t kh, std::size_t kw, std::size_t d, std::size_t& ekh,
                                        std::size_t& ekw) {
  ekh = (kh - 1) * d + 1;
  ekw = (kw - 1) * d + 1;
  std::vector<double> out(c_out * cin_g * ekh * ekw, 0.0);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t i = 0; i < cin_g; ++i)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x)
          out[((o * cin_g + i) * ekh + y * d) * ekw + x * d] = w[((o * cin_g + i) * kh + y) * kw + x];
  return out;
}

// align_corners = false bilinear sample position for output index o.
inline double bilinear_source(std::size_t o, std::size_t in, std::size_t out) {
  const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::max(0.0, s);
}

inline double bilinear_at(const std::vector<double>& plane, std::size_t h, std::size_t w, double sy, double sx) {
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(h - 1, y0 + 1), x1 = std::min(w - 1, x0 + 1);
  const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * plane[y0 * w + x0] + fx * plane[y0 * w + x1]) +
         fy * ((1 - fx) * plane[y1 * w + x0] + fx * plane[y1 * w + x1]);
}

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <class T>
std::vector<double> to_vec(const polypseg::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace oracle
