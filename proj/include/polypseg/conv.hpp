#pragma once
// Convolution, pooling and bilinear resampling over NCHW tensors.

#include <limits>
#include <optional>
#include <variant>

#include <Eigen/Core>

#include "polypseg/tensor.hpp"

namespace polypseg {

struct SamePadding {};

/// Zero padding: `SamePadding` keeps ceil(H / stride) rows, splitting the
/// total symmetrically with the odd remainder at the bottom/right; an integer
/// pads every side by that amount.
using Padding = std::variant<SamePadding, std::size_t>;

struct ConvSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  Padding padding = SamePadding{};
  std::size_t groups = 1;

  static ConvSpec same(std::size_t kh, std::size_t kw, std::size_t dilation = 1, std::size_t stride = 1,
                       std::size_t groups = 1) {
    return ConvSpec{kh, kw, stride, dilation, SamePadding{}, groups};
  }
};

/// Output extent and leading pad along one spatial axis.
struct AxisGeometry {
  std::size_t in = 0, out = 0, kernel = 0, stride = 1, dilation = 1, pad_before = 0;
};

inline AxisGeometry axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride,
                                  std::size_t dilation, const Padding& padding) {
  AxisGeometry g{in, 0, kernel, stride, dilation, 0};
  const std::size_t effective = dilation * (kernel - 1) + 1;
  if (std::holds_alternative<SamePadding>(padding)) {
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + effective;
    const std::size_t total = needed > in ? needed - in : 0;
    g.pad_before = total / 2;
  } else {
    const std::size_t pad = std::get<std::size_t>(padding);
    if (in + 2 * pad < effective)
      throw DimensionError("conv2d: kernel extent " + std::to_string(effective) +
                           " exceeds padded input " + std::to_string(in + 2 * pad));
    g.out = (in + 2 * pad - effective) / stride + 1;
    g.pad_before = pad;
  }
  return g;
}

namespace detail {

struct ConvGeometry {
  std::size_t N, C_in, C_out, groups, cin_g, cout_g;
  AxisGeometry y, x;
  std::size_t in_plane() const { return y.in * x.in; }
  std::size_t out_plane() const { return y.out * x.out; }
  std::size_t patch() const { return cin_g * y.kernel * x.kernel; }
  bool is_pointwise() const {
    return y.kernel == 1 && x.kernel == 1 && y.stride == 1 && x.stride == 1 && y.pad_before == 0 &&
           x.pad_before == 0 && y.out == y.in && x.out == x.in;
  }
  bool is_depthwise() const { return groups == C_in && C_out == C_in && groups > 1; }
};

// For output index o, the input coordinate of tap k is o*stride - pad + k*dilation.
// Returns [lo, hi) of output indices for which that coordinate is in range.
inline std::pair<std::size_t, std::size_t> valid_range(const AxisGeometry& g, std::size_t k) {
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k * g.dilation) -
                             static_cast<std::ptrdiff_t>(g.pad_before);
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto in = static_cast<std::ptrdiff_t>(g.in);
  // Need 0 <= o*s + off < in.
  std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t hi = in - off <= 0 ? 0 : (in - off - 1) / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(g.out));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Unfolds one group of one image into a (patch × out_plane) column matrix.
template <Real T>
void im2col(const T* in, const ConvGeometry& g, T* cols) {
  const std::size_t P = g.out_plane();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const T* plane = in + c * g.in_plane();
    for (std::size_t ky = 0; ky < g.y.kernel; ++ky) {
      const auto [oy0, oy1] = valid_range(g.y, ky);
      for (std::size_t kx = 0; kx < g.x.kernel; ++kx, ++row) {
        const auto [ox0, ox1] = valid_range(g.x, kx);
        T* dst = cols + row * P;
        std::fill(dst, dst + P, T(0));
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::size_t iy = oy * g.y.stride + ky * g.y.dilation - g.y.pad_before;
          const T* src = plane + iy * g.x.in;
          T* d = dst + oy * g.x.out;
          for (std::size_t ox = ox0; ox < ox1; ++ox)
            d[ox] = src[ox * g.x.stride + kx * g.x.dilation - g.x.pad_before];
        }
      }
    }
  }
}

template <Real T>
void col2im(const T* cols, const ConvGeometry& g, T* in_grad) {
  const std::size_t P = g.out_plane();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    T* plane = in_grad + c * g.in_plane();
    for (std::size_t ky = 0; ky < g.y.kernel; ++ky) {
      const auto [oy0, oy1] = valid_range(g.y, ky);
      for (std::size_t kx = 0; kx < g.x.kernel; ++kx, ++row) {
        const auto [ox0, ox1] = valid_range(g.x, kx);
        const T* src = cols + row * P;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const std::size_t iy = oy * g.y.stride + ky * g.y.dilation - g.y.pad_before;
          T* dst = plane + iy * g.x.in;
          const T* s = src + oy * g.x.out;
          for (std::size_t ox = ox0; ox < ox1; ++ox)
            dst[ox * g.x.stride + kx * g.x.dilation - g.x.pad_before] += s[ox];
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation. weight is (C_out, C_in / groups, k_h, k_w).
template <Real T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 const ConvSpec& spec) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  require_rank4(input.shape(), "conv2d");
  require_rank4(weight.shape(), "conv2d weight");
  if (spec.stride < 1 || spec.dilation < 1 || spec.groups < 1)
    throw ConfigError("conv2d: stride, dilation and groups must be >= 1");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  if (ws.h() != spec.kernel_h || ws.w() != spec.kernel_w)
    throw DimensionError("conv2d: weight " + ws.str() + " disagrees with kernel " +
                         std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w));
  if (is.c() % spec.groups != 0 || ws.n() % spec.groups != 0)
    throw DimensionError("conv2d: channels not divisible by groups");
  if (ws.c() != is.c() / spec.groups)
    throw DimensionError("conv2d: input " + is.str() + " does not match weight " + ws.str());
  if (bias && bias->numel() != ws.n()) throw DimensionError("conv2d: bias length mismatch");

  detail::ConvGeometry g{is.n(),
                         is.c(),
                         ws.n(),
                         spec.groups,
                         is.c() / spec.groups,
                         ws.n() / spec.groups,
                         axis_geometry(is.h(), spec.kernel_h, spec.stride, spec.dilation, spec.padding),
                         axis_geometry(is.w(), spec.kernel_w, spec.stride, spec.dilation, spec.padding)};
  const std::size_t P = g.out_plane(), K = g.patch();
  std::vector<T> out(g.N * g.C_out * P, T(0));
  const T* X = input.data().data();
  const T* Wt = weight.data().data();

  if (g.is_depthwise()) {
    for (std::size_t n = 0; n < g.N; ++n)
      for (std::size_t c = 0; c < g.C_in; ++c) {
        const T* plane = X + (n * g.C_in + c) * g.in_plane();
        T* dst = out.data() + (n * g.C_out + c) * P;
        const T* kern = Wt + c * K;
        for (std::size_t ky = 0; ky < g.y.kernel; ++ky) {
          const auto [oy0, oy1] = detail::valid_range(g.y, ky);
          for (std::size_t kx = 0; kx < g.x.kernel; ++kx) {
            const auto [ox0, ox1] = detail::valid_range(g.x, kx);
            const T wv = kern[ky * g.x.kernel + kx];
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              // Unsigned wrap-around in `off` cancels once ox * stride is added.
              const std::size_t off = (oy * g.y.stride + ky * g.y.dilation - g.y.pad_before) * g.x.in +
                                      kx * g.x.dilation - g.x.pad_before;
              T* d = dst + oy * g.x.out;
              for (std::size_t ox = ox0; ox < ox1; ++ox) d[ox] += wv * plane[off + ox * g.x.stride];
            }
          }
        }
      }
  } else {
    std::vector<T> cols(g.is_pointwise() ? 0 : K * P);
    for (std::size_t n = 0; n < g.N; ++n)
      for (std::size_t gr = 0; gr < g.groups; ++gr) {
        const T* in_g = X + (n * g.C_in + gr * g.cin_g) * g.in_plane();
        const T* colp = in_g;
        if (!cols.empty()) {
          detail::im2col(in_g, g, cols.data());
          colp = cols.data();
        }
        Eigen::Map<const Mat> Wm(Wt + gr * g.cout_g * K, g.cout_g, K);
        Eigen::Map<const Mat> Cm(colp, K, P);
        Eigen::Map<Mat> Om(out.data() + (n * g.C_out + gr * g.cout_g) * P, g.cout_g, P);
        Om.noalias() = Wm * Cm;
      }
  }
  if (bias)
    for (std::size_t n = 0; n < g.N; ++n)
      for (std::size_t co = 0; co < g.C_out; ++co) {
        const T b = (*bias)[co];
        T* d = out.data() + (n * g.C_out + co) * P;
        for (std::size_t i = 0; i < P; ++i) d[i] += b;
      }

  auto *xn = input.node(), *wn = weight.node();
  detail::Node<T>* bn = bias ? bias->node() : nullptr;
  std::vector<Tensor<T>> parents{input, weight};
  if (bias) parents.push_back(*bias);
  return make_result<T>(
      Shape{g.N, g.C_out, g.y.out, g.x.out}, std::move(out), "conv2d", parents,
      [=](std::span<const T> grad) {
        T* gx = grad_sink(xn);
        T* gw = grad_sink(wn);
        const T* Xv = xn->value.data();
        const T* Wv = wn->value.data();
        if (bn)
          if (T* gb = grad_sink(bn))
            for (std::size_t n = 0; n < g.N; ++n)
              for (std::size_t co = 0; co < g.C_out; ++co) {
                const T* gp = grad.data() + (n * g.C_out + co) * P;
                T acc = 0;
                for (std::size_t i = 0; i < P; ++i) acc += gp[i];
                gb[co] += acc;
              }
        if (!gx && !gw) return;
        if (g.is_depthwise()) {
          for (std::size_t n = 0; n < g.N; ++n)
            for (std::size_t c = 0; c < g.C_in; ++c) {
              const T* plane = Xv + (n * g.C_in + c) * g.in_plane();
              T* gplane = gx ? gx + (n * g.C_in + c) * g.in_plane() : nullptr;
              const T* gp = grad.data() + (n * g.C_out + c) * P;
              for (std::size_t ky = 0; ky < g.y.kernel; ++ky) {
                const auto [oy0, oy1] = detail::valid_range(g.y, ky);
                for (std::size_t kx = 0; kx < g.x.kernel; ++kx) {
                  const auto [ox0, ox1] = detail::valid_range(g.x, kx);
                  const std::size_t tap = c * K + ky * g.x.kernel + kx;
                  const T wv = Wv[tap];
                  T acc = 0;
                  for (std::size_t oy = oy0; oy < oy1; ++oy) {
                    const std::size_t off = (oy * g.y.stride + ky * g.y.dilation - g.y.pad_before) * g.x.in +
                                            kx * g.x.dilation - g.x.pad_before;
                    const T* gr = gp + oy * g.x.out;
                    for (std::size_t ox = ox0; ox < ox1; ++ox) {
                      acc += gr[ox] * plane[off + ox * g.x.stride];
                      if (gplane) gplane[off + ox * g.x.stride] += wv * gr[ox];
                    }
                  }
                  if (gw) gw[tap] += acc;
                }
              }
            }
          return;
        }
        const bool pointwise = g.is_pointwise();
        std::vector<T> cols(pointwise ? 0 : K * P);
        std::vector<T> dcols(gx && !pointwise ? K * P : 0);
        for (std::size_t n = 0; n < g.N; ++n)
          for (std::size_t gr = 0; gr < g.groups; ++gr) {
            const T* in_g = Xv + (n * g.C_in + gr * g.cin_g) * g.in_plane();
            Eigen::Map<const Mat> G(grad.data() + (n * g.C_out + gr * g.cout_g) * P, g.cout_g, P);
            if (gw) {
              const T* colp = in_g;
              if (!pointwise) {
                detail::im2col(in_g, g, cols.data());
                colp = cols.data();
              }
              Eigen::Map<const Mat> Cm(colp, K, P);
              Eigen::Map<Mat>(gw + gr * g.cout_g * K, g.cout_g, K).noalias() += G * Cm.transpose();
            }
            if (gx) {
              Eigen::Map<const Mat> Wm(Wv + gr * g.cout_g * K, g.cout_g, K);
              T* gin = gx + (n * g.C_in + gr * g.cin_g) * g.in_plane();
              if (pointwise) {
                Eigen::Map<Mat>(gin, K, P).noalias() += Wm.transpose() * G;
              } else {
                Eigen::Map<Mat>(dcols.data(), K, P).noalias() = Wm.transpose() * G;
                detail::col2im(dcols.data(), g, gin);
              }
            }
          }
      });
}

enum class PoolKind { avg, max };

/// Windowed pooling without padding.
template <Real T>
Tensor<T> pool2d(const Tensor<T>& input, PoolKind kind, std::size_t window, std::size_t stride) {
  require_rank4(input.shape(), "pool2d");
  if (window < 1 || stride < 1) throw ConfigError("pool2d: window and stride must be >= 1");
  const auto& s = input.shape();
  if (window > s.h() || window > s.w())
    throw DimensionError("pool2d: window " + std::to_string(window) + " exceeds spatial extent of " +
                         s.str());
  const std::size_t N = s.n(), C = s.c(), H = s.h(), W = s.w();
  const std::size_t Ho = (H - window) / stride + 1, Wo = (W - window) / stride + 1;
  std::vector<T> out(N * C * Ho * Wo);
  std::vector<std::size_t> argmax(kind == PoolKind::max ? out.size() : 0);
  const T* X = input.data().data();
  const T inv = T(1) / static_cast<T>(window * window);
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const std::size_t o = (nc * Ho + oy) * Wo + ox;
        if (kind == PoolKind::max) {
          std::size_t best = nc * H * W + oy * stride * W + ox * stride;
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t i = nc * H * W + (oy * stride + ky) * W + ox * stride + kx;
              if (X[i] > X[best]) best = i;
            }
          argmax[o] = best;
          out[o] = X[best];
        } else {
          T acc = 0;
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx)
              acc += X[nc * H * W + (oy * stride + ky) * W + ox * stride + kx];
          out[o] = acc * inv;
        }
      }
  auto* xn = input.node();
  return make_result<T>(
      Shape{N, C, Ho, Wo}, std::move(out), kind == PoolKind::max ? "max_pool2d" : "avg_pool2d", {input},
      [=, argmax = std::move(argmax)](std::span<const T> g) {
        T* gx = grad_sink(xn);
        if (!gx) return;
        if (kind == PoolKind::max) {
          for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
          return;
        }
        for (std::size_t nc = 0; nc < N * C; ++nc)
          for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const T v = g[(nc * Ho + oy) * Wo + ox] * inv;
              for (std::size_t ky = 0; ky < window; ++ky)
                for (std::size_t kx = 0; kx < window; ++kx)
                  gx[nc * H * W + (oy * stride + ky) * W + ox * stride + kx] += v;
            }
      });
}

/// Per-channel spatial mean or max, shape (N, C, 1, 1).
template <Real T>
Tensor<T> global_pool(const Tensor<T>& input, PoolKind kind) {
  require_rank4(input.shape(), "global_pool");
  const auto& s = input.shape();
  const std::size_t NC = s.n() * s.c(), HW = s.h() * s.w();
  std::vector<T> out(NC);
  std::vector<std::size_t> argmax(kind == PoolKind::max ? NC : 0);
  const T* X = input.data().data();
  std::vector<T> sorted;
  for (std::size_t i = 0; i < NC; ++i) {
    const T* p = X + i * HW;
    if (kind == PoolKind::max) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < HW; ++j)
        if (p[j] > p[best]) best = j;
      argmax[i] = best;
      out[i] = p[best];
    } else {
      // Summing in sorted order makes the mean independent of pixel order.
      sorted.assign(p, p + HW);
      std::sort(sorted.begin(), sorted.end());
      T acc = 0;
      for (T v : sorted) acc += v;
      out[i] = acc / static_cast<T>(HW);
    }
  }
  auto* xn = input.node();
  return make_result<T>(Shape{s.n(), s.c(), 1, 1}, std::move(out),
                        kind == PoolKind::max ? "global_max_pool" : "global_avg_pool", {input},
                        [=, argmax = std::move(argmax)](std::span<const T> g) {
                          T* gx = grad_sink(xn);
                          if (!gx) return;
                          for (std::size_t i = 0; i < NC; ++i) {
                            if (kind == PoolKind::max) {
                              gx[i * HW + argmax[i]] += g[i];
                            } else {
                              const T v = g[i] / static_cast<T>(HW);
                              for (std::size_t j = 0; j < HW; ++j) gx[i * HW + j] += v;
                            }
                          }
                        });
}

/// Per-pixel mean or max across channels, shape (N, 1, H, W).
template <Real T>
Tensor<T> channel_pool(const Tensor<T>& input, PoolKind kind) {
  require_rank4(input.shape(), "channel_pool");
  const auto& s = input.shape();
  const std::size_t N = s.n(), C = s.c(), HW = s.h() * s.w();
  std::vector<T> out(N * HW);
  std::vector<std::uint32_t> argmax(kind == PoolKind::max ? N * HW : 0);
  const T* X = input.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < HW; ++p) {
      const T* base = X + n * C * HW + p;
      if (kind == PoolKind::max) {
        std::uint32_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (base[c * HW] > base[best * HW]) best = static_cast<std::uint32_t>(c);
        argmax[n * HW + p] = best;
        out[n * HW + p] = base[best * HW];
      } else {
        T acc = 0;
        for (std::size_t c = 0; c < C; ++c) acc += base[c * HW];
        out[n * HW + p] = acc / static_cast<T>(C);
      }
    }
  auto* xn = input.node();
  return make_result<T>(Shape{N, 1, s.h(), s.w()}, std::move(out),
                        kind == PoolKind::max ? "channel_max_pool" : "channel_avg_pool", {input},
                        [=, argmax = std::move(argmax)](std::span<const T> g) {
                          T* gx = grad_sink(xn);
                          if (!gx) return;
                          for (std::size_t n = 0; n < N; ++n)
                            for (std::size_t p = 0; p < HW; ++p) {
                              T* base = gx + n * C * HW + p;
                              const T v = g[n * HW + p];
                              if (kind == PoolKind::max) {
                                base[argmax[n * HW + p] * HW] += v;
                              } else {
                                for (std::size_t c = 0; c < C; ++c) base[c * HW] += v / static_cast<T>(C);
                              }
                            }
                        });
}

/// Source taps of one output row/column under the half-pixel
/// (align_corners = false) convention.
struct BilinearTap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<BilinearTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
  }
  return taps;
}

/// Bilinear resampling to (out_h, out_w).
template <Real T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_rank4(input.shape(), "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: empty output");
  const auto& s = input.shape();
  const std::size_t NC = s.n() * s.c(), H = s.h(), W = s.w();
  auto ty = bilinear_taps(H, out_h);
  auto tx = bilinear_taps(W, out_w);
  std::vector<T> out(NC * out_h * out_w);
  const T* X = input.data().data();
  for (std::size_t nc = 0; nc < NC; ++nc) {
    const T* p = X + nc * H * W;
    T* d = out.data() + nc * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
        d[oy * out_w + ox] = wy0 * (wx0 * p[a.i0 * W + b.i0] + wx1 * p[a.i0 * W + b.i1]) +
                             wy1 * (wx0 * p[a.i1 * W + b.i0] + wx1 * p[a.i1 * W + b.i1]);
      }
    }
  }
  auto* xn = input.node();
  return make_result<T>(Shape{s.n(), s.c(), out_h, out_w}, std::move(out), "resize_bilinear", {input},
                        [=, ty = std::move(ty), tx = std::move(tx)](std::span<const T> g) {
                          T* gx = grad_sink(xn);
                          if (!gx) return;
                          for (std::size_t nc = 0; nc < NC; ++nc) {
                            T* p = gx + nc * H * W;
                            const T* gp = g.data() + nc * out_h * out_w;
                            for (std::size_t oy = 0; oy < out_h; ++oy) {
                              const auto& a = ty[oy];
                              const T wy1 = static_cast<T>(a.w1), wy0 = T(1) - wy1;
                              for (std::size_t ox = 0; ox < out_w; ++ox) {
                                const auto& b = tx[ox];
                                const T wx1 = static_cast<T>(b.w1), wx0 = T(1) - wx1;
                                const T v = gp[oy * out_w + ox];
                                p[a.i0 * W + b.i0] += v * wy0 * wx0;
                                p[a.i0 * W + b.i1] += v * wy0 * wx1;
                                p[a.i1 * W + b.i0] += v * wy1 * wx0;
                                p[a.i1 * W + b.i1] += v * wy1 * wx1;
                              }
                            }
                          }
                        });
}

template <Real T>
Tensor<T> upsample_bilinear(const Tensor<T>& input, std::size_t scale) {
  if (scale < 1) throw ConfigError("upsample_bilinear: scale must be >= 1");
  require_rank4(input.shape(), "upsample_bilinear");
  return resize_bilinear(input, input.shape().h() * scale, input.shape().w() * scale);
}

}  // namespace polypseg
