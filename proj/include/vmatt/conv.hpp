#pragma once

#include <Eigen/Dense>

#include "vmatt/ops.hpp"

namespace vmatt {

struct ConvSpec {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

namespace detail {

inline int conv_out_extent(int in, int k, int stride, int pad, int dil) {
  const int eff = dil * (k - 1) + 1;
  const int out = (in + 2 * pad - eff) / stride + 1;
  check_shape(out >= 1, "conv2d: kernel does not fit input extent " + std::to_string(in));
  return out;
}

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Gathers conv patches of one sample/group into a (Cg*kh*kw) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* src, int Cg, int H, int W, int kh, int kw, const ConvSpec& cs,
            int Ho, int Wo, T* col) {
  const std::int64_t owo = static_cast<std::int64_t>(Ho) * Wo;
  for (int c = 0; c < Cg; ++c) {
    const T* plane = src + static_cast<std::int64_t>(c) * H * W;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) * owo;
        for (int oi = 0; oi < Ho; ++oi) {
          const int ii = oi * cs.stride - cs.padding + ki * cs.dilation;
          T* out = row + static_cast<std::int64_t>(oi) * Wo;
          if (ii < 0 || ii >= H) {
            std::fill(out, out + Wo, T(0));
            continue;
          }
          for (int oj = 0; oj < Wo; ++oj) {
            const int jj = oj * cs.stride - cs.padding + kj * cs.dilation;
            out[oj] = (jj < 0 || jj >= W) ? T(0) : plane[static_cast<std::int64_t>(ii) * W + jj];
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back onto the input plane (transpose of im2col).
template <typename T>
void col2im_add(const T* col, int Cg, int H, int W, int kh, int kw, const ConvSpec& cs,
                int Ho, int Wo, T* dst) {
  const std::int64_t owo = static_cast<std::int64_t>(Ho) * Wo;
  for (int c = 0; c < Cg; ++c) {
    T* plane = dst + static_cast<std::int64_t>(c) * H * W;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) * owo;
        for (int oi = 0; oi < Ho; ++oi) {
          const int ii = oi * cs.stride - cs.padding + ki * cs.dilation;
          if (ii < 0 || ii >= H) continue;
          const T* in = row + static_cast<std::int64_t>(oi) * Wo;
          for (int oj = 0; oj < Wo; ++oj) {
            const int jj = oj * cs.stride - cs.padding + kj * cs.dilation;
            if (jj >= 0 && jj < W) plane[static_cast<std::int64_t>(ii) * W + jj] += in[oj];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    const ConvSpec& cs, Tensor<T>& y) {
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Cg = Cin / cs.groups, Og = Cout / cs.groups;
  const int Ho = y.dim(2), Wo = y.dim(3);
  const std::int64_t owo = static_cast<std::int64_t>(Ho) * Wo;
  const std::int64_t K = static_cast<std::int64_t>(Cg) * kh * kw;
  const bool depthwise = cs.groups == Cin && Og == 1 && Cg == 1;
  const bool pointwise = kh == 1 && kw == 1 && cs.stride == 1 && cs.padding == 0;

  parallel_for(static_cast<std::int64_t>(N), [&](std::int64_t n0, std::int64_t n1) {
    std::vector<T> col;
    if (!depthwise && !pointwise) col.resize(static_cast<size_t>(K * owo));
    for (std::int64_t n = n0; n < n1; ++n) {
      const T* xs = x.data() + n * Cin * H * W;
      T* ys = y.data() + n * Cout * owo;
      if (depthwise) {
        for (int c = 0; c < Cin; ++c) {
          const T* plane = xs + static_cast<std::int64_t>(c) * H * W;
          const T* ker = w.data() + static_cast<std::int64_t>(c) * kh * kw;
          const T bias = b.defined() ? b.data()[c] : T(0);
          T* out = ys + static_cast<std::int64_t>(c) * owo;
          for (int oi = 0; oi < Ho; ++oi) {
            for (int oj = 0; oj < Wo; ++oj) {
              T acc = bias;
              for (int ki = 0; ki < kh; ++ki) {
                const int ii = oi * cs.stride - cs.padding + ki * cs.dilation;
                if (ii < 0 || ii >= H) continue;
                for (int kj = 0; kj < kw; ++kj) {
                  const int jj = oj * cs.stride - cs.padding + kj * cs.dilation;
                  if (jj < 0 || jj >= W) continue;
                  acc += ker[ki * kw + kj] * plane[static_cast<std::int64_t>(ii) * W + jj];
                }
              }
              out[static_cast<std::int64_t>(oi) * Wo + oj] = acc;
            }
          }
        }
        continue;
      }
      for (int g = 0; g < cs.groups; ++g) {
        ConstMatMap<T> wm(w.data() + static_cast<std::int64_t>(g) * Og * K, Og, K);
        MatMap<T> ym(ys + static_cast<std::int64_t>(g) * Og * owo, Og, owo);
        if (pointwise) {
          ConstMatMap<T> xm(xs + static_cast<std::int64_t>(g) * Cg * owo, Cg, owo);
          ym.noalias() = wm * xm;
        } else {
          im2col(xs + static_cast<std::int64_t>(g) * Cg * H * W, Cg, H, W, kh, kw, cs, Ho,
                 Wo, col.data());
          ConstMatMap<T> cm(col.data(), K, owo);
          ym.noalias() = wm * cm;
        }
        if (b.defined())
          for (int oc = 0; oc < Og; ++oc) ym.row(oc).array() += b.data()[g * Og + oc];
      }
    }
  });
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, bool has_bias,
                     const ConvSpec& cs, const Tensor<T>& dy, Tensor<T>& dx, Tensor<T>& dw,
                     Tensor<T>& db) {
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Cg = Cin / cs.groups, Og = Cout / cs.groups;
  const int Ho = dy.dim(2), Wo = dy.dim(3);
  const std::int64_t owo = static_cast<std::int64_t>(Ho) * Wo;
  const std::int64_t K = static_cast<std::int64_t>(Cg) * kh * kw;
  const bool pointwise = kh == 1 && kw == 1 && cs.stride == 1 && cs.padding == 0;

  // Weight and bias gradients accumulate across the batch, so the batch loop
  // stays serial; determinism would otherwise depend on the thread count.
  std::vector<T> col(pointwise ? 0 : static_cast<size_t>(K * owo));
  std::vector<T> dcol(pointwise ? 0 : static_cast<size_t>(K * owo));
  for (std::int64_t n = 0; n < N; ++n) {
    const T* xs = x.data() + n * Cin * H * W;
    const T* dys = dy.data() + n * Cout * owo;
    T* dxs = dx.data() + n * Cin * H * W;
    for (int g = 0; g < cs.groups; ++g) {
      ConstMatMap<T> wm(w.data() + static_cast<std::int64_t>(g) * Og * K, Og, K);
      ConstMatMap<T> dym(dys + static_cast<std::int64_t>(g) * Og * owo, Og, owo);
      MatMap<T> dwm(dw.data() + static_cast<std::int64_t>(g) * Og * K, Og, K);
      if (pointwise) {
        ConstMatMap<T> xm(xs + static_cast<std::int64_t>(g) * Cg * owo, Cg, owo);
        MatMap<T> dxm(dxs + static_cast<std::int64_t>(g) * Cg * owo, Cg, owo);
        dwm.noalias() += dym * xm.transpose();
        dxm.noalias() += wm.transpose() * dym;
      } else {
        im2col(xs + static_cast<std::int64_t>(g) * Cg * H * W, Cg, H, W, kh, kw, cs, Ho, Wo,
               col.data());
        ConstMatMap<T> cm(col.data(), K, owo);
        dwm.noalias() += dym * cm.transpose();
        MatMap<T> dcm(dcol.data(), K, owo);
        dcm.noalias() = wm.transpose() * dym;
        col2im_add(dcol.data(), Cg, H, W, kh, kw, cs, Ho, Wo,
                   dxs + static_cast<std::int64_t>(g) * Cg * H * W);
      }
      if (has_bias)
        for (int oc = 0; oc < Og; ++oc) db.data()[g * Og + oc] += dym.row(oc).sum();
    }
  }
}

}  // namespace detail

// 2-D convolution over NCHW input with OIHW weights (I = Cin/groups) and an
// optional bias. Pass an undefined Tensor for `b` to skip the bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ConvSpec& cs = {}) {
  check_shape(x.rank() == 4, "conv2d: input must be rank-4, got " + x.shape().str());
  check_shape(w.rank() == 4, "conv2d: weight must be rank-4, got " + w.shape().str());
  check(cs.stride >= 1 && cs.dilation >= 1 && cs.padding >= 0 && cs.groups >= 1,
        "conv2d: bad stride/dilation/padding/groups");
  const int Cin = x.dim(1), Cout = w.dim(0);
  check_shape(Cin % cs.groups == 0 && Cout % cs.groups == 0,
              "conv2d: channels not divisible by groups");
  check_shape(w.dim(1) == Cin / cs.groups,
              "conv2d: weight expects " + std::to_string(w.dim(1) * cs.groups) +
                  " input channels, got " + std::to_string(Cin));
  if (b.defined())
    check_shape(b.rank() == 1 && b.dim(0) == Cout,
                "conv2d: bias must be (" + std::to_string(Cout) + ")");
  const int Ho = detail::conv_out_extent(x.dim(2), w.dim(2), cs.stride, cs.padding, cs.dilation);
  const int Wo = detail::conv_out_extent(x.dim(3), w.dim(3), cs.stride, cs.padding, cs.dilation);
  Tensor<T> y(Shape{x.dim(0), Cout, Ho, Wo});
  detail::conv2d_forward(x, w, b, cs, y);
  if (auto* tape = GradTape<T>::active();
      tape && (tape->tracks_any(x, w) || (b.defined() && tape->tracks(b)))) {
    tape->record(y, [x, w, b, cs](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx = zeros_like(x);
      Tensor<T> dw = zeros_like(w);
      Tensor<T> db = b.defined() ? zeros_like(b) : Tensor<T>();
      detail::conv2d_backward(x, w, b.defined(), cs, dy, dx, dw, db);
      tp.accumulate(x, dx);
      tp.accumulate(w, dw);
      if (b.defined()) tp.accumulate(b, db);
    });
  }
  return y;
}

// 2x2 average pooling with stride 2. Odd extents behave as if replicate-padded
// by one on the bottom/right, which is the same as averaging only the cells
// that exist.
template <typename T>
Tensor<T> avg_pool_2x2(const Tensor<T>& x) {
  check_shape(x.rank() == 4, "avg_pool_2x2 expects rank-4, got " + x.shape().str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> y(Shape{N, C, Ho, Wo});
  const T* xp = x.data();
  T* yp = y.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const T* src = xp + nc * H * W;
    T* dst = yp + nc * static_cast<std::int64_t>(Ho) * Wo;
    for (int oi = 0; oi < Ho; ++oi) {
      const int ih = std::min(2, H - 2 * oi);
      for (int oj = 0; oj < Wo; ++oj) {
        const int iw = std::min(2, W - 2 * oj);
        T acc = T(0);
        for (int a = 0; a < ih; ++a)
          for (int c = 0; c < iw; ++c)
            acc += src[static_cast<std::int64_t>(2 * oi + a) * W + 2 * oj + c];
        dst[static_cast<std::int64_t>(oi) * Wo + oj] = acc / static_cast<T>(ih * iw);
      }
    }
  }
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, Ho, Wo](const Tensor<T>& dy, GradTape<T>& tp) {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      Tensor<T> dx(x.shape());
      const T* dyp = dy.data();
      T* dxp = dx.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        const T* gsrc = dyp + nc * static_cast<std::int64_t>(Ho) * Wo;
        T* gdst = dxp + nc * H * W;
        for (int oi = 0; oi < Ho; ++oi) {
          const int ih = std::min(2, H - 2 * oi);
          for (int oj = 0; oj < Wo; ++oj) {
            const int iw = std::min(2, W - 2 * oj);
            const T g = gsrc[static_cast<std::int64_t>(oi) * Wo + oj] / static_cast<T>(ih * iw);
            for (int a = 0; a < ih; ++a)
              for (int c = 0; c < iw; ++c)
                gdst[static_cast<std::int64_t>(2 * oi + a) * W + 2 * oj + c] = g;
          }
        }
      }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

}  // namespace vmatt
