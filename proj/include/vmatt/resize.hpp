#pragma once

#include "vmatt/tape.hpp"

namespace vmatt {

namespace detail {

// Per-axis sample positions for bilinear interpolation. With align_corners
// off, output pixel centres map through (i + 0.5) * in/out - 0.5 and clamp at
// the borders; with it on, endpoints map to endpoints.
struct LerpTap {
  int lo, hi;
  double frac;
};

inline std::vector<LerpTap> lerp_taps(int in, int out, bool align_corners) {
  std::vector<LerpTap> taps(static_cast<size_t>(out));
  for (int i = 0; i < out; ++i) {
    double src;
    if (align_corners) {
      src = out > 1 ? static_cast<double>(i) * (in - 1) / (out - 1) : 0.0;
    } else {
      src = (i + 0.5) * static_cast<double>(in) / out - 0.5;
      if (src < 0.0) src = 0.0;
    }
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    taps[static_cast<size_t>(i)] = {lo, std::min(lo + 1, in - 1), src - lo};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w,
                          bool align_corners = false) {
  check_shape(x.rank() == 4, "bilinear_resize expects rank-4, got " + x.shape().str());
  check(out_h >= 1 && out_w >= 1, "bilinear_resize: non-positive output extent");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (out_h == H && out_w == W) {
    // Identity resize still has to behave like an op for the tape.
    Tensor<T> y = x.clone();
    if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
      tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) { tp.accumulate(x, dy); });
    }
    return y;
  }
  const auto rows = detail::lerp_taps(H, out_h, align_corners);
  const auto cols = detail::lerp_taps(W, out_w, align_corners);
  Tensor<T> y(Shape{N, C, out_h, out_w});
  const T* xp = x.data();
  T* yp = y.data();
  parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t nc = c0; nc < c1; ++nc) {
      const T* src = xp + nc * H * W;
      T* dst = yp + nc * static_cast<std::int64_t>(out_h) * out_w;
      for (int i = 0; i < out_h; ++i) {
        const auto& r = rows[static_cast<size_t>(i)];
        const T fy = static_cast<T>(r.frac);
        const T* top = src + static_cast<std::int64_t>(r.lo) * W;
        const T* bot = src + static_cast<std::int64_t>(r.hi) * W;
        for (int j = 0; j < out_w; ++j) {
          const auto& c = cols[static_cast<size_t>(j)];
          const T fx = static_cast<T>(c.frac);
          const T a = top[c.lo] + fx * (top[c.hi] - top[c.lo]);
          const T b = bot[c.lo] + fx * (bot[c.hi] - bot[c.lo]);
          dst[static_cast<std::int64_t>(i) * out_w + j] = a + fy * (b - a);
        }
      }
    }
  });
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, rows, cols, out_h, out_w](const Tensor<T>& dy, GradTape<T>& tp) {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      Tensor<T> dx = zeros_like(x);
      const T* dyp = dy.data();
      T* dxp = dx.data();
      parallel_for(static_cast<std::int64_t>(N) * C,
                   [&](std::int64_t c0, std::int64_t c1) {
                     for (std::int64_t nc = c0; nc < c1; ++nc) {
                       const T* gsrc = dyp + nc * static_cast<std::int64_t>(out_h) * out_w;
                       T* gdst = dxp + nc * H * W;
                       for (int i = 0; i < out_h; ++i) {
                         const auto& r = rows[static_cast<size_t>(i)];
                         const T fy = static_cast<T>(r.frac);
                         for (int j = 0; j < out_w; ++j) {
                           const auto& c = cols[static_cast<size_t>(j)];
                           const T fx = static_cast<T>(c.frac);
                           const T g = gsrc[static_cast<std::int64_t>(i) * out_w + j];
                           gdst[static_cast<std::int64_t>(r.lo) * W + c.lo] +=
                               g * (T(1) - fy) * (T(1) - fx);
                           gdst[static_cast<std::int64_t>(r.lo) * W + c.hi] +=
                               g * (T(1) - fy) * fx;
                           gdst[static_cast<std::int64_t>(r.hi) * W + c.lo] +=
                               g * fy * (T(1) - fx);
                           gdst[static_cast<std::int64_t>(r.hi) * W + c.hi] += g * fy * fx;
                         }
                       }
                     }
                   });
      tp.accumulate(x, dx);
    });
  }
  return y;
}

}  // namespace vmatt
