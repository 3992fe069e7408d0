#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "vmatt/tape.hpp"

namespace vmatt {

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  check_shape(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                          a.shape().str() + " vs " + b.shape().str());
}
}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> y(a.shape());
  y.array() = a.array() + b.array();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks_any(a, b)) {
    tape->record(y, [a, b](const Tensor<T>& dy, GradTape<T>& tp) {
      tp.accumulate(a, dy);
      tp.accumulate(b, dy);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> y(a.shape());
  y.array() = a.array() - b.array();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks_any(a, b)) {
    tape->record(y, [a, b](const Tensor<T>& dy, GradTape<T>& tp) {
      tp.accumulate(a, dy);
      Tensor<T> db(b.shape());
      db.array() = -dy.array();
      tp.accumulate(b, db);
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> y(a.shape());
  y.array() = a.array() * b.array();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks_any(a, b)) {
    tape->record(y, [a, b](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> da(a.shape());
      da.array() = dy.array() * b.array();
      tp.accumulate(a, da);
      Tensor<T> db(b.shape());
      db.array() = dy.array() * a.array();
      tp.accumulate(b, db);
    });
  }
  return y;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  Tensor<T> y(a.shape());
  y.array() = a.array() / b.array();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks_any(a, b)) {
    tape->record(y, [a, b](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> da(a.shape());
      da.array() = dy.array() / b.array();
      tp.accumulate(a, da);
      Tensor<T> db(b.shape());
      db.array() = -dy.array() * a.array() / (b.array() * b.array());
      tp.accumulate(b, db);
    });
  }
  return y;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Tensor<T> y(a.shape());
  y.array() = a.array() + s;
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(a)) {
    tape->record(y, [a](const Tensor<T>& dy, GradTape<T>& tp) { tp.accumulate(a, dy); });
  }
  return y;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  Tensor<T> y(a.shape());
  y.array() = a.array() * s;
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(a)) {
    tape->record(y, [a, s](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> da(a.shape());
      da.array() = dy.array() * s;
      tp.accumulate(a, da);
    });
  }
  return y;
}

// x: (N,C,H,W) scaled per channel by g: (N,C,1,1). Used by gating branches.
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& g) {
  check_shape(x.rank() == 4 && g.rank() == 4 && g.dim(2) == 1 && g.dim(3) == 1 &&
                  g.dim(0) == x.dim(0) && g.dim(1) == x.dim(1),
              "scale_channels: gate " + g.shape().str() + " does not match " +
                  x.shape().str());
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y(x.shape());
  const T* xp = x.data();
  const T* gp = g.data();
  T* yp = y.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const T s = gp[nc];
    for (std::int64_t i = 0; i < hw; ++i) yp[nc * hw + i] = xp[nc * hw + i] * s;
  }
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks_any(x, g)) {
    tape->record(y, [x, g, N, C, hw](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      Tensor<T> dg(g.shape());
      const T* dyp = dy.data();
      const T* xp = x.data();
      const T* gp = g.data();
      T* dxp = dx.data();
      T* dgp = dg.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        T acc = T(0);
        const T s = gp[nc];
        for (std::int64_t i = 0; i < hw; ++i) {
          dxp[nc * hw + i] = dyp[nc * hw + i] * s;
          acc += dyp[nc * hw + i] * xp[nc * hw + i];
        }
        dgp[nc] = acc;
      }
      tp.accumulate(x, dx);
      tp.accumulate(g, dg);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = x.array().max(T(0));
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = (x.array() > T(0)).template cast<T>() * dy.array();
      tp.accumulate(x, dx);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = T(1) / (T(1) + (-x.array()).exp());
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, y](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = dy.array() * y.array() * (T(1) - y.array());
      tp.accumulate(x, dx);
    });
  }
  return y;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = x.array().tanh();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, y](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = dy.array() * (T(1) - y.array().square());
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// x * clamp(x + 3, 0, 6) / 6
template <typename T>
Tensor<T> hardswish(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = x.array() * (x.array() + T(3)).max(T(0)).min(T(6)) / T(6);
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      const T* xp = x.data();
      const T* dyp = dy.data();
      T* dxp = dx.data();
      const std::int64_t n = x.numel();
      for (std::int64_t i = 0; i < n; ++i) {
        const T v = xp[i];
        T d;
        if (v <= T(-3))
          d = T(0);
        else if (v >= T(3))
          d = T(1);
        else
          d = (T(2) * v + T(3)) / T(6);
        dxp[i] = dyp[i] * d;
      }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// clamp(x + 3, 0, 6) / 6
template <typename T>
Tensor<T> hardsigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = (x.array() + T(3)).max(T(0)).min(T(6)) / T(6);
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = ((x.array() > T(-3)) && (x.array() < T(3))).template cast<T>() *
                   dy.array() / T(6);
      tp.accumulate(x, dx);
    });
  }
  return y;
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  check(lo <= hi, "clamp: lo > hi");
  Tensor<T> y(x.shape());
  y.array() = x.array().max(lo).min(hi);
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, lo, hi](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = ((x.array() >= lo) && (x.array() <= hi)).template cast<T>() * dy.array();
      tp.accumulate(x, dx);
    });
  }
  return y;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = x.array().abs();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = x.array().sign() * dy.array();
      tp.accumulate(x, dx);
    });
  }
  return y;
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  y.array() = x.array().square();
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      dx.array() = T(2) * x.array() * dy.array();
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::scalar(x.array().sum());
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x](const Tensor<T>& dy, GradTape<T>& tp) {
      tp.accumulate(x, Tensor<T>::full(x.shape(), dy.item()));
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv = T(1) / static_cast<T>(x.numel());
  Tensor<T> y = Tensor<T>::scalar(x.array().sum() * inv);
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, inv](const Tensor<T>& dy, GradTape<T>& tp) {
      tp.accumulate(x, Tensor<T>::full(x.shape(), dy.item() * inv));
    });
  }
  return y;
}

// Mean over channels per pixel: (N,C,H,W) -> (N,1,H,W).
template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  check_shape(x.rank() == 4, "channel_mean expects rank-4, got " + x.shape().str());
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const T inv = T(1) / static_cast<T>(C);
  Tensor<T> y(Shape{N, 1, x.dim(2), x.dim(3)});
  const T* xp = x.data();
  T* yp = y.data();
  for (int n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < hw; ++i) {
      T acc = T(0);
      for (int c = 0; c < C; ++c) acc += xp[(static_cast<std::int64_t>(n) * C + c) * hw + i];
      yp[n * hw + i] = acc * inv;
    }
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, N, C, hw, inv](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      const T* dyp = dy.data();
      T* dxp = dx.data();
      for (int n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < hw; ++i) {
          const T g = dyp[n * hw + i] * inv;
          for (int c = 0; c < C; ++c)
            dxp[(static_cast<std::int64_t>(n) * C + c) * hw + i] = g;
        }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// Mean over H,W per channel: (N,C,H,W) -> (N,C,1,1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  check_shape(x.rank() == 4, "global_avg_pool expects rank-4, got " + x.shape().str());
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const T inv = T(1) / static_cast<T>(hw);
  Tensor<T> y(Shape{N, C, 1, 1});
  const T* xp = x.data();
  T* yp = y.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    T acc = T(0);
    for (std::int64_t i = 0; i < hw; ++i) acc += xp[nc * hw + i];
    yp[nc] = acc * inv;
  }
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, N, C, hw, inv](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      const T* dyp = dy.data();
      T* dxp = dx.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        const T g = dyp[nc] * inv;
        for (std::int64_t i = 0; i < hw; ++i) dxp[nc * hw + i] = g;
      }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// layout: concat / split / narrow
// ---------------------------------------------------------------------------

namespace detail {
struct AxisStrides {
  std::int64_t outer;  // product of extents before axis
  std::int64_t axis;   // extent at axis
  std::int64_t inner;  // product of extents after axis
};

inline AxisStrides axis_strides(const Shape& s, int axis) {
  check_shape(axis >= 0 && axis < s.rank(),
              "axis " + std::to_string(axis) + " out of range for " + s.str());
  AxisStrides r{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (int i = axis + 1; i < s.rank(); ++i) r.inner *= s[i];
  return r;
}

// Copies a [start, start+len) band along `axis` from src into dst (which is
// exactly the band) or the reverse when `into_band` is false.
template <typename T>
void copy_axis_band(const Tensor<T>& src, Tensor<T>& dst, int axis, int start, int len,
                    bool band_is_dst, bool accumulate = false) {
  const auto st = axis_strides((band_is_dst ? src : dst).shape(), axis);
  const std::int64_t band_row = static_cast<std::int64_t>(len) * st.inner;
  const std::int64_t full_row = st.axis * st.inner;
  for (std::int64_t o = 0; o < st.outer; ++o) {
    const std::int64_t full_off = o * full_row + static_cast<std::int64_t>(start) * st.inner;
    const std::int64_t band_off = o * band_row;
    if (band_is_dst) {
      std::memcpy(dst.data() + band_off, src.data() + full_off,
                  static_cast<size_t>(band_row) * sizeof(T));
    } else if (accumulate) {
      for (std::int64_t i = 0; i < band_row; ++i)
        dst.data()[full_off + i] += src.data()[band_off + i];
    } else {
      std::memcpy(dst.data() + full_off, src.data() + band_off,
                  static_cast<size_t>(band_row) * sizeof(T));
    }
  }
}
}  // namespace detail

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, int start, int len) {
  const auto st = detail::axis_strides(x.shape(), axis);
  check_shape(start >= 0 && len >= 1 && start + len <= st.axis,
              "narrow: band [" + std::to_string(start) + "," +
                  std::to_string(start + len) + ") outside axis extent " +
                  std::to_string(st.axis));
  std::vector<int> dims = x.shape().dims();
  dims[static_cast<size_t>(axis)] = len;
  Tensor<T> y{Shape(dims)};
  detail::copy_axis_band(x, y, axis, start, len, /*band_is_dst=*/true);
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, axis, start, len](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx = zeros_like(x);
      detail::copy_axis_band(dy, dx, axis, start, len, /*band_is_dst=*/false);
      tp.accumulate(x, dx);
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    check_shape(p.rank() == first.rank(), "concat: rank mismatch");
    for (int i = 0; i < first.rank(); ++i)
      check_shape(i == axis || p.shape()[i] == first[i],
                  "concat: extent mismatch at dim " + std::to_string(i) + ": " +
                      p.shape().str() + " vs " + first.str());
    total += p.shape()[axis];
  }
  std::vector<int> dims = first.dims();
  dims[static_cast<size_t>(axis)] = total;
  Tensor<T> y{Shape(dims)};
  int off = 0;
  for (const auto& p : parts) {
    detail::copy_axis_band(p, y, axis, off, p.shape()[axis], /*band_is_dst=*/false);
    off += p.shape()[axis];
  }
  auto* tape = GradTape<T>::active();
  bool tracked = false;
  if (tape)
    for (const auto& p : parts) tracked = tracked || tape->tracks(p);
  if (tape && tracked) {
    tape->record(y, [parts, axis](const Tensor<T>& dy, GradTape<T>& tp) {
      int off = 0;
      for (const auto& p : parts) {
        const int len = p.shape()[axis];
        Tensor<T> dp(p.shape());
        detail::copy_axis_band(dy, dp, axis, off, len, /*band_is_dst=*/true);
        tp.accumulate(p, dp);
        off += len;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
  return concat(std::vector<Tensor<T>>{a, b}, axis);
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c, int axis) {
  return concat(std::vector<Tensor<T>>{a, b, c}, axis);
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<int>& sizes) {
  const auto st = detail::axis_strides(x.shape(), axis);
  int total = 0;
  for (int s : sizes) {
    check(s >= 1, "split: non-positive size");
    total += s;
  }
  check_shape(total == st.axis, "split: sizes sum to " + std::to_string(total) +
                                    " but axis extent is " + std::to_string(st.axis));
  std::vector<Tensor<T>> out;
  int off = 0;
  for (int s : sizes) {
    out.push_back(narrow(x, axis, off, s));
    off += s;
  }
  return out;
}

// Reorders rows (axis 0) of a rank-4 tensor: output row i is input row
// indices[i]. Every input row must appear exactly once for the gradient to be
// a permutation; duplicates are allowed and accumulate on backward.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& indices) {
  check_shape(x.rank() == 4, "gather_rows expects rank-4, got " + x.shape().str());
  check(!indices.empty(), "gather_rows: empty index list");
  for (int i : indices)
    check(i >= 0 && i < x.dim(0), "gather_rows: row index " + std::to_string(i) +
                                      " outside [0," + std::to_string(x.dim(0)) + ")");
  const std::int64_t row = static_cast<std::int64_t>(x.dim(1)) * x.dim(2) * x.dim(3);
  Tensor<T> y(Shape{static_cast<int>(indices.size()), x.dim(1), x.dim(2), x.dim(3)});
  for (size_t i = 0; i < indices.size(); ++i)
    std::memcpy(y.data() + static_cast<std::int64_t>(i) * row,
                x.data() + static_cast<std::int64_t>(indices[i]) * row,
                static_cast<size_t>(row) * sizeof(T));
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, indices, row](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx = zeros_like(x);
      for (size_t i = 0; i < indices.size(); ++i) {
        const T* src = dy.data() + static_cast<std::int64_t>(i) * row;
        T* dst = dx.data() + static_cast<std::int64_t>(indices[i]) * row;
        for (std::int64_t k = 0; k < row; ++k) dst[k] += src[k];
      }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// Row order conversions between batch-major (item b, frame t at row b*T+t)
// and time-major (row t*B+b) sequence layouts.
inline std::vector<int> time_major_order(int batch, int frames) {
  std::vector<int> idx(static_cast<size_t>(batch) * frames);
  for (int t = 0; t < frames; ++t)
    for (int b = 0; b < batch; ++b)
      idx[static_cast<size_t>(t) * batch + b] = b * frames + t;
  return idx;
}

inline std::vector<int> batch_major_order(int batch, int frames) {
  std::vector<int> idx(static_cast<size_t>(batch) * frames);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < frames; ++t)
      idx[static_cast<size_t>(b) * frames + t] = t * batch + b;
  return idx;
}

// ---------------------------------------------------------------------------
// padding / pixel lattice ops
// ---------------------------------------------------------------------------

enum class PadMode { kZero, kReflect, kReplicate };

namespace detail {
// Mirror without repeating the edge sample (OpenCV BORDER_REFLECT_101).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

inline int pad_source_index(int i, int n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case PadMode::kZero:
      return -1;
    case PadMode::kReplicate:
      return i < 0 ? 0 : n - 1;
    case PadMode::kReflect:
      return reflect_index(i, n);
  }
  return -1;
}
}  // namespace detail

template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int top, int bottom, int left, int right,
                PadMode mode) {
  check_shape(x.rank() == 4, "pad2d expects rank-4, got " + x.shape().str());
  check(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad2d: negative pad");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (mode == PadMode::kReflect)
    check(top < H && bottom < H && left < W && right < W,
          "pad2d: reflect pad must be smaller than the image extent");
  const int Ho = H + top + bottom, Wo = W + left + right;
  Tensor<T> y(Shape{N, C, Ho, Wo});
  const T* xp = x.data();
  T* yp = y.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const T* src = xp + nc * H * W;
    T* dst = yp + nc * static_cast<std::int64_t>(Ho) * Wo;
    for (int i = 0; i < Ho; ++i) {
      const int si = detail::pad_source_index(i - top, H, mode);
      for (int j = 0; j < Wo; ++j) {
        const int sj = detail::pad_source_index(j - left, W, mode);
        dst[static_cast<std::int64_t>(i) * Wo + j] =
            (si < 0 || sj < 0) ? T(0) : src[static_cast<std::int64_t>(si) * W + sj];
      }
    }
  }
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, top, left, Ho, Wo, mode](const Tensor<T>& dy, GradTape<T>& tp) {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      Tensor<T> dx = zeros_like(x);
      const T* dyp = dy.data();
      T* dxp = dx.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        const T* gsrc = dyp + nc * static_cast<std::int64_t>(Ho) * Wo;
        T* gdst = dxp + nc * H * W;
        for (int i = 0; i < Ho; ++i) {
          const int si = detail::pad_source_index(i - top, H, mode);
          if (si < 0) continue;
          for (int j = 0; j < Wo; ++j) {
            const int sj = detail::pad_source_index(j - left, W, mode);
            if (sj < 0) continue;
            gdst[static_cast<std::int64_t>(si) * W + sj] +=
                gsrc[static_cast<std::int64_t>(i) * Wo + j];
          }
        }
      }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// Keeps even-index rows/columns; the decimation half of a pyramid downsample.
template <typename T>
Tensor<T> subsample2(const Tensor<T>& x) {
  check_shape(x.rank() == 4, "subsample2 expects rank-4, got " + x.shape().str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> y(Shape{N, C, Ho, Wo});
  const T* xp = x.data();
  T* yp = y.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j)
        yp[(nc * Ho + i) * Wo + j] = xp[(nc * H + 2 * i) * W + 2 * j];
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, Ho, Wo](const Tensor<T>& dy, GradTape<T>& tp) {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      Tensor<T> dx = zeros_like(x);
      const T* dyp = dy.data();
      T* dxp = dx.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc)
        for (int i = 0; i < Ho; ++i)
          for (int j = 0; j < Wo; ++j)
            dxp[(nc * H + 2 * i) * W + 2 * j] = dyp[(nc * Ho + i) * Wo + j];
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// Doubles both extents, writing x at even indices and zeros elsewhere.
template <typename T>
Tensor<T> zero_upsample2(const Tensor<T>& x) {
  check_shape(x.rank() == 4, "zero_upsample2 expects rank-4, got " + x.shape().str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = 2 * H, Wo = 2 * W;
  Tensor<T> y(Shape{N, C, Ho, Wo});
  const T* xp = x.data();
  T* yp = y.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        yp[(nc * Ho + 2 * i) * Wo + 2 * j] = xp[(nc * H + i) * W + j];
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, Ho, Wo](const Tensor<T>& dy, GradTape<T>& tp) {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      Tensor<T> dx(x.shape());
      const T* dyp = dy.data();
      T* dxp = dx.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j)
            dxp[(nc * H + i) * W + j] = dyp[(nc * Ho + 2 * i) * Wo + 2 * j];
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// losses helpers
// ---------------------------------------------------------------------------

// Mean binary cross entropy evaluated from logits. The log-sum-exp form keeps
// large |logit| finite.
template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& targets) {
  detail::check_same_shape(logits, targets, "bce_with_logits_mean");
  const std::int64_t n = logits.numel();
  const T* xp = logits.data();
  const T* tp_ = targets.data();
  T acc = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const T x = xp[i];
    acc += std::max(x, T(0)) - x * tp_[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const T inv = T(1) / static_cast<T>(n);
  Tensor<T> y = Tensor<T>::scalar(acc * inv);
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(logits)) {
    tape->record(y, [logits, targets, inv](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(logits.shape());
      dx.array() = (T(1) / (T(1) + (-logits.array()).exp()) - targets.array()) *
                   (dy.item() * inv);
      tp.accumulate(logits, dx);
    });
  }
  return y;
}

}  // namespace vmatt
