#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vmatt/tensor.hpp"

namespace vmatt {

namespace detail {

template <typename T>
void check_same_extents(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
  check_shape(a.shape() == b.shape(),
              std::string(who) + ": " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

// Mean absolute difference, reported x1e3.
template <typename T>
double mad(const Tensor<T>& pred, const Tensor<T>& gt) {
  detail::check_same_extents(pred, gt, "mad");
  double s = 0;
  for (std::int64_t i = 0; i < pred.numel(); ++i)
    s += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
  return 1e3 * s / static_cast<double>(pred.numel());
}

// Mean squared difference, reported x1e3.
template <typename T>
double mse(const Tensor<T>& pred, const Tensor<T>& gt) {
  detail::check_same_extents(pred, gt, "mse");
  double s = 0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    s += d * d;
  }
  return 1e3 * s / static_cast<double>(pred.numel());
}

// Per-frame mean absolute difference trace (x1e3), for error-over-time plots.
template <typename T>
std::vector<double> mad_per_frame(const Tensor<T>& pred, const Tensor<T>& gt) {
  detail::check_same_extents(pred, gt, "mad_per_frame");
  const int frames = pred.dim(0);
  const std::int64_t row = pred.numel() / frames;
  std::vector<double> out(static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    double s = 0;
    for (std::int64_t i = 0; i < row; ++i)
      s += std::abs(static_cast<double>(pred[t * row + i]) -
                    static_cast<double>(gt[t * row + i]));
    out[static_cast<size_t>(t)] = 1e3 * s / static_cast<double>(row);
  }
  return out;
}

namespace detail {

// Samples of the unit-mass Gaussian and its derivative on [-radius, radius].
inline std::pair<std::vector<double>, std::vector<double>> gaussian_derivative_taps(
    double sigma, int radius) {
  std::vector<double> g(static_cast<size_t>(2 * radius + 1));
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    g[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += g[static_cast<size_t>(i + radius)];
  }
  std::vector<double> dg(g.size());
  for (int i = -radius; i <= radius; ++i) {
    g[static_cast<size_t>(i + radius)] /= norm;
    dg[static_cast<size_t>(i + radius)] =
        -i / (sigma * sigma) * g[static_cast<size_t>(i + radius)];
  }
  return {g, dg};
}

inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// Separable filtering of one plane: row taps then column taps, mirrored
// borders.
inline void separable_filter(const double* src, int H, int W,
                             const std::vector<double>& row_taps,
                             const std::vector<double>& col_taps, double* dst) {
  const int r = static_cast<int>(row_taps.size() / 2);
  std::vector<double> tmp(static_cast<size_t>(H) * W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0;
      for (int k = -r; k <= r; ++k)
        acc += row_taps[static_cast<size_t>(k + r)] * src[i * W + mirror_index(j + k, W)];
      tmp[static_cast<size_t>(i) * W + j] = acc;
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0;
      for (int k = -r; k <= r; ++k)
        acc += col_taps[static_cast<size_t>(k + r)] *
               tmp[static_cast<size_t>(mirror_index(i + k, H)) * W + j];
      dst[i * W + j] = acc;
    }
}

template <typename T>
std::vector<double> gradient_magnitude(const Tensor<T>& x, int frame, double sigma,
                                       int radius) {
  const int H = x.dim(2), W = x.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  std::vector<double> p(static_cast<size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i)
    p[static_cast<size_t>(i)] = static_cast<double>(x.data()[frame * plane + i]);
  auto [g, dg] = gaussian_derivative_taps(sigma, radius);
  std::vector<double> ix(p.size()), iy(p.size()), mag(p.size());
  separable_filter(p.data(), H, W, dg, g, ix.data());
  separable_filter(p.data(), H, W, g, dg, iy.data());
  for (size_t i = 0; i < p.size(); ++i)
    mag[i] = std::sqrt(ix[i] * ix[i] + iy[i] * iy[i]);
  return mag;
}

}  // namespace detail

// Spatial-gradient error: mean squared difference of Gaussian-derivative
// gradient magnitudes (sigma 1.4, radius 6, mirrored borders), x1e3.
template <typename T>
double grad_metric(const Tensor<T>& pred, const Tensor<T>& gt, double sigma = 1.4,
                   int radius = 6) {
  detail::check_same_extents(pred, gt, "grad_metric");
  check_shape(pred.dim(1) == 1, "grad_metric expects single-channel maps, got " +
                                    pred.shape().str());
  double s = 0;
  for (int t = 0; t < pred.dim(0); ++t) {
    auto mp = detail::gradient_magnitude(pred, t, sigma, radius);
    auto mg = detail::gradient_magnitude(gt, t, sigma, radius);
    for (size_t i = 0; i < mp.size(); ++i) {
      const double d = mp[i] - mg[i];
      s += d * d;
    }
  }
  return 1e3 * s / static_cast<double>(pred.numel());
}

namespace detail {

// Largest 4-connected component of the mask, via BFS. Ties resolve to the
// first component found in row-major order.
inline std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& mask,
                                                   int H, int W) {
  std::vector<int> label(mask.size(), -1);
  int best_label = -1;
  std::int64_t best_size = 0;
  int next = 0;
  std::queue<int> q;
  for (int start = 0; start < H * W; ++start) {
    if (!mask[static_cast<size_t>(start)] || label[static_cast<size_t>(start)] >= 0)
      continue;
    std::int64_t size = 0;
    label[static_cast<size_t>(start)] = next;
    q.push(start);
    while (!q.empty()) {
      const int cur = q.front();
      q.pop();
      ++size;
      const int i = cur / W, j = cur % W;
      const int nb[4] = {cur - W, cur + W, cur - 1, cur + 1};
      const bool ok[4] = {i > 0, i + 1 < H, j > 0, j + 1 < W};
      for (int k = 0; k < 4; ++k) {
        if (!ok[k]) continue;
        const int n = nb[k];
        if (mask[static_cast<size_t>(n)] && label[static_cast<size_t>(n)] < 0) {
          label[static_cast<size_t>(n)] = next;
          q.push(n);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
    ++next;
  }
  std::vector<std::uint8_t> out(mask.size(), 0);
  if (best_label >= 0)
    for (size_t i = 0; i < mask.size(); ++i) out[i] = label[i] == best_label ? 1 : 0;
  return out;
}

}  // namespace detail

// Connectivity error. For thresholds 0.1..0.9 both maps are binarized and the
// largest connected region of their intersection is tracked; a pixel's
// "round-down" level is the last threshold at which it was still part of that
// region. The per-pixel degradation phi = 1 - d*(d >= 0.15) with d = alpha -
// round_down is compared between prediction and reference, averaged, x1e3.
template <typename T>
double conn_metric(const Tensor<T>& pred, const Tensor<T>& gt, double step = 0.1) {
  detail::check_same_extents(pred, gt, "conn_metric");
  check_shape(pred.dim(1) == 1, "conn_metric expects single-channel maps, got " +
                                    pred.shape().str());
  check(step > 0.0 && step < 1.0, "conn_metric: step must be in (0,1)");
  const int H = pred.dim(2), W = pred.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  double s = 0;
  for (int t = 0; t < pred.dim(0); ++t) {
    const T* pp = pred.data() + t * plane;
    const T* gp = gt.data() + t * plane;
    std::vector<double> round_down(static_cast<size_t>(plane), -1.0);
    double prev = 0.0;
    for (int k = 1; k * step < 1.0 - 1e-9; ++k) {
      const double theta = k * step;
      std::vector<std::uint8_t> inter(static_cast<size_t>(plane));
      for (std::int64_t i = 0; i < plane; ++i)
        inter[static_cast<size_t>(i)] =
            (static_cast<double>(pp[i]) >= theta && static_cast<double>(gp[i]) >= theta)
                ? 1
                : 0;
      auto omega = detail::largest_component(inter, H, W);
      for (std::int64_t i = 0; i < plane; ++i)
        if (round_down[static_cast<size_t>(i)] < 0 && !omega[static_cast<size_t>(i)])
          round_down[static_cast<size_t>(i)] = prev;
      prev = theta;
    }
    for (std::int64_t i = 0; i < plane; ++i) {
      double rd = round_down[static_cast<size_t>(i)];
      if (rd < 0) rd = 1.0;  // connected through the whole sweep
      const double dp = static_cast<double>(pp[i]) - rd;
      const double dg = static_cast<double>(gp[i]) - rd;
      const double phi_p = 1.0 - (dp >= 0.15 ? dp : 0.0);
      const double phi_g = 1.0 - (dg >= 0.15 ? dg : 0.0);
      s += std::abs(phi_p - phi_g);
    }
  }
  return 1e3 * s / static_cast<double>(pred.numel());
}

// Temporal coherence: mean over frame pairs of the root-mean-square
// difference between predicted and reference temporal derivatives, x1e2.
template <typename T>
double dtssd(const Tensor<T>& pred, const Tensor<T>& gt, int frames) {
  detail::check_same_extents(pred, gt, "dtssd");
  check(frames >= 2, "dtssd: needs at least 2 frames, got " + std::to_string(frames));
  check_shape(pred.dim(0) % frames == 0, "dtssd: rows not divisible by frame count");
  const int batch = pred.dim(0) / frames;
  const std::int64_t row = pred.numel() / pred.dim(0);
  double total = 0;
  for (int t = 1; t < frames; ++t) {
    double s = 0;
    for (int b = 0; b < batch; ++b) {
      const std::int64_t cur = (static_cast<std::int64_t>(t) * batch + b) * row;
      const std::int64_t prv = (static_cast<std::int64_t>(t - 1) * batch + b) * row;
      for (std::int64_t i = 0; i < row; ++i) {
        const double dp =
            static_cast<double>(pred[cur + i]) - static_cast<double>(pred[prv + i]);
        const double dg =
            static_cast<double>(gt[cur + i]) - static_cast<double>(gt[prv + i]);
        s += (dp - dg) * (dp - dg);
      }
    }
    total += std::sqrt(s / static_cast<double>(batch * row));
  }
  return 1e2 * total / static_cast<double>(frames - 1);
}

// Foreground MSE over pixels where the reference alpha is positive, x1e3.
// Zero when the mask is empty.
template <typename T>
double fg_mse(const Tensor<T>& fg, const Tensor<T>& fg_gt, const Tensor<T>& alpha_gt) {
  detail::check_same_extents(fg, fg_gt, "fg_mse");
  check_shape(alpha_gt.dim(0) == fg.dim(0) && alpha_gt.dim(1) == 1 &&
                  alpha_gt.dim(2) == fg.dim(2) && alpha_gt.dim(3) == fg.dim(3),
              "fg_mse: alpha mask " + alpha_gt.shape().str() + " does not match " +
                  fg.shape().str());
  const int C = fg.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(fg.dim(2)) * fg.dim(3);
  double s = 0;
  std::int64_t n = 0;
  for (int t = 0; t < fg.dim(0); ++t)
    for (std::int64_t i = 0; i < plane; ++i) {
      if (!(static_cast<double>(alpha_gt.data()[t * plane + i]) > 0.0)) continue;
      for (int c = 0; c < C; ++c) {
        const std::int64_t at = (static_cast<std::int64_t>(t) * C + c) * plane + i;
        const double d = static_cast<double>(fg[at]) - static_cast<double>(fg_gt[at]);
        s += d * d;
        ++n;
      }
    }
  return n == 0 ? 0.0 : 1e3 * s / static_cast<double>(n);
}

// Binarize an alpha map at the given threshold.
template <typename T>
Tensor<T> alpha_to_mask(const Tensor<T>& alpha, T threshold = T(0.5)) {
  Tensor<T> m(alpha.shape());
  for (std::int64_t i = 0; i < alpha.numel(); ++i)
    m[i] = alpha[i] > threshold ? T(1) : T(0);
  return m;
}

// Mean IOU over the two classes (subject and background). A class absent
// from both maps scores 1.
template <typename T>
double miou(const Tensor<T>& pred_mask, const Tensor<T>& gt_mask) {
  detail::check_same_extents(pred_mask, gt_mask, "miou");
  std::int64_t inter_fg = 0, union_fg = 0, inter_bg = 0, union_bg = 0;
  for (std::int64_t i = 0; i < pred_mask.numel(); ++i) {
    const bool p = pred_mask[i] > T(0.5), g = gt_mask[i] > T(0.5);
    inter_fg += (p && g) ? 1 : 0;
    union_fg += (p || g) ? 1 : 0;
    inter_bg += (!p && !g) ? 1 : 0;
    union_bg += (!p || !g) ? 1 : 0;
  }
  const double iou_fg =
      union_fg == 0 ? 1.0 : static_cast<double>(inter_fg) / static_cast<double>(union_fg);
  const double iou_bg =
      union_bg == 0 ? 1.0 : static_cast<double>(inter_bg) / static_cast<double>(union_bg);
  return 0.5 * (iou_fg + iou_bg);
}

struct MetricReport {
  std::optional<double> mad, mse, grad, conn, dtssd, fg_mse, miou;
};

// One line per present metric: "<clip id>\t<name>\t<value>".
inline std::string report_lines(const std::string& clip_id, const MetricReport& r) {
  std::ostringstream out;
  out << std::setprecision(9);
  auto emit = [&](const char* name, const std::optional<double>& v) {
    if (v) out << clip_id << '\t' << name << '\t' << *v << '\n';
  };
  emit("MAD", r.mad);
  emit("MSE", r.mse);
  emit("Grad", r.grad);
  emit("Conn", r.conn);
  emit("dtSSD", r.dtssd);
  emit("fgMSE", r.fg_mse);
  emit("mIOU", r.miou);
  return out.str();
}

}  // namespace vmatt
