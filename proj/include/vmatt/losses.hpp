#pragma once

#include "vmatt/conv.hpp"
#include "vmatt/ops.hpp"

namespace vmatt {

namespace detail {

// 5x5 binomial blur kernel (outer product of (1,4,6,4,1)/16) for `channels`
// independent channels, optionally scaled (the expand step uses gain 4 to
// compensate for the inserted zeros).
template <typename T>
Tensor<T> binomial5_kernel(int channels, T gain) {
  const T taps[5] = {T(1) / 16, T(4) / 16, T(6) / 16, T(4) / 16, T(1) / 16};
  Tensor<T> k(Shape{channels, 1, 5, 5});
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) k.at(c, 0, i, j) = gain * taps[i] * taps[j];
  return k;
}

template <typename T>
Tensor<T> binomial_blur(const Tensor<T>& x, T gain) {
  const int C = x.dim(1);
  auto k = binomial5_kernel<T>(C, gain);
  auto padded = pad2d(x, 2, 2, 2, 2, PadMode::kReflect);
  return conv2d(padded, k, Tensor<T>(), ConvSpec{.groups = C});
}

// Mirror-padded expand: zero-stuff to double extents, blur with gain 4, and
// crop back when the finer level had odd extents.
template <typename T>
Tensor<T> pyramid_expand(const Tensor<T>& g, int out_h, int out_w) {
  auto up = binomial_blur(zero_upsample2(g), T(4));
  if (up.dim(2) == out_h && up.dim(3) == out_w) return up;
  return narrow(narrow(up, 2, 0, out_h), 3, 0, out_w);
}

}  // namespace detail

// Laplacian pyramid: levels 1..n-1 are band-pass differences
// g_{k-1} - expand(g_k) with g_k = down2(blur(g_{k-1})); the last level is
// the coarsest Gaussian itself, so the levels sum back to the input.
template <typename T>
std::vector<Tensor<T>> laplacian_pyramid(const Tensor<T>& x, int levels) {
  check(levels >= 1, "laplacian_pyramid: need at least one level");
  const int need = 1 << levels;
  check_shape(x.dim(2) >= need && x.dim(3) >= need,
              "laplacian_pyramid: " + x.shape().str() + " too small for " +
                  std::to_string(levels) + " levels (needs " + std::to_string(need) +
                  "px)");
  std::vector<Tensor<T>> out;
  Tensor<T> g = x;
  for (int k = 1; k < levels; ++k) {
    auto down = subsample2(detail::binomial_blur(g, T(1)));
    out.push_back(sub(g, detail::pyramid_expand(down, g.dim(2), g.dim(3))));
    g = down;
  }
  out.push_back(g);
  return out;
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  check_shape(pred.shape() == gt.shape(), "l1_loss: " + pred.shape().str() + " vs " +
                                              gt.shape().str());
  return mean(abs(sub(pred, gt)));
}

// Sum over 5 pyramid levels of 2^{s-1}/5 times the mean absolute level
// difference.
template <typename T>
Tensor<T> laplacian_pyramid_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                                 int levels = 5) {
  check_shape(pred.shape() == gt.shape(), "laplacian_pyramid_loss: " +
                                              pred.shape().str() + " vs " +
                                              gt.shape().str());
  auto pp = laplacian_pyramid(pred, levels);
  auto pg = laplacian_pyramid(gt, levels);
  Tensor<T> total = Tensor<T>::zeros(Shape{1});
  for (int s = 0; s < levels; ++s) {
    const T w = static_cast<T>(double(std::int64_t(1) << s) / 5.0);
    total = add(total, mul_scalar(mean(abs(sub(pp[static_cast<size_t>(s)],
                                               pg[static_cast<size_t>(s)]))),
                                  w));
  }
  return total;
}

// Mean squared difference between predicted and reference temporal
// derivatives, with d/dt realized as adjacent-frame differences on the
// time-major layout.
template <typename T>
Tensor<T> temporal_coherence_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                                  int frames) {
  check_shape(pred.shape() == gt.shape(), "temporal_coherence_loss: " +
                                              pred.shape().str() + " vs " +
                                              gt.shape().str());
  check(frames >= 2, "temporal_coherence_loss: needs at least 2 frames, got " +
                         std::to_string(frames));
  check_shape(pred.dim(0) % frames == 0,
              "temporal_coherence_loss: rows not divisible by frame count");
  const int batch = pred.dim(0) / frames;
  const int rows = (frames - 1) * batch;
  auto dp = sub(narrow(pred, 0, batch, rows), narrow(pred, 0, 0, rows));
  auto dg = sub(narrow(gt, 0, batch, rows), narrow(gt, 0, 0, rows));
  return mean(square(sub(dp, dg)));
}

namespace detail {

// 0/1 indicator of alpha_gt > 0, expanded to `channels` channels. Built
// outside the tape: the mask is a constant of the ground truth.
template <typename T>
Tensor<T> positive_mask(const Tensor<T>& alpha_gt, int channels) {
  Tensor<T> m(Shape{alpha_gt.dim(0), channels, alpha_gt.dim(2), alpha_gt.dim(3)});
  const std::int64_t plane = static_cast<std::int64_t>(alpha_gt.dim(2)) * alpha_gt.dim(3);
  for (int n = 0; n < alpha_gt.dim(0); ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      const T v = alpha_gt.data()[n * plane + i] > T(0) ? T(1) : T(0);
      for (int c = 0; c < channels; ++c)
        m.data()[(n * channels + c) * plane + i] = v;
    }
  return m;
}

}  // namespace detail

// Masked foreground objectives: L1 and temporal-coherence terms evaluated
// only where the reference alpha is positive, averaged over the masked
// elements. An empty mask yields zero losses.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> foreground_losses(const Tensor<T>& fg,
                                                  const Tensor<T>& fg_gt,
                                                  const Tensor<T>& alpha_gt,
                                                  int frames) {
  check_shape(fg.shape() == fg_gt.shape(),
              "foreground_losses: " + fg.shape().str() + " vs " + fg_gt.shape().str());
  check_shape(alpha_gt.dim(0) == fg.dim(0) && alpha_gt.dim(1) == 1 &&
                  alpha_gt.dim(2) == fg.dim(2) && alpha_gt.dim(3) == fg.dim(3),
              "foreground_losses: alpha mask " + alpha_gt.shape().str() +
                  " does not match " + fg.shape().str());
  auto mask = detail::positive_mask(alpha_gt, fg.dim(1));
  const double count = static_cast<double>(mask.array().template cast<double>().sum());

  Tensor<T> l1 = Tensor<T>::zeros(Shape{1});
  if (count > 0)
    l1 = mul_scalar(sum(mul(mask, abs(sub(fg, fg_gt)))), static_cast<T>(1.0 / count));

  Tensor<T> tc = Tensor<T>::zeros(Shape{1});
  if (frames >= 2) {
    const int batch = fg.dim(0) / frames;
    const int rows = (frames - 1) * batch;
    // the temporal difference at frame t is gated by frame t's own mask
    auto mask_t = narrow(mask, 0, batch, rows);
    const double tc_count =
        static_cast<double>(mask_t.array().template cast<double>().sum());
    if (tc_count > 0) {
      auto dp = sub(narrow(fg, 0, batch, rows), narrow(fg, 0, 0, rows));
      auto dg = sub(narrow(fg_gt, 0, batch, rows), narrow(fg_gt, 0, 0, rows));
      tc = mul_scalar(sum(mul(mask_t, square(sub(dp, dg)))),
                      static_cast<T>(1.0 / tc_count));
    }
  }
  return {l1, tc};
}

// Weighted composition of the matting objective: the temporal terms carry
// weight 5, the rest weight 1.
template <typename T>
Tensor<T> total_matting_loss(const Tensor<T>& l1_alpha, const Tensor<T>& lap_alpha,
                             const Tensor<T>& tc_alpha, const Tensor<T>& l1_fg,
                             const Tensor<T>& tc_fg) {
  return add(add(add(l1_alpha, lap_alpha), mul_scalar(tc_alpha, T(5))),
             add(l1_fg, mul_scalar(tc_fg, T(5))));
}

// Binary cross entropy on segmentation logits, mean over all elements.
template <typename T>
Tensor<T> segmentation_bce(const Tensor<T>& logits, const Tensor<T>& gt) {
  return bce_with_logits_mean(logits, gt);
}

template <typename T>
struct LossReport {
  T l1_alpha = T(0);
  T lap_alpha = T(0);
  T tc_alpha = T(0);
  T l1_fg = T(0);
  T tc_fg = T(0);
  T total_matting = T(0);
  T seg_bce = T(0);
};

template <typename T>
struct MattingLoss {
  Tensor<T> total;
  LossReport<T> report;
};

// Full matting objective over a time-major clip. Single-frame clips skip the
// temporal terms (their contribution is defined over frame pairs).
template <typename T>
MattingLoss<T> matting_loss(const Tensor<T>& alpha, const Tensor<T>& alpha_gt,
                            const Tensor<T>& fg, const Tensor<T>& fg_gt, int frames) {
  MattingLoss<T> out;
  auto l1a = l1_loss(alpha, alpha_gt);
  auto lapa = laplacian_pyramid_loss(alpha, alpha_gt);
  auto tca = frames >= 2 ? temporal_coherence_loss(alpha, alpha_gt, frames)
                         : Tensor<T>::zeros(Shape{1});
  auto [l1f, tcf] = foreground_losses(fg, fg_gt, alpha_gt, frames);
  out.total = total_matting_loss(l1a, lapa, tca, l1f, tcf);
  out.report.l1_alpha = l1a[0];
  out.report.lap_alpha = lapa[0];
  out.report.tc_alpha = tca[0];
  out.report.l1_fg = l1f[0];
  out.report.tc_fg = tcf[0];
  out.report.total_matting = out.total[0];
  return out;
}

}  // namespace vmatt
