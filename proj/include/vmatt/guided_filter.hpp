#pragma once

#include "vmatt/modules.hpp"

namespace vmatt {

namespace detail {

// Clipped-window box sum: y_i = sum of x over the (2r+1)^2 window around i
// intersected with the image. Row pass then column pass.
template <typename T>
void box_sum_plane(const T* src, int H, int W, int radius, T* tmp, T* dst) {
  for (int i = 0; i < H; ++i) {
    const T* row = src + static_cast<std::int64_t>(i) * W;
    T* out = tmp + static_cast<std::int64_t>(i) * W;
    for (int j = 0; j < W; ++j) {
      const int lo = std::max(0, j - radius), hi = std::min(W - 1, j + radius);
      T acc = T(0);
      for (int k = lo; k <= hi; ++k) acc += row[k];
      out[j] = acc;
    }
  }
  for (int j = 0; j < W; ++j)
    for (int i = 0; i < H; ++i) {
      const int lo = std::max(0, i - radius), hi = std::min(H - 1, i + radius);
      T acc = T(0);
      for (int k = lo; k <= hi; ++k) acc += tmp[static_cast<std::int64_t>(k) * W + j];
      dst[static_cast<std::int64_t>(i) * W + j] = acc;
    }
}

template <typename T>
std::vector<T> box_inv_count(int H, int W, int radius) {
  std::vector<T> inv(static_cast<size_t>(H) * W);
  for (int i = 0; i < H; ++i) {
    const int ch = std::min(H - 1, i + radius) - std::max(0, i - radius) + 1;
    for (int j = 0; j < W; ++j) {
      const int cw = std::min(W - 1, j + radius) - std::max(0, j - radius) + 1;
      inv[static_cast<size_t>(i) * W + j] = T(1) / static_cast<T>(ch * cw);
    }
  }
  return inv;
}

}  // namespace detail

// Mean over the (2r+1)^2 window clipped at the borders, so constants map to
// themselves everywhere. Differentiable; the clipped window makes the adjoint
// another clipped box sum.
template <typename T>
Tensor<T> box_mean(const Tensor<T>& x, int radius) {
  check_shape(x.rank() == 4, "box_mean expects rank-4, got " + x.shape().str());
  check(radius >= 1, "box_mean: radius must be >= 1");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  const auto inv = detail::box_inv_count<T>(H, W, radius);
  Tensor<T> y(x.shape());
  std::vector<T> tmp(static_cast<size_t>(hw));
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    detail::box_sum_plane(x.data() + nc * hw, H, W, radius, tmp.data(), y.data() + nc * hw);
    for (std::int64_t i = 0; i < hw; ++i)
      y.data()[nc * hw + i] *= inv[static_cast<size_t>(i)];
  }
  if (auto* tape = GradTape<T>::active(); tape && tape->tracks(x)) {
    tape->record(y, [x, radius, inv](const Tensor<T>& dy, GradTape<T>& tp) {
      const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
      const std::int64_t hw = static_cast<std::int64_t>(H) * W;
      Tensor<T> dx(x.shape());
      std::vector<T> weighted(static_cast<size_t>(hw)), tmp(static_cast<size_t>(hw));
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        for (std::int64_t i = 0; i < hw; ++i)
          weighted[static_cast<size_t>(i)] =
              dy.data()[nc * hw + i] * inv[static_cast<size_t>(i)];
        detail::box_sum_plane(weighted.data(), H, W, radius, tmp.data(),
                              dx.data() + nc * hw);
      }
      tp.accumulate(x, dx);
    });
  }
  return y;
}

// Classical guided filter used as the non-learned upsampling baseline.
// Coefficients a = cov(G,S)/(var(G)+eps) and b = mean(S) - a*mean(G) are
// estimated at low resolution, bilinearly upsampled, and applied to the
// high-resolution guide. A single-channel guide is shared across source
// channels; otherwise channels pair up.
template <typename T>
Tensor<T> fast_guided_filter(const Tensor<T>& src_lr, const Tensor<T>& guide_lr,
                             const Tensor<T>& guide_hr, int radius, T eps) {
  check(radius >= 1, "fast_guided_filter: radius must be >= 1");
  check(eps > T(0), "fast_guided_filter: eps must be positive");
  check_shape(src_lr.rank() == 4 && guide_lr.rank() == 4 && guide_hr.rank() == 4,
              "fast_guided_filter expects rank-4 tensors");
  check_shape(src_lr.dim(2) == guide_lr.dim(2) && src_lr.dim(3) == guide_lr.dim(3) &&
                  src_lr.dim(0) == guide_lr.dim(0),
              "fast_guided_filter: src " + src_lr.shape().str() + " vs guide " +
                  guide_lr.shape().str());
  check_shape(guide_lr.dim(1) == src_lr.dim(1) || guide_lr.dim(1) == 1,
              "fast_guided_filter: guide channels must be 1 or match the source");

  Tensor<T> g_lr = guide_lr, g_hr = guide_hr;
  if (guide_lr.dim(1) == 1 && src_lr.dim(1) > 1) {
    std::vector<Tensor<T>> reps(static_cast<size_t>(src_lr.dim(1)), guide_lr);
    g_lr = concat(reps, 1);
    std::vector<Tensor<T>> reps_hr(static_cast<size_t>(src_lr.dim(1)), guide_hr);
    g_hr = concat(reps_hr, 1);
  }

  auto mean_g = box_mean(g_lr, radius);
  auto mean_s = box_mean(src_lr, radius);
  auto cov = sub(box_mean(mul(g_lr, src_lr), radius), mul(mean_g, mean_s));
  auto var = sub(box_mean(mul(g_lr, g_lr), radius), mul(mean_g, mean_g));
  auto a = div(cov, add_scalar(var, eps));
  auto b = sub(mean_s, mul(a, mean_g));
  auto a_hr = bilinear_resize(a, guide_hr.dim(2), guide_hr.dim(3));
  auto b_hr = bilinear_resize(b, guide_hr.dim(2), guide_hr.dim(3));
  return add(mul(a_hr, g_hr), b_hr);
}

// Learnable high-resolution head. Box statistics of x = [frame|gray] and
// y = [alpha|foreground] are taken at low resolution; the local linear
// coefficient A comes from 1x1 convs over [transformed guide, y, hidden],
// with b = mean_y - A*mean_x; A and b are bilinearly upsampled and applied to
// the high-resolution [frame|gray]. Outputs are clamped to [0,1].
template <typename T>
struct DeepGuidedFilter {
  Conv2d<T> guide1, guide2;  // frame_lr -> width -> width, ReLU after each
  Conv2d<T> coef1, coef2;    // [guide,y,hidden] -> width -> 4
  int radius = 1;

  static DeepGuidedFilter make(Rng& rng, int hidden_channels, int width = 16) {
    DeepGuidedFilter m;
    m.guide1 = Conv2d<T>::make(rng, 3, width, 1, {}, /*bias=*/true);
    m.guide2 = Conv2d<T>::make(rng, width, width, 1, {}, /*bias=*/true);
    m.coef1 = Conv2d<T>::make(rng, width + 4 + hidden_channels, width, 1, {}, /*bias=*/true);
    m.coef2 = Conv2d<T>::make(rng, width, 4, 1, {}, /*bias=*/true);
    return m;
  }

  // Returns (alpha_hr, foreground_hr) at frame_hr resolution.
  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& alpha_lr,
                                             const Tensor<T>& fg_lr,
                                             const Tensor<T>& hidden_lr,
                                             const Tensor<T>& frame_hr,
                                             const Tensor<T>& frame_lr) const {
    check_shape(alpha_lr.dim(2) == frame_lr.dim(2) && alpha_lr.dim(3) == frame_lr.dim(3) &&
                    fg_lr.dim(2) == frame_lr.dim(2) && hidden_lr.dim(2) == frame_lr.dim(2),
                "deep_guided_filter: low-resolution inputs must share extents");
    // Channel pairing of the local linear model: foreground rides on RGB,
    // alpha on the gray channel.
    auto x_lr = concat(frame_lr, channel_mean(frame_lr), 1);
    auto x_hr = concat(frame_hr, channel_mean(frame_hr), 1);
    auto y = concat(fg_lr, alpha_lr, 1);

    auto mean_x = box_mean(x_lr, radius);
    auto mean_y = box_mean(y, radius);
    auto guide = relu(guide2(relu(guide1(frame_lr))));
    auto a = coef2(relu(coef1(concat(guide, y, hidden_lr, 1))));
    auto b = sub(mean_y, mul(a, mean_x));
    auto a_hr = bilinear_resize(a, frame_hr.dim(2), frame_hr.dim(3));
    auto b_hr = bilinear_resize(b, frame_hr.dim(2), frame_hr.dim(3));
    auto out = clamp(add(mul(a_hr, x_hr), b_hr), T(0), T(1));
    return {narrow(out, 1, 3, 1), narrow(out, 1, 0, 3)};
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    guide1.visit(prefix + ".guide1", f);
    guide2.visit(prefix + ".guide2", f);
    coef1.visit(prefix + ".coef1", f);
    coef2.visit(prefix + ".coef2", f);
  }

  std::int64_t param_count() const {
    return guide1.param_count() + guide2.param_count() + coef1.param_count() +
           coef2.param_count();
  }
};

}  // namespace vmatt
