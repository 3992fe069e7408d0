#pragma once

// Clip-level data augmentation: Porter-Duff style compositing, eased motion
// tracks (affine + photometric properties interpolated across the clip),
// temporal resequencing (reverse / speed / pause / skip), and discrete flags
// (hflip, grayscale, sharpen) applied consistently to all frames.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <utility>
#include <vector>

#include "vmatt/ops.hpp"
#include "vmatt/tensor.hpp"

namespace vmatt {

enum class SampleKind { kMatting, kVideoSeg, kImageSeg };

// One training/eval clip, time-major with a single stream (row t = frame t).
// Matting samples carry alpha/foreground/background planes and satisfy
// frames = alpha*fg + (1-alpha)*bg by construction; segmentation samples
// carry only frames and a binary segmentation map.
template <typename T>
struct ClipSample {
  Tensor<T> frames;    // (T,3,H,W) in [0,1]
  Tensor<T> alpha_gt;  // (T,1,H,W), matting only
  Tensor<T> fg_gt;     // (T,3,H,W), matting only
  Tensor<T> seg_gt;    // (T,1,H,W), binary
  Tensor<T> bg;        // (T,3,H,W), matting only; kept so motion can re-composite
  SampleKind kind = SampleKind::kMatting;

  int frame_count() const { return frames.dim(0); }
};

// frames = alpha*fg + (1-alpha)*bg, per pixel per channel. Inputs outside
// [0,1] are clamped with a warning.
template <typename T>
Tensor<T> composite(const Tensor<T>& fg, const Tensor<T>& alpha, const Tensor<T>& bg) {
  check_shape(fg.shape() == bg.shape(), "composite: fg " + fg.shape().str() +
                                            " vs bg " + bg.shape().str());
  check_shape(alpha.dim(0) == fg.dim(0) && alpha.dim(1) == 1 &&
                  alpha.dim(2) == fg.dim(2) && alpha.dim(3) == fg.dim(3),
              "composite: alpha " + alpha.shape().str() + " does not match " +
                  fg.shape().str());
  std::int64_t clamped = 0;
  auto clamp01 = [&clamped](T v) {
    if (v < T(0) || v > T(1)) {
      ++clamped;
      return v < T(0) ? T(0) : T(1);
    }
    return v;
  };
  const int C = fg.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(fg.dim(2)) * fg.dim(3);
  Tensor<T> out(fg.shape());
  for (int n = 0; n < fg.dim(0); ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      const T a = clamp01(alpha.data()[n * plane + i]);
      for (int c = 0; c < C; ++c) {
        const std::int64_t at = (static_cast<std::int64_t>(n) * C + c) * plane + i;
        out[at] = a * clamp01(fg[at]) + (T(1) - a) * clamp01(bg[at]);
      }
    }
  if (clamped > 0)
    std::cerr << "composite: clamped " << clamped << " out-of-range input values\n";
  return out;
}

// ---- eased property tracks --------------------------------------------------

enum class Easing { kLinear, kEaseInQuad, kEaseOutQuad, kSine };

// All easings map [0,1] -> [0,1] with f(0)=0 and f(1)=1.
inline double ease(Easing e, double u) {
  switch (e) {
    case Easing::kLinear: return u;
    case Easing::kEaseInQuad: return u * u;
    case Easing::kEaseOutQuad: return u * (2.0 - u);
    case Easing::kSine: return 0.5 - 0.5 * std::cos(3.14159265358979323846 * u);
  }
  return u;
}

// A property interpolated from start to end across the clip under an easing.
struct PropertyTrack {
  double start = 0.0;
  double end = 0.0;
  Easing easing = Easing::kLinear;

  double value(double u) const { return start + (end - start) * ease(easing, u); }
};

inline PropertyTrack constant_track(double v) { return {v, v, Easing::kLinear}; }

struct GeometryTracks {
  PropertyTrack translate_x = constant_track(0.0);  // pixels
  PropertyTrack translate_y = constant_track(0.0);  // pixels
  PropertyTrack scale = constant_track(1.0);        // about the image center
  PropertyTrack rotate = constant_track(0.0);       // radians
  PropertyTrack shear = constant_track(0.0);        // x-shear coefficient
};

struct AppearanceTracks {
  PropertyTrack brightness = constant_track(1.0);  // multiplicative
  PropertyTrack saturation = constant_track(1.0);  // 0 = grayscale
  PropertyTrack contrast = constant_track(1.0);    // pivot 0.5
  PropertyTrack hue = constant_track(0.0);         // radians, YIQ rotation
  PropertyTrack noise = constant_track(0.0);       // additive gaussian sigma
  PropertyTrack blur = constant_track(0.0);        // gaussian sigma, pixels
};

enum class Interp { kBilinear, kNearest };
enum class Border { kZero, kClampEdge };

// Foreground (with its labels) and background move independently; appearance
// applies to both color layers, never to labels. Discrete flags apply to the
// whole clip.
struct MotionAugmentConfig {
  GeometryTracks fg_motion;
  GeometryTracks bg_motion;
  AppearanceTracks appearance;
  bool hflip = false;
  bool grayscale = false;
  bool sharpen = false;
  Interp interp = Interp::kBilinear;
};

struct AffineParams {
  double translate_x = 0.0;
  double translate_y = 0.0;
  double scale = 1.0;
  double rotate = 0.0;
  double shear = 0.0;
};

// Inverse-mapped affine warp about the image center: a destination pixel
// samples from L^-1 (p - c - t) + c with L = R(rotate) Sh(shear) Sc(scale).
// Rejects |det L| < 1e-6. The same transform is applied to every row.
template <typename T>
Tensor<T> warp_affine(const Tensor<T>& x, const AffineParams& p, Interp interp,
                      Border border) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double cs = std::cos(p.rotate), sn = std::sin(p.rotate);
  // L = R * Sh * Sc
  const double l00 = p.scale * cs, l01 = p.scale * (cs * p.shear - sn);
  const double l10 = p.scale * sn, l11 = p.scale * (sn * p.shear + cs);
  const double det = l00 * l11 - l01 * l10;
  check(std::abs(det) >= 1e-6,
        "warp_affine: degenerate transform (|det| = " + std::to_string(std::abs(det)) + ")");
  const double i00 = l11 / det, i01 = -l01 / det;
  const double i10 = -l10 / det, i11 = l00 / det;
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;

  Tensor<T> out(x.shape());
  auto fetch = [&](int n, int c, int yi, int xi) -> T {
    if (yi < 0 || yi >= H || xi < 0 || xi >= W) {
      if (border == Border::kZero) return T(0);
      yi = std::clamp(yi, 0, H - 1);
      xi = std::clamp(xi, 0, W - 1);
    }
    return x.at(n, c, yi, xi);
  };
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int xpix = 0; xpix < W; ++xpix) {
        const double dx = xpix - cx - p.translate_x;
        const double dy = y - cy - p.translate_y;
        const double sx = i00 * dx + i01 * dy + cx;
        const double sy = i10 * dx + i11 * dy + cy;
        if (interp == Interp::kNearest) {
          const int xi = static_cast<int>(std::llround(sx));
          const int yi = static_cast<int>(std::llround(sy));
          for (int c = 0; c < C; ++c) out.at(n, c, y, xpix) = fetch(n, c, yi, xi);
        } else {
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const double fx = sx - x0, fy = sy - y0;
          for (int c = 0; c < C; ++c) {
            const double v = (1 - fy) * (1 - fx) * fetch(n, c, y0, x0) +
                             (1 - fy) * fx * fetch(n, c, y0, x0 + 1) +
                             fy * (1 - fx) * fetch(n, c, y0 + 1, x0) +
                             fy * fx * fetch(n, c, y0 + 1, x0 + 1);
            out.at(n, c, y, xpix) = static_cast<T>(v);
          }
        }
      }
  return out;
}

// ---- photometric ops (color planes only, never labels) ----------------------

namespace detail {

template <typename T>
void hflip_inplace(Tensor<T>& x) {
  const int W = x.dim(3);
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c)
      for (int i = 0; i < x.dim(2); ++i)
        for (int j = 0; j < W / 2; ++j)
          std::swap(x.at(n, c, i, j), x.at(n, c, i, W - 1 - j));
}

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, double sigma) {
  if (sigma < 1e-6) return x;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(static_cast<size_t>(2 * radius + 1));
  double z = 0;
  for (int i = -radius; i <= radius; ++i) {
    taps[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    z += taps[static_cast<size_t>(i + radius)];
  }
  for (auto& t : taps) t /= z;
  const int H = x.dim(2), W = x.dim(3);
  Tensor<T> tmp(x.shape()), out(x.shape());
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c) {
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double acc = 0;
          for (int k = -radius; k <= radius; ++k)
            acc += taps[static_cast<size_t>(k + radius)] *
                   x.at(n, c, i, std::clamp(j + k, 0, W - 1));
          tmp.at(n, c, i, j) = static_cast<T>(acc);
        }
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          double acc = 0;
          for (int k = -radius; k <= radius; ++k)
            acc += taps[static_cast<size_t>(k + radius)] *
                   tmp.at(n, c, std::clamp(i + k, 0, H - 1), j);
          out.at(n, c, i, j) = static_cast<T>(acc);
        }
    }
  return out;
}

// Luma/chroma transform pair used for hue rotation. The inverse is computed
// from the forward constants so the round trip is exact to machine precision.
inline const std::array<double, 9>& yiq_forward() {
  static const std::array<double, 9> m = {0.299,    0.587,     0.114,     //
                                          0.595716, -0.274453, -0.321263,  //
                                          0.211456, -0.522591, 0.311135};
  return m;
}

inline const std::array<double, 9>& yiq_backward() {
  static const std::array<double, 9> inv = [] {
    const auto& m = yiq_forward();
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                       m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    std::array<double, 9> a;
    a[0] = (m[4] * m[8] - m[5] * m[7]) / det;
    a[1] = (m[2] * m[7] - m[1] * m[8]) / det;
    a[2] = (m[1] * m[5] - m[2] * m[4]) / det;
    a[3] = (m[5] * m[6] - m[3] * m[8]) / det;
    a[4] = (m[0] * m[8] - m[2] * m[6]) / det;
    a[5] = (m[2] * m[3] - m[0] * m[5]) / det;
    a[6] = (m[3] * m[7] - m[4] * m[6]) / det;
    a[7] = (m[1] * m[6] - m[0] * m[7]) / det;
    a[8] = (m[0] * m[4] - m[1] * m[3]) / det;
    return a;
  }();
  return inv;
}

// brightness -> contrast -> saturation -> hue, in one pixel pass. Fully
// neutral settings are a bit-exact no-op.
template <typename T>
void color_adjust_inplace(Tensor<T>& x, double brightness, double contrast,
                          double saturation, double hue) {
  if (brightness == 1.0 && contrast == 1.0 && saturation == 1.0 && hue == 0.0) return;
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const double ch = std::cos(hue), sh = std::sin(hue);
  const auto& fwd = yiq_forward();
  const auto& bwd = yiq_backward();
  for (int n = 0; n < x.dim(0); ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      double rgb[3];
      for (int c = 0; c < 3; ++c) {
        double v = x[(static_cast<std::int64_t>(n) * 3 + c) * plane + i];
        v *= brightness;
        v = (v - 0.5) * contrast + 0.5;
        rgb[c] = v;
      }
      const double gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
      for (int c = 0; c < 3; ++c) rgb[c] = gray + (rgb[c] - gray) * saturation;
      if (hue != 0.0) {
        // rotate the chroma plane of the luma/chroma representation
        const double yy = fwd[0] * rgb[0] + fwd[1] * rgb[1] + fwd[2] * rgb[2];
        const double ii = fwd[3] * rgb[0] + fwd[4] * rgb[1] + fwd[5] * rgb[2];
        const double qq = fwd[6] * rgb[0] + fwd[7] * rgb[1] + fwd[8] * rgb[2];
        const double ir = ch * ii - sh * qq, qr = sh * ii + ch * qq;
        rgb[0] = bwd[0] * yy + bwd[1] * ir + bwd[2] * qr;
        rgb[1] = bwd[3] * yy + bwd[4] * ir + bwd[5] * qr;
        rgb[2] = bwd[6] * yy + bwd[7] * ir + bwd[8] * qr;
      }
      for (int c = 0; c < 3; ++c)
        x[(static_cast<std::int64_t>(n) * 3 + c) * plane + i] =
            static_cast<T>(std::clamp(rgb[c], 0.0, 1.0));
    }
}

template <typename T>
void add_noise_inplace(Tensor<T>& x, double sigma, Rng& rng) {
  if (sigma < 1e-12) return;
  for (std::int64_t i = 0; i < x.numel(); ++i)
    x[i] = static_cast<T>(std::clamp(static_cast<double>(x[i]) + sigma * rng.normal(),
                                     0.0, 1.0));
}

template <typename T>
void grayscale_inplace(Tensor<T>& x) {
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  for (int n = 0; n < x.dim(0); ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      const std::int64_t base = static_cast<std::int64_t>(n) * 3 * plane + i;
      const double g = 0.299 * x[base] + 0.587 * x[base + plane] + 0.114 * x[base + 2 * plane];
      x[base] = x[base + plane] = x[base + 2 * plane] = static_cast<T>(g);
    }
}

template <typename T>
void sharpen_inplace(Tensor<T>& x) {
  auto soft = gaussian_blur(x, 1.0);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    x[i] = static_cast<T>(std::clamp(
        static_cast<double>(x[i]) + 1.0 * (static_cast<double>(x[i]) - soft[i]), 0.0, 1.0));
}

template <typename T>
Tensor<T> gather_frames(const Tensor<T>& x, const std::vector<int>& order) {
  if (!x.defined()) return x;
  std::vector<int> dims = x.shape().dims();
  dims[0] = static_cast<int>(order.size());
  Tensor<T> out{Shape(dims)};
  const std::int64_t row = x.numel() / x.dim(0);
  for (size_t t = 0; t < order.size(); ++t)
    for (std::int64_t i = 0; i < row; ++i)
      out[static_cast<std::int64_t>(t) * row + i] = x[order[t] * row + i];
  return out;
}

// Writes a single-row tensor back into row t of a multi-row plane.
template <typename T>
void copy_into_row(Tensor<T>& dst, int t, const Tensor<T>& row) {
  const std::int64_t n = row.numel();
  for (std::int64_t i = 0; i < n; ++i) dst[t * n + i] = row[i];
}

inline AffineParams params_at(const GeometryTracks& g, double u) {
  return {g.translate_x.value(u), g.translate_y.value(u), g.scale.value(u),
          g.rotate.value(u), g.shear.value(u)};
}

}  // namespace detail

// Applies the eased motion/appearance schedule to one clip. Frame t uses the
// interpolation parameter u = t/(T-1). Foreground and labels warp together
// with zero borders; the background warps with its own tracks and edge
// clamping; matting frames are re-composited afterwards. Photometric
// adjustments touch only color planes. Deterministic in (cfg, seed).
template <typename T>
ClipSample<T> motion_augment(const ClipSample<T>& clip, const MotionAugmentConfig& cfg,
                             std::uint64_t seed) {
  const int frames = clip.frame_count();
  ClipSample<T> out = clip;
  out.frames = clip.frames.clone();
  if (clip.alpha_gt.defined()) out.alpha_gt = clip.alpha_gt.clone();
  if (clip.fg_gt.defined()) out.fg_gt = clip.fg_gt.clone();
  if (clip.seg_gt.defined()) out.seg_gt = clip.seg_gt.clone();
  if (clip.bg.defined()) out.bg = clip.bg.clone();

  if (cfg.hflip) {
    detail::hflip_inplace(out.frames);
    if (out.alpha_gt.defined()) detail::hflip_inplace(out.alpha_gt);
    if (out.fg_gt.defined()) detail::hflip_inplace(out.fg_gt);
    if (out.seg_gt.defined()) detail::hflip_inplace(out.seg_gt);
    if (out.bg.defined()) detail::hflip_inplace(out.bg);
  }

  Rng rng(seed);
  const bool recomposite = clip.kind == SampleKind::kMatting && out.bg.defined() &&
                           out.fg_gt.defined() && out.alpha_gt.defined();
  std::vector<Tensor<T>> warped_frames;
  for (int t = 0; t < frames; ++t) {
    const double u = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
    const auto fg_p = detail::params_at(cfg.fg_motion, u);
    const auto bg_p = detail::params_at(cfg.bg_motion, u);
    const double bright = cfg.appearance.brightness.value(u);
    const double sat = cfg.appearance.saturation.value(u);
    const double contr = cfg.appearance.contrast.value(u);
    const double hue = cfg.appearance.hue.value(u);
    const double noise = cfg.appearance.noise.value(u);
    const double blur = cfg.appearance.blur.value(u);

    if (recomposite) {
      auto fg_t = warp_affine(narrow(out.fg_gt, 0, t, 1), fg_p, cfg.interp, Border::kZero);
      auto a_t = warp_affine(narrow(out.alpha_gt, 0, t, 1), fg_p, cfg.interp, Border::kZero);
      auto s_t = warp_affine(narrow(out.seg_gt, 0, t, 1), fg_p, cfg.interp, Border::kZero);
      auto bg_t = warp_affine(narrow(out.bg, 0, t, 1), bg_p, cfg.interp, Border::kClampEdge);
      detail::color_adjust_inplace(fg_t, bright, contr, sat, hue);
      detail::color_adjust_inplace(bg_t, bright, contr, sat, hue);
      if (cfg.grayscale) {
        detail::grayscale_inplace(fg_t);
        detail::grayscale_inplace(bg_t);
      }
      detail::add_noise_inplace(fg_t, noise, rng);
      detail::add_noise_inplace(bg_t, noise, rng);
      fg_t = detail::gaussian_blur(fg_t, blur);
      bg_t = detail::gaussian_blur(bg_t, blur);
      a_t = detail::gaussian_blur(a_t, blur);  // alpha blurs with the image it explains
      if (cfg.sharpen) {
        detail::sharpen_inplace(fg_t);
        detail::sharpen_inplace(bg_t);
      }
      auto frame = composite(fg_t, a_t, bg_t);
      detail::copy_into_row(out.fg_gt, t, fg_t);
      detail::copy_into_row(out.alpha_gt, t, a_t);
      detail::copy_into_row(out.seg_gt, t, s_t);
      detail::copy_into_row(out.bg, t, bg_t);
      warped_frames.push_back(frame);
    } else {
      auto f_t = warp_affine(narrow(out.frames, 0, t, 1), fg_p, cfg.interp, Border::kClampEdge);
      detail::color_adjust_inplace(f_t, bright, contr, sat, hue);
      if (cfg.grayscale) detail::grayscale_inplace(f_t);
      detail::add_noise_inplace(f_t, noise, rng);
      f_t = detail::gaussian_blur(f_t, blur);
      if (cfg.sharpen) detail::sharpen_inplace(f_t);
      if (out.seg_gt.defined()) {
        auto s_t = warp_affine(narrow(out.seg_gt, 0, t, 1), fg_p, cfg.interp, Border::kZero);
        detail::copy_into_row(out.seg_gt, t, s_t);
      }
      warped_frames.push_back(f_t);
    }
  }
  out.frames = concat(warped_frames, 0);
  return out;
}

// ---- temporal resequencing ---------------------------------------------------

struct TemporalOps {
  bool reverse = false;
  double speed = 1.0;  // >1 fast-forward, <1 slow-motion (frames repeat)
  bool pause = false;  // hold a random frame, truncating to keep the length
  int skip = 0;        // keep every (skip+1)-th frame
  int out_frames = 0;  // 0 = natural length after the ops above
};

// Reorders frame indices (skip -> speed -> pause -> reverse -> resample) and
// gathers every plane of the clip with the same index list.
template <typename T>
ClipSample<T> temporal_augment(const ClipSample<T>& clip, const TemporalOps& ops,
                               std::uint64_t seed) {
  const int frames = clip.frame_count();
  check(frames >= 2, "temporal_augment: needs at least 2 frames");
  check(ops.speed > 0.0, "temporal_augment: speed must be positive");
  check(ops.skip >= 0, "temporal_augment: skip must be non-negative");

  std::vector<int> idx;
  for (int t = 0; t < frames; t += ops.skip + 1) idx.push_back(t);
  const int available = static_cast<int>(idx.size());
  if (ops.out_frames > available)
    throw ValueError("temporal_augment: requested " + std::to_string(ops.out_frames) +
                     " frames but only " + std::to_string(available) +
                     " unique source frames remain after skipping");

  if (ops.speed != 1.0) {
    std::vector<int> res;
    for (int i = 0;; ++i) {
      const auto j = static_cast<std::int64_t>(std::llround(i * ops.speed));
      if (j >= static_cast<std::int64_t>(idx.size())) break;
      res.push_back(idx[static_cast<size_t>(j)]);
    }
    idx = std::move(res);
  }

  Rng rng(seed);
  if (ops.pause && idx.size() >= 2) {
    const auto p = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(idx.size()) - 1));
    const auto hold = static_cast<size_t>(rng.uniform_int(1, 3));
    std::vector<int> res;
    for (size_t i = 0; i < idx.size() && res.size() < idx.size(); ++i) {
      res.push_back(idx[i]);
      if (i == p)
        for (size_t k = 0; k < hold && res.size() < idx.size(); ++k) res.push_back(idx[i]);
    }
    idx = std::move(res);
  }

  if (ops.reverse) std::reverse(idx.begin(), idx.end());

  if (ops.out_frames > 0 && ops.out_frames != static_cast<int>(idx.size())) {
    std::vector<int> res(static_cast<size_t>(ops.out_frames));
    const int n = static_cast<int>(idx.size());
    for (int i = 0; i < ops.out_frames; ++i) {
      const auto j = ops.out_frames == 1
                         ? 0
                         : std::llround(static_cast<double>(i) * (n - 1) / (ops.out_frames - 1));
      res[static_cast<size_t>(i)] = idx[static_cast<size_t>(j)];
    }
    idx = std::move(res);
  }

  ClipSample<T> out;
  out.kind = clip.kind;
  out.frames = detail::gather_frames(clip.frames, idx);
  out.alpha_gt = detail::gather_frames(clip.alpha_gt, idx);
  out.fg_gt = detail::gather_frames(clip.fg_gt, idx);
  out.seg_gt = detail::gather_frames(clip.seg_gt, idx);
  out.bg = detail::gather_frames(clip.bg, idx);
  return out;
}

}  // namespace vmatt
