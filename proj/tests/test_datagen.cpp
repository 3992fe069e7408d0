// Compositing, motion/temporal/discrete augmentation, and the procedural clip
// synthesizers: bit-exactness contracts in nearest-neighbor mode, pixel-shift
// oracles for eased translations, involution properties, reconstruction of
// frames from their layers, and distribution checks for the resolution
// sampler.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vmatt/augment.hpp"
#include "vmatt/synth.hpp"
#include "vmatt/tensor.hpp"

using namespace vmatt;

namespace {

bool bit_equal(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.defined() != b.defined()) return false;
  if (!a.defined()) return true;
  if (a.shape() != b.shape()) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool clips_bit_equal(const ClipSample<double>& a, const ClipSample<double>& b) {
  return a.kind == b.kind && bit_equal(a.frames, b.frames) &&
         bit_equal(a.alpha_gt, b.alpha_gt) && bit_equal(a.fg_gt, b.fg_gt) &&
         bit_equal(a.seg_gt, b.seg_gt) && bit_equal(a.bg, b.bg);
}

// Repeats the single frame of a clip T times (a static clip).
ClipSample<double> tile_static(const ClipSample<double>& one, int frames) {
  REQUIRE(one.frame_count() == 1);
  std::vector<int> order(static_cast<size_t>(frames), 0);
  ClipSample<double> out;
  out.kind = one.kind;
  out.frames = detail::gather_frames(one.frames, order);
  out.alpha_gt = detail::gather_frames(one.alpha_gt, order);
  out.fg_gt = detail::gather_frames(one.fg_gt, order);
  out.seg_gt = detail::gather_frames(one.seg_gt, order);
  out.bg = detail::gather_frames(one.bg, order);
  return out;
}

// Horizontal shift by whole pixels with zero fill, the oracle for
// nearest-neighbor translation warps.
Tensor<double> shift_x_zero(const Tensor<double>& x, int s) {
  Tensor<double> out(x.shape());
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c)
      for (int i = 0; i < x.dim(2); ++i)
        for (int j = 0; j < x.dim(3); ++j)
          if (j - s >= 0 && j - s < x.dim(3)) out.at(n, c, i, j) = x.at(n, c, i, j - s);
  return out;
}

Tensor<double> row(const Tensor<double>& x, int t) { return narrow(x, 0, t, 1); }

}  // namespace

TEST_CASE("compositing follows the linear blend at its endpoints") {
  auto fg = Tensor<double>::full(Shape{1, 3, 4, 4}, 0.8);
  auto bg = Tensor<double>::full(Shape{1, 3, 4, 4}, 0.2);
  auto a1 = Tensor<double>::full(Shape{1, 1, 4, 4}, 1.0);
  auto a0 = Tensor<double>::zeros(Shape{1, 1, 4, 4});
  auto ah = Tensor<double>::full(Shape{1, 1, 4, 4}, 0.5);

  CHECK(max_diff(composite(fg, a1, bg), fg) == 0.0);
  CHECK(max_diff(composite(fg, a0, bg), bg) == 0.0);
  CHECK(max_diff(composite(fg, ah, bg), Tensor<double>::full(Shape{1, 3, 4, 4}, 0.5)) < 1e-15);

  // out-of-range inputs are clamped (with a warning on stderr)
  auto hot = Tensor<double>::full(Shape{1, 3, 4, 4}, 1.2);
  CHECK(max_diff(composite(hot, a1, bg), Tensor<double>::full(Shape{1, 3, 4, 4}, 1.0)) == 0.0);

  CHECK_THROWS_AS(composite(fg, Tensor<double>::zeros(Shape{1, 1, 3, 4}), bg), ShapeError);
}

TEST_CASE("easing functions hit their endpoints and order their midpoints") {
  for (auto e : {Easing::kLinear, Easing::kEaseInQuad, Easing::kEaseOutQuad, Easing::kSine}) {
    CHECK(ease(e, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ease(e, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    double prev = -1e-9;
    for (int i = 0; i <= 20; ++i) {
      const double v = ease(e, i / 20.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
  CHECK(ease(Easing::kEaseInQuad, 0.5) == doctest::Approx(0.25));
  CHECK(ease(Easing::kEaseOutQuad, 0.5) == doctest::Approx(0.75));
  CHECK(ease(Easing::kSine, 0.5) == doctest::Approx(0.5));
  CHECK(ease(Easing::kSine, 0.25) < 0.25);
}

TEST_CASE("identity motion config is a bit-exact no-op in nearest mode") {
  auto clip = synth_matting_clip<double>(7, 3, 32, 32);
  MotionAugmentConfig cfg;
  cfg.interp = Interp::kNearest;
  CHECK(clips_bit_equal(motion_augment(clip, cfg, 0), clip));

  cfg.interp = Interp::kBilinear;
  auto soft = motion_augment(clip, cfg, 0);
  CHECK(max_diff(soft.frames, clip.frames) < 1e-12);
  CHECK(max_diff(soft.alpha_gt, clip.alpha_gt) < 1e-12);
}

TEST_CASE("eased translation matches the pixel-shift oracle") {
  auto clip = tile_static(synth_matting_clip<double>(9, 1, 32, 32), 4);
  MotionAugmentConfig cfg;
  cfg.interp = Interp::kNearest;
  cfg.fg_motion.translate_x = {0.0, 6.0, Easing::kLinear};  // 2 px per frame
  auto moved = motion_augment(clip, cfg, 0);
  for (int t = 0; t < 4; ++t) {
    CHECK(bit_equal(row(moved.fg_gt, t), shift_x_zero(row(clip.fg_gt, 0), 2 * t)));
    CHECK(bit_equal(row(moved.alpha_gt, t), shift_x_zero(row(clip.alpha_gt, 0), 2 * t)));
    CHECK(bit_equal(row(moved.seg_gt, t), shift_x_zero(row(clip.seg_gt, 0), 2 * t)));
    // background stands still; frames are the composite of the shifted layers
    CHECK(bit_equal(row(moved.bg, t), row(clip.bg, 0)));
    CHECK(bit_equal(row(moved.frames, t),
                    composite(shift_x_zero(row(clip.fg_gt, 0), 2 * t),
                              shift_x_zero(row(clip.alpha_gt, 0), 2 * t), row(clip.bg, 0))));
  }
}

TEST_CASE("different easings share endpoints but differ between them") {
  auto clip = tile_static(synth_matting_clip<double>(11, 1, 32, 32), 5);
  MotionAugmentConfig lin, sin_cfg;
  lin.interp = sin_cfg.interp = Interp::kNearest;
  lin.fg_motion.translate_x = {0.0, 8.0, Easing::kLinear};
  sin_cfg.fg_motion.translate_x = {0.0, 8.0, Easing::kSine};
  auto a = motion_augment(clip, lin, 0);
  auto b = motion_augment(clip, sin_cfg, 0);
  CHECK(bit_equal(row(a.frames, 0), row(b.frames, 0)));
  CHECK(bit_equal(row(a.frames, 4), row(b.frames, 4)));
  CHECK(max_diff(row(a.frames, 1), row(b.frames, 1)) > 0.0);  // u=0.25: 2 px vs ~1.2 px
}

TEST_CASE("degenerate affine configurations are rejected") {
  auto clip = synth_matting_clip<double>(13, 2, 32, 32);
  MotionAugmentConfig cfg;
  cfg.fg_motion.scale = {1.0, 0.0, Easing::kLinear};  // frame 1 collapses
  CHECK_THROWS_AS(motion_augment(clip, cfg, 0), ValueError);
  CHECK_THROWS_AS(
      warp_affine(clip.frames, AffineParams{0, 0, 1e-5, 0, 0}, Interp::kNearest, Border::kZero),
      ValueError);
}

TEST_CASE("warps use zero borders for layers and edge clamping for backgrounds") {
  Tensor<double> x(Shape{1, 1, 4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) x.at(0, 0, i, j) = (i * 4 + j) / 16.0;
  AffineParams right2{2.0, 0.0, 1.0, 0.0, 0.0};
  auto z = warp_affine(x, right2, Interp::kNearest, Border::kZero);
  auto e = warp_affine(x, right2, Interp::kNearest, Border::kClampEdge);
  for (int i = 0; i < 4; ++i) {
    CHECK(z.at(0, 0, i, 0) == 0.0);
    CHECK(z.at(0, 0, i, 1) == 0.0);
    CHECK(z.at(0, 0, i, 2) == x.at(0, 0, i, 0));
    CHECK(e.at(0, 0, i, 0) == x.at(0, 0, i, 0));
    CHECK(e.at(0, 0, i, 1) == x.at(0, 0, i, 0));
    CHECK(e.at(0, 0, i, 3) == x.at(0, 0, i, 1));
  }
}

TEST_CASE("nearest-mode warps commute with thresholding (label consistency)") {
  Rng rng(17);
  Tensor<double> alpha(Shape{1, 1, 16, 16});
  for (std::int64_t i = 0; i < alpha.numel(); ++i) alpha[i] = rng.uniform();
  AffineParams p{1.3, -0.8, 1.2, 0.3, 0.1};
  auto warp_then_thr = warp_affine(alpha, p, Interp::kNearest, Border::kZero);
  for (std::int64_t i = 0; i < warp_then_thr.numel(); ++i)
    warp_then_thr[i] = warp_then_thr[i] > 0.5 ? 1.0 : 0.0;
  Tensor<double> thr = alpha.clone();
  for (std::int64_t i = 0; i < thr.numel(); ++i) thr[i] = thr[i] > 0.5 ? 1.0 : 0.0;
  auto thr_then_warp = warp_affine(thr, p, Interp::kNearest, Border::kZero);
  CHECK(bit_equal(warp_then_thr, thr_then_warp));
}

TEST_CASE("horizontal flip is an involution") {
  auto clip = synth_matting_clip<double>(19, 2, 32, 48);
  MotionAugmentConfig cfg;
  cfg.interp = Interp::kNearest;
  cfg.hflip = true;
  auto once = motion_augment(clip, cfg, 0);
  CHECK_FALSE(bit_equal(once.frames, clip.frames));
  CHECK(clips_bit_equal(motion_augment(once, cfg, 0), clip));
}

TEST_CASE("photometric adjustments act on colors, never labels") {
  auto clip = tile_static(synth_matting_clip<double>(23, 1, 32, 32), 3);

  SUBCASE("brightness scales the composite linearly") {
    MotionAugmentConfig cfg;
    cfg.interp = Interp::kNearest;
    cfg.appearance.brightness = constant_track(0.5);
    auto out = motion_augment(clip, cfg, 0);
    Tensor<double> half = clip.frames.clone();
    for (std::int64_t i = 0; i < half.numel(); ++i) half[i] *= 0.5;
    CHECK(max_diff(out.frames, half) < 1e-12);
    CHECK(bit_equal(out.alpha_gt, clip.alpha_gt));
    CHECK(bit_equal(out.seg_gt, clip.seg_gt));
  }

  SUBCASE("grayscale and zero saturation equalize the channels") {
    for (int variant = 0; variant < 2; ++variant) {
      MotionAugmentConfig cfg;
      cfg.interp = Interp::kNearest;
      if (variant == 0)
        cfg.grayscale = true;
      else
        cfg.appearance.saturation = constant_track(0.0);
      auto out = motion_augment(clip, cfg, 0);
      const std::int64_t plane = static_cast<std::int64_t>(32) * 32;
      for (int t = 0; t < 3; ++t)
        for (std::int64_t i = 0; i < plane; ++i) {
          const double r = out.frames[(t * 3 + 0) * plane + i];
          CHECK(out.frames[(t * 3 + 1) * plane + i] == doctest::Approx(r).epsilon(1e-12));
          CHECK(out.frames[(t * 3 + 2) * plane + i] == doctest::Approx(r).epsilon(1e-12));
        }
    }
  }

  SUBCASE("contrast pivots around mid gray") {
    ClipSample<double> flat = clip;
    flat.fg_gt = Tensor<double>::full(clip.fg_gt.shape(), 0.5);
    flat.bg = Tensor<double>::full(clip.bg.shape(), 0.5);
    flat.frames = composite(flat.fg_gt, flat.alpha_gt, flat.bg);
    MotionAugmentConfig cfg;
    cfg.interp = Interp::kNearest;
    cfg.appearance.contrast = constant_track(1.7);
    auto out = motion_augment(flat, cfg, 0);
    CHECK(max_diff(out.frames, flat.frames) < 1e-12);
  }

  SUBCASE("a full hue rotation is the identity") {
    MotionAugmentConfig cfg;
    cfg.interp = Interp::kNearest;
    cfg.appearance.hue = constant_track(2.0 * 3.14159265358979323846);
    auto out = motion_augment(clip, cfg, 0);
    CHECK(max_diff(out.frames, clip.frames) < 1e-6);
  }
}

TEST_CASE("augmentation is deterministic in the seed") {
  auto clip = synth_matting_clip<double>(29, 3, 32, 32);
  MotionAugmentConfig cfg;
  cfg.appearance.noise = constant_track(0.05);
  cfg.appearance.blur = {0.0, 1.5, Easing::kLinear};
  cfg.fg_motion.rotate = {0.0, 0.4, Easing::kEaseInQuad};
  auto a = motion_augment(clip, cfg, 123);
  auto b = motion_augment(clip, cfg, 123);
  auto c = motion_augment(clip, cfg, 124);
  CHECK(clips_bit_equal(a, b));
  CHECK(max_diff(a.frames, c.frames) > 0.0);  // different noise
}

TEST_CASE("temporal reversal is an involution") {
  auto clip = synth_matting_clip<double>(31, 5, 32, 32);
  TemporalOps rev;
  rev.reverse = true;
  auto once = temporal_augment(clip, rev, 0);
  for (int t = 0; t < 5; ++t) CHECK(bit_equal(row(once.frames, t), row(clip.frames, 4 - t)));
  CHECK(clips_bit_equal(temporal_augment(once, rev, 0), clip));
}

TEST_CASE("pausing a static clip leaves it unchanged") {
  auto clip = tile_static(synth_matting_clip<double>(37, 1, 32, 32), 4);
  TemporalOps ops;
  ops.pause = true;
  for (std::uint64_t seed : {0ull, 1ull, 2ull})
    CHECK(clips_bit_equal(temporal_augment(clip, ops, seed), clip));
}

TEST_CASE("speed changes multiply apparent motion") {
  auto clip = tile_static(synth_matting_clip<double>(41, 1, 32, 32), 6);
  MotionAugmentConfig cfg;
  cfg.interp = Interp::kNearest;
  cfg.fg_motion.translate_x = {0.0, 10.0, Easing::kLinear};  // 2 px per frame
  auto moving = motion_augment(clip, cfg, 0);

  TemporalOps fast;
  fast.speed = 2.0;
  auto out = temporal_augment(moving, fast, 0);
  REQUIRE(out.frame_count() == 3);  // frames 0, 2, 4
  for (int t = 0; t < 3; ++t)
    CHECK(bit_equal(row(out.fg_gt, t), shift_x_zero(row(clip.fg_gt, 0), 4 * t)));
}

TEST_CASE("frame skipping bounds the requestable length") {
  auto clip = synth_matting_clip<double>(43, 4, 32, 32);
  TemporalOps ops;
  ops.skip = 1;
  auto kept = temporal_augment(clip, ops, 0);
  REQUIRE(kept.frame_count() == 2);
  CHECK(bit_equal(row(kept.frames, 0), row(clip.frames, 0)));
  CHECK(bit_equal(row(kept.frames, 1), row(clip.frames, 2)));

  ops.out_frames = 3;  // only 2 unique source frames remain
  CHECK_THROWS_AS(temporal_augment(clip, ops, 0), ValueError);

  auto single = synth_matting_clip<double>(43, 1, 32, 32);
  CHECK_THROWS_AS(temporal_augment(single, TemporalOps{}, 0), ValueError);
}

TEST_CASE("synthetic matting clips reconstruct from their layers") {
  auto clip = synth_matting_clip<double>(47, 3, 48, 32);
  REQUIRE(clip.kind == SampleKind::kMatting);
  REQUIRE(clip.frames.shape() == Shape{3, 3, 48, 32});
  REQUIRE(clip.alpha_gt.shape() == Shape{3, 1, 48, 32});

  // frames = alpha*fg + (1-alpha)*bg, recomputed with an explicit loop
  const std::int64_t plane = 48 * 32;
  double worst = 0;
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < plane; ++i) {
        const double a = clip.alpha_gt[t * plane + i];
        const double want = a * clip.fg_gt[(t * 3 + c) * plane + i] +
                            (1.0 - a) * clip.bg[(t * 3 + c) * plane + i];
        worst = std::max(worst, std::abs(clip.frames[(t * 3 + c) * plane + i] - want));
      }
  CHECK(worst < 1e-6);

  // the matte has solid regions and a soft transition band
  std::int64_t solid1 = 0, solid0 = 0, interior = 0;
  for (std::int64_t i = 0; i < clip.alpha_gt.numel(); ++i) {
    const double a = clip.alpha_gt[i];
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    if (a > 0.999) ++solid1;
    if (a < 0.001) ++solid0;
    if (a > 0.05 && a < 0.95) ++interior;
  }
  CHECK(solid1 > 0);
  CHECK(solid0 > 0);
  CHECK(interior > 0);

  for (std::int64_t i = 0; i < clip.seg_gt.numel(); ++i)
    CHECK((clip.seg_gt[i] == 0.0 || clip.seg_gt[i] == 1.0));

  CHECK(clips_bit_equal(synth_matting_clip<double>(47, 3, 48, 32), clip));
  CHECK_FALSE(bit_equal(synth_matting_clip<double>(48, 3, 48, 32).frames, clip.frames));
  CHECK_THROWS_AS(synth_matting_clip<double>(1, 2, 40, 32), ValueError);
}

TEST_CASE("synthetic segmentation samples are binary and image-sized") {
  auto image = synth_segmentation_sample<double>(51, /*video=*/false, 4, 32, 32);
  CHECK(image.kind == SampleKind::kImageSeg);
  CHECK(image.frame_count() == 1);  // image samples always have one frame
  CHECK_FALSE(image.alpha_gt.defined());
  CHECK_FALSE(image.bg.defined());

  auto video = synth_segmentation_sample<double>(53, /*video=*/true, 4, 32, 48);
  CHECK(video.kind == SampleKind::kVideoSeg);
  CHECK(video.frame_count() == 4);
  for (std::int64_t i = 0; i < video.seg_gt.numel(); ++i)
    CHECK((video.seg_gt[i] == 0.0 || video.seg_gt[i] == 1.0));
  std::int64_t fg_px = 0;
  for (std::int64_t i = 0; i < video.seg_gt.numel(); ++i) fg_px += video.seg_gt[i] > 0.5;
  CHECK(fg_px > 0);
  CHECK(fg_px < video.seg_gt.numel());

  CHECK(clips_bit_equal(synth_segmentation_sample<double>(53, true, 4, 32, 48), video));
}

TEST_CASE("resolution sampling is uniform over multiples of 16 in range") {
  Rng rng(321);
  const int n = 10000;
  std::vector<int> hs(n), ws(n);
  std::vector<int> hist_h(17, 0), hist_w(17, 0);
  for (int i = 0; i < n; ++i) {
    auto [h, w] = sample_resolution(rng);
    REQUIRE(h % 16 == 0);
    REQUIRE(w % 16 == 0);
    REQUIRE(h >= 256);
    REQUIRE(h <= 512);
    REQUIRE(w >= 256);
    REQUIRE(w <= 512);
    hs[i] = h;
    ws[i] = w;
    ++hist_h[(h - 256) / 16];
    ++hist_w[(w - 256) / 16];
  }
  const double expected = n / 17.0;
  double chi_h = 0, chi_w = 0;
  for (int b = 0; b < 17; ++b) {
    chi_h += (hist_h[b] - expected) * (hist_h[b] - expected) / expected;
    chi_w += (hist_w[b] - expected) * (hist_w[b] - expected) / expected;
  }
  // 16 degrees of freedom; 45 is far beyond the 0.001 critical value 39.25
  CHECK(chi_h < 45.0);
  CHECK(chi_w < 45.0);

  double mh = 0, mw = 0;
  for (int i = 0; i < n; ++i) {
    mh += hs[i];
    mw += ws[i];
  }
  mh /= n;
  mw /= n;
  double cov = 0, vh = 0, vw = 0;
  for (int i = 0; i < n; ++i) {
    cov += (hs[i] - mh) * (ws[i] - mw);
    vh += (hs[i] - mh) * (hs[i] - mh);
    vw += (ws[i] - mw) * (ws[i] - mw);
  }
  CHECK(std::abs(cov / std::sqrt(vh * vw)) < 0.05);
}
