#pragma once

// Procedural clip synthesis: soft-edged moving blobs with hair-like strands
// over textured backgrounds for matting, hard shapes for segmentation. Every
// generator is a pure function of its seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "vmatt/augment.hpp"
#include "vmatt/tensor.hpp"

namespace vmatt {

namespace detail {

// Multi-octave value noise in [0,1]: coarse uniform grids, bilinearly
// interpolated, amplitudes halving per octave.
inline std::vector<double> value_noise(Rng& rng, int H, int W, int cell, int octaves) {
  std::vector<double> out(static_cast<size_t>(H) * W, 0.0);
  double amp = 1.0, total = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const int gh = std::max(2, H / cell + 2), gw = std::max(2, W / cell + 2);
    std::vector<double> grid(static_cast<size_t>(gh) * gw);
    for (auto& g : grid) g = rng.uniform();
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const double y = static_cast<double>(i) / cell, x = static_cast<double>(j) / cell;
        const int y0 = std::min(static_cast<int>(y), gh - 2);
        const int x0 = std::min(static_cast<int>(x), gw - 2);
        const double fy = y - y0, fx = x - x0;
        const double v = (1 - fy) * (1 - fx) * grid[static_cast<size_t>(y0) * gw + x0] +
                         (1 - fy) * fx * grid[static_cast<size_t>(y0) * gw + x0 + 1] +
                         fy * (1 - fx) * grid[static_cast<size_t>(y0 + 1) * gw + x0] +
                         fy * fx * grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
        out[static_cast<size_t>(i) * W + j] += amp * v;
      }
    total += amp;
    amp *= 0.5;
    cell = std::max(2, cell / 2);
  }
  for (auto& v : out) v /= total;
  return out;
}

struct Blob {
  double cy, cx;        // initial center
  double vy, vx;        // linear velocity, pixels per frame
  double ry, rx;        // radii
  double sway_amp, sway_freq, sway_phase;
  double angle;         // ellipse orientation
  double feather;       // soft-edge band, fraction of the radius
  double color[3];
  int strands;
};

struct Strand {
  double angle0;   // where on the boundary it sprouts
  double curl;     // direction drift per step
  double step;     // pixels per step
  int length;
  double width;    // gaussian half-width in pixels
  double opacity;  // alpha at the root, tapering to ~0.1 at the tip
};

// Soft ellipse membership in [0,1] with a smoothstep feather band.
inline double ellipse_alpha(const Blob& b, double cy, double cx, double y, double x) {
  const double dy = y - cy, dx = x - cx;
  const double ca = std::cos(b.angle), sa = std::sin(b.angle);
  const double u = (ca * dx + sa * dy) / b.rx;
  const double v = (-sa * dx + ca * dy) / b.ry;
  const double d = std::sqrt(u * u + v * v);
  double a = (1.0 - d) / b.feather;
  a = std::clamp(a, 0.0, 1.0);
  return a * a * (3.0 - 2.0 * a);
}

}  // namespace detail

// Procedural matting clip: 1-3 soft ellipses with feathered edges and thin
// strands drift over a textured background; frames are the exact composite of
// the generated planes. Extents must be multiples of 16.
template <typename T>
ClipSample<T> synth_matting_clip(std::uint64_t seed, int frames, int H, int W) {
  check(frames >= 1, "synth_matting_clip: frames must be positive");
  check(H % 16 == 0 && W % 16 == 0, "synth_matting_clip: extents must be multiples of 16, got " +
                                        std::to_string(H) + "x" + std::to_string(W));
  Rng rng(seed);
  Rng bg_rng = rng.fork();
  Rng fg_rng = rng.fork();

  // background: two-color gradient + static texture + one drifting soft disc
  const double c0[3] = {bg_rng.uniform(0.05, 0.6), bg_rng.uniform(0.05, 0.6),
                        bg_rng.uniform(0.05, 0.6)};
  const double c1[3] = {bg_rng.uniform(0.3, 0.95), bg_rng.uniform(0.3, 0.95),
                        bg_rng.uniform(0.3, 0.95)};
  const bool vertical = bg_rng.bernoulli(0.5);
  auto texture = detail::value_noise(bg_rng, H, W, std::max(4, H / 8), 3);
  const double disc_r = bg_rng.uniform(0.15, 0.3) * std::min(H, W);
  const double disc_y0 = bg_rng.uniform(0.2, 0.8) * H, disc_x0 = bg_rng.uniform(0.2, 0.8) * W;
  const double disc_vy = bg_rng.uniform(-1.5, 1.5), disc_vx = bg_rng.uniform(-1.5, 1.5);
  const double disc_c[3] = {bg_rng.uniform(0.1, 0.9), bg_rng.uniform(0.1, 0.9),
                            bg_rng.uniform(0.1, 0.9)};

  // foreground blobs and their strands
  const int num_blobs = static_cast<int>(fg_rng.uniform_int(1, 3));
  std::vector<detail::Blob> blobs;
  std::vector<std::vector<detail::Strand>> strands;
  for (int k = 0; k < num_blobs; ++k) {
    detail::Blob b;
    b.cy = fg_rng.uniform(0.3, 0.7) * H;
    b.cx = fg_rng.uniform(0.3, 0.7) * W;
    const double max_v = std::min(H, W) / (8.0 * std::max(1, frames));
    b.vy = fg_rng.uniform(-max_v, max_v);
    b.vx = fg_rng.uniform(-max_v, max_v);
    b.ry = fg_rng.uniform(0.12, 0.3) * H;
    b.rx = fg_rng.uniform(0.12, 0.3) * W;
    b.sway_amp = fg_rng.uniform(0.0, 0.05) * std::min(H, W);
    b.sway_freq = fg_rng.uniform(0.2, 1.0);
    b.sway_phase = fg_rng.uniform(0.0, 6.28318);
    b.angle = fg_rng.uniform(0.0, 3.14159);
    b.feather = fg_rng.uniform(0.08, 0.25);
    for (double& c : b.color) c = fg_rng.uniform(0.35, 1.0);
    b.strands = static_cast<int>(fg_rng.uniform_int(2, 5));
    std::vector<detail::Strand> ss;
    for (int s = 0; s < b.strands; ++s) {
      detail::Strand st;
      st.angle0 = fg_rng.uniform(0.0, 6.28318);
      st.curl = fg_rng.uniform(-0.25, 0.25);
      st.step = fg_rng.uniform(0.8, 1.6);
      st.length = static_cast<int>(fg_rng.uniform_int(8, 24));
      st.width = fg_rng.uniform(0.5, 1.0);
      st.opacity = fg_rng.uniform(0.5, 0.9);
      ss.push_back(st);
    }
    blobs.push_back(b);
    strands.push_back(std::move(ss));
  }

  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  ClipSample<T> clip;
  clip.kind = SampleKind::kMatting;
  clip.frames = Tensor<T>(Shape{frames, 3, H, W});
  clip.alpha_gt = Tensor<T>(Shape{frames, 1, H, W});
  clip.fg_gt = Tensor<T>(Shape{frames, 3, H, W});
  clip.seg_gt = Tensor<T>(Shape{frames, 1, H, W});
  clip.bg = Tensor<T>(Shape{frames, 3, H, W});

  std::vector<double> alpha(static_cast<size_t>(plane));
  std::vector<double> fgw(static_cast<size_t>(plane * 3));
  for (int t = 0; t < frames; ++t) {
    // background plane
    const double dy = disc_y0 + disc_vy * t, dx = disc_x0 + disc_vx * t;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const double u = vertical ? static_cast<double>(i) / std::max(1, H - 1)
                                  : static_cast<double>(j) / std::max(1, W - 1);
        const double tex = texture[static_cast<size_t>(i) * W + j];
        const double rr = std::hypot(i - dy, j - dx) / disc_r;
        const double disc = std::clamp(1.5 - rr, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) {
          double v = c0[c] + (c1[c] - c0[c]) * u;
          v = 0.7 * v + 0.3 * tex;
          v = (1.0 - 0.35 * disc) * v + 0.35 * disc * disc_c[c];
          clip.bg[(static_cast<std::int64_t>(t) * 3 + c) * plane + i * W + j] =
              static_cast<T>(std::clamp(v, 0.0, 1.0));
        }
      }

    // foreground alpha + color
    std::fill(alpha.begin(), alpha.end(), 0.0);
    std::fill(fgw.begin(), fgw.end(), 0.0);
    std::vector<double> weight(static_cast<size_t>(plane), 0.0);
    for (size_t k = 0; k < blobs.size(); ++k) {
      const auto& b = blobs[k];
      const double sway = b.sway_amp * std::sin(b.sway_freq * t + b.sway_phase);
      const double cy = b.cy + b.vy * t + sway;
      const double cx = b.cx + b.vx * t + sway * 0.5;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double a = detail::ellipse_alpha(b, cy, cx, i, j);
          if (a <= 0.0) continue;
          const size_t at = static_cast<size_t>(i) * W + j;
          alpha[at] = std::max(alpha[at], a);
          weight[at] += a;
          for (int c = 0; c < 3; ++c) fgw[at * 3 + c] += a * b.color[c];
        }
      // strands sprout from the ellipse boundary and move rigidly with it
      for (const auto& st : strands[k]) {
        double ang = st.angle0;
        double py = cy + b.ry * std::sin(ang), px = cx + b.rx * std::cos(ang);
        double dir = ang;
        for (int s = 0; s < st.length; ++s) {
          const double frac = static_cast<double>(s) / st.length;
          const double a_here = st.opacity * (1.0 - 0.85 * frac);
          const int i0 = static_cast<int>(std::floor(py)) - 1;
          const int j0 = static_cast<int>(std::floor(px)) - 1;
          for (int i = i0; i < i0 + 3; ++i)
            for (int j = j0; j < j0 + 3; ++j) {
              if (i < 0 || i >= H || j < 0 || j >= W) continue;
              const double d2 = (i - py) * (i - py) + (j - px) * (j - px);
              const double a = a_here * std::exp(-d2 / (2.0 * st.width * st.width));
              const size_t at = static_cast<size_t>(i) * W + j;
              if (a > 0.02) {
                alpha[at] = std::max(alpha[at], a);
                weight[at] += a;
                for (int c = 0; c < 3; ++c) fgw[at * 3 + c] += a * b.color[c];
              }
            }
          dir += st.curl;
          py += st.step * std::sin(dir);
          px += st.step * std::cos(dir);
        }
      }
    }
    for (std::int64_t i = 0; i < plane; ++i) {
      const double a = std::clamp(alpha[static_cast<size_t>(i)], 0.0, 1.0);
      clip.alpha_gt[t * plane + i] = static_cast<T>(a);
      clip.seg_gt[t * plane + i] = a > 0.5 ? T(1) : T(0);
      const double w = weight[static_cast<size_t>(i)];
      for (int c = 0; c < 3; ++c) {
        const double fc = w > 0.0 ? fgw[static_cast<size_t>(i) * 3 + c] / w : blobs[0].color[c];
        clip.fg_gt[(static_cast<std::int64_t>(t) * 3 + c) * plane + i] =
            static_cast<T>(std::clamp(fc, 0.0, 1.0));
      }
    }
  }
  clip.frames = composite(clip.fg_gt, clip.alpha_gt, clip.bg);
  return clip;
}

// Procedural segmentation sample: hard-edged shapes on a textured background,
// binary mask, no alpha planes. Image samples always have one frame.
template <typename T>
ClipSample<T> synth_segmentation_sample(std::uint64_t seed, bool video, int frames, int H,
                                        int W) {
  check(H >= 16 && W >= 16, "synth_segmentation_sample: extents too small");
  const int T_out = video ? std::max(2, frames) : 1;
  Rng rng(seed);
  auto texture = detail::value_noise(rng, H, W, std::max(4, H / 8), 2);
  const double base[3] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};

  struct Shape2D {
    bool box;
    double cy, cx, ry, rx, vy, vx, angle;
    double color[3];
  };
  const int num = static_cast<int>(rng.uniform_int(1, 3));
  std::vector<Shape2D> shapes;
  for (int k = 0; k < num; ++k) {
    Shape2D s;
    s.box = rng.bernoulli(0.4);
    s.cy = rng.uniform(0.25, 0.75) * H;
    s.cx = rng.uniform(0.25, 0.75) * W;
    s.ry = rng.uniform(0.1, 0.3) * H;
    s.rx = rng.uniform(0.1, 0.3) * W;
    const double max_v = std::min(H, W) / (8.0 * std::max(1, T_out));
    s.vy = video ? rng.uniform(-max_v, max_v) : 0.0;
    s.vx = video ? rng.uniform(-max_v, max_v) : 0.0;
    s.angle = rng.uniform(0.0, 3.14159);
    for (double& c : s.color) c = rng.uniform(0.2, 1.0);
    shapes.push_back(s);
  }

  const std::int64_t plane = static_cast<std::int64_t>(H) * W;
  ClipSample<T> clip;
  clip.kind = video ? SampleKind::kVideoSeg : SampleKind::kImageSeg;
  clip.frames = Tensor<T>(Shape{T_out, 3, H, W});
  clip.seg_gt = Tensor<T>(Shape{T_out, 1, H, W});
  for (int t = 0; t < T_out; ++t)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const size_t at = static_cast<size_t>(i) * W + j;
        double rgb[3];
        for (int c = 0; c < 3; ++c)
          rgb[c] = std::clamp(0.6 * base[c] + 0.4 * texture[at], 0.0, 1.0);
        bool inside = false;
        for (const auto& s : shapes) {
          const double cy = s.cy + s.vy * t, cx = s.cx + s.vx * t;
          const double ca = std::cos(s.angle), sa = std::sin(s.angle);
          const double u = (ca * (j - cx) + sa * (i - cy)) / s.rx;
          const double v = (-sa * (j - cx) + ca * (i - cy)) / s.ry;
          const bool in =
              s.box ? (std::abs(u) <= 1.0 && std::abs(v) <= 1.0) : (u * u + v * v <= 1.0);
          if (in) {
            inside = true;
            for (int c = 0; c < 3; ++c)
              rgb[c] = std::clamp(0.8 * s.color[c] + 0.2 * texture[at], 0.0, 1.0);
          }
        }
        clip.seg_gt[t * plane + i * W + j] = inside ? T(1) : T(0);
        for (int c = 0; c < 3; ++c)
          clip.frames[(static_cast<std::int64_t>(t) * 3 + c) * plane + i * W + j] =
              static_cast<T>(rgb[c]);
      }
  return clip;
}

// Independent uniform draws over the multiples of 16 in [256, 512].
inline std::pair<int, int> sample_resolution(Rng& rng) {
  const int h = 16 * static_cast<int>(rng.uniform_int(16, 32));
  const int w = 16 * static_cast<int>(rng.uniform_int(16, 32));
  return {h, w};
}

}  // namespace vmatt
