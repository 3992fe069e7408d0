// Evaluation metrics against brute-force references and hand-derived
// constants. The references live in oracles.hpp and are written from the
// defining formulas (direct 2D convolution, label-propagation connected
// components), independent of the library implementations.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "vmatt/metrics.hpp"
#include "vmatt/tensor.hpp"

using namespace vmatt;

namespace {

Tensor<double> uniform_map(Shape shape, unsigned seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

// Same pixel-position shuffle applied to every (row, channel) plane.
Tensor<double> permute_pixels(const Tensor<double>& x, unsigned seed) {
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  std::vector<std::int64_t> perm(static_cast<size_t>(plane));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> y(x.shape());
  for (int n = 0; n < x.dim(0); ++n)
    for (int c = 0; c < x.dim(1); ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * x.dim(1) + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i)
        y[base + i] = x[base + perm[static_cast<size_t>(i)]];
    }
  return y;
}

bool close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("mad and mse match hand-derived constants") {
  auto gt = uniform_map(Shape{2, 1, 8, 8}, 11);
  CHECK(mad(gt, gt) == 0.0);
  CHECK(mse(gt, gt) == 0.0);

  Tensor<double> pred(gt.shape());
  for (std::int64_t i = 0; i < gt.numel(); ++i) pred[i] = gt[i] + 0.25;
  CHECK(close(mad(pred, gt), 250.0));
  CHECK(close(mse(pred, gt), 62.5));

  auto zeros = Tensor<double>::zeros(Shape{1, 1, 4, 4});
  auto ones = Tensor<double>::full(Shape{1, 1, 4, 4}, 1.0);
  CHECK(close(mad(zeros, ones), 1000.0));
  CHECK(close(mse(zeros, ones), 1000.0));

  CHECK_THROWS_AS(mad(zeros, gt), ShapeError);
}

TEST_CASE("per-frame error trace isolates each frame") {
  auto gt = uniform_map(Shape{3, 1, 6, 6}, 5);
  Tensor<double> pred(gt.shape());
  const double off[3] = {0.1, 0.0, 0.2};
  const std::int64_t row = gt.numel() / 3;
  for (int t = 0; t < 3; ++t)
    for (std::int64_t i = 0; i < row; ++i) pred[t * row + i] = gt[t * row + i] + off[t];
  auto trace = mad_per_frame(pred, gt);
  REQUIRE(trace.size() == 3);
  CHECK(close(trace[0], 100.0));
  CHECK(trace[1] == 0.0);
  CHECK(close(trace[2], 200.0));
  CHECK(close((trace[0] + trace[1] + trace[2]) / 3.0, mad(pred, gt)));
}

TEST_CASE("gradient error vanishes for identical and constant maps") {
  auto a = uniform_map(Shape{2, 1, 16, 16}, 3);
  CHECK(grad_metric(a, a) == 0.0);
  auto c1 = Tensor<double>::full(Shape{1, 1, 16, 16}, 0.3);
  auto c2 = Tensor<double>::full(Shape{1, 1, 16, 16}, 0.9);
  CHECK(grad_metric(c1, c2) < 1e-12);  // constant maps have no gradient anywhere
  CHECK_THROWS_AS(grad_metric(uniform_map(Shape{1, 2, 8, 8}, 1), uniform_map(Shape{1, 2, 8, 8}, 2)),
                  ShapeError);
}

TEST_CASE("gradient error responds to edge displacement and contrast") {
  auto edge = [](int column, double contrast) {
    Tensor<double> t(Shape{1, 1, 16, 16});
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) t.at(0, 0, i, j) = j >= column ? contrast : 0.0;
    return t;
  };
  auto gt = edge(8, 1.0);
  CHECK(grad_metric(gt, gt) == 0.0);
  const double shifted = grad_metric(edge(9, 1.0), gt);
  const double faded = grad_metric(edge(8, 0.5), gt);
  CHECK(shifted > 1.0);
  CHECK(faded > 1.0);
}

TEST_CASE("gradient error matches the two-dimensional kernel reference") {
  for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
    auto p = uniform_map(Shape{1, 1, 16, 16}, seed);
    auto g = uniform_map(Shape{1, 1, 16, 16}, seed + 100);
    CHECK(close(grad_metric(p, g), oracle::metric_grad(p, g, 1.4, 6), 1e-9));
  }
  // odd extents exercise the mirrored borders on both axes
  auto p = uniform_map(Shape{2, 1, 9, 13}, 42);
  auto g = uniform_map(Shape{2, 1, 9, 13}, 43);
  CHECK(close(grad_metric(p, g), oracle::metric_grad(p, g, 1.4, 6), 1e-9));
}

TEST_CASE("connectivity error counts stray and missing pixels") {
  auto block = [](std::initializer_list<std::pair<int, int>> extra, bool drop_corner) {
    Tensor<double> t(Shape{1, 1, 8, 8});
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) t.at(0, 0, i, j) = 1.0;
    if (drop_corner) t.at(0, 0, 1, 1) = 0.0;
    for (auto [i, j] : extra) t.at(0, 0, i, j) = 1.0;
    return t;
  };
  auto gt = block({}, false);
  CHECK(conn_metric(gt, gt) == 0.0);

  // A stray opaque pixel never joins the largest connected region, so it
  // degrades fully: one pixel of error over 64, scaled by 1e3.
  auto stray = block({{6, 6}}, false);
  CHECK(close(conn_metric(stray, gt), 1000.0 / 64.0));

  // A hole in the prediction costs the same single pixel.
  auto hole = block({}, true);
  CHECK(close(conn_metric(hole, gt), 1000.0 / 64.0));

  CHECK_THROWS_AS(conn_metric(gt, gt, 0.0), ValueError);
}

TEST_CASE("connectivity error matches the label-propagation reference") {
  for (unsigned seed : {7u, 8u, 9u, 10u, 11u, 12u}) {
    auto p = uniform_map(Shape{1, 1, 8, 8}, seed);
    auto g = uniform_map(Shape{1, 1, 8, 8}, seed + 50);
    CHECK(close(conn_metric(p, g), oracle::metric_conn(p, g, 0.1), 1e-9));
  }
  // smooth radial maps produce nested multi-pixel regions across thresholds
  Tensor<double> p(Shape{2, 1, 12, 12}), g(Shape{2, 1, 12, 12});
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) {
        const double r = std::hypot(i - 5.5, j - 5.5);
        p.at(t, 0, i, j) = std::clamp(1.0 - r / (5.0 + t), 0.0, 1.0);
        g.at(t, 0, i, j) = std::clamp(1.0 - r / 6.0, 0.0, 1.0);
      }
  CHECK(close(conn_metric(p, g), oracle::metric_conn(p, g, 0.1), 1e-9));
}

TEST_CASE("temporal coherence error matches the flicker constant") {
  // prediction flickers +/-0.05 around a static reference: each temporal
  // derivative differs by 0.1 everywhere, so the score is 100 * 0.1.
  const int T = 6;
  Tensor<double> gt(Shape{T, 1, 5, 5}), pred(Shape{T, 1, 5, 5});
  for (int t = 0; t < T; ++t)
    for (std::int64_t i = 0; i < 25; ++i) {
      gt[t * 25 + i] = 0.5;
      pred[t * 25 + i] = 0.5 + (t % 2 == 0 ? 0.05 : -0.05);
    }
  CHECK(close(dtssd(pred, gt, T), 10.0));
  CHECK(dtssd(gt, gt, T) == 0.0);
}

TEST_CASE("temporal coherence error is reversal invariant and batch aware") {
  const int T = 4, B = 2;
  auto p = uniform_map(Shape{T * B, 1, 6, 6}, 21);
  auto g = uniform_map(Shape{T * B, 1, 6, 6}, 22);
  CHECK(close(dtssd(p, g, T), oracle::metric_dtssd(p, g, T)));

  auto reverse_time = [&](const Tensor<double>& x) {
    Tensor<double> y(x.shape());
    const std::int64_t row = x.numel() / x.dim(0);
    for (int t = 0; t < T; ++t)
      for (int b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < row; ++i)
          y[(static_cast<std::int64_t>(T - 1 - t) * B + b) * row + i] =
              x[(static_cast<std::int64_t>(t) * B + b) * row + i];
    return y;
  };
  CHECK(close(dtssd(reverse_time(p), reverse_time(g), T), dtssd(p, g, T)));

  CHECK_THROWS_AS(dtssd(p, g, 1), ValueError);
  CHECK_THROWS_AS(dtssd(p, g, 3), ShapeError);
}

TEST_CASE("foreground error ignores pixels outside the reference mask") {
  auto fg = uniform_map(Shape{2, 3, 6, 6}, 31);
  auto fg_gt = uniform_map(Shape{2, 3, 6, 6}, 32);

  auto empty = Tensor<double>::zeros(Shape{2, 1, 6, 6});
  CHECK(fg_mse(fg, fg_gt, empty) == 0.0);

  auto full = Tensor<double>::full(Shape{2, 1, 6, 6}, 1.0);
  CHECK(close(fg_mse(fg, fg_gt, full), mse(fg, fg_gt)));

  // half mask: recompute with a literal loop over the masked half
  Tensor<double> half(Shape{2, 1, 6, 6});
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) half.at(t, 0, i, j) = j < 3 ? 0.7 : 0.0;
  double s = 0;
  int n = 0;
  for (int t = 0; t < 2; ++t)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) {
          const double d = fg.at(t, c, i, j) - fg_gt.at(t, c, i, j);
          s += d * d;
          ++n;
        }
  CHECK(close(fg_mse(fg, fg_gt, half), 1e3 * s / n));
  CHECK(close(fg_mse(fg, fg_gt, half), oracle::metric_fgmse(fg, fg_gt, half)));

  CHECK_THROWS_AS(fg_mse(fg, fg_gt, Tensor<double>::zeros(Shape{2, 1, 5, 6})), ShapeError);
}

TEST_CASE("binarized overlap score handles degenerate masks") {
  auto mask = [](std::initializer_list<double> vals) {
    Tensor<double> t(Shape{1, 1, 1, static_cast<int>(vals.size())});
    int i = 0;
    for (double v : vals) t[i++] = v;
    return t;
  };
  CHECK(miou(mask({1, 1, 0, 0}), mask({1, 1, 0, 0})) == 1.0);
  CHECK(miou(mask({1, 1, 1, 1}), mask({1, 1, 1, 1})) == 1.0);
  CHECK(miou(mask({0, 0, 0, 0}), mask({0, 0, 0, 0})) == 1.0);  // absent class scores 1
  CHECK(miou(mask({1, 1, 1, 1}), mask({0, 0, 0, 0})) == 0.0);
  CHECK(miou(mask({1, 1, 0, 0}), mask({0, 0, 1, 1})) == 0.0);
  // overlap of 1 in each class: fg 1/3, bg 1/3
  CHECK(close(miou(mask({1, 1, 0, 0}), mask({0, 1, 1, 0})), 1.0 / 3.0));

  auto a = alpha_to_mask(mask({0.5, 0.500001, 0.1, 0.9}));
  CHECK(a[0] == 0.0);
  CHECK(a[1] == 1.0);
  CHECK(a[2] == 0.0);
  CHECK(a[3] == 1.0);
}

TEST_CASE("spatially unstructured metrics are pixel-permutation invariant") {
  auto p = uniform_map(Shape{4, 1, 8, 8}, 61);
  auto g = uniform_map(Shape{4, 1, 8, 8}, 62);
  auto pp = permute_pixels(p, 99), gp = permute_pixels(g, 99);
  CHECK(close(mad(pp, gp), mad(p, g)));
  CHECK(close(mse(pp, gp), mse(p, g)));
  CHECK(close(dtssd(pp, gp, 4), dtssd(p, g, 4)));
  CHECK(close(miou(alpha_to_mask(pp), alpha_to_mask(gp)), miou(alpha_to_mask(p), alpha_to_mask(g))));

  auto fg = uniform_map(Shape{4, 3, 8, 8}, 63);
  auto fg_gt = uniform_map(Shape{4, 3, 8, 8}, 64);
  auto amask = uniform_map(Shape{4, 1, 8, 8}, 65, -0.5, 0.5);
  CHECK(close(fg_mse(permute_pixels(fg, 99), permute_pixels(fg_gt, 99), permute_pixels(amask, 99)),
              fg_mse(fg, fg_gt, amask)));
}

TEST_CASE("all metrics match their references across random clips") {
  const int T = 4;
  for (unsigned seed = 0; seed < 100; ++seed) {
    auto p = uniform_map(Shape{T, 1, 16, 16}, 1000 + seed);
    auto g = uniform_map(Shape{T, 1, 16, 16}, 2000 + seed);
    CHECK(close(mad(p, g), oracle::metric_mad(p, g), 1e-5));
    CHECK(close(mse(p, g), oracle::metric_mse(p, g), 1e-5));
    CHECK(close(grad_metric(p, g), oracle::metric_grad(p, g, 1.4, 6), 1e-5));
    CHECK(close(conn_metric(p, g), oracle::metric_conn(p, g, 0.1), 1e-5));
    CHECK(close(dtssd(p, g, T), oracle::metric_dtssd(p, g, T), 1e-5));

    auto fg = uniform_map(Shape{T, 3, 16, 16}, 3000 + seed);
    auto fg_gt = uniform_map(Shape{T, 3, 16, 16}, 4000 + seed);
    auto amask = uniform_map(Shape{T, 1, 16, 16}, 5000 + seed, -0.5, 0.5);
    CHECK(close(fg_mse(fg, fg_gt, amask), oracle::metric_fgmse(fg, fg_gt, amask), 1e-5));
    CHECK(close(miou(alpha_to_mask(p), alpha_to_mask(g)),
                oracle::metric_miou(alpha_to_mask(p), alpha_to_mask(g)), 1e-5));
  }
}

TEST_CASE("report serialization emits one labeled line per metric") {
  MetricReport r;
  r.mad = 1.5;
  r.dtssd = 0.123456789;
  CHECK(report_lines("clip_007", r) == "clip_007\tMAD\t1.5\nclip_007\tdtSSD\t0.123456789\n");

  MetricReport full;
  full.mad = 1.0;
  full.mse = 2.0;
  full.grad = 3.0;
  full.conn = 4.0;
  full.dtssd = 5.0;
  full.fg_mse = 6.0;
  full.miou = 0.5;
  CHECK(report_lines("x", full) ==
        "x\tMAD\t1\nx\tMSE\t2\nx\tGrad\t3\nx\tConn\t4\nx\tdtSSD\t5\nx\tfgMSE\t6\nx\tmIOU\t0.5\n");

  CHECK(report_lines("empty", MetricReport{}).empty());
}
