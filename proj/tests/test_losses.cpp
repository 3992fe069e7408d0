#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "vmatt/gradcheck.hpp"
#include "vmatt/losses.hpp"

using namespace vmatt;

namespace {

template <typename T>
double naive_l1(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return s / static_cast<double>(a.numel());
}

// mean over frame pairs of (d_pred - d_gt)^2, rows t*B+b time-major
template <typename T>
double naive_tc(const Tensor<T>& p, const Tensor<T>& g, int frames) {
  const int batch = p.dim(0) / frames;
  const std::int64_t row = p.numel() / p.dim(0);
  double s = 0;
  std::int64_t n = 0;
  for (int t = 1; t < frames; ++t)
    for (int b = 0; b < batch; ++b)
      for (std::int64_t i = 0; i < row; ++i) {
        const std::int64_t cur = (static_cast<std::int64_t>(t) * batch + b) * row + i;
        const std::int64_t prev = (static_cast<std::int64_t>(t - 1) * batch + b) * row + i;
        const double dp = p[cur] - p[prev], dg = g[cur] - g[prev];
        s += (dp - dg) * (dp - dg);
        ++n;
      }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("alpha l1 loss basics and oracle") {
  Rng rng(1);
  auto a = Tensor<double>::uniform(Shape{2, 1, 8, 8}, rng, 0.0, 1.0);
  CHECK(l1_loss(a, a)[0] == 0.0);
  CHECK(l1_loss(Tensor<double>::zeros(Shape{3, 1, 4, 4}),
                Tensor<double>::ones(Shape{3, 1, 4, 4}))[0] == 1.0);
  auto b = Tensor<double>::uniform(Shape{2, 1, 8, 8}, rng, 0.0, 1.0);
  CHECK(l1_loss(a, b)[0] == doctest::Approx(naive_l1(a, b)).epsilon(1e-7));
  CHECK_THROWS_AS(l1_loss(a, Tensor<double>::zeros(Shape{2, 1, 8, 9})), ShapeError);
}

TEST_CASE("pyramid loss is zero on identical inputs") {
  Rng rng(2);
  auto a = Tensor<double>::uniform(Shape{1, 1, 32, 32}, rng, 0.0, 1.0);
  CHECK(laplacian_pyramid_loss(a, a)[0] == 0.0);
}

TEST_CASE("pyramid level weights are 2^(s-1)/5") {
  // constants produce zero band-pass levels, so only the coarsest level
  // contributes and each weight can be read off directly
  auto a = Tensor<double>::full(Shape{1, 1, 32, 32}, 0.75);
  auto b = Tensor<double>::full(Shape{1, 1, 32, 32}, 0.50);
  for (int levels = 1; levels <= 5; ++levels) {
    const double want = double(std::int64_t(1) << (levels - 1)) / 5.0 * 0.25;
    CHECK(laplacian_pyramid_loss(a, b, levels)[0] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("pyramid loss matches the standalone pyramid oracle") {
  Rng rng(3);
  auto a = Tensor<double>::uniform(Shape{2, 1, 32, 48}, rng, 0.0, 1.0);
  auto b = Tensor<double>::uniform(Shape{2, 1, 32, 48}, rng, 0.0, 1.0);
  CHECK(laplacian_pyramid_loss(a, b)[0] ==
        doctest::Approx(oracle::laplacian_loss(a, b, 5)).epsilon(1e-7));
  // constants again, cross-checked against the same oracle
  auto ca = Tensor<double>::full(Shape{1, 1, 32, 32}, 0.9);
  auto cb = Tensor<double>::full(Shape{1, 1, 32, 32}, 0.4);
  CHECK(laplacian_pyramid_loss(ca, cb)[0] ==
        doctest::Approx(oracle::laplacian_loss(ca, cb, 5)).epsilon(1e-9));
  CHECK_THROWS_AS(laplacian_pyramid_loss(Tensor<double>::zeros(Shape{1, 1, 16, 16}),
                                         Tensor<double>::zeros(Shape{1, 1, 16, 16})),
                  ShapeError);
}

TEST_CASE("temporal coherence loss on static and drifting sequences") {
  const int T = 4;
  Rng rng(4);
  auto frame = Tensor<double>::uniform(Shape{1, 1, 6, 6}, rng, 0.0, 1.0);
  std::vector<Tensor<double>> reps(T, frame);
  auto statics = concat(reps, 0);
  CHECK(temporal_coherence_loss(statics, statics, T)[0] == 0.0);

  // gt gains 0.1 per frame while the prediction stays put
  std::vector<Tensor<double>> drift;
  for (int t = 0; t < T; ++t) drift.push_back(add_scalar(frame, 0.1 * t));
  auto gt = concat(drift, 0);
  CHECK(temporal_coherence_loss(statics, gt, T)[0] == doctest::Approx(0.01).epsilon(1e-9));

  CHECK_THROWS_AS(temporal_coherence_loss(frame, frame, 1), ValueError);
}

TEST_CASE("temporal coherence loss matches the naive oracle and survives reversal") {
  const int T = 3, B = 2;
  Rng rng(5);
  auto p = Tensor<double>::uniform(Shape{T * B, 1, 5, 5}, rng, 0.0, 1.0);
  auto g = Tensor<double>::uniform(Shape{T * B, 1, 5, 5}, rng, 0.0, 1.0);
  CHECK(temporal_coherence_loss(p, g, T)[0] ==
        doctest::Approx(naive_tc(p, g, T)).epsilon(1e-7));

  auto reverse = [&](const Tensor<double>& x) {
    Tensor<double> y(x.shape());
    const std::int64_t row = x.numel() / x.dim(0);
    for (int t = 0; t < T; ++t)
      for (int b = 0; b < B; ++b)
        std::copy_n(x.data() + ((static_cast<std::int64_t>(T) - 1 - t) * B + b) * row,
                    row, y.data() + (static_cast<std::int64_t>(t) * B + b) * row);
    return y;
  };
  CHECK(temporal_coherence_loss(reverse(p), reverse(g), T)[0] ==
        doctest::Approx(temporal_coherence_loss(p, g, T)[0]).epsilon(1e-12));
}

TEST_CASE("foreground losses honor the alpha mask") {
  const int T = 2;
  Rng rng(6);
  auto fg = Tensor<double>::uniform(Shape{T, 3, 6, 6}, rng, 0.0, 1.0);
  auto gt = Tensor<double>::uniform(Shape{T, 3, 6, 6}, rng, 0.0, 1.0);

  auto [l0, t0] = foreground_losses(fg, gt, Tensor<double>::zeros(Shape{T, 1, 6, 6}), T);
  CHECK(l0[0] == 0.0);
  CHECK(t0[0] == 0.0);

  auto full = Tensor<double>::ones(Shape{T, 1, 6, 6});
  auto [l1v, t1] = foreground_losses(fg, fg, full, T);
  CHECK(l1v[0] == 0.0);
  CHECK(t1[0] == 0.0);

  // left half masked in, right half out
  Tensor<double> half(Shape{T, 1, 6, 6});
  for (int n = 0; n < T; ++n)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) half.at(n, 0, i, j) = j < 3 ? 0.7 : 0.0;

  auto [lh, th] = foreground_losses(fg, gt, half, T);
  double want_l1 = 0, cnt = 0;
  for (int n = 0; n < T; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) {
          want_l1 += std::abs(fg.at(n, c, i, j) - gt.at(n, c, i, j));
          cnt += 1;
        }
  CHECK(lh[0] == doctest::Approx(want_l1 / cnt).epsilon(1e-7));

  // temporal term: difference at the later frame, gated by that frame's mask
  double want_tc = 0, cnt_tc = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 3; ++j) {
        const double dp = fg.at(1, c, i, j) - fg.at(0, c, i, j);
        const double dg = gt.at(1, c, i, j) - gt.at(0, c, i, j);
        want_tc += (dp - dg) * (dp - dg);
        cnt_tc += 1;
      }
  CHECK(th[0] == doctest::Approx(want_tc / cnt_tc).epsilon(1e-7));
}

TEST_CASE("total matting loss weighting") {
  auto one = Tensor<double>::ones(Shape{1});
  auto zero = Tensor<double>::zeros(Shape{1});
  CHECK(total_matting_loss(one, one, one, one, one)[0] == 13.0);
  CHECK(total_matting_loss(zero, zero, zero, zero, zero)[0] == 0.0);

  auto s = [](double v) { return Tensor<double>::scalar(v); };
  CHECK(total_matting_loss(s(0.3), s(0.1), s(0.2), s(0.4), s(0.05))[0] ==
        doctest::Approx(0.3 + 0.1 + 5 * 0.2 + 0.4 + 5 * 0.05).epsilon(1e-12));

  // perturbing a temporal component by delta moves the total by 5*delta
  const double base = total_matting_loss(s(0.3), s(0.1), s(0.2), s(0.4), s(0.05))[0];
  const double bumped =
      total_matting_loss(s(0.3), s(0.1), s(0.2 + 0.01), s(0.4), s(0.05))[0];
  CHECK(bumped - base == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("segmentation cross entropy") {
  auto logits = Tensor<double>::zeros(Shape{2, 1, 4, 4});
  auto gt = Tensor<double>::zeros(Shape{2, 1, 4, 4});
  CHECK(segmentation_bce(logits, gt)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  gt.array().setConstant(1.0);
  CHECK(segmentation_bce(logits, gt)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // confident correct logits drive the loss toward zero
  auto big = Tensor<double>::full(Shape{1, 1, 3, 3}, 20.0);
  CHECK(segmentation_bce(big, Tensor<double>::ones(Shape{1, 1, 3, 3}))[0] < 1e-8);

  Rng rng(7);
  auto x = Tensor<double>::uniform(Shape{2, 1, 5, 5}, rng, -3.0, 3.0);
  auto y = Tensor<double>(Shape{2, 1, 5, 5});
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  double want = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x[i]));
    want += -(y[i] * std::log(s) + (1 - y[i]) * std::log(1 - s));
  }
  want /= static_cast<double>(x.numel());
  CHECK(segmentation_bce(x, y)[0] == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("non-temporal losses ignore frame order") {
  const int T = 3;
  Rng rng(8);
  auto p = Tensor<double>::uniform(Shape{T, 1, 32, 32}, rng, 0.0, 1.0);
  auto g = Tensor<double>::uniform(Shape{T, 1, 32, 32}, rng, 0.0, 1.0);
  std::vector<Tensor<double>> pp, gg;
  for (int t : {2, 0, 1}) {
    pp.push_back(narrow(p, 0, t, 1));
    gg.push_back(narrow(g, 0, t, 1));
  }
  auto ps = concat(pp, 0), gs = concat(gg, 0);
  CHECK(l1_loss(p, g)[0] == doctest::Approx(l1_loss(ps, gs)[0]).epsilon(1e-12));
  CHECK(laplacian_pyramid_loss(p, g)[0] ==
        doctest::Approx(laplacian_pyramid_loss(ps, gs)[0]).epsilon(1e-12));
}

TEST_CASE("matting loss report composes per the weighting") {
  const int T = 2;
  Rng rng(9);
  auto a = Tensor<double>::uniform(Shape{T, 1, 32, 32}, rng, 0.0, 1.0);
  auto ag = Tensor<double>::uniform(Shape{T, 1, 32, 32}, rng, 0.0, 1.0);
  auto f = Tensor<double>::uniform(Shape{T, 3, 32, 32}, rng, 0.0, 1.0);
  auto fgt = Tensor<double>::uniform(Shape{T, 3, 32, 32}, rng, 0.0, 1.0);
  auto ml = matting_loss(a, ag, f, fgt, T);
  const auto& r = ml.report;
  CHECK(r.l1_alpha >= 0.0);
  CHECK(r.lap_alpha >= 0.0);
  CHECK(r.tc_alpha >= 0.0);
  CHECK(r.l1_fg >= 0.0);
  CHECK(r.tc_fg >= 0.0);
  CHECK(r.total_matting ==
        doctest::Approx(r.l1_alpha + r.lap_alpha + 5 * r.tc_alpha + r.l1_fg +
                        5 * r.tc_fg)
            .epsilon(1e-12));
  CHECK(ml.total[0] == r.total_matting);

  // single-frame clips drop the temporal terms
  auto one = matting_loss(narrow(a, 0, 0, 1), narrow(ag, 0, 0, 1), narrow(f, 0, 0, 1),
                          narrow(fgt, 0, 0, 1), 1);
  CHECK(one.report.tc_alpha == 0.0);
  CHECK(one.report.tc_fg == 0.0);
}

TEST_CASE("losses pass finite-difference checks away from the kinks") {
  Rng rng(10);
  auto gt = Tensor<double>::uniform(Shape{2, 1, 32, 32}, rng, 0.2, 0.8);
  // keep |pred - gt| in (0.05, 0.3): clear of the L1 kink at zero residual
  Tensor<double> pred(gt.shape());
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    const double off = 0.05 + 0.25 * rng.uniform(0.0, 1.0);
    pred[i] = gt[i] + (rng.bernoulli(0.5) ? off : -off);
  }

  auto err_l1 = finite_difference_check<double>(
      [&] { return l1_loss(pred, gt); }, {pred}, 1e-6, 200);
  CHECK(err_l1 < 1e-4);

  auto err_lap = finite_difference_check<double>(
      [&] { return laplacian_pyramid_loss(pred, gt); }, {pred}, 1e-6, 200);
  CHECK(err_lap < 1e-4);

  auto err_tc = finite_difference_check<double>(
      [&] { return temporal_coherence_loss(pred, gt, 2); }, {pred}, 1e-5, 200);
  CHECK(err_tc < 1e-4);

  Rng rng2(11);
  auto fg_gt = Tensor<double>::uniform(Shape{2, 3, 8, 8}, rng2, 0.2, 0.8);
  Tensor<double> fg(fg_gt.shape());
  for (std::int64_t i = 0; i < fg.numel(); ++i) {
    const double off = 0.05 + 0.25 * rng2.uniform(0.0, 1.0);
    fg[i] = fg_gt[i] + (rng2.bernoulli(0.5) ? off : -off);
  }
  Tensor<double> mask_alpha(Shape{2, 1, 8, 8});
  for (std::int64_t i = 0; i < mask_alpha.numel(); ++i)
    mask_alpha[i] = rng2.bernoulli(0.6) ? 0.5 : 0.0;
  auto err_fg = finite_difference_check<double>(
      [&] {
        auto [l, t] = foreground_losses(fg, fg_gt, mask_alpha, 2);
        return add(l, mul_scalar(t, 5.0));
      },
      {fg}, 1e-6, 200);
  CHECK(err_fg < 1e-4);

  auto logits = Tensor<double>::uniform(Shape{1, 1, 8, 8}, rng2, -2.0, 2.0);
  Tensor<double> seg_gt(logits.shape());
  for (std::int64_t i = 0; i < seg_gt.numel(); ++i)
    seg_gt[i] = rng2.bernoulli(0.5) ? 1.0 : 0.0;
  auto err_bce = finite_difference_check<double>(
      [&] { return segmentation_bce(logits, seg_gt); }, {logits}, 1e-6, 200);
  CHECK(err_bce < 1e-4);

  // the combined objective, differentiated through the alpha path only
  auto fg_c = Tensor<double>::full(Shape{2, 3, 32, 32}, 0.5);
  auto fg_gt_c = Tensor<double>::uniform(Shape{2, 3, 32, 32}, rng2, 0.2, 0.8);
  auto err_total = finite_difference_check<double>(
      [&] { return matting_loss(pred, gt, fg_c, fg_gt_c, 2).total; }, {pred}, 1e-6, 100);
  CHECK(err_total < 1e-4);
}
