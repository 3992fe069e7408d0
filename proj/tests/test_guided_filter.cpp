#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "vmatt/gradcheck.hpp"
#include "vmatt/guided_filter.hpp"

using namespace vmatt;

namespace {

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace

TEST_CASE("box mean maps constants to themselves at every border") {
  auto x = Tensor<float>::full(Shape{1, 2, 5, 7}, 3.25f);
  for (int r : {1, 2, 3}) {
    auto y = box_mean(x, r);
    CHECK(max_abs_diff(y, x) < 1e-6);
  }
  CHECK_THROWS_AS(box_mean(x, 0), ValueError);
}

TEST_CASE("box mean gradient agrees with finite differences") {
  Rng rng(5);
  auto x = Tensor<double>::uniform(Shape{1, 1, 6, 6}, rng, -1.0, 1.0);
  auto err = finite_difference_check<double>(
      [&] { return sum(mul(box_mean(x, 2), box_mean(x, 2))); }, {x});
  CHECK(err < 1e-6);
}

TEST_CASE("guided filter passes constants through") {
  Rng rng(1);
  auto src = Tensor<float>::full(Shape{1, 1, 8, 8}, 0.6f);
  auto guide = Tensor<float>::uniform(Shape{1, 1, 8, 8}, rng, 0.0f, 1.0f);
  auto guide_hr = Tensor<float>::uniform(Shape{1, 1, 16, 16}, rng, 0.0f, 1.0f);
  auto y = fast_guided_filter(src, guide, guide_hr, 1, 1e-5f);
  CHECK(y.shape() == Shape{1, 1, 16, 16});
  CHECK(max_abs_diff(y, Tensor<float>::full(y.shape(), 0.6f)) < 1e-4);
}

TEST_CASE("guided filter reproduces the guide when filtering it by itself") {
  Rng rng(2);
  auto g_lr = Tensor<double>::uniform(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
  auto g_hr = Tensor<double>::uniform(Shape{1, 1, 24, 24}, rng, 0.0, 1.0);
  auto y = fast_guided_filter(g_lr, g_lr, g_hr, 1, 1e-12);
  CHECK(max_abs_diff(y, g_hr) < 1e-7);
}

TEST_CASE("guided filter matches per-window statistics") {
  Rng rng(3);
  for (int radius : {1, 2}) {
    for (double eps : {1e-5, 1e-2}) {
      auto src = Tensor<double>::uniform(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
      auto guide = Tensor<double>::uniform(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
      auto want = oracle::guided_filter_same_res(src, guide, radius, eps);
      auto got = fast_guided_filter(src, guide, guide, radius, eps);
      CHECK(max_abs_diff(got, want) < 1e-5);
    }
  }
}

TEST_CASE("single-channel guide spreads over multi-channel sources") {
  Rng rng(4);
  auto src = Tensor<double>::uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
  auto guide = Tensor<double>::uniform(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
  auto got = fast_guided_filter(src, guide, guide, 1, 1e-4);
  for (int c = 0; c < 3; ++c) {
    auto want = oracle::guided_filter_same_res(narrow(src, 1, c, 1), guide, 1, 1e-4);
    CHECK(max_abs_diff(narrow(got, 1, c, 1), want) < 1e-5);
  }
  CHECK_THROWS_AS(fast_guided_filter(src, concat(guide, guide, 1), guide, 1, 1e-4),
                  ShapeError);
  CHECK_THROWS_AS(fast_guided_filter(src, guide, guide, 0, 1e-4), ValueError);
  CHECK_THROWS_AS(fast_guided_filter(src, guide, guide, 1, 0.0), ValueError);
}

TEST_CASE("refinement head meets its shape and range contract") {
  Rng rng(6);
  auto dgf = DeepGuidedFilter<float>::make(rng, 4);
  auto alpha = Tensor<float>::uniform(Shape{2, 1, 8, 8}, rng, 0.0f, 1.0f);
  auto fg = Tensor<float>::uniform(Shape{2, 3, 8, 8}, rng, 0.0f, 1.0f);
  auto hidden = Tensor<float>::uniform(Shape{2, 4, 8, 8}, rng, -1.0f, 1.0f);
  auto frame_hr = Tensor<float>::uniform(Shape{2, 3, 32, 24}, rng, 0.0f, 1.0f);
  auto frame_lr = Tensor<float>::uniform(Shape{2, 3, 8, 8}, rng, 0.0f, 1.0f);
  auto [alpha_hr, fg_hr] = dgf(alpha, fg, hidden, frame_hr, frame_lr);
  CHECK(alpha_hr.shape() == Shape{2, 1, 32, 24});
  CHECK(fg_hr.shape() == Shape{2, 3, 32, 24});
  CHECK(alpha_hr.array().minCoeff() >= 0.0f);
  CHECK(alpha_hr.array().maxCoeff() <= 1.0f);
  CHECK(fg_hr.array().minCoeff() >= 0.0f);
  CHECK(fg_hr.array().maxCoeff() <= 1.0f);

  // zeroed hidden features are a legal input
  auto [a2, f2] = dgf(alpha, fg, Tensor<float>::zeros(Shape{2, 4, 8, 8}), frame_hr,
                      frame_lr);
  CHECK(a2.array().isFinite().all());
  CHECK(f2.array().isFinite().all());

  CHECK_THROWS_AS(dgf(alpha, fg, hidden, frame_hr,
                      Tensor<float>::zeros(Shape{2, 3, 10, 8})),
                  ShapeError);
}

TEST_CASE("refinement head parameter count") {
  Rng rng(7);
  auto dgf = DeepGuidedFilter<float>::make(rng, 16);
  // two guide transforms, coefficient head over [guide(16) | y(4) | hidden(16)]
  CHECK(dgf.param_count() == (16 * 3 + 16) + (16 * 16 + 16) +
                                 (16 * (16 + 4 + 16) + 16) + (4 * 16 + 4));
  CHECK(dgf.param_count() == 996);
}

TEST_CASE("gradients flow through the refinement head to every parameter") {
  Rng rng(8);
  auto dgf = DeepGuidedFilter<double>::make(rng, 4);
  auto alpha = Tensor<double>::uniform(Shape{1, 1, 6, 6}, rng, 0.1, 0.9);
  auto fg = Tensor<double>::uniform(Shape{1, 3, 6, 6}, rng, 0.1, 0.9);
  auto hidden = Tensor<double>::uniform(Shape{1, 4, 6, 6}, rng, -0.5, 0.5);
  auto frame_hr = Tensor<double>::uniform(Shape{1, 3, 12, 12}, rng, 0.1, 0.9);
  auto frame_lr = Tensor<double>::uniform(Shape{1, 3, 6, 6}, rng, 0.1, 0.9);
  auto target_a = Tensor<double>::uniform(Shape{1, 1, 12, 12}, rng, 0.0, 1.0);
  auto target_f = Tensor<double>::uniform(Shape{1, 3, 12, 12}, rng, 0.0, 1.0);

  std::vector<Tensor<double>> params = {dgf.guide1.w, dgf.guide1.b, dgf.guide2.w,
                                        dgf.guide2.b, dgf.coef1.w, dgf.coef1.b,
                                        dgf.coef2.w, dgf.coef2.b};
  for (auto& p : params) p.set_requires_grad(true);

  GradTape<double> tape;
  Tensor<double> loss;
  {
    TapeScope<double> scope(tape);
    auto [a, f] = dgf(alpha, fg, hidden, frame_hr, frame_lr);
    loss = add(mean(abs(sub(a, target_a))), mean(abs(sub(f, target_f))));
  }
  backward(tape, loss);
  for (const auto& p : params) {
    auto g = tape.grad(p);
    REQUIRE(g.defined());
    CHECK(g.array().isFinite().all());
    CHECK(g.array().abs().maxCoeff() > 0.0);
  }
}

TEST_CASE("refinement head passes a finite-difference check") {
  Rng rng(9);
  auto dgf = DeepGuidedFilter<double>::make(rng, 2);
  auto alpha = Tensor<double>::uniform(Shape{1, 1, 5, 5}, rng, 0.2, 0.8);
  auto fg = Tensor<double>::uniform(Shape{1, 3, 5, 5}, rng, 0.2, 0.8);
  auto hidden = Tensor<double>::uniform(Shape{1, 2, 5, 5}, rng, -0.5, 0.5);
  auto frame_hr = Tensor<double>::uniform(Shape{1, 3, 10, 10}, rng, 0.2, 0.8);
  auto frame_lr = Tensor<double>::uniform(Shape{1, 3, 5, 5}, rng, 0.2, 0.8);
  auto target = Tensor<double>::uniform(Shape{1, 1, 10, 10}, rng, 0.35, 0.65);

  std::vector<Tensor<double>> params = {dgf.guide1.w, dgf.guide1.b, dgf.guide2.w,
                                        dgf.guide2.b, dgf.coef1.w, dgf.coef1.b,
                                        dgf.coef2.w, dgf.coef2.b};
  auto err = finite_difference_check<double>(
      [&] {
        auto [a, f] = dgf(alpha, fg, hidden, frame_hr, frame_lr);
        (void)f;
        return mean(square(sub(a, target)));
      },
      params, 1e-5);
  CHECK(err < 1e-3);
}
