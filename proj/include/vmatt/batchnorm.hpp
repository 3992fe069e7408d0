#pragma once

#include "vmatt/tape.hpp"

namespace vmatt {

// Batch normalization over (N,H,W) per channel.
//
// Training mode normalizes with the biased batch statistics and folds the same
// biased variance into the running buffers, so a momentum-1.0 training step
// followed by an inference pass reproduces the training output. Running
// buffers are plain state, never tape-tracked.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5)) {
  check(eps > T(0), "batch_norm: eps must be positive");
  check_shape(x.rank() == 4, "batch_norm expects rank-4, got " + x.shape().str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(gamma.numel() == C && beta.numel() == C && running_mean.numel() == C &&
                  running_var.numel() == C,
              "batch_norm: parameter length != channel count " + std::to_string(C));
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  const std::int64_t count = static_cast<std::int64_t>(N) * hw;

  std::vector<T> mu(static_cast<size_t>(C)), inv_std(static_cast<size_t>(C));
  if (training) {
    for (int c = 0; c < C; ++c) {
      T s = T(0), s2 = T(0);
      for (int n = 0; n < N; ++n) {
        const T* p = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          s += p[i];
          s2 += p[i] * p[i];
        }
      }
      const T m = s / static_cast<T>(count);
      T v = s2 / static_cast<T>(count) - m * m;
      if (v < T(0)) v = T(0);
      mu[static_cast<size_t>(c)] = m;
      inv_std[static_cast<size_t>(c)] = T(1) / std::sqrt(v + eps);
      running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * m;
      running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * v;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mu[static_cast<size_t>(c)] = running_mean.data()[c];
      inv_std[static_cast<size_t>(c)] = T(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }

  Tensor<T> y(x.shape());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* p = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      T* q = y.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      const T a = gamma.data()[c] * inv_std[static_cast<size_t>(c)];
      const T b = beta.data()[c] - a * mu[static_cast<size_t>(c)];
      for (std::int64_t i = 0; i < hw; ++i) q[i] = a * p[i] + b;
    }
  }

  if (auto* tape = GradTape<T>::active(); tape && tape->tracks_any(x, gamma, beta)) {
    tape->record(y, [x, gamma, beta, mu, inv_std, training, count, hw,
                     C = C, N = N](const Tensor<T>& dy, GradTape<T>& tp) {
      Tensor<T> dx(x.shape());
      Tensor<T> dgamma = zeros_like(gamma);
      Tensor<T> dbeta = zeros_like(beta);
      for (int c = 0; c < C; ++c) {
        const T m = mu[static_cast<size_t>(c)];
        const T is = inv_std[static_cast<size_t>(c)];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int n = 0; n < N; ++n) {
          const T* xp = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
          const T* gp = dy.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            sum_dy += gp[i];
            sum_dy_xhat += gp[i] * (xp[i] - m) * is;
          }
        }
        dgamma.data()[c] = sum_dy_xhat;
        dbeta.data()[c] = sum_dy;
        const T g = gamma.data()[c];
        const T mean_dy = sum_dy / static_cast<T>(count);
        const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(count);
        for (int n = 0; n < N; ++n) {
          const T* xp = x.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
          const T* gp = dy.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
          T* dp = dx.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
          if (training) {
            for (std::int64_t i = 0; i < hw; ++i) {
              const T xhat = (xp[i] - m) * is;
              dp[i] = g * is * (gp[i] - mean_dy - xhat * mean_dy_xhat);
            }
          } else {
            for (std::int64_t i = 0; i < hw; ++i) dp[i] = g * is * gp[i];
          }
        }
      }
      tp.accumulate(x, dx);
      tp.accumulate(gamma, dgamma);
      tp.accumulate(beta, dbeta);
    });
  }
  return y;
}

}  // namespace vmatt
