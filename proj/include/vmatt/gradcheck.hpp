#pragma once

#include <functional>

#include "vmatt/tape.hpp"

namespace vmatt {

// Compares tape gradients of a scalar function against central finite
// differences and returns the maximum relative error
//   |g_analytic - g_numeric| / max(1e-8, |g_numeric|).
//
// `f` takes no arguments and must read the listed tensors through shared
// storage, so perturbing an element in place is visible to it. Use T = double;
// float step sizes drown in rounding noise. When `max_per_tensor` is positive,
// only an evenly strided subset of each tensor's elements is probed, which
// keeps big-model checks affordable.
template <typename T>
double finite_difference_check(const std::function<Tensor<T>()>& f,
                               const std::vector<Tensor<T>>& params, T step = T(1e-4),
                               std::int64_t max_per_tensor = -1) {
  check(!params.empty(), "finite_difference_check: no tensors to perturb");

  std::vector<bool> prev_flag;
  for (const auto& p : params) {
    prev_flag.push_back(p.requires_grad());
    const_cast<Tensor<T>&>(p).set_requires_grad(true);
  }
  std::vector<Tensor<T>> analytic;
  {
    GradTape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> loss = f();
    check(loss.numel() == 1, "finite_difference_check: f must return a scalar");
    backward(tape, loss);
    for (const auto& p : params)
      analytic.push_back(tape.has_grad(p) ? tape.grad(p) : zeros_like(p));
  }
  for (size_t k = 0; k < params.size(); ++k)
    const_cast<Tensor<T>&>(params[k]).set_requires_grad(prev_flag[k]);

  double worst = 0.0;
  for (size_t k = 0; k < params.size(); ++k) {
    const Tensor<T>& p = params[k];
    const std::int64_t n = p.numel();
    const std::int64_t stride =
        (max_per_tensor > 0 && n > max_per_tensor) ? (n + max_per_tensor - 1) / max_per_tensor
                                                   : 1;
    T* buf = const_cast<Tensor<T>&>(p).data();
    for (std::int64_t i = 0; i < n; i += stride) {
      const T saved = buf[i];
      buf[i] = saved + step;
      const double up = static_cast<double>(f().item());
      buf[i] = saved - step;
      const double dn = static_cast<double>(f().item());
      buf[i] = saved;
      const double g_num = (up - dn) / (2.0 * static_cast<double>(step));
      const double g_ana = static_cast<double>(analytic[k].data()[i]);
      const double err = std::abs(g_ana - g_num) / std::max(1e-8, std::abs(g_num));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

// Single-tensor convenience form: f maps the tensor to a scalar.
template <typename T>
double finite_difference_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                               const Tensor<T>& x, T step = T(1e-4),
                               std::int64_t max_per_tensor = -1) {
  return finite_difference_check<T>([&f, x]() { return f(x); }, {x}, step, max_per_tensor);
}

}  // namespace vmatt
