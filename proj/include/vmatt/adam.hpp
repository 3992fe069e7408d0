#pragma once

// Adam with bias correction and three parameter groups (encoder backbone,
// decoder+neck, guided-filter head), each with its own learning rate.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "vmatt/model.hpp"
#include "vmatt/tape.hpp"

namespace vmatt {

enum class ParamGroup { kBackbone = 0, kDecoder = 1, kDgf = 2 };

inline ParamGroup param_group_of(const std::string& name) {
  if (name.rfind("backbone.", 0) == 0) return ParamGroup::kBackbone;
  if (name.rfind("dgf.", 0) == 0) return ParamGroup::kDgf;
  return ParamGroup::kDecoder;  // decoder.* and the aspp.* neck train together
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class AdamOptimizer {
 public:
  struct Entry {
    std::string name;
    Tensor<T> param;  // shares storage with the model
    Tensor<T> m, v;   // first/second moment estimates, shaped like the param
    std::int64_t steps = 0;
    ParamGroup group = ParamGroup::kDecoder;
  };

  AdamOptimizer(Model<T>& model, std::array<double, 3> lrs, AdamHyper hyper = {})
      : lrs_(lrs), hyper_(hyper) {
    model.visit([this](const std::string& name, Tensor<T>& p, ParamKind kind) {
      if (kind != ParamKind::kParam) return;
      p.set_requires_grad(true);  // adopting a parameter makes it trainable
      Entry e;
      e.name = name;
      e.param = p;
      e.m = Tensor<T>(p.shape());
      e.v = Tensor<T>(p.shape());
      e.group = param_group_of(name);
      entries_.push_back(std::move(e));
    });
  }

  double lr(ParamGroup g) const { return lrs_[static_cast<size_t>(g)]; }
  const std::array<double, 3>& lrs() const { return lrs_; }
  void set_lrs(std::array<double, 3> lrs) { lrs_ = lrs; }
  const AdamHyper& hyper() const { return hyper_; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // One bias-corrected update from the gradients accumulated on the tape.
  // Parameters the tape holds no gradient for keep their value and moments.
  // Returns the names of the parameters that were updated.
  std::vector<std::string> step(const GradTape<T>& tape) {
    std::vector<std::string> touched;
    for (auto& e : entries_) {
      if (!tape.has_grad(e.param)) continue;
      Tensor<T> g = tape.grad(e.param);
      check_shape(g.shape() == e.param.shape(),
                  "adam: gradient shape " + g.shape().str() + " for " + e.name);
      for (std::int64_t i = 0; i < g.numel(); ++i)
        if (!std::isfinite(static_cast<double>(g[i])))
          throw ValueError("adam: non-finite gradient for parameter " + e.name);
      ++e.steps;
      const double b1 = hyper_.beta1, b2 = hyper_.beta2;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(e.steps));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(e.steps));
      const double step_lr = lrs_[static_cast<size_t>(e.group)];
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        const double gi = g[i];
        const double m = b1 * e.m[i] + (1.0 - b1) * gi;
        const double v = b2 * e.v[i] + (1.0 - b2) * gi * gi;
        e.m[i] = static_cast<T>(m);
        e.v[i] = static_cast<T>(v);
        const double mhat = m / bc1, vhat = v / bc2;
        e.param[i] =
            static_cast<T>(e.param[i] - step_lr * mhat / (std::sqrt(vhat) + hyper_.eps));
      }
      touched.push_back(e.name);
    }
    return touched;
  }

 private:
  std::vector<Entry> entries_;
  std::array<double, 3> lrs_;
  AdamHyper hyper_;
};

}  // namespace vmatt
