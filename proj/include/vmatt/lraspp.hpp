#pragma once

#include "vmatt/modules.hpp"

namespace vmatt {

// Lite reduced-ASPP head over the 1/16 features: a 1x1 conv+BN+ReLU branch
// gated by a globally pooled 1x1 conv + hardsigmoid branch.
template <typename T>
struct LRASPP {
  ConvBNAct<T> branch;
  Conv2d<T> gate;

  static LRASPP make(Rng& rng, int cin, int cout) {
    LRASPP m;
    m.branch = ConvBNAct<T>::make(rng, cin, cout, 1, {}, Act::kRelu);
    m.gate = Conv2d<T>::make(rng, cin, cout, 1, {}, /*bias=*/true);
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    auto g = hardsigmoid(gate(global_avg_pool(x)));
    return scale_channels(branch(x, training), g);
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    branch.visit(prefix + ".branch", f);
    gate.visit(prefix + ".gate", f);
  }

  std::int64_t param_count() const { return branch.param_count() + gate.param_count(); }

  std::int64_t macs(int& h, int& w) const { return branch.macs(h, w); }
};

}  // namespace vmatt
