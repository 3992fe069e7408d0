#pragma once

#include "vmatt/batchnorm.hpp"
#include "vmatt/conv.hpp"
#include "vmatt/ops.hpp"
#include "vmatt/resize.hpp"

namespace vmatt {

enum class ParamKind { kParam, kBuffer };

// Parameter visitor: fn(name, tensor, kind). Buffers (BN running stats) ride
// along in checkpoints but are not optimizer parameters.
template <typename T>
using ParamFn = std::function<void(const std::string&, Tensor<T>&, ParamKind)>;

namespace init {

// torch-style fan-in bound: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
template <typename T>
Tensor<T> conv_weight(Rng& rng, int cout, int cin_per_group, int kh, int kw) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_per_group) * kh * kw);
  return Tensor<T>::uniform(Shape{cout, cin_per_group, kh, kw}, rng,
                            static_cast<T>(-bound), static_cast<T>(bound));
}

template <typename T>
Tensor<T> conv_bias(Rng& rng, int cout, int cin_per_group, int kh, int kw) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_per_group) * kh * kw);
  return Tensor<T>::uniform(Shape{cout}, rng, static_cast<T>(-bound),
                            static_cast<T>(bound));
}

}  // namespace init

template <typename T>
struct Conv2d {
  Tensor<T> w;
  Tensor<T> b;  // undefined when the layer has no bias
  ConvSpec cs;

  static Conv2d make(Rng& rng, int cin, int cout, int k, ConvSpec cs, bool bias) {
    Conv2d m;
    m.cs = cs;
    m.w = init::conv_weight<T>(rng, cout, cin / cs.groups, k, k);
    if (bias) m.b = init::conv_bias<T>(rng, cout, cin / cs.groups, k, k);
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, cs); }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    f(prefix + ".weight", w, ParamKind::kParam);
    if (b.defined()) f(prefix + ".bias", b, ParamKind::kParam);
  }

  std::int64_t param_count() const { return w.numel() + (b.defined() ? b.numel() : 0); }

  // MACs for one sample at the given input extents; also reports the output
  // extents so callers can chain layers.
  std::int64_t macs(int& h, int& w_) const {
    h = detail::conv_out_extent(h, w.dim(2), cs.stride, cs.padding, cs.dilation);
    w_ = detail::conv_out_extent(w_, w.dim(3), cs.stride, cs.padding, cs.dilation);
    return static_cast<std::int64_t>(w.dim(0)) * w.dim(1) * w.dim(2) * w.dim(3) * h * w_;
  }
};

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  static BatchNorm2d make(int channels) {
    BatchNorm2d m;
    m.gamma = Tensor<T>::ones(Shape{channels});
    m.beta = Tensor<T>::zeros(Shape{channels});
    m.running_mean = Tensor<T>::zeros(Shape{channels});
    m.running_var = Tensor<T>::ones(Shape{channels});
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    f(prefix + ".weight", gamma, ParamKind::kParam);
    f(prefix + ".bias", beta, ParamKind::kParam);
    f(prefix + ".running_mean", running_mean, ParamKind::kBuffer);
    f(prefix + ".running_var", running_var, ParamKind::kBuffer);
  }

  std::int64_t param_count() const { return gamma.numel() + beta.numel(); }
};

enum class Act { kNone, kRelu, kHardswish };

template <typename T>
Tensor<T> apply_act(const Tensor<T>& x, Act act) {
  switch (act) {
    case Act::kRelu:
      return relu(x);
    case Act::kHardswish:
      return hardswish(x);
    case Act::kNone:
      return x;
  }
  return x;
}

// conv -> BN -> activation, the backbone workhorse. Convolutions before BN
// carry no bias.
template <typename T>
struct ConvBNAct {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  Act act = Act::kRelu;

  static ConvBNAct make(Rng& rng, int cin, int cout, int k, ConvSpec cs, Act act) {
    ConvBNAct m;
    m.conv = Conv2d<T>::make(rng, cin, cout, k, cs, /*bias=*/false);
    m.bn = BatchNorm2d<T>::make(cout);
    m.act = act;
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    return apply_act(bn(conv(x), training), act);
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    conv.visit(prefix + ".conv", f);
    bn.visit(prefix + ".bn", f);
  }

  std::int64_t param_count() const { return conv.param_count() + bn.param_count(); }

  std::int64_t macs(int& h, int& w) const { return conv.macs(h, w); }
};

inline int make_divisible(double v, int divisor) {
  int out = std::max(divisor, static_cast<int>(v + divisor / 2.0) / divisor * divisor);
  if (out < 0.9 * v) out += divisor;
  return out;
}

// Squeeze-and-excitation gate: pooled 1x1 bottleneck, ReLU, 1x1 expand,
// hardsigmoid, channel scale.
template <typename T>
struct SqueezeExcite {
  Conv2d<T> fc1, fc2;

  static SqueezeExcite make(Rng& rng, int channels) {
    const int squeezed = make_divisible(channels / 4.0, 8);
    SqueezeExcite m;
    m.fc1 = Conv2d<T>::make(rng, channels, squeezed, 1, {}, /*bias=*/true);
    m.fc2 = Conv2d<T>::make(rng, squeezed, channels, 1, {}, /*bias=*/true);
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto g = hardsigmoid(fc2(relu(fc1(global_avg_pool(x)))));
    return scale_channels(x, g);
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
  }

  std::int64_t param_count() const { return fc1.param_count() + fc2.param_count(); }
};

}  // namespace vmatt
