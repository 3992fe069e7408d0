#pragma once

#include "vmatt/modules.hpp"

namespace vmatt {

// Convolutional GRU cell over C-channel maps:
//   z = sigmoid(w_zx * x + w_zh * h + b_z)
//   r = sigmoid(w_rx * x + w_rh * h + b_r)
//   o = tanh(w_ox * x + w_oh * (r . h) + b_o)
//   h' = z . h + (1 - z) . o
// The z and r convolutions are fused into one 2C -> 2C conv over [x|h]
// (z block first), and the candidate is a 2C -> C conv over [x|r.h]; both use
// 3x3 kernels. This is the same arithmetic as four separate kernels.
template <typename T>
struct ConvGRU {
  Conv2d<T> gates;      // [x|h] -> [z_pre|r_pre]
  Conv2d<T> candidate;  // [x|r.h] -> o_pre
  int channels = 0;

  static ConvGRU make(Rng& rng, int channels) {
    ConvGRU m;
    m.channels = channels;
    m.gates = Conv2d<T>::make(rng, 2 * channels, 2 * channels, 3, {.padding = 1},
                              /*bias=*/true);
    m.candidate = Conv2d<T>::make(rng, 2 * channels, channels, 3, {.padding = 1},
                                  /*bias=*/true);
    // recurrent biases start at zero so a fresh cell is a pure convex blend
    m.gates.b.array().setZero();
    m.candidate.b.array().setZero();
    return m;
  }

  Tensor<T> step(const Tensor<T>& x, const Tensor<T>& h) const {
    check_shape(x.shape() == h.shape(),
                "conv_gru_cell: x " + x.shape().str() + " vs h " + h.shape().str());
    auto zr = gates(concat(x, h, 1));
    auto z = sigmoid(narrow(zr, 1, 0, channels));
    auto r = sigmoid(narrow(zr, 1, channels, channels));
    auto o = vmatt::tanh(candidate(concat(x, mul(r, h), 1)));
    return add(mul(z, h), mul(sub(ones_like(z), z), o));
  }

  // Scans a time-major sequence (frame t of item b at row t*B + b). Returns
  // the stacked hidden states and the final state.
  std::pair<Tensor<T>, Tensor<T>> scan(const Tensor<T>& x_seq, const Tensor<T>& h0,
                                       int frames) const {
    check_shape(x_seq.dim(0) % frames == 0,
                "conv_gru scan: rows not divisible by frame count");
    const int batch = x_seq.dim(0) / frames;
    Tensor<T> h = h0;
    std::vector<Tensor<T>> steps;
    steps.reserve(static_cast<size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      h = step(narrow(x_seq, 0, t * batch, batch), h);
      steps.push_back(h);
    }
    return {frames == 1 ? steps[0] : concat(steps, 0), h};
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    gates.visit(prefix + ".gates", f);
    candidate.visit(prefix + ".candidate", f);
  }

  std::int64_t param_count() const {
    return gates.param_count() + candidate.param_count();
  }

  std::int64_t macs(int h, int w) const {
    int h1 = h, w1 = w, h2 = h, w2 = w;
    return gates.macs(h1, w1) + candidate.macs(h2, w2);
  }
};

}  // namespace vmatt
