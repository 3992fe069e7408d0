#pragma once

#include "vmatt/convgru.hpp"
#include "vmatt/mobilenetv3.hpp"

namespace vmatt {

// Hidden maps carried between calls, coarsest first (1/16, 1/8, 1/4, 1/2),
// each with half the channels of its decoder stage. A default-constructed
// state is "fresh" and decodes as all zeros.
template <typename T>
struct RecurrentState {
  std::array<Tensor<T>, 4> hidden;

  bool fresh() const { return !hidden[0].defined(); }
  void reset() { hidden = {}; }
};

// GRU over half the bottleneck channels; the other half passes through. No
// convolution of its own, so its width equals the ASPP output width.
template <typename T>
struct BottleneckBlock {
  ConvGRU<T> gru;
  int channels = 0;

  static BottleneckBlock make(Rng& rng, int channels) {
    BottleneckBlock m;
    m.channels = channels;
    m.gru = ConvGRU<T>::make(rng, channels / 2);
    return m;
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& x, const Tensor<T>& h0,
                                             int frames) const {
    auto a = narrow(x, 1, 0, channels / 2);
    auto b = narrow(x, 1, channels / 2, channels / 2);
    auto [ga, hT] = gru.scan(a, h0, frames);
    return {concat(ga, b, 1), hT};
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    gru.visit(prefix + ".gru", f);
  }
  std::int64_t param_count() const { return gru.param_count(); }
};

// Doubles resolution: bilinear-upsampled previous output, encoder skip
// features and the avg-pooled source frame are concatenated, mixed by a 3x3
// conv+BN+ReLU, then half the channels run through a ConvGRU.
template <typename T>
struct UpsamplingBlock {
  ConvBNAct<T> conv;
  ConvGRU<T> gru;
  int out_channels = 0;

  static UpsamplingBlock make(Rng& rng, int cin_prev, int cin_skip, int cout) {
    UpsamplingBlock m;
    m.out_channels = cout;
    m.conv = ConvBNAct<T>::make(rng, cin_prev + cin_skip + 3, cout, 3, {.padding = 1},
                                Act::kRelu);
    m.gru = ConvGRU<T>::make(rng, cout / 2);
    return m;
  }

  std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& x, const Tensor<T>& skip,
                                             const Tensor<T>& src, const Tensor<T>& h0,
                                             int frames, bool training) {
    auto up = bilinear_resize(x, skip.dim(2), skip.dim(3));
    auto y = conv(concat(up, skip, src, 1), training);
    auto a = narrow(y, 1, 0, out_channels / 2);
    auto b = narrow(y, 1, out_channels / 2, out_channels / 2);
    auto [ga, hT] = gru.scan(a, h0, frames);
    return {concat(ga, b, 1), hT};
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    conv.visit(prefix + ".conv", f);
    gru.visit(prefix + ".gru", f);
  }
  std::int64_t param_count() const { return conv.param_count() + gru.param_count(); }
};

// Full-resolution head: upsample, concatenate the source frame, then two
// conv+BN+ReLU stacks producing the final hidden features.
template <typename T>
struct OutputBlock {
  ConvBNAct<T> conv1, conv2;

  static OutputBlock make(Rng& rng, int cin_prev, int cout) {
    OutputBlock m;
    m.conv1 = ConvBNAct<T>::make(rng, cin_prev + 3, cout, 3, {.padding = 1}, Act::kRelu);
    m.conv2 = ConvBNAct<T>::make(rng, cout, cout, 3, {.padding = 1}, Act::kRelu);
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& src, bool training) {
    auto up = bilinear_resize(x, src.dim(2), src.dim(3));
    return conv2(conv1(concat(up, src, 1), training), training);
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    conv1.visit(prefix + ".conv1", f);
    conv2.visit(prefix + ".conv2", f);
  }
  std::int64_t param_count() const { return conv1.param_count() + conv2.param_count(); }
};

template <typename T>
struct DecoderResult {
  Tensor<T> projection;  // (T*B, 5, H, W): alpha | foreground rgb | seg logit
  Tensor<T> hidden;      // (T*B, D_1/1, H, W) final hidden features
  RecurrentState<T> state;
};

template <typename T>
struct Decoder {
  BottleneckBlock<T> bottleneck;
  UpsamplingBlock<T> up8, up4, up2;
  OutputBlock<T> out;
  Conv2d<T> projection;

  static Decoder make(Rng& rng, const std::array<int, 4>& enc, int aspp,
                      const std::array<int, 5>& dec) {
    Decoder m;
    m.bottleneck = BottleneckBlock<T>::make(rng, dec[0]);
    m.up8 = UpsamplingBlock<T>::make(rng, dec[0], enc[2], dec[1]);
    m.up4 = UpsamplingBlock<T>::make(rng, dec[1], enc[1], dec[2]);
    m.up2 = UpsamplingBlock<T>::make(rng, dec[2], enc[0], dec[3]);
    m.out = OutputBlock<T>::make(rng, dec[3], dec[4]);
    m.projection = Conv2d<T>::make(rng, dec[4], 5, 1, {}, /*bias=*/true);
    (void)aspp;
    return m;
  }

  // src is the (possibly downsampled) time-major input (T*B,3,H,W) the
  // encoder consumed; aspp_out sits at 1/16 of it.
  DecoderResult<T> operator()(const EncoderFeatures<T>& f, const Tensor<T>& aspp_out,
                              const Tensor<T>& src, const RecurrentState<T>& state,
                              int frames, bool training) {
    const int batch = src.dim(0) / frames;
    auto s2 = avg_pool_2x2(src);
    auto s4 = avg_pool_2x2(s2);
    auto s8 = avg_pool_2x2(s4);

    auto h0 = [&](int k, int channels, const Tensor<T>& ref) -> Tensor<T> {
      const Shape want{batch, channels / 2, ref.dim(2), ref.dim(3)};
      if (state.fresh()) return Tensor<T>::zeros(want);
      check_shape(state.hidden[static_cast<size_t>(k)].shape() == want,
                  "recurrent state at scale " + std::to_string(k) + " has shape " +
                      state.hidden[static_cast<size_t>(k)].shape().str() + ", expected " +
                      want.str() + "; reset() the state when the stream changes");
      return state.hidden[static_cast<size_t>(k)];
    };

    DecoderResult<T> r;
    auto [x16, h16] = bottleneck(aspp_out, h0(0, bottleneck.channels, aspp_out), frames);
    auto [x8, h8] =
        up8(x16, f.f3, s8, h0(1, up8.out_channels, f.f3), frames, training);
    auto [x4, h4] = up4(x8, f.f2, s4, h0(2, up4.out_channels, f.f2), frames, training);
    auto [x2, h2] = up2(x4, f.f1, s2, h0(3, up2.out_channels, f.f1), frames, training);
    r.hidden = out(x2, src, training);
    r.projection = projection(r.hidden);
    r.state.hidden = {h16, h8, h4, h2};
    return r;
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    bottleneck.visit(prefix + ".bottleneck", f);
    up8.visit(prefix + ".up8", f);
    up4.visit(prefix + ".up4", f);
    up2.visit(prefix + ".up2", f);
    out.visit(prefix + ".out", f);
    projection.visit(prefix + ".projection", f);
  }

  std::int64_t param_count() const {
    return bottleneck.param_count() + up8.param_count() + up4.param_count() +
           up2.param_count() + out.param_count() + projection.param_count();
  }
};

}  // namespace vmatt
