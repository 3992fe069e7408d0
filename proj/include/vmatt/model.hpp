#pragma once

#include "vmatt/decoder.hpp"
#include "vmatt/guided_filter.hpp"
#include "vmatt/lraspp.hpp"

namespace vmatt {

enum class Backbone { kMobileNetV3Large, kTinyTest };

struct ModelConfig {
  Backbone backbone = Backbone::kMobileNetV3Large;
  std::array<int, 4> encoder_channels{16, 24, 40, 960};  // scales 1/2 .. 1/16
  int aspp_channels = 128;
  std::array<int, 5> decoder_channels{128, 80, 40, 32, 16};  // 1/16 .. 1/1

  static ModelConfig defaults() { return {}; }

  static ModelConfig tiny_test() {
    ModelConfig c;
    c.backbone = Backbone::kTinyTest;
    c.encoder_channels = {4, 6, 8, 16};
    c.aspp_channels = 8;
    c.decoder_channels = {8, 8, 8, 8, 4};
    return c;
  }

  void validate() const {
    for (int i = 0; i < 4; ++i) {
      check(encoder_channels[static_cast<size_t>(i)] > 0, "config: encoder channels must be positive");
      check(decoder_channels[static_cast<size_t>(i)] % 2 == 0,
            "config: decoder channels at recurrent scales must be even, got " +
                std::to_string(decoder_channels[static_cast<size_t>(i)]));
    }
    check(decoder_channels[4] > 0 && aspp_channels > 0, "config: channel counts must be positive");
    check(aspp_channels == decoder_channels[0],
          "config: the 1/16 decoder width must equal the aspp width (the bottleneck has "
          "no projection of its own)");
    if (backbone == Backbone::kMobileNetV3Large)
      check(encoder_channels == std::array<int, 4>{16, 24, 40, 960},
            "config: the mobilenet_v3_large recipe fixes encoder channels at 16/24/40/960");
  }
};

// Network outputs in time-major layout: frame t of sequence item b sits at
// row t*batch + b, so a single sequence (batch 1) reads as plain (T,C,H,W).
// alpha and foreground are clamped to [0,1]; segmentation stays in logits.
// final_hidden is at the resolution the decoder ran at. The *_lowres fields
// are defined only when the forward pass downsampled (factor < 1).
template <typename T>
struct MattingOutput {
  int frames = 0;
  int batch = 1;
  Tensor<T> alpha;                // (T*B, 1, H, W)
  Tensor<T> foreground;           // (T*B, 3, H, W)
  Tensor<T> segmentation_logits;  // (T*B, 1, H, W)
  Tensor<T> final_hidden;         // (T*B, D_1/1, h_lr, w_lr)
  Tensor<T> alpha_lowres, foreground_lowres;
};

struct ForwardOptions {
  double downsample = 1.0;  // s in (0,1]
  bool use_dgf = false;     // requires downsample < 1
  bool training = false;
  // When set, alpha/foreground/segmentation are kept at the processing
  // resolution instead of being resized back to the input resolution.
  bool keep_lowres_outputs = false;
};

inline std::pair<int, int> downsampled_extents(int h, int w, double s) {
  const int lh = static_cast<int>(std::llround(s * h / 16.0)) * 16;
  const int lw = static_cast<int>(std::llround(s * w / 16.0)) * 16;
  return {lh, lw};
}

template <typename T>
struct Model {
  ModelConfig config;
  std::optional<MobileNetV3Encoder<T>> mnv3;
  std::optional<TinyEncoder<T>> tiny;
  LRASPP<T> aspp;
  Decoder<T> decoder;
  DeepGuidedFilter<T> dgf;

  EncoderFeatures<T> encode(const Tensor<T>& frames, bool training) {
    check_shape(frames.rank() == 4 && frames.dim(1) == 3,
                "encode expects (N,3,H,W), got " + frames.shape().str());
    check_shape(frames.dim(2) % 16 == 0 && frames.dim(3) % 16 == 0,
                "encode: extents " + frames.shape().str() +
                    " must be divisible by 16; pad or resize first");
    return mnv3 ? (*mnv3)(frames, training) : (*tiny)(frames, training);
  }

  // x: time-major (T*B, 3, H, W).
  std::pair<MattingOutput<T>, RecurrentState<T>> forward_time_major(
      const Tensor<T>& x, int frames, const RecurrentState<T>& state,
      const ForwardOptions& opt) {
    check(opt.downsample > 0.0 && opt.downsample <= 1.0,
          "forward: downsample factor must be in (0,1], got " +
              std::to_string(opt.downsample));
    check(!opt.use_dgf || opt.downsample < 1.0,
          "forward: the guided-filter head needs a downsample factor < 1");
    check_shape(x.rank() == 4 && x.dim(0) % frames == 0,
                "forward: rows not divisible by frame count");
    const int H = x.dim(2), W = x.dim(3);

    Tensor<T> x_lr = x;
    if (opt.downsample < 1.0) {
      const auto [lh, lw] = downsampled_extents(H, W, opt.downsample);
      check_shape(lh >= 16 && lw >= 16,
                  "forward: downsample " + std::to_string(opt.downsample) + " of " +
                      std::to_string(H) + "x" + std::to_string(W) +
                      " leaves less than one 16px cell");
      x_lr = bilinear_resize(x, lh, lw);
    }

    auto feats = encode(x_lr, opt.training);
    auto a4 = aspp(feats.f4, opt.training);
    auto dec = decoder(feats, a4, x_lr, state, frames, opt.training);

    MattingOutput<T> out;
    out.frames = frames;
    out.batch = x.dim(0) / frames;
    out.final_hidden = dec.hidden;
    auto alpha_lr = clamp(narrow(dec.projection, 1, 0, 1), T(0), T(1));
    auto fg_lr = clamp(narrow(dec.projection, 1, 1, 3), T(0), T(1));
    auto seg_lr = narrow(dec.projection, 1, 4, 1);

    if (opt.use_dgf) {
      auto [alpha_hr, fg_hr] = dgf(alpha_lr, fg_lr, dec.hidden, x, x_lr);
      out.alpha = alpha_hr;
      out.foreground = fg_hr;
      out.segmentation_logits = bilinear_resize(seg_lr, H, W);
      out.alpha_lowres = alpha_lr;
      out.foreground_lowres = fg_lr;
    } else if (opt.downsample < 1.0 && !opt.keep_lowres_outputs) {
      out.alpha = clamp(bilinear_resize(alpha_lr, H, W), T(0), T(1));
      out.foreground = clamp(bilinear_resize(fg_lr, H, W), T(0), T(1));
      out.segmentation_logits = bilinear_resize(seg_lr, H, W);
      out.alpha_lowres = alpha_lr;
      out.foreground_lowres = fg_lr;
    } else {
      out.alpha = alpha_lr;
      out.foreground = fg_lr;
      out.segmentation_logits = seg_lr;
      if (opt.downsample < 1.0) {
        out.alpha_lowres = alpha_lr;
        out.foreground_lowres = fg_lr;
      }
    }
    return {out, dec.state};
  }

  // frames: (T,3,H,W) for a single sequence, or (B,T,3,H,W); rank-5 inputs
  // are reordered into the time-major layout internally.
  std::pair<MattingOutput<T>, RecurrentState<T>> forward(const Tensor<T>& frames,
                                                         const RecurrentState<T>& state,
                                                         const ForwardOptions& opt) {
    if (frames.rank() == 4) return forward_time_major(frames, frames.dim(0), state, opt);
    check_shape(frames.rank() == 5 && frames.dim(2) == 3,
                "forward expects (T,3,H,W) or (B,T,3,H,W), got " + frames.shape().str());
    const int B = frames.dim(0), T_ = frames.dim(1);
    auto flat = frames.reshaped_copy(
        Shape{B * T_, frames.dim(2), frames.dim(3), frames.dim(4)});
    return forward_time_major(gather_rows(flat, time_major_order(B, T_)), T_, state, opt);
  }

  std::pair<MattingOutput<T>, RecurrentState<T>> forward(const Tensor<T>& frames,
                                                         const ForwardOptions& opt) {
    return forward(frames, RecurrentState<T>{}, opt);
  }

  void visit(const ParamFn<T>& f) {
    if (mnv3) mnv3->visit("backbone", f);
    if (tiny) tiny->visit("backbone", f);
    aspp.visit("aspp", f);
    decoder.visit("decoder", f);
    dgf.visit("dgf", f);
  }

  std::int64_t param_count() const {
    return (mnv3 ? mnv3->param_count() : 0) + (tiny ? tiny->param_count() : 0) +
           aspp.param_count() + decoder.param_count() + dgf.param_count();
  }

  // Multiply-accumulate count for one frame at the given input extents,
  // convolutions only, evaluated at the resolution each layer actually sees.
  // Globally pooled 1x1 gating convolutions (squeeze-excite, the ASPP gate)
  // cost the same at every input size and are left out, so the count scales
  // exactly with area. The guided-filter head contributes only when s < 1
  // (when it can run).
  std::int64_t macs(int H, int W, double s) const {
    auto [lh, lw] = s < 1.0 ? downsampled_extents(H, W, s) : std::pair<int, int>{H, W};
    int h = lh, w = lw;
    std::int64_t m = mnv3 ? mnv3->macs(h, w) : tiny->macs(h, w);
    m += aspp.macs(h, w);  // h,w now 1/16 of lh,lw
    m += decoder.bottleneck.gru.macs(lh / 16, lw / 16);
    auto up_macs = [&](const UpsamplingBlock<T>& b, int oh, int ow) {
      int ch = oh, cw = ow;
      return b.conv.macs(ch, cw) + b.gru.macs(oh, ow);
    };
    m += up_macs(decoder.up8, lh / 8, lw / 8);
    m += up_macs(decoder.up4, lh / 4, lw / 4);
    m += up_macs(decoder.up2, lh / 2, lw / 2);
    int oh = lh, ow = lw;
    m += decoder.out.conv1.macs(oh, ow);
    oh = lh, ow = lw;
    m += decoder.out.conv2.macs(oh, ow);
    oh = lh, ow = lw;
    m += decoder.projection.macs(oh, ow);
    if (s < 1.0) {
      int gh = lh, gw = lw;
      m += dgf.guide1.macs(gh, gw) + dgf.guide2.macs(gh, gw) + dgf.coef1.macs(gh, gw) +
           dgf.coef2.macs(gh, gw);
    }
    return m;
  }
};

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<T> m;
  m.config = config;
  Rng rng(seed);
  if (config.backbone == Backbone::kMobileNetV3Large)
    m.mnv3 = MobileNetV3Encoder<T>::make(rng);
  else
    m.tiny = TinyEncoder<T>::make(rng, config.encoder_channels);
  m.aspp = LRASPP<T>::make(rng, config.encoder_channels[3], config.aspp_channels);
  m.decoder = Decoder<T>::make(rng, config.encoder_channels, config.aspp_channels,
                               config.decoder_channels);
  m.dgf = DeepGuidedFilter<T>::make(rng, config.decoder_channels[4]);
  return m;
}

}  // namespace vmatt
