#pragma once

#include <array>
#include <optional>

#include "vmatt/modules.hpp"

namespace vmatt {

// One inverted-residual bottleneck: optional 1x1 expand, depthwise (possibly
// dilated), optional squeeze-excite, 1x1 project, residual when extents and
// channels allow. A configured stride of 2 collapses to 1 once dilation > 1,
// which is how the final stage trades stride for dilation.
template <typename T>
struct InvertedResidual {
  std::optional<ConvBNAct<T>> expand;
  ConvBNAct<T> depthwise;
  std::optional<SqueezeExcite<T>> se;
  ConvBNAct<T> project;
  bool residual = false;

  struct Cfg {
    int in, kernel, expanded, out;
    bool use_se;
    Act act;
    int stride, dilation;
  };

  static InvertedResidual make(Rng& rng, const Cfg& c) {
    InvertedResidual m;
    const int stride = c.dilation > 1 ? 1 : c.stride;
    if (c.expanded != c.in)
      m.expand = ConvBNAct<T>::make(rng, c.in, c.expanded, 1, {}, c.act);
    m.depthwise = ConvBNAct<T>::make(
        rng, c.expanded, c.expanded, c.kernel,
        ConvSpec{.stride = stride,
                 .padding = (c.kernel - 1) / 2 * c.dilation,
                 .dilation = c.dilation,
                 .groups = c.expanded},
        c.act);
    if (c.use_se) m.se = SqueezeExcite<T>::make(rng, c.expanded);
    m.project = ConvBNAct<T>::make(rng, c.expanded, c.out, 1, {}, Act::kNone);
    m.residual = c.stride == 1 && c.in == c.out;
    return m;
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    Tensor<T> y = x;
    if (expand) y = (*expand)(y, training);
    y = depthwise(y, training);
    if (se) y = (*se)(y);
    y = project(y, training);
    return residual ? add(y, x) : y;
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    if (expand) expand->visit(prefix + ".expand", f);
    depthwise.visit(prefix + ".depthwise", f);
    if (se) se->visit(prefix + ".se", f);
    project.visit(prefix + ".project", f);
  }

  std::int64_t param_count() const {
    return (expand ? expand->param_count() : 0) + depthwise.param_count() +
           (se ? se->param_count() : 0) + project.param_count();
  }

  std::int64_t macs(int& h, int& w) const {
    std::int64_t m = 0;
    if (expand) m += expand->macs(h, w);
    m += depthwise.macs(h, w);
    m += project.macs(h, w);
    return m;
  }
};

template <typename T>
struct EncoderFeatures {
  Tensor<T> f1, f2, f3, f4;  // scales 1/2, 1/4, 1/8, 1/16
};

// MobileNetV3-Large feature extractor with the last stage dilated (blocks 13+
// run at stride 1, dilation 2) so the deepest features sit at 1/16 scale.
// Taps: after block 1 (1/2), block 3 (1/4), block 6 (1/8) and after the final
// 1x1 expansion conv (1/16).
template <typename T>
struct MobileNetV3Encoder {
  ConvBNAct<T> stem;
  std::vector<InvertedResidual<T>> blocks;
  ConvBNAct<T> last;

  static MobileNetV3Encoder make(Rng& rng) {
    using Cfg = typename InvertedResidual<T>::Cfg;
    const Act RE = Act::kRelu, HS = Act::kHardswish;
    const std::vector<Cfg> cfgs = {
        {16, 3, 16, 16, false, RE, 1, 1},    {16, 3, 64, 24, false, RE, 2, 1},
        {24, 3, 72, 24, false, RE, 1, 1},    {24, 5, 72, 40, true, RE, 2, 1},
        {40, 5, 120, 40, true, RE, 1, 1},    {40, 5, 120, 40, true, RE, 1, 1},
        {40, 3, 240, 80, false, HS, 2, 1},   {80, 3, 200, 80, false, HS, 1, 1},
        {80, 3, 184, 80, false, HS, 1, 1},   {80, 3, 184, 80, false, HS, 1, 1},
        {80, 3, 480, 112, true, HS, 1, 1},   {112, 3, 672, 112, true, HS, 1, 1},
        {112, 5, 672, 160, true, HS, 2, 2},  {160, 5, 960, 160, true, HS, 1, 2},
        {160, 5, 960, 160, true, HS, 1, 2},
    };
    MobileNetV3Encoder m;
    m.stem = ConvBNAct<T>::make(rng, 3, 16, 3, {.stride = 2, .padding = 1}, HS);
    for (const auto& c : cfgs) m.blocks.push_back(InvertedResidual<T>::make(rng, c));
    m.last = ConvBNAct<T>::make(rng, 160, 960, 1, {}, HS);
    return m;
  }

  EncoderFeatures<T> operator()(const Tensor<T>& x, bool training) {
    EncoderFeatures<T> out;
    Tensor<T> y = stem(x, training);
    y = blocks[0](y, training);
    out.f1 = y;
    y = blocks[1](y, training);
    y = blocks[2](y, training);
    out.f2 = y;
    y = blocks[3](y, training);
    y = blocks[4](y, training);
    y = blocks[5](y, training);
    out.f3 = y;
    for (size_t i = 6; i < blocks.size(); ++i) y = blocks[i](y, training);
    out.f4 = last(y, training);
    return out;
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    stem.visit(prefix + ".stem", f);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    last.visit(prefix + ".last", f);
  }

  std::int64_t param_count() const {
    std::int64_t n = stem.param_count() + last.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }

  std::int64_t macs(int& h, int& w) const {
    std::int64_t m = stem.macs(h, w);
    for (const auto& b : blocks) m += b.macs(h, w);
    m += last.macs(h, w);
    return m;
  }
};

// Test-scale stand-in: four stride-2 conv+BN+hardswish layers tapped after
// each, giving the same 1/2 .. 1/16 feature ladder at configurable widths.
template <typename T>
struct TinyEncoder {
  std::array<ConvBNAct<T>, 4> layers;

  static TinyEncoder make(Rng& rng, const std::array<int, 4>& channels) {
    TinyEncoder m;
    int cin = 3;
    for (int i = 0; i < 4; ++i) {
      m.layers[static_cast<size_t>(i)] = ConvBNAct<T>::make(
          rng, cin, channels[static_cast<size_t>(i)], 3, {.stride = 2, .padding = 1},
          Act::kHardswish);
      cin = channels[static_cast<size_t>(i)];
    }
    return m;
  }

  EncoderFeatures<T> operator()(const Tensor<T>& x, bool training) {
    EncoderFeatures<T> out;
    out.f1 = layers[0](x, training);
    out.f2 = layers[1](out.f1, training);
    out.f3 = layers[2](out.f2, training);
    out.f4 = layers[3](out.f3, training);
    return out;
  }

  void visit(const std::string& prefix, const ParamFn<T>& f) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].visit(prefix + ".layer" + std::to_string(i), f);
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }

  std::int64_t macs(int& h, int& w) const {
    std::int64_t m = 0;
    for (const auto& l : layers) m += l.macs(h, w);
    return m;
  }
};

}  // namespace vmatt
