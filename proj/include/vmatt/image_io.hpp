#pragma once

#include <map>
#include <string>

#include "vmatt/tensor.hpp"

namespace vmatt {

// PNG <-> (C,H,W) float tensors in [0,1]. Channel count follows the file
// (1 gray, 2 gray+alpha, 3 RGB, 4 RGBA); palette and sub-byte gray images are
// expanded on load. Writing accepts C in {1,3,4} and quantizes with
// round(v * 255) (or 65535 for bit_depth 16) after clamping to [0,1].
Tensor<float> load_png(const std::string& path);
void save_png(const std::string& path, const Tensor<float>& img, int bit_depth = 8);

// Raw planar 8-bit video: 24-byte header (magic "VMRW", u32 version=1, then
// u32 width, height, channels, frames, all little-endian) followed by
// frames * channels * height * width bytes, frame-major then plane-major,
// rows packed top to bottom. Values map through round(v * 255).
struct RawVideoHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
  int frames = 0;
};

RawVideoHeader read_raw_video_header(const std::string& path);
Tensor<float> load_raw_video(const std::string& path);  // (T,C,H,W)
void save_raw_video(const std::string& path, const Tensor<float>& clip);

// Clip directory: one PNG per frame and plane plus manifest.json listing the
// frame count and the files for each named plane role ("frame", "alpha",
// "fg", "bg", "seg"). Alpha and seg planes are written as 16-bit grayscale.
void save_clip_dir(const std::string& dir,
                   const std::map<std::string, Tensor<float>>& planes);
std::map<std::string, Tensor<float>> load_clip_dir(const std::string& dir);

}  // namespace vmatt
