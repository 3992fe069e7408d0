#include "vmatt/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace vmatt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  (void)png;
  throw IoError(std::string("png: ") + msg);
}

void png_warn_fn(png_structp, png_const_charp) {}

std::uint8_t quantize8(float v) {
  v = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

std::uint16_t quantize16(float v) {
  v = std::min(1.0f, std::max(0.0f, v));
  return static_cast<std::uint16_t>(std::lround(v * 65535.0f));
}

void put_u32le(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("raw video: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Tensor<float> load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warn_fn);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: out of memory");
  }
  try {
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int W = static_cast<int>(png_get_image_width(png, info));
    const int H = static_cast<int>(png_get_image_height(png, info));
    const int C = static_cast<int>(png_get_channels(png, info));
    const int depth = static_cast<int>(png_get_bit_depth(png, info));
    if (depth != 8 && depth != 16) throw IoError(path + ": unsupported bit depth");

    const size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raster(static_cast<size_t>(H) * row_bytes);
    std::vector<png_bytep> rows(static_cast<size_t>(H));
    for (int i = 0; i < H; ++i) rows[static_cast<size_t>(i)] = raster.data() + i * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor<float> img(Shape{C, H, W});
    float* dst = img.data();
    for (int i = 0; i < H; ++i) {
      const std::uint8_t* row = raster.data() + i * row_bytes;
      for (int j = 0; j < W; ++j) {
        for (int c = 0; c < C; ++c) {
          float v;
          if (depth == 8) {
            v = row[j * C + c] / 255.0f;
          } else {
            const std::uint8_t* p = row + 2 * (j * C + c);  // PNG stores big-endian
            v = ((p[0] << 8) | p[1]) / 65535.0f;
          }
          dst[(static_cast<std::int64_t>(c) * H + i) * W + j] = v;
        }
      }
    }
    return img;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

void save_png(const std::string& path, const Tensor<float>& img, int bit_depth) {
  check_shape(img.rank() == 3, "save_png expects (C,H,W), got " + img.shape().str());
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  check(C == 1 || C == 3 || C == 4, "save_png: channel count must be 1, 3 or 4");
  check(bit_depth == 8 || bit_depth == 16, "save_png: bit depth must be 8 or 16");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warn_fn);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: out of memory");
  }
  try {
    png_init_io(png, fp.get());
    const int color =
        C == 1 ? PNG_COLOR_TYPE_GRAY : (C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_RGBA);
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H),
                 bit_depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const size_t row_bytes = static_cast<size_t>(W) * C * (bit_depth / 8);
    std::vector<std::uint8_t> row(row_bytes);
    const float* src = img.data();
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        for (int c = 0; c < C; ++c) {
          const float v = src[(static_cast<std::int64_t>(c) * H + i) * W + j];
          if (bit_depth == 8) {
            row[static_cast<size_t>(j) * C + c] = quantize8(v);
          } else {
            const std::uint16_t q = quantize16(v);
            row[2 * (static_cast<size_t>(j) * C + c)] = static_cast<std::uint8_t>(q >> 8);
            row[2 * (static_cast<size_t>(j) * C + c) + 1] = static_cast<std::uint8_t>(q & 0xff);
          }
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
}

RawVideoHeader read_raw_video_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VMRW", 4) != 0) throw IoError(path + ": not a raw video");
  const std::uint32_t version = get_u32le(is);
  if (version != 1) throw IoError(path + ": unsupported raw video version");
  RawVideoHeader h;
  h.width = static_cast<int>(get_u32le(is));
  h.height = static_cast<int>(get_u32le(is));
  h.channels = static_cast<int>(get_u32le(is));
  h.frames = static_cast<int>(get_u32le(is));
  if (h.width < 1 || h.height < 1 || h.channels < 1 || h.frames < 1)
    throw IoError(path + ": bad raw video header");
  return h;
}

Tensor<float> load_raw_video(const std::string& path) {
  const RawVideoHeader h = read_raw_video_header(path);
  std::ifstream is(path, std::ios::binary);
  is.seekg(24);
  const std::int64_t n =
      static_cast<std::int64_t>(h.frames) * h.channels * h.height * h.width;
  std::vector<std::uint8_t> raw(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(raw.data()), n);
  if (!is) throw IoError(path + ": truncated raw video payload");
  Tensor<float> clip(Shape{h.frames, h.channels, h.height, h.width});
  float* dst = clip.data();
  for (std::int64_t i = 0; i < n; ++i) dst[i] = raw[static_cast<size_t>(i)] / 255.0f;
  return clip;
}

void save_raw_video(const std::string& path, const Tensor<float>& clip) {
  check_shape(clip.rank() == 4, "save_raw_video expects (T,C,H,W), got " + clip.shape().str());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os.write("VMRW", 4);
  put_u32le(os, 1);
  put_u32le(os, static_cast<std::uint32_t>(clip.dim(3)));
  put_u32le(os, static_cast<std::uint32_t>(clip.dim(2)));
  put_u32le(os, static_cast<std::uint32_t>(clip.dim(1)));
  put_u32le(os, static_cast<std::uint32_t>(clip.dim(0)));
  const float* src = clip.data();
  const std::int64_t n = clip.numel();
  std::vector<std::uint8_t> raw(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) raw[static_cast<size_t>(i)] = quantize8(src[i]);
  os.write(reinterpret_cast<const char*>(raw.data()), n);
  if (!os) throw IoError(path + ": write failed");
}

}  // namespace vmatt
