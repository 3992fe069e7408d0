#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vmatt/image_io.hpp"
#include "vmatt/ops.hpp"

namespace vmatt {

namespace fs = std::filesystem;
using nlohmann::json;

void save_clip_dir(const std::string& dir, const std::map<std::string, Tensor<float>>& planes) {
  check(!planes.empty(), "save_clip_dir: no planes");
  int frames = -1;
  for (const auto& [role, t] : planes) {
    check_shape(t.rank() == 4, "save_clip_dir: plane '" + role + "' must be (T,C,H,W)");
    check_shape(frames < 0 || t.dim(0) == frames,
                "save_clip_dir: plane '" + role + "' frame count differs");
    frames = t.dim(0);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  json manifest;
  manifest["format"] = "clip-dir@1";
  manifest["frames"] = frames;
  for (const auto& [role, t] : planes) {
    // Single-channel mattes keep more precision as 16-bit.
    const int depth = t.dim(1) == 1 ? 16 : 8;
    json files = json::array();
    for (int f = 0; f < frames; ++f) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04d.png", role.c_str(), f);
      save_png((fs::path(dir) / name).string(), narrow(t, 0, f, 1).squeeze0(), depth);
      files.push_back(name);
    }
    manifest["planes"][role] = files;
  }
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

std::map<std::string, Tensor<float>> load_clip_dir(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("no manifest.json in " + dir);
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw IoError(dir + "/manifest.json: " + e.what());
  }
  if (manifest.value("format", "") != "clip-dir@1")
    throw IoError(dir + ": unknown clip format '" + manifest.value("format", "") + "'");
  const int frames = manifest.at("frames").get<int>();

  std::map<std::string, Tensor<float>> planes;
  for (const auto& [role, files] : manifest.at("planes").items()) {
    check(static_cast<int>(files.size()) == frames,
          "load_clip_dir: plane '" + role + "' file count differs from frame count");
    std::vector<Tensor<float>> frames_v;
    for (const auto& f : files) {
      Tensor<float> img = load_png((fs::path(dir) / f.get<std::string>()).string());
      frames_v.push_back(img.unsqueeze0());
    }
    planes.emplace(role, concat(frames_v, 0));
  }
  return planes;
}

}  // namespace vmatt
