#pragma once

// Checkpoint directory layout:
//   manifest.json  -- config echo, seed, ordered parameter names and shapes
//   params.bin     -- the parameters as raw little-endian float32, in
//                     manifest order, row-major per matrix
// float32 values round-trip bit-exactly through save/load.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "catchd/core/params.hpp"

namespace catchd::core {

inline void save_checkpoint(const std::filesystem::path& dir, const ParamSet& params,
                            const nlohmann::json& config_echo, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["config"] = config_echo;
  manifest["seed"] = seed;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, v] : params.items()) {
    plist.push_back({{"name", name}, {"rows", v->val.rows()}, {"cols", v->val.cols()}});
  }
  manifest["parameters"] = plist;
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  }
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  for (const auto& [name, v] : params.items()) {
    for (Eigen::Index r = 0; r < v->val.rows(); ++r)
      for (Eigen::Index c = 0; c < v->val.cols(); ++c) {
        float f = static_cast<float>(v->val(r, c));
        bin.write(reinterpret_cast<const char*>(&f), sizeof(float));
      }
  }
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  in >> manifest;
  return manifest;
}

// Loads values into an already-constructed ParamSet; shapes and order must
// match the manifest exactly.
inline void load_checkpoint(const std::filesystem::path& dir, ParamSet& params) {
  auto manifest = read_checkpoint_manifest(dir);
  const auto& plist = manifest.at("parameters");
  if (plist.size() != params.items().size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open params.bin in " + dir.string());
  std::size_t i = 0;
  for (const auto& [name, v] : params.items()) {
    const auto& entry = plist.at(i++);
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<Eigen::Index>() != v->val.rows() ||
        entry.at("cols").get<Eigen::Index>() != v->val.cols())
      throw std::runtime_error("checkpoint shape mismatch for parameter " + name);
    for (Eigen::Index r = 0; r < v->val.rows(); ++r)
      for (Eigen::Index c = 0; c < v->val.cols(); ++c) {
        float f;
        bin.read(reinterpret_cast<char*>(&f), sizeof(float));
        if (!bin) throw std::runtime_error("params.bin truncated");
        v->val(r, c) = static_cast<double>(f);
      }
  }
}

}  // namespace catchd::core
