#pragma once

// Checkpoint layout (all integers little-endian uint32, values float64):
//   "SVCK"
//   config block: frames, patch_size, image_size, grid_h, grid_w, dim,
//                 object_tokens, depth, heads, mlp_hidden
//   repeated until end of file, one section per tensor in zip_params order:
//     name length, UTF-8 name, dim count, dims..., values

#include <filesystem>
#include <string>

#include "svit/model.hpp"

namespace svit {

struct Checkpoint {
  ModelConfig config;
  Parameters params;
};

std::string encode_checkpoint(const ModelConfig& cfg, const Parameters& params);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const Parameters& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace svit
