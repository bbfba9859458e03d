#pragma once

// Binary clip tensors: magic "SVT1", four little-endian uint32 dimensions
// (F, H, W, 3), then F*H*W*3 little-endian float32 values, row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svit/frames.hpp"

namespace svit {

std::string encode_tensor(const Frames& frames);
Frames decode_tensor(const std::string& bytes);

void write_tensor_file(const std::filesystem::path& path, const Frames& frames);
Frames read_tensor_file(const std::filesystem::path& path);

namespace le {

void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
std::uint32_t get_u32(const std::string& in, std::size_t& pos);
float get_f32(const std::string& in, std::size_t& pos);
double get_f64(const std::string& in, std::size_t& pos);

}  // namespace le

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace svit
