#include "svit/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include "svit/errors.hpp"

namespace svit {

namespace le {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw ParseError("unexpected end of data");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

float get_f32(const std::string& in, std::size_t& pos) { return std::bit_cast<float>(get_u32(in, pos)); }

double get_f64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ParseError("unexpected end of data");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return std::bit_cast<double>(v);
}

}  // namespace le

std::string encode_tensor(const Frames& f) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (f.count > kMax || f.height > kMax || f.width > kMax) throw ArgumentError("tensor dimension exceeds uint32");
  std::string out = "SVT1";
  out.reserve(4 + 16 + f.pixels.size() * 4);
  le::put_u32(out, static_cast<std::uint32_t>(f.count));
  le::put_u32(out, static_cast<std::uint32_t>(f.height));
  le::put_u32(out, static_cast<std::uint32_t>(f.width));
  le::put_u32(out, 3);
  for (double v : f.pixels) le::put_f32(out, static_cast<float>(v));
  return out;
}

Frames decode_tensor(const std::string& bytes) {
  if (bytes.size() < 20 || bytes.compare(0, 4, "SVT1") != 0) throw ParseError("tensor: bad magic");
  std::size_t pos = 4;
  const std::size_t f = le::get_u32(bytes, pos);
  const std::size_t h = le::get_u32(bytes, pos);
  const std::size_t w = le::get_u32(bytes, pos);
  const std::size_t c = le::get_u32(bytes, pos);
  if (c != 3) throw ParseError("tensor: channel dimension must be 3");
  Frames out(f, h, w);
  if (bytes.size() != pos + out.pixels.size() * 4) throw ParseError("tensor: payload size does not match dims");
  for (double& v : out.pixels) v = static_cast<double>(le::get_f32(bytes, pos));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_tensor_file(const std::filesystem::path& path, const Frames& frames) {
  write_file(path, encode_tensor(frames));
}

Frames read_tensor_file(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace svit
