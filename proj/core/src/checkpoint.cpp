#include "svit/checkpoint.hpp"

#include <map>

#include "svit/errors.hpp"
#include "svit/tensor_io.hpp"

namespace svit {

std::string encode_checkpoint(const ModelConfig& cfg, const Parameters& params) {
  check_parameter_shapes(cfg, params);
  std::string out = "SVCK";
  for (std::uint32_t v : {cfg.frames, cfg.patch_size, cfg.image_size, cfg.grid(), cfg.grid(), cfg.dim,
                          cfg.object_tokens, cfg.depth, cfg.heads, cfg.mlp_hidden})
    le::put_u32(out, v);
  zip_params(
      [&](const std::string& name, const Matrix& m) {
        le::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        le::put_u32(out, 2);
        le::put_u32(out, static_cast<std::uint32_t>(m.rows));
        le::put_u32(out, static_cast<std::uint32_t>(m.cols));
        for (double v : m.data) le::put_f64(out, v);
      },
      params);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "SVCK") != 0) throw ParseError("checkpoint: bad magic");
  std::size_t pos = 4;
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.frames = le::get_u32(bytes, pos);
  c.patch_size = le::get_u32(bytes, pos);
  c.image_size = le::get_u32(bytes, pos);
  const std::uint32_t grid_h = le::get_u32(bytes, pos);
  const std::uint32_t grid_w = le::get_u32(bytes, pos);
  c.dim = le::get_u32(bytes, pos);
  c.object_tokens = le::get_u32(bytes, pos);
  c.depth = le::get_u32(bytes, pos);
  c.heads = le::get_u32(bytes, pos);
  c.mlp_hidden = le::get_u32(bytes, pos);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (grid_h != c.grid() || grid_w != c.grid()) throw ParseError("checkpoint: grid does not match image/patch size");

  std::map<std::string, Matrix> sections;
  while (pos < bytes.size()) {
    const std::uint32_t len = le::get_u32(bytes, pos);
    if (pos + len > bytes.size()) throw ParseError("checkpoint: truncated section name");
    std::string name = bytes.substr(pos, len);
    pos += len;
    const std::uint32_t ndims = le::get_u32(bytes, pos);
    if (ndims != 2) throw ParseError("checkpoint: section " + name + " must have 2 dims");
    const std::size_t rows = le::get_u32(bytes, pos);
    const std::size_t cols = le::get_u32(bytes, pos);
    if (pos + rows * cols * 8 > bytes.size()) throw ParseError("checkpoint: truncated section " + name);
    Matrix m(rows, cols);
    for (double& v : m.data) v = le::get_f64(bytes, pos);
    if (!sections.emplace(std::move(name), std::move(m)).second) throw ParseError("checkpoint: duplicate section");
  }

  ck.params = zero_parameters(c);
  zip_params(
      [&](const std::string& name, Matrix& dst) {
        auto it = sections.find(name);
        if (it == sections.end()) throw ParseError("checkpoint: missing section " + name);
        if (!it->second.same_shape(dst)) throw ParseError("checkpoint: section " + name + " has the wrong shape");
        dst = std::move(it->second);
        sections.erase(it);
      },
      ck.params);
  if (!sections.empty()) throw ParseError("checkpoint: unexpected section " + sections.begin()->first);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const Parameters& params) {
  write_file(path, encode_checkpoint(cfg, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace svit
