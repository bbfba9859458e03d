#include "svit/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <functional>
#include <set>

#include "svit/errors.hpp"
#include "svit/tensor_io.hpp"

namespace svit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint32_t to_u32(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || out > 0xffffffffULL)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint32_t>(out);
}

double to_double(const std::string& key, const std::string& v) {
  // from_chars for double is missing from older libstdc++; strtod with a full-consumption check.
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define U32(NAME, EXPR)                                                                        \
  Field {                                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.EXPR = to_u32(NAME, v); },                \
        [](const RunConfig& c) { return std::to_string(c.EXPR); }                              \
  }
#define F64(NAME, EXPR)                                                                        \
  Field {                                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.EXPR = to_double(NAME, v); },             \
        [](const RunConfig& c) { return fmt(c.EXPR); }                                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      // model
      U32("frames", model.frames),
      U32("patch_size", model.patch_size),
      Field{"image_size",
            [](RunConfig& c, const std::string& v) { c.model.image_size = c.gen.image_size = to_u32("image_size", v); },
            [](const RunConfig& c) { return std::to_string(c.model.image_size); }},
      U32("dim", model.dim),
      U32("object_tokens", model.object_tokens),
      U32("depth", model.depth),
      U32("heads", model.heads),
      U32("mlp_hidden", model.mlp_hidden),
      // data generation
      U32("raw_frames", gen.raw_frames),
      F64("fps", gen.fps),
      U32("grid_frames", gen.grid_frames),
      U32("speed_min", gen.speed_min),
      U32("speed_max", gen.speed_max),
      F64("contact_threshold", gen.contact_threshold),
      F64("hand_prob", gen.hand_prob),
      F64("object_prob", gen.object_prob),
      F64("no_change_prob", gen.no_change_prob),
      U32("num_images", gen.num_images),
      U32("num_clips", gen.num_clips),
      // optimizer
      F64("base_lr", optimizer.base_lr),
      F64("beta1", optimizer.beta1),
      F64("beta2", optimizer.beta2),
      F64("epsilon", optimizer.epsilon),
      U32("total_steps", optimizer.total_steps),
      U32("images_per_batch", optimizer.images_per_batch),
      U32("videos_per_batch", optimizer.videos_per_batch),
      U32("sample_jitter", optimizer.sample_jitter),
      U32("scale_min", optimizer.scales.min),
      U32("scale_max", optimizer.scales.max),
      // loss weights
      F64("lambda_con", loss.lambda_con),
      F64("lambda_haog", loss.lambda_haog),
      F64("lambda_vid", loss.lambda_vid),
      // runs
      Field{"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
            [](const RunConfig& c) { return c.data_dir; }},
      U32("keep_checkpoints", keep_checkpoints),
      U32("views_temporal", views_temporal),
      U32("views_spatial", views_spatial),
      U32("gradcheck_samples", gradcheck_samples),
      F64("gradcheck_epsilon", gradcheck_epsilon),
      U32("gradcheck_images", gradcheck_images),
      U32("gradcheck_clips", gradcheck_clips),
  };
  return f;
}

#undef U32
#undef F64

}  // namespace

void RunConfig::validate() const {
  model.validate();
  gen.validate(model.patch_size);
  optimizer.validate();
  loss.validate();
  if (gen.image_size != model.image_size) throw ConfigError("generator and model image sizes differ");
  if (optimizer.scales.min < model.image_size)
    throw ConfigError("scale_min must be at least image_size so crops fit");
  if (gen.raw_frames < model.frames) throw ConfigError("raw_frames must be at least frames");
  if (views_temporal == 0 || views_spatial == 0 || views_spatial > 3)
    throw ConfigError("views_temporal must be >= 1 and views_spatial in 1..3");
  if (gradcheck_samples == 0 || !(gradcheck_epsilon > 0)) throw ConfigError("gradcheck settings must be positive");
  if (gradcheck_images == 0 || gradcheck_clips == 0) throw ConfigError("gradcheck batch must be non-empty");
}

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  std::set<std::string> seen;
  bool grid_set = false;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const Field* f = nullptr;
    for (const auto& cand : fields())
      if (key == cand.key) f = &cand;
    if (f == nullptr) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      f->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (key == "grid_frames") grid_set = true;
  }
  // Generated state changes sit on the evaluation sampling grid unless told otherwise.
  if (!grid_set) c.gen.grid_frames = c.model.frames;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  RunConfig c = parse_config(read_file(path));
  if (!c.data_dir.empty() && std::filesystem::path(c.data_dir).is_relative())
    c.data_dir = (path.parent_path() / c.data_dir).lexically_normal().string();
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

std::string dump_config(const RunConfig& c) {
  std::string out;
  for (const auto& f : fields()) {
    const std::string v = f.get(c);
    if (std::string_view(f.key) == "data_dir" && v.empty()) continue;
    out += f.key;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace svit
