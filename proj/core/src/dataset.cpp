#include "svit/dataset.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "svit/errors.hpp"
#include "svit/rng.hpp"
#include "svit/tensor_io.hpp"

namespace svit {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t scene_seed(std::uint64_t base, std::size_t index) { return derive_seed(derive_seed(base, 1), index); }
std::uint64_t clip_seed(std::uint64_t base, std::size_t index) { return derive_seed(derive_seed(base, 2), index); }

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.svt", prefix, i);
  return buf;
}

}  // namespace

std::string clip_manifest_line(const ClipManifestEntry& e) {
  json j;
  j["clip"] = e.clip;
  j["frames"] = e.frames;
  j["fps"] = e.fps;
  j["pnr_index"] = e.pnr_index;
  j["osc_label"] = e.osc_label ? 1 : 0;
  return j.dump();
}

ClipManifestEntry parse_clip_manifest_line(const std::string& line) {
  ClipManifestEntry e;
  try {
    const json j = json::parse(line);
    e.clip = j.at("clip").get<std::string>();
    e.frames = j.at("frames").get<std::size_t>();
    e.fps = j.at("fps").get<double>();
    e.pnr_index = j.at("pnr_index").get<std::size_t>();
    const int osc = j.at("osc_label").get<int>();
    if (osc != 0 && osc != 1) throw ParseError("osc_label must be 0 or 1");
    e.osc_label = osc == 1;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("clip manifest: ") + ex.what());
  }
  if (!(e.fps > 0)) throw ParseError("clip manifest: fps must be positive");
  if (e.pnr_index >= e.frames) throw ParseError("clip manifest: pnr_index outside the clip");
  return e;
}

std::vector<ClipManifestEntry> read_clip_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  std::vector<ClipManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_clip_manifest_line(line));
    } catch (const ParseError& e) {
      throw ParseError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const fs::path& dir, const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "clips");

  std::string annotations;
  for (std::size_t i = 0; i < cfg.num_images; ++i) {
    const SceneImage scene = gen_scene(cfg, scene_seed(seed, i));
    const std::string name = numbered("scene", i);
    write_tensor_file(dir / "images" / name, scene.pixels);
    annotations += serialize_haog_record(name, scene.haog);
    annotations += '\n';
  }
  write_file(dir / "images" / "annotations.jsonl", annotations);

  std::string manifest;
  for (std::size_t i = 0; i < cfg.num_clips; ++i) {
    const VideoClipSample clip = gen_clip(cfg, clip_seed(seed, i));
    ClipManifestEntry e;
    e.clip = numbered("clip", i);
    e.frames = clip.frames.count;
    e.fps = clip.fps;
    e.pnr_index = clip.pnr_index;
    e.osc_label = clip.osc_label;
    write_tensor_file(dir / "clips" / e.clip, clip.frames);
    manifest += clip_manifest_line(e);
    manifest += '\n';
  }
  write_file(dir / "clips" / "clips.jsonl", manifest);
}

VideoClipSample load_clip(const fs::path& clips_dir, const ClipManifestEntry& e) {
  const fs::path path = clips_dir / e.clip;
  if (!fs::exists(path)) throw IoError("missing clip file " + path.string());
  VideoClipSample clip;
  clip.frames = read_tensor_file(path);
  if (clip.frames.count != e.frames)
    throw ParseError(path.string() + ": frame count " + std::to_string(clip.frames.count) +
                     " disagrees with manifest " + std::to_string(e.frames));
  clip.fps = e.fps;
  clip.pnr_index = e.pnr_index;
  clip.osc_label = e.osc_label;
  return clip;
}

TrainingData load_training_data(const fs::path& dir) {
  TrainingData data;
  const fs::path images = dir / "images";
  const std::string annotations = read_file(images / "annotations.jsonl");
  std::size_t start = 0;
  std::size_t lineno = 0;
  while (start < annotations.size()) {
    std::size_t end = annotations.find('\n', start);
    if (end == std::string::npos) end = annotations.size();
    const std::string line = annotations.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (line.empty()) continue;
    HaogRecord rec;
    try {
      rec = parse_haog_record(line);
    } catch (const ParseError& e) {
      throw ParseError((images / "annotations.jsonl").string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const fs::path path = images / rec.image;
    if (!fs::exists(path)) throw IoError("missing image file " + path.string());
    SceneImage scene;
    scene.pixels = read_tensor_file(path);
    if (scene.pixels.count != 1) throw ParseError(path.string() + ": expected a single frame");
    scene.haog = rec.haog;
    data.images.push_back(std::move(scene));
  }
  const fs::path clips = dir / "clips";
  for (const auto& e : read_clip_manifest(clips / "clips.jsonl")) data.clips.push_back(load_clip(clips, e));
  return data;
}

}  // namespace svit
