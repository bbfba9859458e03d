#include <gtest/gtest.h>

#include "support.hpp"
#include "svit/config.hpp"
#include "svit/dataset.hpp"
#include "svit/errors.hpp"
#include "svit/tensor_io.hpp"

using namespace svit;

TEST(Config, DefaultsMatchToyAcceptanceSetup) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.model.image_size, 32u);
  EXPECT_EQ(c.model.patch_size, 8u);
  EXPECT_EQ(c.model.dim, 32u);
  EXPECT_EQ(c.model.depth, 2u);
  EXPECT_EQ(c.model.frames, 8u);
  EXPECT_EQ(c.model.object_tokens, 4u);
  EXPECT_EQ(c.gen.raw_frames, 64u);
  EXPECT_EQ(c.gen.fps, 30.0);
  EXPECT_EQ(c.optimizer.base_lr, 1e-3);
  EXPECT_EQ(c.optimizer.beta1, 0.9);
  EXPECT_EQ(c.loss.lambda_con, 10.0);
  EXPECT_EQ(c.loss.lambda_haog, 5.0);
  EXPECT_EQ(c.loss.lambda_vid, 1.0);
}

TEST(Config, ParsesAndRoundTrips) {
  const RunConfig c = parse_config(
      "# comment\n"
      "frames = 4   # trailing\n"
      "\n"
      "image_size = 48\n"
      "scale_min = 48\n"
      "scale_max = 56\n"
      "base_lr = 2.5e-4\n"
      "lambda_con = 0\n"
      "data_dir = data\n");
  EXPECT_EQ(c.model.frames, 4u);
  EXPECT_EQ(c.gen.grid_frames, 4u);
  EXPECT_EQ(c.gen.image_size, 48u);
  EXPECT_EQ(c.optimizer.base_lr, 2.5e-4);
  EXPECT_EQ(c.loss.lambda_con, 0.0);
  const std::string dumped = dump_config(c);
  EXPECT_EQ(dump_config(parse_config(dumped)), dumped);
  EXPECT_EQ(config_keys().size(), static_cast<std::size_t>(std::count(dumped.begin(), dumped.end(), '\n')));
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("lerning_rate = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("dim = 32\ndim = 64\n"), ConfigError);
  EXPECT_THROW(parse_config("dim = -3\n"), ConfigError);
  EXPECT_THROW(parse_config("base_lr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("just words\n"), ConfigError);
  EXPECT_THROW(parse_config("heads = 5\n"), ConfigError);
  EXPECT_THROW(parse_config("lambda_vid = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("beta1 = 1\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), IoError);
  try {
    parse_config("dim = 32\n\nbogus = 1\n");
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()), "line 3: unknown key 'bogus'");
  }
}

TEST(Config, RelativeDataDir) {
  const auto dir = svit::testing::scratch_dir("cfg_rel");
  write_file(dir / "run.cfg", "data_dir = d\n");
  EXPECT_EQ(load_config(dir / "run.cfg").data_dir, (dir / "d").string());
}

TEST(TensorIo, RoundTripAndLayout) {
  Frames f(2, 3, 4);
  for (std::size_t k = 0; k < f.pixels.size(); ++k) f.pixels[k] = static_cast<float>(k) / 7.0f;
  const std::string bytes = encode_tensor(f);
  EXPECT_EQ(bytes.substr(0, 4), "SVT1");
  EXPECT_EQ(bytes.size(), 4u + 16u + f.pixels.size() * 4u);
  std::size_t pos = 4;
  EXPECT_EQ(le::get_u32(bytes, pos), 2u);
  EXPECT_EQ(le::get_u32(bytes, pos), 3u);
  EXPECT_EQ(le::get_u32(bytes, pos), 4u);
  EXPECT_EQ(le::get_u32(bytes, pos), 3u);
  EXPECT_EQ(decode_tensor(bytes), f);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);  // little-endian

  EXPECT_THROW(decode_tensor("SVT0" + bytes.substr(4)), ParseError);
  EXPECT_THROW(decode_tensor(bytes.substr(0, bytes.size() - 1)), ParseError);
  const auto path = svit::testing::scratch_dir("tensor") / "x.svt";
  write_tensor_file(path, f);
  EXPECT_EQ(read_tensor_file(path), f);
  EXPECT_THROW(read_tensor_file(path.parent_path() / "missing.svt"), IoError);
}

TEST(Dataset, WriteAndReload) {
  GenConfig gen;
  gen.num_images = 5;
  gen.num_clips = 3;
  const auto dir = svit::testing::scratch_dir("dataset");
  write_dataset(dir, gen, 17);
  const TrainingData data = load_training_data(dir);
  ASSERT_EQ(data.images.size(), 5u);
  ASSERT_EQ(data.clips.size(), 3u);
  for (std::size_t i = 0; i < 5; ++i) {
    const SceneImage s = gen_scene(gen, scene_seed(17, i));
    EXPECT_EQ(data.images[i].pixels, s.pixels);
    EXPECT_EQ(data.images[i].haog, s.haog);
  }
  const auto entries = read_clip_manifest(dir / "clips" / "clips.jsonl");
  for (std::size_t i = 0; i < 3; ++i) {
    const VideoClipSample c = gen_clip(gen, clip_seed(17, i));
    EXPECT_EQ(data.clips[i].frames, c.frames);
    EXPECT_EQ(data.clips[i].pnr_index, c.pnr_index);
    EXPECT_EQ(entries[i].osc_label, c.osc_label);
    EXPECT_EQ(parse_clip_manifest_line(clip_manifest_line(entries[i])).clip, entries[i].clip);
  }
  EXPECT_THROW(parse_clip_manifest_line(R"({"clip": "a", "frames": 4, "fps": 30, "pnr_index": 4, "osc_label": 1})"),
               ParseError);
  EXPECT_THROW(parse_clip_manifest_line(R"({"clip": "a", "frames": 4, "fps": 30})"), ParseError);
}
