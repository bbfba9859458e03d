#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <regex>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "svit/checkpoint.hpp"
#include "svit/config.hpp"
#include "svit/dataset.hpp"
#include "svit/errors.hpp"
#include "svit/eval.hpp"
#include "svit/rng.hpp"
#include "svit/tensor_io.hpp"
#include "svit/train.hpp"

namespace svit::cli {

namespace fs = std::filesystem;

namespace {

// Seed streams for the independent random consumers of one run.
constexpr std::uint64_t kInitStream = 101;
constexpr std::uint64_t kTrainStream = 102;
constexpr std::uint64_t kGradcheckStream = 103;

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string checkpoint;
  std::string views;
  std::string data;
  std::string annotations;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RunConfig config_or_default(const Options& o) { return o.config.empty() ? RunConfig{} : load_config(o.config); }

fs::path data_root(const Options& o, const RunConfig& cfg) {
  if (!o.data.empty()) return o.data;
  if (cfg.data_dir.empty()) throw ArgumentError("no dataset: set data_dir in the config or pass --data");
  return cfg.data_dir;
}

ViewCounts parse_views(const std::string& s, const RunConfig& cfg) {
  if (s.empty()) return {cfg.views_temporal, cfg.views_spatial};
  static const std::regex re(R"(([0-9]+)x([0-9]+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ArgumentError("--views expects <n_temporal>x<n_spatial>, got '" + s + "'");
  const ViewCounts v{std::stoul(m[1]), std::stoul(m[2])};
  if (v.temporal == 0 || v.spatial == 0 || v.spatial > 3)
    throw ArgumentError("--views needs n_temporal >= 1 and n_spatial in 1..3");
  return v;
}

std::string metrics_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["l_total"] = r.breakdown.l_total;
  j["l_con"] = r.breakdown.l_con;
  j["l_haog"] = r.breakdown.l_haog;
  j["l_vid"] = r.breakdown.l_vid;
  j["box_giou"] = r.breakdown.haog.box_giou;
  j["box_l1"] = r.breakdown.haog.box_l1;
  j["existence"] = r.breakdown.haog.existence;
  j["contact"] = r.breakdown.haog.contact;
  return j.dump();
}

std::size_t steps_per_epoch(const TrainingData& data, const OptimizerConfig& opt) {
  auto ceil_div = [](std::size_t n, std::size_t b) { return b == 0 ? 0 : (n + b - 1) / b; };
  const std::size_t ni = data.images.size(), nc = data.clips.size();
  return std::max<std::size_t>(1, std::max(ceil_div(ni, std::min<std::size_t>(opt.images_per_batch, ni)),
                                           ceil_div(nc, std::min<std::size_t>(opt.videos_per_batch, nc))));
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ArgumentError("gen-data requires --out");
  const RunConfig cfg = config_or_default(o);
  write_dataset(o.out, cfg.gen, o.seed);
  out << "wrote " << cfg.gen.num_images << " images and " << cfg.gen.num_clips << " clips to " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::size_t threads) {
  if (o.config.empty()) throw ArgumentError("train requires --config");
  if (o.out.empty()) throw ArgumentError("train requires --out");
  const RunConfig cfg = load_config(o.config);
  const fs::path root = data_root(o, cfg);
  const TrainingData data = load_training_data(root);
  if (data.images.empty() || data.clips.empty()) throw IoError("dataset " + root.string() + " has no images or no clips");

  Parameters init;
  if (!o.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(o.checkpoint);
    check_parameter_shapes(cfg.model, ck.params);
    init = std::move(ck.params);
  } else {
    init = init_parameters(cfg.model, derive_seed(o.seed, kInitStream));
  }
  TrainState state = make_train_state(std::move(init), derive_seed(o.seed, kTrainStream));

  const fs::path dir = o.out;
  fs::create_directories(dir / "checkpoints");
  write_file(dir / "config.txt", dump_config(cfg));
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());

  const std::size_t per_epoch = steps_per_epoch(data, cfg.optimizer);
  const std::size_t total = cfg.optimizer.total_steps;
  const std::size_t epochs = (total + per_epoch - 1) / per_epoch;
  out << "training " << total << " steps (" << epochs << " epochs of " << per_epoch << ")\n";

  train(
      state, data, cfg.model, cfg.optimizer, cfg.loss,
      [&](const StepRecord& r, const TrainState& s) {
        metrics << metrics_line(r) << '\n';
        if (s.step % per_epoch != 0 && s.step != total) return;
        const std::size_t epoch = (s.step + per_epoch - 1) / per_epoch;
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu.svck", epoch);
        save_checkpoint(dir / "checkpoints" / name, cfg.model, s.params);
        if (cfg.keep_checkpoints > 0 && epoch > cfg.keep_checkpoints) {
          std::snprintf(name, sizeof name, "epoch_%04zu.svck", epoch - cfg.keep_checkpoints);
          fs::remove(dir / "checkpoints" / name);
        }
        out << "epoch " << epoch << "/" << epochs << " step " << s.step
            << " l_total " << fmt("%.6f", r.breakdown.l_total) << "\n";
      },
      threads);
  metrics.close();
  save_checkpoint(dir / "model.svck", cfg.model, state.params);
  out << "saved " << (dir / "model.svck").string() << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::size_t threads) {
  if (o.checkpoint.empty()) throw ArgumentError("eval requires --checkpoint");
  if (o.config.empty()) throw ArgumentError("eval requires --config");
  if (o.out.empty()) throw ArgumentError("eval requires --out");
  const RunConfig cfg = load_config(o.config);
  const ViewCounts views = parse_views(o.views, cfg);
  const fs::path root = data_root(o, cfg);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const EvalReport report =
      evaluate(ck.params, root / "clips" / "clips.jsonl", views, ck.config, cfg.optimizer.scales, threads);
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "report.json", report.to_json());
  out << "clips " << report.sample_count << " localized " << report.localized_count << " mean_abs_error_seconds "
      << fmt("%.6f", report.mean_abs_error_seconds) << " exact_frame_accuracy "
      << fmt("%.4f", report.exact_frame_accuracy) << " osc_accuracy " << fmt("%.4f", report.osc_accuracy) << "\n";
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out, std::size_t threads) {
  if (o.config.empty()) throw ArgumentError("gradcheck requires --config");
  RunConfig cfg = load_config(o.config);
  const std::uint64_t seed = derive_seed(o.seed, kGradcheckStream);
  TrainingData data;
  for (std::size_t i = 0; i < cfg.gradcheck_images; ++i) data.images.push_back(gen_scene(cfg.gen, scene_seed(seed, i)));
  for (std::size_t i = 0; i < cfg.gradcheck_clips; ++i) data.clips.push_back(gen_clip(cfg.gen, clip_seed(seed, i)));
  cfg.optimizer.images_per_batch = cfg.gradcheck_images;
  cfg.optimizer.videos_per_batch = cfg.gradcheck_clips;
  const Batch batch = make_batch(data, cfg.model, cfg.optimizer, 0, seed);
  const Parameters params = init_parameters(cfg.model, derive_seed(o.seed, kInitStream));
  const GradcheckReport rep =
      gradcheck(params, batch_loss(cfg.model, batch, cfg.loss, threads), cfg.gradcheck_epsilon, cfg.gradcheck_samples, seed);
  out << "max relative error " << fmt("%.3e", rep.max_relative_error) << " over " << rep.checked << " coordinates ("
      << rep.resampled << " redrawn near kinks); worst " << rep.worst_parameter << "[" << rep.worst_index
      << "] analytic " << fmt("%.6e", rep.worst_analytic) << " numeric " << fmt("%.6e", rep.worst_numeric) << "\n";
  if (!(rep.max_relative_error <= 1e-4)) {
    out << "gradcheck FAILED (threshold 1e-4)\n";
    return 1;
  }
  return 0;
}

int cmd_inspect_haog(const Options& o, std::ostream& out) {
  const HaogCorpusStats st = inspect_haog_corpus(read_file(o.annotations));
  static const char* const kSlots[kHaogNodes] = {"left_hand", "right_hand", "left_object", "right_object"};
  out << "records " << st.records << "\n";
  for (std::size_t j = 0; j < kHaogNodes; ++j) out << "exists " << kSlots[j] << " " << st.exists[j] << "\n";
  for (std::size_t k = 0; k < kHaogEdges; ++k)
    out << "contact " << kSlots[k] << " " << st.contact[k] << "/" << st.contact_defined[k] << "\n";
  for (const auto& [line, msg] : st.errors) out << "line " << line << ": " << msg << "\n";
  out << (st.errors.empty() ? "valid\n" : "invalid\n");
  return st.errors.empty() ? 0 : 1;
}

}  // namespace

std::size_t threads_from_env() {
  const char* v = std::getenv("SVIT_THREADS");
  if (v == nullptr || *v == '\0') return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0' || n == 0 || n > 1024) throw ArgumentError(std::string("SVIT_THREADS must be 1..1024, got '") + v + "'");
  return n;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"svit: hand-object graph supervised video transformer on synthetic data", "svit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool with_checkpoint) {
    sub->add_option("--config", o.config, "key = value configuration file");
    sub->add_option("--seed", o.seed, "64-bit seed for every random choice");
    sub->add_option("--out", o.out, "output directory");
    if (with_checkpoint) sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  };
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  common(gen, false);
  auto* tr = app.add_subcommand("train", "train from a dataset (warm-start with --checkpoint)");
  common(tr, true);
  tr->add_option("--data", o.data, "dataset directory (overrides data_dir)");
  auto* ev = app.add_subcommand("eval", "multi-view PNR evaluation");
  common(ev, true);
  ev->add_option("--views", o.views, "<n_temporal>x<n_spatial>");
  ev->add_option("--data", o.data, "dataset directory (overrides data_dir)");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  common(gc, false);
  auto* ins = app.add_subcommand("inspect-haog", "validate an annotations.jsonl file");
  ins->add_option("annotations", o.annotations, "annotation file")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::size_t threads = threads_from_env();
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (tr->parsed()) return cmd_train(o, out, threads);
    if (ev->parsed()) return cmd_eval(o, out, threads);
    if (gc->parsed()) return cmd_gradcheck(o, out, threads);
    return cmd_inspect_haog(o, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace svit::cli
