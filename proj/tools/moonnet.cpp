// moonnet command-line runner.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moonnet/checkpoint.hpp"
#include "moonnet/config.hpp"
#include "moonnet/dataset_io.hpp"
#include "moonnet/errors.hpp"
#include "moonnet/gradcheck.hpp"
#include "moonnet/metrics.hpp"
#include "moonnet/rng.hpp"
#include "moonnet/synthetic.hpp"
#include "moonnet/train.hpp"

namespace fs = std::filesystem;
using namespace moonnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

// Command-line flag -> config key. Every config key has exactly one flag.
const std::vector<std::pair<std::string, std::string>>& flag_keys() {
  static const std::vector<std::pair<std::string, std::string>> m = {
      {"design", "design_id"},
      {"gate", "gate"},
      {"width", "width"},
      {"size", "input_size"},
      {"augment", "augment"},
      {"lr", "lr"},
      {"momentum", "momentum"},
      {"warmup-steps", "warmup_steps"},
      {"batch", "batch"},
      {"epochs", "epochs"},
      {"steps-per-epoch", "steps_per_epoch"},
      {"seed", "seed"},
      {"eval-every", "eval_every"},
      {"eval-images", "eval_images"},
      {"target-accuracy", "target_accuracy"},
      {"reduction", "reduction"},
      {"spatial-kernel", "spatial_kernel"},
      {"c2f-bottlenecks", "c2f_bottlenecks"},
      {"ladder", "ladder"},
      {"out", "out_dir"},
  };
  return m;
}

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;  // keyed by config key

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    for (const auto& [flag, key] : flag_keys()) {
      app->add_option("--" + flag, values[key], "config key '" + key + "'");
    }
  }

  ExperimentConfig resolve(CLI::App* app) const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    for (const auto& [flag, key] : flag_keys()) {
      if (app->count("--" + flag) > 0) cfg.set(key, values.at(key));
    }
    cfg.validate();
    return cfg;
  }
};

std::string one_decimal(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// --- subcommands -------------------------------------------------------------

int run_train(const ExperimentConfig& cfg, bool quiet) {
  TrainOptions opts;
  if (!quiet) {
    opts.on_line = [](const std::string& line) {
      if (line.rfind("eval", 0) == 0) std::cout << line << '\n' << std::flush;
    };
  }
  const TrainResult r = train(cfg, opts);
  std::cout << "steps: " << r.steps << '\n'
            << "final accuracy: " << std::setprecision(4) << r.final_accuracy << '\n'
            << "target reached: " << (r.reached_target ? "yes" : "no") << '\n'
            << "wrote " << (fs::path(cfg.out_dir) / "train.log").string() << ", "
            << (fs::path(cfg.out_dir) / "final.ckpt").string() << ", "
            << (fs::path(cfg.out_dir) / "best.ckpt").string() << '\n';
  return kExitOk;
}

int run_gradcheck(std::uint64_t seed) {
  const auto reports = run_gradcheck_suite(seed);
  std::cout << format_reports(reports);
  return all_pass(reports) ? kExitOk : kExitRuntime;
}

struct EvaluateArgs {
  std::string gt_dir;
  std::string pred_dir;
  std::string checkpoint;
  std::string out;
  int classes = 0;
  double conf = 0.5;
  int eval_images = 0;
};

int run_evaluate(const EvaluateArgs& a) {
  EvalSummary s;
  if (!a.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.config_text.empty()) {
      throw ConfigError("checkpoint has no config sidecar: " + a.checkpoint + ".meta");
    }
    ExperimentConfig cfg = ExperimentConfig::parse(ck.config_text, a.checkpoint + ".meta");
    if (a.eval_images > 0) cfg.eval_images = a.eval_images;
    cfg.validate();
    PresenceNet net = build_model(cfg);
    restore(net, ck);
    s = evaluate_model(net, cfg);
  } else {
    const auto gts = read_annotation_dir(a.gt_dir);
    const auto preds = read_annotation_dir(a.pred_dir);
    std::set<std::string> stems;
    for (const auto& [k, v] : gts) stems.insert(k);
    for (const auto& [k, v] : preds) stems.insert(k);
    EvalInput input;
    input.num_classes = a.classes;
    for (const auto& stem : stems) {
      ImageDetections img;
      if (auto it = gts.find(stem); it != gts.end()) img.gts = it->second;
      if (auto it = preds.find(stem); it != preds.end()) img.preds = it->second;
      input.images.push_back(std::move(img));
    }
    s = evaluate(input, a.conf);
  }
  std::cout << format_summary_table(s);
  if (!a.out.empty()) {
    write_text(a.out, format_summary_keyvalue(s));
    std::cout << "wrote " << a.out << '\n';
  } else {
    std::cout << '\n' << format_summary_keyvalue(s);
  }
  return kExitOk;
}

struct PreviewArgs {
  std::string package = "ver3";
  std::string image;
  std::string labels;
  int size = 64;
  int count = 4;
  std::uint64_t seed = 0;
  std::string out = "augment_preview";
};

int run_augment_preview(const PreviewArgs& a) {
  const AugmentPackage pkg = parse_augment_package(a.package);
  if (a.count < 1) throw ConfigError("--count must be >= 1");
  std::vector<LabeledImage> sources;
  if (!a.image.empty()) {
    LabeledImage li{read_ppm(a.image), {}};
    if (!a.labels.empty()) li.boxes = read_annotation_file(a.labels);
    sources.push_back(std::move(li));
  } else {
    for (int i = 0; i < a.count; ++i) {
      sources.push_back(make_synthetic_sample(a.size, a.seed, static_cast<std::uint64_t>(i)).image);
    }
  }
  fs::create_directories(a.out);
  const int variants = a.image.empty() ? 1 : a.count;
  int written = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (int v = 0; v < variants; ++v) {
      const std::uint64_t seed = mix_seed(a.seed, static_cast<std::uint64_t>(i * variants + v));
      const LabeledImage out = apply_package(pkg, sources[i], seed);
      std::ostringstream stem;
      stem << "sample_" << std::setw(3) << std::setfill('0') << written++;
      const fs::path base = fs::path(a.out) / stem.str();
      write_ppm(base.string() + ".ppm", out.image);
      write_annotation_file(base.string() + ".txt", out.boxes);
    }
  }
  std::cout << "wrote " << written << " " << to_string(pkg) << " samples to " << a.out << '\n';
  return kExitOk;
}

int run_stats(const std::string& dir) {
  std::vector<BBox> all;
  for (const auto& [stem, boxes] : read_annotation_dir(dir)) {
    all.insert(all.end(), boxes.begin(), boxes.end());
  }
  if (all.empty()) throw ConfigError("no boxes found in " + dir);
  const BoxAreaStats st = mean_box_area(all);
  std::cout << "boxes: " << st.count << '\n'
            << "mean area: " << one_decimal(st.mean_px2) << " px^2 (" << one_decimal(st.side_px)
            << " x " << one_decimal(st.side_px) << ")\n";
  return kExitOk;
}

int run_sweep(const ExperimentConfig& cfg, const std::vector<int>& sizes) {
  TrainOptions opts;
  opts.on_line = nullptr;
  const auto rows = resolution_sweep(cfg, sizes, opts);
  const std::string table = format_sweep_table(rows);
  std::cout << table;
  write_text(fs::path(cfg.out_dir) / "sweep.txt", table);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moonnet: attention-gated backbones, gradient checks and desk-scale training"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a backbone on the synthetic task");
  train_flags.attach(train_cmd);
  train_cmd->add_flag("--quiet", quiet, "suppress per-eval progress lines");

  std::uint64_t gc_seed = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check suite");
  gc_cmd->add_option("--seed", gc_seed, "random seed");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "detection metrics for annotation dirs or a checkpoint");
  auto* gt_opt = ev_cmd->add_option("--gt", ev.gt_dir, "ground-truth annotation dir")
                     ->check(CLI::ExistingDirectory);
  auto* pred_opt = ev_cmd->add_option("--pred", ev.pred_dir, "prediction annotation dir")
                       ->check(CLI::ExistingDirectory);
  auto* ck_opt = ev_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint from `train`")
                     ->check(CLI::ExistingFile);
  gt_opt->needs(pred_opt);
  pred_opt->needs(gt_opt);
  ck_opt->excludes(gt_opt)->excludes(pred_opt);
  ev_cmd->add_option("--classes", ev.classes, "number of classes (default: inferred)");
  ev_cmd->add_option("--conf", ev.conf, "confidence threshold for recall/precision");
  ev_cmd->add_option("--eval-images", ev.eval_images, "held-out images (checkpoint mode)");
  ev_cmd->add_option("--out", ev.out, "write key=value metrics to this file");

  PreviewArgs pv;
  auto* pv_cmd = app.add_subcommand("augment-preview", "write augmented samples as PPM + labels");
  pv_cmd->add_option("--package", pv.package, "ver1 | ver2 | ver3");
  pv_cmd->add_option("--image", pv.image, "source PPM image (default: synthetic)")
      ->check(CLI::ExistingFile);
  pv_cmd->add_option("--labels", pv.labels, "annotation file for --image")->check(CLI::ExistingFile);
  pv_cmd->add_option("--size", pv.size, "synthetic image size");
  pv_cmd->add_option("--count", pv.count, "number of samples");
  pv_cmd->add_option("--seed", pv.seed, "random seed");
  pv_cmd->add_option("--out", pv.out, "output directory");

  std::string stats_dir;
  auto* st_cmd = app.add_subcommand("stats", "mean box area over an annotation dir");
  st_cmd->add_option("--dir", stats_dir, "annotation dir")->required()->check(CLI::ExistingDirectory);

  ConfigFlags sweep_flags;
  std::vector<int> sizes = {64, 96};
  auto* sw_cmd = app.add_subcommand("sweep", "train and evaluate one model per input size");
  sweep_flags.attach(sw_cmd);
  sw_cmd->add_option("--sizes", sizes, "input sizes, each a multiple of 32")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*train_cmd) return run_train(train_flags.resolve(train_cmd), quiet);
    if (*gc_cmd) return run_gradcheck(gc_seed);
    if (*ev_cmd) {
      if (ev.checkpoint.empty() && ev.gt_dir.empty()) {
        throw ConfigError("evaluate needs --gt and --pred, or --checkpoint");
      }
      return run_evaluate(ev);
    }
    if (*pv_cmd) return run_augment_preview(pv);
    if (*st_cmd) return run_stats(stats_dir);
    if (*sw_cmd) return run_sweep(sweep_flags.resolve(sw_cmd), sizes);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}
