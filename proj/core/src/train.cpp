#include "moonnet/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "moonnet/errors.hpp"
#include "moonnet/ops.hpp"
#include "moonnet/rng.hpp"

namespace moonnet {

template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, T lr, T momentum,
              std::span<T> velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: params, grads and velocity differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

template void sgd_step<float>(std::span<float>, std::span<const float>, float, float,
                              std::span<float>);
template void sgd_step<double>(std::span<double>, std::span<const double>, double, double,
                               std::span<double>);

void Sgd::step(const std::vector<Param<float>*>& params) {
  if (velocity_.empty()) {
    for (auto* p : params) velocity_.emplace_back(p->value.shape());
  }
  if (velocity_.size() != params.size()) throw ShapeError("Sgd: parameter set changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_step<float>(params[i]->value.values(), params[i]->grad.values(),
                    static_cast<float>(lr_), static_cast<float>(momentum_),
                    velocity_[i].values());
  }
}

// --- model -------------------------------------------------------------------

PresenceNet::PresenceNet(const BackboneDesign& design, std::uint64_t seed)
    : backbone_(design, seed),
      head_("head", design.channels().back(), 1, 1, ConvGeometry{1, 0}, seed) {}

Tensor4 PresenceNet::forward(const Tensor4& x) { return head_.forward(backbone_.forward(x)); }

Tensor4 PresenceNet::backward(const Tensor4& grad_out) {
  return backbone_.backward(head_.backward(grad_out));
}

void PresenceNet::collect_params(std::vector<Param<float>*>& out) {
  backbone_.collect_params(out);
  head_.collect_params(out);
}

void PresenceNet::collect_buffers(std::vector<Buffer<float>*>& out) {
  backbone_.collect_buffers(out);
}

PresenceNet build_model(const ExperimentConfig& cfg) { return PresenceNet(cfg.design(), cfg.seed); }

// --- data --------------------------------------------------------------------

SyntheticSample training_sample(const ExperimentConfig& cfg, std::uint64_t index) {
  const std::uint64_t stream = mix_seed(cfg.seed, "train");
  SyntheticSample s = make_synthetic_sample(cfg.input_size, stream, index);
  if (cfg.augment == AugmentPackage::Ver1) return s;
  s.image = apply_package(cfg.augment, s.image, mix_seed(stream, index));
  s.presence = presence_from_boxes(s.image.boxes, cfg.input_size);
  return s;
}

SyntheticSample eval_sample(const ExperimentConfig& cfg, std::uint64_t index) {
  return make_synthetic_sample(cfg.input_size, mix_seed(cfg.seed, "eval"), index);
}

namespace {

constexpr int kEvalChunk = 8;

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Calls fn(batch, first_index) over the eval set in eval mode.
template <typename Fn>
void for_eval_chunks(PresenceNet& net, const ExperimentConfig& cfg, Fn&& fn) {
  net.set_training(false);
  for (int start = 0; start < cfg.eval_images; start += kEvalChunk) {
    std::vector<SyntheticSample> samples;
    for (int i = start; i < std::min(cfg.eval_images, start + kEvalChunk); ++i) {
      samples.push_back(eval_sample(cfg, static_cast<std::uint64_t>(i)));
    }
    const Batch b = stack_batch(samples);
    fn(b, net.forward(b.images));
  }
  net.set_training(true);
}

}  // namespace

double presence_accuracy(PresenceNet& net, const ExperimentConfig& cfg) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for_eval_chunks(net, cfg, [&](const Batch& b, const Tensor4& logits) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      correct += (logits[i] > 0.0f) == (b.targets[i] > 0.5f) ? 1 : 0;
    }
    total += logits.size();
  });
  return static_cast<double>(correct) / static_cast<double>(total);
}

EvalSummary evaluate_model(PresenceNet& net, const ExperimentConfig& cfg) {
  EvalInput input;
  input.num_classes = 1;
  for_eval_chunks(net, cfg, [&](const Batch& b, const Tensor4& logits) {
    const Shape& s = logits.shape();
    for (int n = 0; n < s.n; ++n) {
      ImageDetections img;
      for (int gy = 0; gy < s.h; ++gy) {
        for (int gx = 0; gx < s.w; ++gx) {
          BBox cell;
          cell.x1 = gx * kCellSize;
          cell.y1 = gy * kCellSize;
          cell.x2 = cell.x1 + kCellSize;
          cell.y2 = cell.y1 + kCellSize;
          if (b.targets(n, 0, gy, gx) > 0.5f) img.gts.push_back(cell);
          cell.score = 1.0 / (1.0 + std::exp(-static_cast<double>(logits(n, 0, gy, gx))));
          img.preds.push_back(cell);
        }
      }
      input.images.push_back(std::move(img));
    }
  });
  return evaluate(input);
}

// --- training ----------------------------------------------------------------

double scheduled_lr(const ExperimentConfig& cfg, int step) {
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.lr;
  return cfg.lr * static_cast<double>(step) / cfg.warmup_steps;
}

TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  PresenceNet net = build_model(cfg);
  net.set_training(true);
  Sgd sgd(cfg.lr, cfg.momentum);
  const auto params = net.params();
  const std::uint64_t train_stream = mix_seed(cfg.seed, "train");
  const std::string config_text = cfg.to_text();

  TrainResult r;
  auto emit = [&](const std::string& line) {
    r.log.push_back(line);
    if (opts.on_line) opts.on_line(line);
  };
  auto snapshot = [&](int step) {
    Checkpoint ck = capture(net);
    ck.config_text = config_text;
    ck.rng_state = "stream=" + std::to_string(train_stream) +
                   " next_sample=" + std::to_string(static_cast<std::uint64_t>(step) * cfg.batch);
    return ck;
  };

  r.best_checkpoint = snapshot(0);
  double best_epoch_loss = std::numeric_limits<double>::infinity();
  int step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (int s = 0; s < cfg.steps_per_epoch && !stop; ++s) {
      std::vector<SyntheticSample> samples;
      for (int i = 0; i < cfg.batch; ++i) {
        samples.push_back(
            training_sample(cfg, static_cast<std::uint64_t>(step) * cfg.batch + i));
      }
      const Batch b = stack_batch(samples);
      net.zero_grad();
      const Tensor4 logits = net.forward(b.images);
      Tensor4 grad(logits.shape());
      const double loss = bce_with_logits(logits, b.targets, &grad);
      ++step;
      sgd.set_lr(scheduled_lr(cfg, step));
      if (!std::isfinite(loss)) {
        throw DivergenceError("loss became non-finite at step " + std::to_string(step) +
                              " (lr " + shortest(cfg.lr) + ")");
      }
      net.backward(grad);
      sgd.step(params);
      r.losses.push_back(loss);
      emit("step=" + std::to_string(step) + " loss=" + shortest(loss));
      epoch_sum += loss;
      ++epoch_steps;

      if (step % cfg.eval_every == 0) {
        const double acc = presence_accuracy(net, cfg);
        r.accuracy.emplace_back(step, acc);
        emit("eval step=" + std::to_string(step) + " accuracy=" + shortest(acc));
        if (cfg.target_accuracy > 0.0 && acc >= cfg.target_accuracy) {
          r.reached_target = true;
          stop = true;
        }
      }
    }
    const double mean = epoch_sum / epoch_steps;
    if (mean < best_epoch_loss) {
      best_epoch_loss = mean;
      r.best_checkpoint = snapshot(step);
    }
  }

  r.steps = step;
  if (!r.accuracy.empty() && r.accuracy.back().first == step) {
    r.final_accuracy = r.accuracy.back().second;
  } else {
    r.final_accuracy = presence_accuracy(net, cfg);
    emit("eval step=" + std::to_string(step) + " accuracy=" + shortest(r.final_accuracy));
  }
  r.reached_target = cfg.target_accuracy > 0.0 && r.final_accuracy >= cfg.target_accuracy;
  r.final_checkpoint = snapshot(step);

  if (opts.write_files) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    std::ofstream log(dir / "train.log", std::ios::binary | std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (dir / "train.log").string());
    log << "# moonnet train " << utc_timestamp() << '\n';
    for (const auto& line : r.log) log << line << '\n';
    save_checkpoint(r.final_checkpoint, (dir / "final.ckpt").string());
    save_checkpoint(r.best_checkpoint, (dir / "best.ckpt").string());
  }
  return r;
}

std::vector<SweepRow> resolution_sweep(const ExperimentConfig& base, const std::vector<int>& sizes,
                                       const TrainOptions& opts) {
  if (sizes.empty()) throw ConfigError("sweep: no sizes given");
  std::vector<ExperimentConfig> configs;
  for (int size : sizes) {
    ExperimentConfig c = base;
    c.input_size = size;
    c.out_dir = (std::filesystem::path(base.out_dir) / ("size_" + std::to_string(size))).string();
    c.validate();
    configs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows;
  for (const auto& c : configs) {
    TrainResult tr = train(c, opts);
    PresenceNet net = build_model(c);
    restore(net, tr.final_checkpoint);
    rows.push_back({c.input_size, evaluate_model(net, c), tr.final_accuracy, tr.steps});
  }
  return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "Input image resolution" << std::setw(8) << "AP50"
     << std::setw(8) << "AP" << std::setw(8) << "Recall" << "Precision\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    const std::string res =
        "(" + std::to_string(r.input_size) + "x" + std::to_string(r.input_size) + ")";
    os << std::setw(24) << res << std::setw(8) << r.summary.ap50 << std::setw(8) << r.summary.ap
       << std::setw(8) << r.summary.recall << r.summary.precision << '\n';
  }
  return os.str();
}

}  // namespace moonnet
