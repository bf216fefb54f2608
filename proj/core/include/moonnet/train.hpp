#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moonnet/backbone.hpp"
#include "moonnet/checkpoint.hpp"
#include "moonnet/config.hpp"
#include "moonnet/metrics.hpp"
#include "moonnet/synthetic.hpp"

namespace moonnet {

/// v <- momentum * v + g; theta <- theta - lr * v.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, T lr, T momentum,
              std::span<T> velocity);

class Sgd {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  void step(const std::vector<Param<float>*>& params);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  const std::vector<Tensor4>& velocity() const { return velocity_; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor4> velocity_;
};

/// Backbone followed by a 1x1 conv to one presence logit per 32x32 cell.
class PresenceNet final : public Module<float> {
 public:
  PresenceNet(const BackboneDesign& design, std::uint64_t seed);

  Tensor4 forward(const Tensor4& x) override;
  Tensor4 backward(const Tensor4& grad_out) override;
  void collect_params(std::vector<Param<float>*>& out) override;
  void collect_buffers(std::vector<Buffer<float>*>& out) override;
  void set_training(bool training) override { backbone_.set_training(training); }

  Backbone<float>& backbone() { return backbone_; }

 private:
  Backbone<float> backbone_;
  Conv2d<float> head_;
};

PresenceNet build_model(const ExperimentConfig& cfg);

/// Training image `index` for a run seeded with `seed`, after augmentation.
SyntheticSample training_sample(const ExperimentConfig& cfg, std::uint64_t index);
/// Held-out image `index`; never augmented.
SyntheticSample eval_sample(const ExperimentConfig& cfg, std::uint64_t index);

/// Fraction of eval cells whose logit sign matches presence (BN in eval mode).
double presence_accuracy(PresenceNet& net, const ExperimentConfig& cfg);

/// Cells become class-0 boxes: predictions scored by sigmoid(logit) and
/// ground truth where a patch is present.
EvalSummary evaluate_model(PresenceNet& net, const ExperimentConfig& cfg);

struct TrainOptions {
  bool write_files = true;
  /// Receives every log line as it is produced (progress reporting).
  std::function<void(const std::string&)> on_line;
};

struct TrainResult {
  std::vector<double> losses;  // one per step
  std::vector<std::pair<int, double>> accuracy;  // (step, eval accuracy)
  double final_accuracy = 0.0;
  bool reached_target = false;
  int steps = 0;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;  // lowest mean loss over an epoch
  /// Log lines without the timestamped header.
  std::vector<std::string> log;
};

/// Learning rate at 1-based `step`: linear ramp from lr/warmup to lr over
/// the first warmup_steps steps, constant afterwards.
double scheduled_lr(const ExperimentConfig& cfg, int step);

/// Runs SGD on the synthetic presence task. When write_files is set, writes
/// train.log, final.ckpt and best.ckpt (with .meta sidecars) into out_dir.
/// Throws DivergenceError on a non-finite loss.
TrainResult train(const ExperimentConfig& cfg, const TrainOptions& opts = {});

struct SweepRow {
  int input_size = 0;
  EvalSummary summary;
  double accuracy = 0.0;
  int steps = 0;
};

/// Trains and evaluates one model per size. Every size is validated before
/// any training starts.
std::vector<SweepRow> resolution_sweep(const ExperimentConfig& base, const std::vector<int>& sizes,
                                       const TrainOptions& opts = {});
std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace moonnet
