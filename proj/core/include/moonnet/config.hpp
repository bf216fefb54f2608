#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moonnet/attention.hpp"
#include "moonnet/augment.hpp"
#include "moonnet/backbone.hpp"

namespace moonnet {

/// Everything a run depends on. Text form is one `key = value` per line;
/// blank lines and `#` comments are skipped; unknown keys are errors.
struct ExperimentConfig {
  int design_id = kMoonNetDesign;
  GateKind gate = GateKind::ResidualTanh;
  double width = 0.25;
  int input_size = 64;
  AugmentPackage augment = AugmentPackage::Ver1;
  double lr = 0.001;
  double momentum = 0.9;
  int warmup_steps = 0;
  int batch = 4;
  int epochs = 1;
  int steps_per_epoch = 2000;
  std::uint64_t seed = 0;
  int eval_every = 50;
  int eval_images = 64;
  double target_accuracy = 0.95;  // stop early once reached; 0 disables
  int reduction = 16;
  int spatial_kernel = 7;
  int c2f_bottlenecks = 1;
  std::optional<ChannelLadder> ladder;  // nullopt: the design's default
  std::string out_dir = "run";

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
  BackboneDesign design() const;
  int total_steps() const { return epochs * steps_per_epoch; }

  /// Sets one field from its text form. Throws ConfigError for unknown keys
  /// or malformed values.
  void set(std::string_view key, std::string_view value);
  static const std::vector<std::string>& keys();

  /// Canonical text form; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static ExperimentConfig parse(std::string_view text, std::string_view source = "<config>");
  static ExperimentConfig load(const std::string& path);

  bool operator==(const ExperimentConfig&) const = default;
};

}  // namespace moonnet
