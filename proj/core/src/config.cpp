#include "moonnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "moonnet/errors.hpp"

namespace moonnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename N>
N parse_number(std::string_view key, std::string_view value) {
  N out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": not a number: '" + std::string(value) + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = {
      "design_id",  "gate",       "width",           "input_size",   "augment",
      "lr",         "momentum",   "warmup_steps",   "batch",           "epochs",       "steps_per_epoch",
      "seed",       "eval_every", "eval_images",     "target_accuracy", "reduction",
      "spatial_kernel", "c2f_bottlenecks", "ladder", "out_dir"};
  return k;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  try {
    if (key == "design_id") {
      design_id = parse_number<int>(key, value);
    } else if (key == "gate") {
      gate = parse_gate_kind(value);
    } else if (key == "width") {
      width = parse_number<double>(key, value);
    } else if (key == "input_size") {
      input_size = parse_number<int>(key, value);
    } else if (key == "augment") {
      augment = parse_augment_package(value);
    } else if (key == "lr") {
      lr = parse_number<double>(key, value);
    } else if (key == "momentum") {
      momentum = parse_number<double>(key, value);
    } else if (key == "warmup_steps") {
      warmup_steps = parse_number<int>(key, value);
    } else if (key == "batch") {
      batch = parse_number<int>(key, value);
    } else if (key == "epochs") {
      epochs = parse_number<int>(key, value);
    } else if (key == "steps_per_epoch") {
      steps_per_epoch = parse_number<int>(key, value);
    } else if (key == "seed") {
      seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "eval_every") {
      eval_every = parse_number<int>(key, value);
    } else if (key == "eval_images") {
      eval_images = parse_number<int>(key, value);
    } else if (key == "target_accuracy") {
      target_accuracy = parse_number<double>(key, value);
    } else if (key == "reduction") {
      reduction = parse_number<int>(key, value);
    } else if (key == "spatial_kernel") {
      spatial_kernel = parse_number<int>(key, value);
    } else if (key == "c2f_bottlenecks") {
      c2f_bottlenecks = parse_number<int>(key, value);
    } else if (key == "ladder") {
      if (value == "auto" || value == "default") {
        ladder.reset();
      } else {
        ladder = parse_ladder(value);
      }
    } else if (key == "out_dir") {
      if (value.empty()) throw ConfigError("out_dir: empty");
      out_dir = std::string(value);
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (design_id < 0 || design_id >= kNumDesigns) {
    fail("design_id must be in [0, " + std::to_string(kNumDesigns - 1) + "]");
  }
  if (!(width > 0.0 && width <= 1.0)) fail("width must be in (0, 1]");
  if (input_size < 32 || input_size % 32 != 0) {
    fail("input_size must be a positive multiple of 32, got " + std::to_string(input_size));
  }
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (batch < 1) fail("batch must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (steps_per_epoch < 1) fail("steps_per_epoch must be >= 1");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (eval_images < 1) fail("eval_images must be >= 1");
  if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0)) {
    fail("target_accuracy must be in [0, 1]");
  }
  if (reduction < 1) fail("reduction must be >= 1");
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0) fail("spatial_kernel must be odd");
  if (c2f_bottlenecks < 0) fail("c2f_bottlenecks must be >= 0");
}

BackboneDesign ExperimentConfig::design() const {
  validate();
  BackboneDesign d = build_design(design_id, width, gate, ladder.value_or(default_ladder(design_id)));
  d.reduction = reduction;
  d.spatial_kernel = spatial_kernel;
  for (auto& s : d.stages) s.c2f_bottlenecks = c2f_bottlenecks;
  return d;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "design_id = " << design_id << '\n'
     << "gate = " << to_string(gate) << '\n'
     << "width = " << format_double(width) << '\n'
     << "input_size = " << input_size << '\n'
     << "augment = " << to_string(augment) << '\n'
     << "lr = " << format_double(lr) << '\n'
     << "momentum = " << format_double(momentum) << '\n'
     << "warmup_steps = " << warmup_steps << '\n'
     << "batch = " << batch << '\n'
     << "epochs = " << epochs << '\n'
     << "steps_per_epoch = " << steps_per_epoch << '\n'
     << "seed = " << seed << '\n'
     << "eval_every = " << eval_every << '\n'
     << "eval_images = " << eval_images << '\n'
     << "target_accuracy = " << format_double(target_accuracy) << '\n'
     << "reduction = " << reduction << '\n'
     << "spatial_kernel = " << spatial_kernel << '\n'
     << "c2f_bottlenecks = " << c2f_bottlenecks << '\n'
     << "ladder = " << (ladder ? std::string(to_string(*ladder)) : std::string("auto")) << '\n'
     << "out_dir = " << out_dir << '\n';
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, std::string_view source) {
  ExperimentConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace moonnet
