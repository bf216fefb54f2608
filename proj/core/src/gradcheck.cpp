#include "moonnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "moonnet/ops.hpp"
#include "moonnet/rng.hpp"

namespace moonnet {

namespace {

using TensorD = Tensor<double>;
constexpr int kMaxRedraws = 200;
constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const TensorD& a, const TensorD& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("gradcheck: projection shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double min_abs(const TensorD& t) {
  double m = kInf;
  for (double v : t.values()) m = std::min(m, std::abs(v));
  return m;
}

struct OpCase {
  std::string name;
  std::vector<std::string> sites;
  std::vector<TensorD> inputs;
  std::function<TensorD(const std::vector<TensorD>&)> forward;
  std::function<std::vector<TensorD>(const TensorD&, const std::vector<TensorD>&)> backward;
  std::function<double(const std::vector<TensorD>&)> margin = [](const auto&) { return kInf; };
};

std::vector<GradReport> run_case(OpCase& oc, Rng& rng, const GradTolerance& tol) {
  const TensorD y = oc.forward(oc.inputs);
  const TensorD proj = random_tensor<double>(y.shape(), rng);
  const std::vector<TensorD> analytic = oc.backward(proj, oc.inputs);
  std::vector<GradReport> out;
  for (std::size_t i = 0; i < oc.inputs.size(); ++i) {
    auto loss = [&](const TensorD& theta) {
      std::vector<TensorD> in = oc.inputs;
      in[i] = theta;
      return dot(proj, oc.forward(in));
    };
    out.push_back(compare_gradients(oc.name, oc.sites[i], analytic[i],
                                    fd_gradient(loss, oc.inputs[i], tol.eps), tol));
  }
  return out;
}

// Draws inputs until the case is far enough from every kink.
template <typename Draw>
OpCase drawn_case(Draw draw, Rng& rng, const GradTolerance& tol) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    OpCase oc = draw(rng);
    if (oc.margin(oc.inputs) >= tol.kink_margin) return oc;
  }
  throw OracleError("gradcheck: could not draw inputs away from kinks");
}

void merge(std::map<std::pair<std::string, std::string>, GradReport>& acc,
           std::vector<std::pair<std::string, std::string>>& order,
           const std::vector<GradReport>& reports) {
  for (const auto& r : reports) {
    auto key = std::make_pair(r.op_name, r.param_site);
    auto it = acc.find(key);
    if (it == acc.end()) {
      acc.emplace(key, r);
      order.push_back(key);
      continue;
    }
    it->second.max_rel_err = std::max(it->second.max_rel_err, r.max_rel_err);
    it->second.max_abs_err = std::max(it->second.max_abs_err, r.max_abs_err);
    it->second.pass = it->second.pass && r.pass;
  }
}

std::vector<OpCase (*)(Shape, Rng&)> op_factories();

Shape channel_shape(Shape s) { return Shape{s.n, s.c, 1, 1}; }
Shape spatial_shape(Shape s) { return Shape{s.n, 1, s.h, s.w}; }

OpCase gap_case(Shape s, Rng& rng) {
  return {"global_avg_pool", {"x"}, {random_tensor<double>(s, rng)},
          [](const auto& in) { return global_avg_pool(in[0]); },
          [](const TensorD& g, const auto& in) {
            return std::vector<TensorD>{global_avg_pool_backward(g, in[0].shape())};
          }};
}

OpCase gmp_case(Shape s, Rng& rng) {
  return {"global_max_pool", {"x"}, {random_tensor<double>(s, rng)},
          [](const auto& in) { return global_max_pool(in[0]).out; },
          [](const TensorD& g, const auto& in) {
            auto r = global_max_pool(in[0]);
            return std::vector<TensorD>{max_reduction_backward(g, r.argmax, in[0].shape())};
          },
          [](const auto& in) { return global_max_pool(in[0]).min_gap; }};
}

OpCase cavg_case(Shape s, Rng& rng) {
  return {"channel_reduce_avg", {"x"}, {random_tensor<double>(s, rng)},
          [](const auto& in) { return channel_reduce_avg(in[0]); },
          [](const TensorD& g, const auto& in) {
            return std::vector<TensorD>{channel_reduce_avg_backward(g, in[0].shape())};
          }};
}

OpCase cmax_case(Shape s, Rng& rng) {
  return {"channel_reduce_max", {"x"}, {random_tensor<double>(s, rng)},
          [](const auto& in) { return channel_reduce_max(in[0]).out; },
          [](const TensorD& g, const auto& in) {
            auto r = channel_reduce_max(in[0]);
            return std::vector<TensorD>{max_reduction_backward(g, r.argmax, in[0].shape())};
          },
          [](const auto& in) { return channel_reduce_max(in[0]).min_gap; }};
}

OpCase fc_case(Shape s, Rng& rng) {
  const int out_dim = 4;
  return {"fc", {"x", "weight", "bias"},
          {random_tensor<double>(channel_shape(s), rng),
           random_tensor<double>(matrix_shape(out_dim, s.c), rng),
           random_tensor<double>(vector_shape(out_dim), rng)},
          [](const auto& in) { return fc(in[0], in[1], in[2]); },
          [](const TensorD& g, const auto& in) {
            FcGrads<double> r = fc_backward(g, in[0], in[1]);
            return std::vector<TensorD>{r.dx, r.dweight, r.dbias};
          }};
}

OpCase conv_case_with(Shape s, Rng& rng, int stride, const char* name) {
  const int c_out = 2;
  const ConvGeometry geom{stride, 1};
  return {name, {"x", "kernel", "bias"},
          {random_tensor<double>(s, rng), random_tensor<double>(Shape{c_out, s.c, 3, 3}, rng),
           random_tensor<double>(vector_shape(c_out), rng)},
          [geom](const auto& in) { return conv2d(in[0], in[1], in[2], geom); },
          [geom](const TensorD& g, const auto& in) {
            ConvGrads<double> r = conv2d_backward(g, in[0], in[1], geom);
            return std::vector<TensorD>{r.dx, r.dkernel, r.dbias};
          }};
}

OpCase conv_s1_case(Shape s, Rng& rng) { return conv_case_with(s, rng, 1, "conv2d_s1"); }
OpCase conv_s2_case(Shape s, Rng& rng) { return conv_case_with(s, rng, 2, "conv2d_s2"); }

OpCase relu_case(Shape s, Rng& rng) {
  return {"relu", {"x"}, {random_tensor<double>(s, rng)},
          [](const auto& in) { return relu(in[0]); },
          [](const TensorD& g, const auto& in) {
            return std::vector<TensorD>{relu_backward(g, in[0])};
          },
          [](const auto& in) { return min_abs(in[0]); }};
}

OpCase sigmoid_case(Shape s, Rng& rng) {
  return {"sigmoid", {"x"}, {random_tensor<double>(s, rng, -3.0, 3.0)},
          [](const auto& in) { return sigmoid(in[0]); },
          [](const TensorD& g, const auto& in) {
            return std::vector<TensorD>{sigmoid_backward(g, sigmoid(in[0]))};
          }};
}

OpCase tanh_case(Shape s, Rng& rng) {
  return {"tanh", {"x"}, {random_tensor<double>(s, rng, -3.0, 3.0)},
          [](const auto& in) { return tanh_act(in[0]); },
          [](const TensorD& g, const auto& in) {
            return std::vector<TensorD>{tanh_backward(g, tanh_act(in[0]))};
          }};
}

OpCase silu_case(Shape s, Rng& rng) {
  return {"silu", {"x"}, {random_tensor<double>(s, rng, -3.0, 3.0)},
          [](const auto& in) { return silu(in[0]); },
          [](const TensorD& g, const auto& in) {
            return std::vector<TensorD>{silu_backward(g, in[0])};
          }};
}

OpCase bmul_channel_case(Shape s, Rng& rng) {
  return {"broadcast_mul_channel", {"x", "g"},
          {random_tensor<double>(s, rng), random_tensor<double>(channel_shape(s), rng)},
          [](const auto& in) { return broadcast_mul(in[0], in[1]); },
          [](const TensorD& g, const auto& in) {
            BroadcastGrads<double> r = broadcast_mul_backward(g, in[0], in[1]);
            return std::vector<TensorD>{r.dx, r.dg};
          }};
}

OpCase bmul_spatial_case(Shape s, Rng& rng) {
  return {"broadcast_mul_spatial", {"x", "g"},
          {random_tensor<double>(s, rng), random_tensor<double>(spatial_shape(s), rng)},
          [](const auto& in) { return broadcast_mul(in[0], in[1]); },
          [](const TensorD& g, const auto& in) {
            BroadcastGrads<double> r = broadcast_mul_backward(g, in[0], in[1]);
            return std::vector<TensorD>{r.dx, r.dg};
          }};
}

OpCase concat_case(Shape s, Rng& rng) {
  return {"concat_channels", {"a", "b"},
          {random_tensor<double>(s, rng), random_tensor<double>(Shape{s.n, 2, s.h, s.w}, rng)},
          [](const auto& in) { return concat_channels(in[0], in[1]); },
          [](const TensorD& g, const auto& in) {
            auto [ga, gb] = split_channels(g, in[0].shape().c);
            return std::vector<TensorD>{ga, gb};
          }};
}

OpCase split_case(Shape s, Rng& rng) {
  // The pair (a, b) is projected as one tensor [a, b].
  return {"split_channels", {"x"},
          {random_tensor<double>(Shape{s.n, s.c + 1, s.h, s.w}, rng)},
          [](const auto& in) {
            auto [a, b] = split_channels(in[0], 1);
            return concat_channels(a, b);
          },
          [](const TensorD& g, const auto&) {
            auto [ga, gb] = split_channels(g, 1);
            return std::vector<TensorD>{concat_channels(ga, gb)};
          }};
}

OpCase add_case(Shape s, Rng& rng) {
  return {"add", {"a", "b"}, {random_tensor<double>(s, rng), random_tensor<double>(s, rng)},
          [](const auto& in) { return add(in[0], in[1]); },
          [](const TensorD& g, const auto&) { return std::vector<TensorD>{g, g}; }};
}

OpCase batchnorm_case(Shape s, Rng& rng) {
  return {"batchnorm", {"x", "gamma", "beta"},
          {random_tensor<double>(s, rng), random_tensor<double>(vector_shape(s.c), rng, 0.5, 1.5),
           random_tensor<double>(vector_shape(s.c), rng)},
          [](const auto& in) {
            return batchnorm_train<double>(in[0], in[1], in[2], 1e-5, nullptr, nullptr, nullptr);
          },
          [](const TensorD& g, const auto& in) {
            BatchNormCache<double> cache;
            batchnorm_train<double>(in[0], in[1], in[2], 1e-5, &cache, nullptr, nullptr);
            BatchNormGrads<double> r = batchnorm_backward(g, cache, in[1]);
            return std::vector<TensorD>{r.dx, r.dgamma, r.dbeta};
          }};
}

OpCase bce_case(Shape s, Rng& rng) {
  TensorD targets(s);
  for (auto& v : targets.values()) v = std::uniform_int_distribution<int>(0, 1)(rng);
  return {"bce_with_logits", {"logits"}, {random_tensor<double>(s, rng, -3.0, 3.0)},
          [targets](const auto& in) {
            return TensorD(Shape{1, 1, 1, 1}, {bce_with_logits<double>(in[0], targets, nullptr)});
          },
          [targets](const TensorD& g, const auto& in) {
            TensorD grad;
            bce_with_logits<double>(in[0], targets, &grad);
            for (auto& v : grad.values()) v *= g[0];
            return std::vector<TensorD>{grad};
          }};
}

std::vector<OpCase (*)(Shape, Rng&)> op_factories() {
  return {gap_case,          gmp_case,          cavg_case,  cmax_case,    fc_case,
          conv_s1_case,      conv_s2_case,      relu_case,  sigmoid_case, tanh_case,
          silu_case,         bmul_channel_case, bmul_spatial_case,        concat_case,
          split_case,        add_case,          batchnorm_case,           bce_case};
}

}  // namespace

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

Tensor<double> fd_gradient(const std::function<double(const Tensor<double>&)>& f,
                           const Tensor<double>& theta, double eps) {
  if (!(eps > 0.0)) throw OracleError("fd_gradient: eps must be positive");
  TensorD grad(theta.shape());
  TensorD probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("fd_gradient: objective is not finite at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

GradReport compare_gradients(const std::string& op, const std::string& site,
                             const Tensor<double>& analytic, const Tensor<double>& numeric,
                             const GradTolerance& tol) {
  if (!(analytic.shape() == numeric.shape())) {
    throw ShapeError("compare_gradients: " + op + "/" + site + " shape mismatch");
  }
  GradReport r{op, site, 0.0, 0.0, true};
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double abs_err = std::abs(analytic[i] - numeric[i]);
    if (!std::isfinite(abs_err)) {
      r.max_abs_err = r.max_rel_err = kInf;
      continue;
    }
    r.max_abs_err = std::max(r.max_abs_err, abs_err);
    if (abs_err >= tol.abs_floor) {
      r.max_rel_err = std::max(r.max_rel_err, relative_error(analytic[i], numeric[i]));
    }
  }
  r.pass = r.max_rel_err < tol.rel || r.max_abs_err < tol.abs_floor;
  return r;
}

std::vector<GradReport> check_module(Module<double>& module, const std::string& op_name,
                                     Shape input_shape, std::uint64_t seed,
                                     const GradTolerance& tol) {
  Rng rng(mix_seed(seed, op_name));
  module.set_training(true);
  for (Param<double>* p : module.params()) {
    for (auto& v : p->value.values()) v += std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }

  TensorD x;
  bool drawn = false;
  for (int attempt = 0; attempt < kMaxRedraws && !drawn; ++attempt) {
    x = random_tensor<double>(input_shape, rng);
    module.forward(x);
    drawn = module.kink_margin() >= tol.kink_margin;
  }
  if (!drawn) throw OracleError("check_module(" + op_name + "): inputs stay near a kink");

  module.zero_grad();
  const TensorD y = module.forward(x);
  const TensorD proj = random_tensor<double>(y.shape(), rng);
  const TensorD dx = module.backward(proj);

  std::vector<GradReport> reports;
  for (Param<double>* p : module.params()) {
    const TensorD saved = p->value;
    auto loss = [&](const TensorD& theta) {
      p->value = theta;
      return dot(proj, module.forward(x));
    };
    TensorD numeric = fd_gradient(loss, saved, tol.eps);
    p->value = saved;
    reports.push_back(compare_gradients(op_name, p->name, p->grad, numeric, tol));
  }
  auto input_loss = [&](const TensorD& theta) { return dot(proj, module.forward(theta)); };
  reports.push_back(
      compare_gradients(op_name, "input", dx, fd_gradient(input_loss, x, tol.eps), tol));
  return reports;
}

std::vector<GradReport> check_attention(AttentionKind kind, Shape input_shape, GateKind gate,
                                        std::uint64_t seed, const GradTolerance& tol) {
  AttentionOptions opts;
  opts.gate = gate;
  auto module = make_attention<double>(kind, std::string(to_string(kind)), input_shape.c, opts, seed);
  const std::string name =
      std::string(to_string(kind)) + "/" + std::string(to_string(gate)) + input_shape.str();
  return check_module(*module, name, input_shape, seed, tol);
}

std::vector<GradReport> check_backbone(const BackboneDesign& design, int stages,
                                       Shape input_shape, std::uint64_t seed,
                                       const GradTolerance& tol) {
  Backbone<double> backbone(design.truncated(stages), seed);
  const std::string name = "backbone_d" + std::to_string(design.design_id) + "_" +
                           std::to_string(stages) + "stage";
  return check_module(backbone, name, input_shape, seed, tol);
}

std::vector<GradReport> check_operators(std::uint64_t seed, const GradTolerance& tol) {
  const std::vector<Shape> shapes = {Shape{1, 1, 2, 5}, Shape{2, 3, 5, 5}, Shape{1, 16, 2, 2},
                                     Shape{1, 3, 1, 5}, Shape{2, 16, 5, 1}};
  std::map<std::pair<std::string, std::string>, GradReport> acc;
  std::vector<std::pair<std::string, std::string>> order;
  Rng rng(mix_seed(seed, "operators"));
  for (auto factory : op_factories()) {
    for (const Shape& s : shapes) {
      OpCase oc = drawn_case([&](Rng& r) { return factory(s, r); }, rng, tol);
      merge(acc, order, run_case(oc, rng, tol));
    }
  }
  std::vector<GradReport> out;
  for (const auto& key : order) out.push_back(acc.at(key));
  return out;
}

std::vector<GradReport> run_gradcheck_suite(std::uint64_t seed, const GradTolerance& tol) {
  std::vector<GradReport> all = check_operators(seed, tol);
  auto append = [&all](std::vector<GradReport> r) { all.insert(all.end(), r.begin(), r.end()); };
  for (GateKind gate : {GateKind::ResidualTanh, GateKind::SigmoidOriginal}) {
    append(check_attention(AttentionKind::SE, Shape{1, 3, 4, 4}, gate, seed, tol));
    append(check_attention(AttentionKind::SE, Shape{2, 16, 3, 3}, gate, seed, tol));
    append(check_attention(AttentionKind::CBAM, Shape{1, 8, 5, 5}, gate, seed, tol));
    append(check_attention(AttentionKind::CBAM, Shape{2, 3, 4, 4}, gate, seed, tol));
  }
  const BackboneDesign moonnet =
      build_design(kMoonNetDesign, 0.0625, GateKind::ResidualTanh);
  append(check_backbone(moonnet, 2, Shape{1, 3, 8, 8}, seed, tol));
  return all;
}

std::string format_reports(const std::vector<GradReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(34) << "op" << std::setw(34) << "site" << std::right
     << std::setw(13) << "max_rel_err" << std::setw(13) << "max_abs_err" << "  result\n";
  os << std::string(100, '-') << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(34) << r.op_name << std::setw(34) << r.param_site << std::right
       << std::scientific << std::setprecision(3) << std::setw(13) << r.max_rel_err
       << std::setw(13) << r.max_abs_err << "  " << (r.pass ? "PASS" : "FAIL") << '\n';
  }
  const auto passed = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
  os << passed << "/" << reports.size() << " sites passed\n";
  return os.str();
}

bool all_pass(const std::vector<GradReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
}

}  // namespace moonnet
