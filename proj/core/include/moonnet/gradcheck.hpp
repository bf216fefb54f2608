#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "moonnet/attention.hpp"
#include "moonnet/backbone.hpp"
#include "moonnet/layers.hpp"

namespace moonnet {

struct GradTolerance {
  double eps = 1e-5;
  double rel = 1e-4;
  double abs_floor = 1e-7;
  /// Inputs are redrawn while the forward pass sits closer than this to a
  /// ReLU kink or a max tie.
  double kink_margin = 1e-3;
};

/// Outcome of comparing one analytic gradient against finite differences.
/// max_rel_err is taken over coordinates whose absolute error exceeds the
/// absolute floor, so pass == (max_rel_err < rel || max_abs_err < abs_floor).
struct GradReport {
  std::string op_name;
  std::string param_site;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass = true;
};

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Central differences (f(theta + eps e_i) - f(theta - eps e_i)) / 2 eps.
/// Throws OracleError if f returns a non-finite value.
Tensor<double> fd_gradient(const std::function<double(const Tensor<double>&)>& f,
                           const Tensor<double>& theta, double eps);

GradReport compare_gradients(const std::string& op, const std::string& site,
                             const Tensor<double>& analytic, const Tensor<double>& numeric,
                             const GradTolerance& tol = {});

/// Checks every parameter and the input of `module` on the loss
/// sum(R * module(x)) with a fixed random R. Parameters are perturbed away from
/// their initial values first so zero-initialized projections are exercised.
std::vector<GradReport> check_module(Module<double>& module, const std::string& op_name,
                                     Shape input_shape, std::uint64_t seed,
                                     const GradTolerance& tol = {});

/// Gradcheck of a freshly built SE or CBAM module.
std::vector<GradReport> check_attention(AttentionKind kind, Shape input_shape, GateKind gate,
                                        std::uint64_t seed, const GradTolerance& tol = {});

/// Gradcheck of the first `stages` stages of `design`.
std::vector<GradReport> check_backbone(const BackboneDesign& design, int stages,
                                       Shape input_shape, std::uint64_t seed,
                                       const GradTolerance& tol = {});

/// Every tensor operator over several random shapes, one report per
/// (operator, input) pair.
std::vector<GradReport> check_operators(std::uint64_t seed, const GradTolerance& tol = {});

/// Operators, SE and CBAM under both gates, and a 2-stage MoonNet backbone.
std::vector<GradReport> run_gradcheck_suite(std::uint64_t seed, const GradTolerance& tol = {});

std::string format_reports(const std::vector<GradReport>& reports);
bool all_pass(const std::vector<GradReport>& reports);

}  // namespace moonnet
