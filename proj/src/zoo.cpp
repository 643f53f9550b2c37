#include "fedkseed/zoo.hpp"

#include <cmath>
#include <sstream>

#include "fedkseed/error.hpp"

namespace fedkseed::zoo {
namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ContractViolation("epsilon must be positive and finite");
  }
}

[[noreturn]] void non_finite(const char* what, std::uint64_t seed, double lp, double lm) {
  std::ostringstream msg;
  msg << what << ": non-finite probe loss for seed " << seed << " (L+ = " << lp
      << ", L- = " << lm << ")";
  throw NumericalError(msg.str(), lp, lm);
}

}  // namespace

void ZooConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be > 0");
}

Objective model_objective(const ModelSpec& spec, const DataInstance& x) {
  return [&spec, &x](perturb::ParamSource& params) { return evaluate_loss(spec, params, x); };
}

double probe_loss(const Objective& loss, std::span<const double> w, std::uint64_t seed,
                  double scale) {
  perturb::ParamSource params(w, seed, scale);
  return loss(params);
}

double scalar_gradient_two_point(const Objective& loss, std::span<const double> w,
                                 std::uint64_t seed, double epsilon) {
  check_epsilon(epsilon);
  const double plus = probe_loss(loss, w, seed, epsilon);
  const double minus = probe_loss(loss, w, seed, -epsilon);
  if (!std::isfinite(plus) || !std::isfinite(minus)) non_finite("two-point", seed, plus, minus);
  const double g = (plus - minus) / (2.0 * epsilon);
  if (!std::isfinite(g)) non_finite("two-point", seed, plus, minus);
  return g;
}

double scalar_gradient_two_point(const ModelSpec& spec, std::span<const double> w,
                                 const DataInstance& x, std::uint64_t seed, double epsilon) {
  return scalar_gradient_two_point(model_objective(spec, x), w, seed, epsilon);
}

double scalar_gradient_one_point(const Objective& loss, std::span<const double> w,
                                 std::uint64_t seed, double epsilon, int sign) {
  check_epsilon(epsilon);
  if (sign != 1 && sign != -1) throw ContractViolation("one-point sign must be +1 or -1");
  const double shifted = probe_loss(loss, w, seed, sign * epsilon);
  const double base = probe_loss(loss, w, seed, 0.0);
  if (!std::isfinite(shifted) || !std::isfinite(base)) non_finite("one-point", seed, shifted, base);
  const double g = (shifted - base) / epsilon;
  if (!std::isfinite(g)) non_finite("one-point", seed, shifted, base);
  return g;
}

double scalar_gradient_one_point(const ModelSpec& spec, std::span<const double> w,
                                 const DataInstance& x, std::uint64_t seed, double epsilon,
                                 int sign) {
  return scalar_gradient_one_point(model_objective(spec, x), w, seed, epsilon, sign);
}

void step_update(std::span<double> w, std::uint64_t seed, double scalar_grad, double eta) {
  if (!std::isfinite(scalar_grad)) throw ContractViolation("step_update: non-finite gradient");
  perturb::add_scaled_perturbation(w, seed, -eta * scalar_grad);
}

}  // namespace fedkseed::zoo
