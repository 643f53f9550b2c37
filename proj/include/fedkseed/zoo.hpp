#pragma once

// Zeroth-order gradient estimation along seeded perturbation directions.
//
// Probe losses are evaluated through a perturb::ParamSource, i.e. on the
// lazily generated vector w + scale * z(seed). The caller's w is only read,
// so it is bit-identical after every estimator call, and the auxiliary
// memory per probe is bounded by the perturbation chunk size.

#include <cstdint>
#include <functional>
#include <span>

#include "fedkseed/model.hpp"
#include "fedkseed/perturb.hpp"

namespace fedkseed::zoo {

struct ZooConfig {
  double epsilon = 1e-3;  // perturbation scale
  double eta = 1e-3;      // learning rate

  void validate() const;
};

// Loss of whatever parameter vector the source yields.
using Objective = std::function<double(perturb::ParamSource&)>;

// Objective for one data instance of a reference model. Holds references.
Objective model_objective(const ModelSpec& spec, const DataInstance& x);

// L(w + scale * z(seed)). A zero scale evaluates L(w).
double probe_loss(const Objective& loss, std::span<const double> w, std::uint64_t seed,
                  double scale);

// (L(w + eps z) - L(w - eps z)) / (2 eps).
double scalar_gradient_two_point(const Objective& loss, std::span<const double> w,
                                 std::uint64_t seed, double epsilon);
double scalar_gradient_two_point(const ModelSpec& spec, std::span<const double> w,
                                 const DataInstance& x, std::uint64_t seed, double epsilon);

// (L(w + sign * eps z) - L(w)) / eps with sign = +1 or -1.
double scalar_gradient_one_point(const Objective& loss, std::span<const double> w,
                                 std::uint64_t seed, double epsilon, int sign = +1);
double scalar_gradient_one_point(const ModelSpec& spec, std::span<const double> w,
                                 const DataInstance& x, std::uint64_t seed, double epsilon,
                                 int sign = +1);

// w <- w - eta * scalar_grad * z(seed).
void step_update(std::span<double> w, std::uint64_t seed, double scalar_grad, double eta);

}  // namespace fedkseed::zoo
