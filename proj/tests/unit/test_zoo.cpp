#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fedkseed/error.hpp"
#include "fedkseed/zoo.hpp"
#include "unit/oracles.hpp"

using namespace fedkseed;

namespace {

// L(w) = 0.5 * |w|^2, read through the parameter source.
double half_square(perturb::ParamSource& src) {
  double s = 0.0;
  while (src.remaining() > 0) {
    for (double v : src.next(src.remaining())) s += v * v;
  }
  return 0.5 * s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("ZooConfig validation") {
  CHECK_NOTHROW(zoo::ZooConfig{1e-3, 1e-4}.validate());
  CHECK_THROWS_AS((zoo::ZooConfig{0.0, 1e-4}.validate()), ConfigError);
  CHECK_THROWS_AS((zoo::ZooConfig{1e-3, -1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((zoo::ZooConfig{std::nan(""), 1.0}.validate()), ConfigError);
}

TEST_CASE("two-point estimate is exact on a quadratic") {
  std::mt19937_64 gen(1);
  const auto w = oracle::random_vector(gen, 300);
  const auto z = oracle::full_perturbation(17, w.size());
  const double g = zoo::scalar_gradient_two_point(half_square, w, 17, 1e-3);
  CHECK(g == doctest::Approx(dot(z, w)).epsilon(1e-10));

  const std::vector<double> zero(300, 0.0);
  CHECK(std::abs(zoo::scalar_gradient_two_point(half_square, zero, 17, 1e-3)) <= 1e-12);
}

TEST_CASE("one-point estimate on a quadratic has the closed-form bias") {
  std::mt19937_64 gen(2);
  const auto w = oracle::random_vector(gen, 200);
  const auto z = oracle::full_perturbation(5, w.size());
  const double eps = 1e-2;
  const double expect = dot(z, w) + 0.5 * eps * dot(z, z);
  CHECK(zoo::scalar_gradient_one_point(half_square, w, 5, eps) ==
        doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("two-point equals the mean of opposing one-point estimates") {
  std::mt19937_64 gen(3);
  const ModelSpec specs[] = {ModelSpec::linear_regression(8), ModelSpec::logistic_regression(8, 3),
                             ModelSpec::mlp(6, {5}, 3)};
  std::uniform_real_distribution<double> log_eps(std::log(1e-3), std::log(1e-1));
  double worst = 0.0;
  for (int t = 0; t < 300; ++t) {
    const auto& spec = specs[t % 3];
    const auto w = oracle::random_vector(gen, param_count(spec), 0.5);
    const auto x = oracle::random_instance(gen, spec);
    const std::uint64_t seed = gen();
    const double eps = std::exp(log_eps(gen));
    const double two = zoo::scalar_gradient_two_point(spec, w, x, seed, eps);
    const double plus = zoo::scalar_gradient_one_point(spec, w, x, seed, eps, +1);
    const double minus = zoo::scalar_gradient_one_point(spec, w, x, seed, eps, -1);
    worst = std::max(worst, std::abs(two - 0.5 * (plus - minus)) / (1.0 + std::abs(two)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("estimates track the directional derivative") {
  std::mt19937_64 gen(4);
  const auto spec = ModelSpec::logistic_regression(50, 5);
  const auto w = oracle::random_vector(gen, param_count(spec), 0.1);
  auto x = oracle::random_instance(gen, spec);
  for (double& f : x.features) f *= 0.1;
  const std::uint64_t seed = 2024;
  const auto z = oracle::full_perturbation(seed, w.size());
  const double exact = dot(z, exact_gradient(spec, w, x).data());

  const double eps = 1e-3;
  CHECK(std::abs(zoo::scalar_gradient_two_point(spec, w, x, seed, eps) - exact) <= 5e-5);
  CHECK(std::abs(zoo::scalar_gradient_one_point(spec, w, x, seed, eps) - exact) <=
        1e-2 * eps * dot(z, z));

  // Halving epsilon cuts the two-point error by about four.
  const auto mlp = ModelSpec::mlp(4, {5}, 3);
  const auto wm = oracle::random_vector(gen, param_count(mlp), 0.8);
  const auto xm = oracle::random_instance(gen, mlp);
  const auto zm = oracle::full_perturbation(seed, wm.size());
  const double dm = dot(zm, exact_gradient(mlp, wm, xm).data());
  const double e1 = std::abs(zoo::scalar_gradient_two_point(mlp, wm, xm, seed, 0.02) - dm);
  const double e2 = std::abs(zoo::scalar_gradient_two_point(mlp, wm, xm, seed, 0.01) - dm);
  CHECK(e1 / e2 >= 3.0);
  CHECK(e1 / e2 <= 5.0);
}

TEST_CASE("estimators leave w untouched") {
  std::mt19937_64 gen(5);
  const auto spec = ModelSpec::mlp(5, {4}, 2);
  auto w = oracle::random_vector(gen, param_count(spec));
  const auto before = w;
  const auto x = oracle::random_instance(gen, spec);
  for (int i = 0; i < 10; ++i) {
    (void)zoo::scalar_gradient_two_point(spec, w, x, gen(), 1e-3);
    (void)zoo::scalar_gradient_one_point(spec, w, x, gen(), 1e-3, -1);
  }
  CHECK(w == before);
}

TEST_CASE("non-finite probe losses raise a numerical error with both losses") {
  const std::vector<double> w(10, 1.0);
  zoo::Objective blows_up = [](perturb::ParamSource& src) {
    const double first = src.next(1)[0];
    return first > 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  // z[0] for seed 0 is positive, so +eps blows up and -eps does not (or vice versa).
  const double z0 = perturb::normal_at(0, 0);
  try {
    (void)zoo::scalar_gradient_two_point(blows_up, w, 0, 1e-3);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::isinf(z0 > 0 ? e.loss_plus() : e.loss_minus()));
    CHECK(std::isfinite(z0 > 0 ? e.loss_minus() : e.loss_plus()));
  }
  zoo::Objective nan_loss = [](perturb::ParamSource&) { return std::nan(""); };
  CHECK_THROWS_AS(zoo::scalar_gradient_one_point(nan_loss, w, 0, 1e-3), NumericalError);
}

TEST_CASE("step_update") {
  std::mt19937_64 gen(6);
  const auto w0 = oracle::random_vector(gen, 2000);

  auto w = w0;
  zoo::step_update(w, 3, 0.0, 0.1);
  CHECK(w == w0);

  zoo::step_update(w, 3, 1.7, 0.01);
  CHECK(w == oracle::axpy_full(w0, 3, -0.01 * 1.7));

  auto a = w0;
  auto b = w0;
  zoo::step_update(a, 10, 0.4, 0.05);
  zoo::step_update(a, 20, -1.1, 0.05);
  zoo::step_update(b, 20, -1.1, 0.05);
  zoo::step_update(b, 10, 0.4, 0.05);
  CHECK(oracle::max_abs_diff(a, b) <= 1e-12);
}

TEST_CASE("averaged g*z is an unbiased gradient estimate") {
  std::mt19937_64 gen(7);
  const auto spec = ModelSpec::logistic_regression(4, 3);
  const std::size_t d = param_count(spec);
  const auto w = oracle::random_vector(gen, d, 0.3);
  const auto x = oracle::random_instance(gen, spec);
  const ParamVector truth = exact_gradient(spec, w, x);

  const int n = 100000;
  std::vector<double> sum(d, 0.0);
  std::vector<double> sum_sq(d, 0.0);
  for (int s = 0; s < n; ++s) {
    const auto seed = static_cast<std::uint64_t>(s) + 1000;
    const double g = zoo::scalar_gradient_two_point(spec, w, x, seed, 1e-4);
    for (std::size_t i = 0; i < d; ++i) {
      const double v = g * perturb::normal_at(seed, i);
      sum[i] += v;
      sum_sq[i] += v * v;
    }
  }
  int outside = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double m = sum[i] / n;
    const double se = std::sqrt((sum_sq[i] / n - m * m) / n);
    if (std::abs(m - truth[i]) > 3.0 * se) ++outside;
  }
  CHECK(outside == 0);
}
