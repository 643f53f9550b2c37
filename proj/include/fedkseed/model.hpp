#pragma once

// Reference models with flat parameter vectors.
//
// Layout: each dense layer stores its weight matrix row-major (one row per
// output unit) followed by its bias vector; layers are concatenated in
// forward order. Forward passes read parameters strictly in this order,
// which is what lets a loss be evaluated through a perturb::ParamSource.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedkseed/perturb.hpp"

namespace fedkseed {

enum class ModelKind { LinearRegression, LogisticRegression, Mlp };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view name);

// Architecture of a reference model.
//
// linear-regression: one real output, loss 0.5 * (prediction - target)^2.
// logistic-regression: softmax over output_dim >= 2 classes, cross-entropy.
// mlp: tanh hidden layers, softmax cross-entropy output.
struct ModelSpec {
  ModelKind kind = ModelKind::LogisticRegression;
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;

  static ModelSpec linear_regression(std::size_t input_dim);
  static ModelSpec logistic_regression(std::size_t input_dim, std::size_t classes);
  static ModelSpec mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                       std::size_t classes);

  // Throws ConfigError on zero dimensions or kind-specific violations.
  void validate() const;
  bool is_classifier() const noexcept { return kind != ModelKind::LinearRegression; }
  // Layer widths from input to output.
  std::vector<std::size_t> layer_widths() const;
};

// One training example. For classifiers `label` holds the class index.
struct DataInstance {
  std::vector<double> features;
  double label = 0.0;
};

// Model parameters w in R^d. The length is fixed at construction.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t d, double fill = 0.0) : values_(d, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  const std::vector<double>& data() const noexcept { return values_; }

  bool all_finite() const noexcept;
  double max_abs() const noexcept;

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

std::size_t param_count(const ModelSpec& spec);

// Small random initialization (normal, stddev `scale`); zero scale gives
// the all-zero vector.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed, double scale);

// L(w; x) for a single instance.
double evaluate_loss(const ModelSpec& spec, std::span<const double> w, const DataInstance& x);
// L(w'; x) where w' is whatever the source yields (possibly w + scale * z).
double evaluate_loss(const ModelSpec& spec, perturb::ParamSource& params, const DataInstance& x);

// Analytic gradient of L(w; x) with respect to w.
ParamVector exact_gradient(const ModelSpec& spec, std::span<const double> w,
                           const DataInstance& x);

// Predicted class (classifiers) or index 0 (regression).
std::size_t predict_class(const ModelSpec& spec, std::span<const double> w,
                          const DataInstance& x);

struct Evaluation {
  double mean_loss = 0.0;
  // Fraction of correct predictions; NaN for regression models.
  double accuracy = 0.0;
};

Evaluation evaluate_dataset(const ModelSpec& spec, std::span<const double> w,
                            std::span<const DataInstance> data);

}  // namespace fedkseed
