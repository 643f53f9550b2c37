#include "fedkseed/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedkseed/error.hpp"
#include "fedkseed/rng.hpp"

namespace fedkseed {
namespace {

void check_instance(const ModelSpec& spec, std::size_t d, const DataInstance& x) {
  if (d != param_count(spec)) {
    throw ContractViolation("parameter length " + std::to_string(d) + " != model size " +
                            std::to_string(param_count(spec)));
  }
  if (x.features.size() != spec.input_dim) {
    throw ContractViolation("instance has " + std::to_string(x.features.size()) +
                            " features, model expects " + std::to_string(spec.input_dim));
  }
}

std::size_t class_index(const ModelSpec& spec, const DataInstance& x) {
  const double label = x.label;
  if (!(label >= 0.0) || label != std::floor(label) ||
      label >= static_cast<double>(spec.output_dim)) {
    throw ContractViolation("class label out of range: " + std::to_string(label));
  }
  return static_cast<std::size_t>(label);
}

// out = W * in + b, reading W row by row and then b from the source.
void dense(perturb::ParamSource& src, std::span<const double> in, std::span<double> out) {
  for (double& o : out) {
    double acc = 0.0;
    std::size_t i = 0;
    while (i < in.size()) {
      auto run = src.next(in.size() - i);
      for (std::size_t k = 0; k < run.size(); ++k) acc += run[k] * in[i + k];
      i += run.size();
    }
    o = acc;
  }
  std::size_t o = 0;
  while (o < out.size()) {
    auto run = src.next(out.size() - o);
    for (std::size_t k = 0; k < run.size(); ++k) out[o + k] += run[k];
    o += run.size();
  }
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Forward pass through all layers; returns output-layer values.
std::vector<double> forward(const ModelSpec& spec, perturb::ParamSource& src,
                            const DataInstance& x) {
  std::span<const double> in = x.features;
  std::vector<double> current;
  std::vector<double> next;
  for (std::size_t width : spec.hidden_dims) {
    next.assign(width, 0.0);
    dense(src, in, next);
    for (double& v : next) v = std::tanh(v);
    current.swap(next);
    in = current;
  }
  std::vector<double> out(spec.output_dim);
  dense(src, in, out);
  return out;
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::LinearRegression: return "linear-regression";
    case ModelKind::LogisticRegression: return "logistic-regression";
    case ModelKind::Mlp: return "mlp";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "linear-regression") return ModelKind::LinearRegression;
  if (name == "logistic-regression") return ModelKind::LogisticRegression;
  if (name == "mlp") return ModelKind::Mlp;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

ModelSpec ModelSpec::linear_regression(std::size_t input_dim) {
  return {ModelKind::LinearRegression, input_dim, {}, 1};
}

ModelSpec ModelSpec::logistic_regression(std::size_t input_dim, std::size_t classes) {
  return {ModelKind::LogisticRegression, input_dim, {}, classes};
}

ModelSpec ModelSpec::mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                         std::size_t classes) {
  return {ModelKind::Mlp, input_dim, std::move(hidden), classes};
}

void ModelSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("model dimensions must be positive");
  switch (kind) {
    case ModelKind::LinearRegression:
      if (output_dim != 1) throw ConfigError("linear-regression has exactly one output");
      if (!hidden_dims.empty()) throw ConfigError("linear-regression has no hidden layers");
      break;
    case ModelKind::LogisticRegression:
      if (output_dim < 2) throw ConfigError("logistic-regression needs at least 2 classes");
      if (!hidden_dims.empty()) throw ConfigError("logistic-regression has no hidden layers");
      break;
    case ModelKind::Mlp:
      if (output_dim < 2) throw ConfigError("mlp needs at least 2 classes");
      if (hidden_dims.empty()) throw ConfigError("mlp needs at least one hidden layer");
      for (std::size_t h : hidden_dims) {
        if (h == 0) throw ConfigError("mlp hidden widths must be positive");
      }
      break;
  }
}

std::vector<std::size_t> ModelSpec::layer_widths() const {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), hidden_dims.begin(), hidden_dims.end());
  widths.push_back(output_dim);
  return widths;
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ParamVector::max_abs() const noexcept {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

std::size_t param_count(const ModelSpec& spec) {
  spec.validate();
  std::size_t d = 0;
  std::size_t in = spec.input_dim;
  for (std::size_t h : spec.hidden_dims) {
    d += in * h + h;
    in = h;
  }
  return d + in * spec.output_dim + spec.output_dim;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed, double scale) {
  ParamVector w(param_count(spec));
  if (scale == 0.0) return w;
  Rng rng(seed);
  for (double& v : w.values()) v = scale * rng.normal();
  return w;
}

double evaluate_loss(const ModelSpec& spec, std::span<const double> w, const DataInstance& x) {
  perturb::ParamSource src(w);
  return evaluate_loss(spec, src, x);
}

double evaluate_loss(const ModelSpec& spec, perturb::ParamSource& params, const DataInstance& x) {
  check_instance(spec, params.size(), x);
  if (params.cursor() != 0) throw ContractViolation("evaluate_loss: parameter source already read");
  const std::vector<double> out = forward(spec, params, x);
  if (spec.kind == ModelKind::LinearRegression) {
    const double r = out[0] - x.label;
    return 0.5 * r * r;
  }
  const std::size_t y = class_index(spec, x);
  return log_sum_exp(out) - out[y];
}

ParamVector exact_gradient(const ModelSpec& spec, std::span<const double> w,
                           const DataInstance& x) {
  check_instance(spec, w.size(), x);
  const std::vector<std::size_t> widths = spec.layer_widths();
  const std::size_t layers = widths.size() - 1;

  // Forward, keeping every activation.
  std::vector<std::vector<double>> act(layers + 1);
  std::vector<std::size_t> offsets(layers);
  act[0] = x.features;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const double* W = w.data() + offset;
    const double* b = W + in * out;
    act[l + 1].assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += W[o * in + i] * act[l][i];
      acc += b[o];
      act[l + 1][o] = (l + 1 < layers) ? std::tanh(acc) : acc;
    }
    offset += in * out + out;
  }

  // Output delta.
  std::vector<double> delta = act[layers];
  if (spec.kind == ModelKind::LinearRegression) {
    delta[0] = act[layers][0] - x.label;
  } else {
    const double lse = log_sum_exp(act[layers]);
    for (double& v : delta) v = std::exp(v - lse);
    delta[class_index(spec, x)] -= 1.0;
  }

  ParamVector grad(w.size());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    const double* W = w.data() + offsets[l];
    double* gW = grad.values().data() + offsets[l];
    double* gb = gW + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) gW[o * in + i] = delta[o] * act[l][i];
      gb[o] = delta[o];
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) prev[i] += W[o * in + i] * delta[o];
    }
    for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - act[l][i] * act[l][i];
    delta.swap(prev);
  }
  return grad;
}

std::size_t predict_class(const ModelSpec& spec, std::span<const double> w,
                          const DataInstance& x) {
  perturb::ParamSource src(w);
  check_instance(spec, w.size(), x);
  const std::vector<double> out = forward(spec, src, x);
  return static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
}

Evaluation evaluate_dataset(const ModelSpec& spec, std::span<const double> w,
                            std::span<const DataInstance> data) {
  if (data.empty()) throw ContractViolation("evaluate_dataset: empty dataset");
  double loss = 0.0;
  std::size_t correct = 0;
  for (const DataInstance& x : data) {
    perturb::ParamSource src(w);
    check_instance(spec, w.size(), x);
    const std::vector<double> out = forward(spec, src, x);
    if (spec.kind == ModelKind::LinearRegression) {
      const double r = out[0] - x.label;
      loss += 0.5 * r * r;
    } else {
      const std::size_t y = class_index(spec, x);
      loss += log_sum_exp(out) - out[y];
      const auto pred = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
      if (pred == y) ++correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, spec.is_classifier() ? static_cast<double>(correct) / n
                                         : std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace fedkseed
