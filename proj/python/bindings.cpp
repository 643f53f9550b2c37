#include <map>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fedkseed/data.hpp"
#include "fedkseed/error.hpp"
#include "fedkseed/federation.hpp"
#include "fedkseed/harness.hpp"
#include "fedkseed/model.hpp"
#include "fedkseed/perturb.hpp"
#include "fedkseed/seed_state.hpp"
#include "fedkseed/wire.hpp"
#include "fedkseed/zoo.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace fedkseed;

namespace {

py::bytes to_py(const wire::Bytes& b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

wire::Bytes from_py(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

DataInstance make_instance(std::vector<double> features, double label) {
  return {std::move(features), label};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated zeroth-order tuning with a finite pool of random seeds";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::enum_<ModelKind>(m, "ModelKind")
      .value("LinearRegression", ModelKind::LinearRegression)
      .value("LogisticRegression", ModelKind::LogisticRegression)
      .value("Mlp", ModelKind::Mlp);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_static("linear_regression", &ModelSpec::linear_regression, "input_dim"_a)
      .def_static("logistic_regression", &ModelSpec::logistic_regression, "input_dim"_a, "classes"_a)
      .def_static("mlp", &ModelSpec::mlp, "input_dim"_a, "hidden"_a, "classes"_a)
      .def_readwrite("kind", &ModelSpec::kind)
      .def_readwrite("input_dim", &ModelSpec::input_dim)
      .def_readwrite("hidden_dims", &ModelSpec::hidden_dims)
      .def_readwrite("output_dim", &ModelSpec::output_dim);

  m.def("param_count", &param_count, "spec"_a);
  m.def("evaluate_loss",
        [](const ModelSpec& spec, const std::vector<double>& w, const std::vector<double>& features,
           double label) { return evaluate_loss(spec, w, make_instance(features, label)); },
        "spec"_a, "w"_a, "features"_a, "label"_a);
  m.def("exact_gradient",
        [](const ModelSpec& spec, const std::vector<double>& w, const std::vector<double>& features,
           double label) { return exact_gradient(spec, w, make_instance(features, label)).data(); },
        "spec"_a, "w"_a, "features"_a, "label"_a);

  m.def("perturbation_chunk", &perturb::perturbation_chunk, "seed"_a, "offset"_a, "length"_a);
  m.def("add_scaled_perturbation",
        [](std::vector<double> w, std::uint64_t seed, double scale) {
          perturb::add_scaled_perturbation(w, seed, scale);
          return w;
        },
        "w"_a, "seed"_a, "scale"_a, "Returns w + scale * z(seed).");

  m.def("scalar_gradient_two_point",
        [](const ModelSpec& spec, const std::vector<double>& w, const std::vector<double>& features,
           double label, std::uint64_t seed, double epsilon) {
          return zoo::scalar_gradient_two_point(spec, w, make_instance(features, label), seed, epsilon);
        },
        "spec"_a, "w"_a, "features"_a, "label"_a, "seed"_a, "epsilon"_a);
  m.def("scalar_gradient_one_point",
        [](const ModelSpec& spec, const std::vector<double>& w, const std::vector<double>& features,
           double label, std::uint64_t seed, double epsilon, int sign) {
          return zoo::scalar_gradient_one_point(spec, w, make_instance(features, label), seed, epsilon, sign);
        },
        "spec"_a, "w"_a, "features"_a, "label"_a, "seed"_a, "epsilon"_a, "sign"_a = 1);
  m.def("step_update",
        [](std::vector<double> w, std::uint64_t seed, double grad, double eta) {
          zoo::step_update(w, seed, grad, eta);
          return w;
        },
        "w"_a, "seed"_a, "scalar_grad"_a, "eta"_a, "Returns w - eta * scalar_grad * z(seed).");

  py::class_<SeedPool>(m, "SeedPool")
      .def_property_readonly("master_seed", &SeedPool::master_seed)
      .def_property_readonly("seeds", [](const SeedPool& p) {
        return std::vector<std::uint32_t>(p.seeds().begin(), p.seeds().end());
      })
      .def("slot_of", &SeedPool::slot_of)
      .def("__len__", &SeedPool::size);
  m.def("init_pool", &init_pool, "master_seed"_a, "k"_a);

  py::class_<GradAccumulator>(m, "GradAccumulator")
      .def(py::init<std::size_t>(), "k"_a)
      .def_readwrite("slots", &GradAccumulator::slots)
      .def_readwrite("sample_counts", &GradAccumulator::sample_counts)
      .def_readwrite("abs_sums", &GradAccumulator::abs_sums);

  m.def("accumulate",
        [](GradAccumulator& acc, const std::vector<std::pair<std::uint32_t, double>>& history,
           double weight, const SeedPool& pool) {
          GradHistory h;
          for (const auto& [s, g] : history) h.push_back({s, g});
          accumulate(acc, h, weight, pool);
        },
        "acc"_a, "history"_a, "weight"_a, "pool"_a);
  m.def("reconstruct_model",
        [](const std::vector<double>& w0, const SeedPool& pool, const GradAccumulator& acc, double eta) {
          return reconstruct_model(ParamVector(w0), pool, acc, eta).data();
        },
        "w0"_a, "pool"_a, "acc"_a, "eta"_a);
  m.def("update_probabilities", [](const GradAccumulator& acc) { return update_probabilities(acc).p; },
        "acc"_a);
  m.def("subspace_coefficients", &subspace_coefficients, "acc"_a, "eta"_a);

  m.def("encode_downlink",
        [](std::uint32_t master_seed, std::vector<float> acc, std::optional<std::vector<float>> probs) {
          return to_py(wire::encode_downlink({master_seed, std::move(acc), std::move(probs)}));
        },
        "master_seed"_a, "accumulator"_a, "probabilities"_a = py::none());
  m.def("decode_downlink",
        [](const py::bytes& b, std::size_t k, bool pro) {
          const wire::DownlinkMsg msg = wire::decode_downlink(from_py(b), k, pro);
          return py::make_tuple(msg.master_seed, msg.accumulator, msg.probabilities);
        },
        "data"_a, "k"_a, "pro"_a);
  m.def("encode_uplink",
        [](const std::vector<std::pair<std::uint32_t, float>>& entries) {
          wire::UplinkMsg msg;
          for (const auto& [s, g] : entries) msg.entries.push_back({s, g});
          return to_py(wire::encode_uplink(msg));
        },
        "entries"_a);
  m.def("decode_uplink",
        [](const py::bytes& b) {
          std::vector<std::pair<std::uint32_t, float>> out;
          for (const auto& e : wire::decode_uplink(from_py(b)).entries) out.emplace_back(e.seed, e.grad);
          return out;
        },
        "data"_a);
  m.def("round_bytes",
        [](std::size_t k, std::size_t tau, bool pro) {
          const auto b = wire::round_bytes(k, tau, pro);
          return py::make_tuple(b.down, b.up, b.total);
        },
        "k"_a, "tau"_a, "pro"_a);

  m.def("dirichlet_partition",
        [](const std::vector<std::size_t>& labels, std::size_t n, double alpha, std::uint64_t seed) {
          return data::dirichlet_partition(labels, {n, alpha, seed});
        },
        "labels"_a, "num_clients"_a, "alpha"_a, "seed"_a);
  m.def("heterogeneity_index", &data::heterogeneity_index, "assignment"_a, "labels"_a);

  m.def("replay_cost_model",
        [](std::size_t m_clients, std::size_t tau, std::size_t rounds, std::optional<std::size_t> k) {
          return harness::replay_cost_model({m_clients, tau, rounds, k});
        },
        "m"_a, "tau"_a, "rounds"_a, "k"_a = py::none());

  m.def("run_experiment",
        [](const std::map<std::string, std::string>& settings) {
          harness::ExperimentConfig cfg = harness::default_config();
          for (const auto& [key, value] : settings) harness::apply_setting(cfg, key, value);
          const auto out = harness::run_experiment(cfg);
          py::list runs;
          for (const auto& r : out.runs) {
            runs.append(py::dict("mode"_a = std::string(harness::to_string(r.mode)), "K"_a = r.k,
                                 "rep"_a = r.repetition, "initial_loss"_a = r.initial_loss,
                                 "final_loss"_a = r.final_loss()));
          }
          return py::make_tuple(runs, out.summary);
        },
        "settings"_a, "Runs an experiment from key=value settings on top of the defaults.");

  m.def("verify_fixtures", [](double tolerance_scale) {
    harness::VerifyOptions options;
    options.tolerance_scale = tolerance_scale;
    py::list out;
    for (const auto& c : harness::verify_fixtures(options)) out.append(py::make_tuple(c.name, c.passed, c.detail));
    return out;
  }, "tolerance_scale"_a = 1.0);
}
