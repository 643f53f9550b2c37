#include "fedkseed/harness.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fedkseed/error.hpp"
#include "fedkseed/perturb.hpp"
#include "fedkseed/seed_state.hpp"
#include "fedkseed/stats.hpp"
#include "fedkseed/wire.hpp"
#include "fedkseed/zoo.hpp"

namespace fedkseed::harness {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("'" + std::string(key) + "' expects an unsigned integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double out = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(out)) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("'" + std::string(key) + "' expects a boolean, got '" + std::string(value) + "'");
}

std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  std::stringstream ss{std::string(value)};
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw ConfigError("'" + std::string(key) + "' expects a comma-separated list");
  return out;
}

bool uses_seed_protocol(Mode mode) { return mode == Mode::FedKSeed || mode == Mode::FedKSeedPro; }

RoundRow to_row(const RoundReport& r, Mode mode, std::size_t k, double alpha) {
  return {r.round,          std::string(to_string(mode)), k, alpha, r.global_test_loss,
          r.global_test_accuracy, r.bytes_down, r.bytes_up, r.sync_steps, r.wall_ms};
}

std::string run_file_name(Mode mode, std::size_t k, std::size_t rep) {
  std::ostringstream name;
  name << to_string(mode);
  if (uses_seed_protocol(mode)) name << "_K" << k;
  name << "_rep" << rep << ".csv";
  return name.str();
}

nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["mode"] = to_string(cfg.mode);
  j["model"] = to_string(cfg.model.kind);
  j["input_dim"] = cfg.model.input_dim;
  j["hidden"] = cfg.model.hidden_dims;
  j["classes"] = cfg.model.output_dim;
  j["d"] = param_count(cfg.model);
  j["n_instances"] = cfg.synth.n_instances;
  j["class_separation"] = cfg.synth.class_separation;
  j["data_seed"] = cfg.synth.seed;
  j["num_clients"] = cfg.fl.num_clients;
  j["alpha"] = cfg.alpha;
  j["participation"] = cfg.fl.participation_ratio;
  j["tau"] = cfg.fl.tau;
  j["rounds"] = cfg.fl.rounds;
  j["K"] = cfg.fl.k;
  j["epsilon"] = cfg.fl.zoo.epsilon;
  j["eta"] = cfg.fl.zoo.eta;
  j["seed"] = cfg.fl.master_seed;
  j["reps"] = cfg.repetitions;
  j["k_values"] = cfg.k_values;
  j["bp_lr"] = cfg.bp_learning_rate;
  j["feature_shift"] = cfg.feature_shift;
  j["reset_psi"] = cfg.fl.reset_psi_each_round;
  return j;
}

void check(std::vector<FixtureCheck>& out, std::string name, bool passed, std::string detail) {
  out.push_back({std::move(name), passed, std::move(detail)});
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

FixtureCheck check_prng_golden(const std::filesystem::path& dir) {
  FixtureCheck result{"prng_golden", false, ""};
  std::ifstream in(dir / "prng_golden.txt");
  if (!in) {
    result.detail = "missing " + (dir / "prng_golden.txt").string();
    return result;
  }
  std::string line;
  std::size_t lines = 0;
  std::size_t mismatches = 0;
  std::string first_bad;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::uint64_t seed = 0;
    std::size_t index = 0;
    std::string hex;
    if (!(fields >> seed >> index >> hex) || hex.size() != 16) {
      result.detail = "malformed line '" + line + "'";
      return result;
    }
    ++lines;
    const auto bits = std::bit_cast<std::uint64_t>(perturb::normal_at(seed, index));
    if (hex64(bits) != hex) {
      if (mismatches++ == 0) first_bad = "seed " + std::to_string(seed) + " index " + std::to_string(index);
    }
  }
  const std::size_t expected = prng_golden_points().size();
  result.passed = mismatches == 0 && lines == expected;
  result.detail = std::to_string(lines) + " values checked, " + std::to_string(mismatches) + " mismatches";
  if (lines != expected) result.detail += " (expected " + std::to_string(expected) + " lines)";
  if (!first_bad.empty()) result.detail += "; first mismatch at " + first_bad;
  return result;
}

FixtureCheck check_wire_golden(const std::filesystem::path& dir) {
  FixtureCheck result{"wire_golden", false, ""};
  std::ifstream in(dir / "wire_golden.txt");
  if (!in) {
    result.detail = "missing " + (dir / "wire_golden.txt").string();
    return result;
  }
  std::vector<std::pair<std::string, std::string>> golden;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    std::string name;
    std::string hex;
    if (!(fields >> name >> hex)) {
      result.detail = "malformed line '" + line + "'";
      return result;
    }
    golden.emplace_back(name, hex);
  }
  const auto reference = wire_reference_messages();
  if (golden.size() != reference.size()) {
    result.detail = "expected " + std::to_string(reference.size()) + " messages, found " +
                    std::to_string(golden.size());
    return result;
  }
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (golden[i].first != reference[i].first || golden[i].second != wire::to_hex(reference[i].second)) {
      result.detail = "mismatch in message '" + reference[i].first + "'";
      return result;
    }
  }
  result.passed = true;
  result.detail = std::to_string(reference.size()) + " messages match";
  return result;
}

}  // namespace

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::FedKSeed: return "fedkseed";
    case Mode::FedKSeedPro: return "fedkseed-pro";
    case Mode::FedAvgBp: return "fedavg-bp";
    case Mode::FedZo: return "fedzo";
    case Mode::CostModel: return "cost-model";
    case Mode::KSweep: return "k-sweep";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::FedKSeed, Mode::FedKSeedPro, Mode::FedAvgBp, Mode::FedZo, Mode::CostModel,
                 Mode::KSweep}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

std::size_t replay_cost_model(const CostModelQuery& q) {
  const std::size_t replay = q.tau * q.rounds * q.m;
  if (!q.k) return replay;
  return std::min(*q.k, replay);
}

void ExperimentConfig::validate() const {
  model.validate();
  if (mode != Mode::CostModel) {
    fl.validate();
    synth.validate();
    if (synth.input_dim != model.input_dim) throw ConfigError("synthetic input_dim != model input_dim");
    if (model.is_classifier() && synth.n_classes != model.output_dim) {
      throw ConfigError("synthetic class count != model classes");
    }
    if (!model.is_classifier()) throw ConfigError("experiments need a classifier model");
    data::PartitionSpec{fl.num_clients, alpha, 0}.validate();
    if (repetitions == 0) throw ConfigError("reps must be >= 1");
    if (mode == Mode::KSweep && k_values.empty()) throw ConfigError("k-sweep needs k_values");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
  }
  if (cost.m == 0 || cost.tau == 0) throw ConfigError("cost model needs m, tau >= 1");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  // 200 x 5 weights = 1000 parameters. Separation is large relative to the
  // 199 unit-variance noise dims so per-seed gradient magnitudes carry signal.
  cfg.model = ModelSpec::logistic_regression(199, 5);
  cfg.synth = {5000, 5, 199, 20.0, 1};
  cfg.fl.num_clients = 50;
  cfg.fl.participation_ratio = 0.05;
  cfg.fl.tau = 50;
  cfg.fl.rounds = 40;
  cfg.fl.k = 512;
  cfg.fl.zoo = {1e-3, 3e-5};
  cfg.fl.master_seed = 7;
  cfg.alpha = 0.5;
  return cfg;
}

void apply_setting(ExperimentConfig& cfg, std::string_view raw_key, std::string_view raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "model") cfg.model.kind = parse_model_kind(value);
  else if (key == "input_dim") cfg.model.input_dim = cfg.synth.input_dim = parse_size(key, value);
  else if (key == "classes") cfg.model.output_dim = cfg.synth.n_classes = parse_size(key, value);
  else if (key == "hidden") cfg.model.hidden_dims = value.empty() ? std::vector<std::size_t>{} : parse_size_list(key, value);
  else if (key == "n_instances") cfg.synth.n_instances = parse_size(key, value);
  else if (key == "class_separation") cfg.synth.class_separation = parse_double(key, value);
  else if (key == "data_seed") cfg.synth.seed = parse_u64(key, value);
  else if (key == "num_clients" || key == "N") cfg.fl.num_clients = parse_size(key, value);
  else if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "participation") cfg.fl.participation_ratio = parse_double(key, value);
  else if (key == "tau") cfg.fl.tau = parse_size(key, value);
  else if (key == "rounds") cfg.fl.rounds = parse_size(key, value);
  else if (key == "K") cfg.fl.k = parse_size(key, value);
  else if (key == "epsilon") cfg.fl.zoo.epsilon = parse_double(key, value);
  else if (key == "eta") cfg.fl.zoo.eta = parse_double(key, value);
  else if (key == "seed") cfg.fl.master_seed = parse_u64(key, value);
  else if (key == "reset_psi") cfg.fl.reset_psi_each_round = parse_bool(key, value);
  else if (key == "feature_shift") cfg.feature_shift = parse_double(key, value);
  else if (key == "init_scale") cfg.init_scale = parse_double(key, value);
  else if (key == "bp_lr") cfg.bp_learning_rate = parse_double(key, value);
  else if (key == "fedzo_estimator") {
    if (value == "one-point") cfg.fedzo_estimator = ZoEstimator::OnePoint;
    else if (value == "two-point") cfg.fedzo_estimator = ZoEstimator::TwoPoint;
    else throw ConfigError("fedzo_estimator must be one-point or two-point");
  } else if (key == "k_values") cfg.k_values = parse_size_list(key, value);
  else if (key == "sweep_pro") cfg.sweep_pro = parse_bool(key, value);
  else if (key == "reps") cfg.repetitions = parse_size(key, value);
  else if (key == "out") cfg.output_dir = value;
  else if (key == "dump_data") cfg.dump_data = parse_bool(key, value);
  else if (key == "cost_m") cfg.cost.m = parse_size(key, value);
  else if (key == "cost_tau") cfg.cost.tau = parse_size(key, value);
  else if (key == "cost_rounds") cfg.cost.rounds = parse_size(key, value);
  else if (key == "cost_K") cfg.cost.k = value.empty() ? std::nullopt : std::optional<std::size_t>(parse_size(key, value));
  else throw ConfigError("unknown setting '" + key + "'");
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    apply_setting(base, std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
  }
  return base;
}

Scenario build_scenario(const ExperimentConfig& cfg, std::size_t rep) {
  Scenario s;
  data::SynthSpec synth = cfg.synth;
  synth.seed = derive_seed(cfg.synth.seed, {rep});
  s.dataset = data::generate_synthetic(synth);
  const auto labels = data::class_labels(s.dataset.train);
  s.assignment = data::dirichlet_partition(
      labels, {cfg.fl.num_clients, cfg.alpha, derive_seed(cfg.synth.seed, {rep, 0xa1fa})});
  auto per_client = data::split_by_client(s.dataset.train, s.assignment, cfg.fl.num_clients);
  if (cfg.feature_shift > 0.0) {
    data::apply_client_shift(per_client, cfg.feature_shift, derive_seed(cfg.synth.seed, {rep, 0x5f}));
  }
  s.clients.resize(cfg.fl.num_clients);
  for (std::size_t i = 0; i < per_client.size(); ++i) {
    s.clients[i].id = i;
    s.clients[i].dataset = std::move(per_client[i]);
  }
  s.test_set = s.dataset.test;
  s.w0 = init_params(cfg.model, derive_seed(cfg.fl.master_seed, {rep, 0x1417}), cfg.init_scale);
  return s;
}

RunResult run_single(const ExperimentConfig& cfg, Mode mode, std::size_t k, std::size_t rep) {
  const Scenario s = build_scenario(cfg, rep);
  FLConfig fl = cfg.fl;
  fl.k = k;
  fl.pro_mode = mode == Mode::FedKSeedPro;
  fl.master_seed = derive_seed(cfg.fl.master_seed, {rep});

  RunResult out;
  out.mode = mode;
  out.k = k;
  out.repetition = rep;
  if (uses_seed_protocol(mode)) {
    Federation fed(cfg.model, s.w0, fl, s.clients, s.test_set);
    const Evaluation initial = fed.evaluate();
    out.initial_loss = initial.mean_loss;
    out.initial_accuracy = initial.accuracy;
    for (std::size_t r = 1; r <= fl.rounds; ++r) {
      out.rows.push_back(to_row(fed.run_round(r), mode, k, cfg.alpha));
    }
    out.final_slots = fed.accumulator().slots;
    if (fl.pro_mode) out.final_probabilities = fed.probabilities().p;
    return out;
  }
  BaselineResult base;
  if (mode == Mode::FedAvgBp) {
    base = run_baseline_fedavg_bp(cfg.model, s.w0, s.clients, s.test_set, fl, cfg.bp_learning_rate);
  } else if (mode == Mode::FedZo) {
    base = run_baseline_fedzo(cfg.model, s.w0, s.clients, s.test_set, fl, cfg.fedzo_estimator);
  } else {
    throw ConfigError("run_single: mode '" + std::string(to_string(mode)) + "' is not a training mode");
  }
  out.initial_loss = base.initial.mean_loss;
  out.initial_accuracy = base.initial.accuracy;
  for (const RoundReport& r : base.rounds) out.rows.push_back(to_row(r, mode, k, cfg.alpha));
  return out;
}

std::string rounds_csv_header() {
  return "round,mode,K,alpha,test_loss,test_accuracy,bytes_down,bytes_up,sync_steps,wall_ms";
}

void write_rounds_csv(const std::filesystem::path& path, const std::vector<RoundRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << rounds_csv_header() << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const RoundRow& r : rows) {
    out << r.round << ',' << r.mode << ',' << r.k << ',' << r.alpha << ',' << r.test_loss << ','
        << r.test_accuracy << ',' << r.bytes_down << ',' << r.bytes_up << ',' << r.sync_steps << ','
        << std::fixed << std::setprecision(3) << r.wall_ms << std::defaultfloat
        << std::setprecision(std::numeric_limits<double>::max_digits10) << '\n';
  }
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  ExperimentOutput out;
  nlohmann::json summary;
  summary["config"] = config_json(cfg);

  if (cfg.mode == Mode::CostModel) {
    const auto path = cfg.output_dir / "cost_model.csv";
    std::ofstream csv(path);
    if (!csv) throw Error("cannot write " + path.string());
    csv << "round,infinite_seed_steps,k_seed_steps\n";
    for (std::size_t r = 0; r <= cfg.cost.rounds; ++r) {
      CostModelQuery q = cfg.cost;
      q.rounds = r;
      const std::size_t infinite = replay_cost_model({q.m, q.tau, r, std::nullopt});
      csv << r << ',' << infinite << ',' << (q.k ? std::to_string(replay_cost_model(q)) : "") << '\n';
    }
    out.files.push_back(path);
    summary["m"] = cfg.cost.m;
    summary["tau"] = cfg.cost.tau;
    summary["rounds"] = cfg.cost.rounds;
    summary["infinite_seed_steps"] = replay_cost_model({cfg.cost.m, cfg.cost.tau, cfg.cost.rounds, std::nullopt});
    if (cfg.cost.k) {
      summary["K"] = *cfg.cost.k;
      summary["k_seed_steps"] = replay_cost_model(cfg.cost);
    }
  } else {
    std::vector<std::pair<Mode, std::size_t>> points;
    if (cfg.mode == Mode::KSweep) {
      for (std::size_t k : cfg.k_values) points.emplace_back(cfg.sweep_pro ? Mode::FedKSeedPro : Mode::FedKSeed, k);
    } else {
      points.emplace_back(cfg.mode, cfg.fl.k);
    }
    if (cfg.dump_data) {
      for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        const Scenario s = build_scenario(cfg, rep);
        const std::string tag = "_rep" + std::to_string(rep) + ".csv";
        data::save_dataset_csv(cfg.output_dir / ("train" + tag), s.dataset.train);
        data::save_dataset_csv(cfg.output_dir / ("test" + tag), s.dataset.test);
        data::save_partition_csv(cfg.output_dir / ("partition" + tag), s.assignment);
      }
    }
    nlohmann::json runs = nlohmann::json::array();
    nlohmann::json by_k = nlohmann::json::object();
    for (const auto& [mode, k] : points) {
      std::vector<double> finals;
      std::vector<double> initials;
      for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
        RunResult run = run_single(cfg, mode, k, rep);
        const auto path = cfg.output_dir / run_file_name(mode, k, rep);
        write_rounds_csv(path, run.rows);
        out.files.push_back(path);
        finals.push_back(run.final_loss());
        initials.push_back(run.initial_loss);
        nlohmann::json j;
        j["mode"] = to_string(mode);
        j["K"] = k;
        j["rep"] = rep;
        j["csv"] = path.filename().string();
        j["initial_loss"] = run.initial_loss;
        j["initial_accuracy"] = run.initial_accuracy;
        j["final_loss"] = run.final_loss();
        j["final_accuracy"] = run.rows.empty() ? run.initial_accuracy : run.rows.back().test_accuracy;
        if (uses_seed_protocol(mode)) {
          j["final_accumulator"] = run.final_slots;
          if (!run.final_probabilities.empty()) j["final_probabilities"] = run.final_probabilities;
        }
        runs.push_back(std::move(j));
        out.runs.push_back(std::move(run));
      }
      nlohmann::json point;
      point["mode"] = to_string(mode);
      point["initial_loss_mean"] = stats::mean(initials);
      point["final_loss_mean"] = stats::mean(finals);
      point["final_loss_stddev"] = stats::stddev(finals);
      point["final_losses"] = finals;
      by_k[std::to_string(k)] = point;
    }
    summary["runs"] = runs;
    summary["by_K"] = by_k;
    if (points.size() == 1) {
      const auto& p = by_k[std::to_string(points.front().second)];
      summary["final_loss_mean"] = p["final_loss_mean"];
      summary["final_loss_stddev"] = p["final_loss_stddev"];
    }
  }
  out.summary = cfg.output_dir / "summary.json";
  std::ofstream js(out.summary);
  if (!js) throw Error("cannot write " + out.summary.string());
  js << summary.dump(2) << '\n';
  return out;
}

std::vector<std::pair<std::uint64_t, std::size_t>> prng_golden_points() {
  std::vector<std::pair<std::uint64_t, std::size_t>> points;
  for (std::uint64_t seed : {0ULL, 1ULL, 0xFFFFFFFFULL, 1ULL << 63}) {
    for (std::size_t i = 0; i < 16; ++i) points.emplace_back(seed, i);
  }
  return points;
}

std::vector<std::pair<std::string, wire::Bytes>> wire_reference_messages() {
  wire::DownlinkMsg down;
  down.master_seed = 0xDEADBEEF;
  down.accumulator = {0.5F, -1.25F, 3.0F, 0.0F};
  wire::DownlinkMsg pro = down;
  pro.probabilities = std::vector<float>{0.125F, 0.25F, 0.375F, 0.25F};
  wire::UplinkMsg up;
  up.entries = {{7U, 1.5F}, {0xFFFFFFFFU, -0.0625F}, {123456789U, 2.0F}};
  return {{"downlink_fedkseed", wire::encode_downlink(down)},
          {"downlink_fedkseed_pro", wire::encode_downlink(pro)},
          {"uplink", wire::encode_uplink(up)}};
}

std::vector<FixtureCheck> verify_fixtures(const VerifyOptions& options) {
  std::vector<FixtureCheck> out;
  out.push_back(check_prng_golden(options.fixture_dir));
  out.push_back(check_wire_golden(options.fixture_dir));

  {
    // One-point / two-point identity over random small models.
    Rng rng(0x1e3a2);
    const std::vector<ModelSpec> specs{ModelSpec::linear_regression(5),
                                       ModelSpec::logistic_regression(6, 3),
                                       ModelSpec::mlp(4, {6}, 3)};
    const double tol = 1e-12 * options.tolerance_scale;
    double worst = 0.0;
    for (std::size_t n = 0; n < 1000; ++n) {
      const ModelSpec& spec = specs[n % specs.size()];
      ParamVector w(param_count(spec));
      for (double& v : w.values()) v = 0.5 * rng.normal();
      DataInstance x;
      x.features.resize(spec.input_dim);
      for (double& v : x.features) v = rng.normal();
      x.label = spec.is_classifier() ? static_cast<double>(rng.uniform_index(spec.output_dim)) : rng.normal();
      const std::uint64_t seed = rng.next_u64();
      const double eps = std::pow(10.0, -3.0 + 2.0 * rng.uniform());
      const double two = zoo::scalar_gradient_two_point(spec, w.values(), x, seed, eps);
      const double plus = zoo::scalar_gradient_one_point(spec, w.values(), x, seed, eps, +1);
      const double minus = zoo::scalar_gradient_one_point(spec, w.values(), x, seed, eps, -1);
      worst = std::max(worst, std::abs(two - 0.5 * (plus - minus)) / (1.0 + std::abs(two)));
    }
    std::ostringstream detail;
    detail << "max scaled deviation " << worst << " (tolerance " << tol << ")";
    check(out, "estimator_identity", worst <= tol, detail.str());
  }

  {
    // Sequential replay against one-pass reconstruction.
    const std::size_t d = 1000;
    const double eta = 1e-3;
    const double tol_factor = 1e-9 * options.tolerance_scale;
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
      Rng rng(derive_seed(0x4e91a7, {trial}));
      const SeedPool pool = init_pool(trial, 512);
      ParamVector w0(d);
      for (double& v : w0.values()) v = rng.normal();
      GradHistory history(10000);
      for (HistoryEntry& e : history) e = {pool.seed(rng.uniform_index(pool.size())), rng.normal()};
      ParamVector replay = w0;
      for (const HistoryEntry& e : history) zoo::step_update(replay.values(), e.seed, e.grad, eta);
      GradAccumulator acc(pool.size());
      accumulate(acc, history, 1.0, pool);
      const ParamVector rebuilt = reconstruct_model(w0, pool, acc, eta);
      double diff = 0.0;
      for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(replay[i] - rebuilt[i]));
      worst = std::max(worst, diff / (1.0 + replay.max_abs()));
    }
    std::ostringstream detail;
    detail << "max scaled discrepancy " << worst << " (tolerance " << tol_factor << ")";
    check(out, "replay_reconstruction", worst <= tol_factor, detail.str());
  }
  return out;
}

}  // namespace fedkseed::harness
