// Command-line surface over the barrier-steering library.
//
// Exit codes: 0 success, 1 I/O or argument errors, 2 data-contract errors,
// 3 verification failures (a suite whose expectation did not hold).

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/program_options.hpp>

#include "bsteer/bsteer.hpp"

namespace po = boost::program_options;
using bsteer::Json;

namespace {

// Argument-level misuse that program_options cannot catch itself.
struct ArgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
std::optional<T> flag(const po::variables_map& vm, const char* name) {
  if (!vm.count(name)) return std::nullopt;
  return vm[name].as<T>();
}

po::variables_map parse_args(const po::options_description& desc,
                             const std::vector<std::string>& args) {
  po::variables_map vm;
  po::store(po::command_line_parser(args).options(desc).run(), vm);
  po::notify(vm);
  return vm;
}

bool wants_help(const po::variables_map& vm, const po::options_description& desc) {
  if (!vm.count("help")) return false;
  std::cout << desc << "\n";
  return true;
}

void add_common_options(po::options_description& desc) {
  desc.add_options()
      ("help,h", "print this help")
      ("config", po::value<std::string>(), "JSON config file (sections: steer, train, verify, bench, paths)");
}

void add_steering_options(po::options_description& desc) {
  desc.add_options()
      ("mode", po::value<std::string>(), "steering mode: qp, top2, lse")
      ("alpha", po::value<double>(), "barrier decay rate (> 0)")
      ("delta", po::value<double>(), "safety threshold")
      ("kappa", po::value<double>(), "smooth-merge sharpness (> 0)")
      ("dt", po::value<double>(), "latent step size (> 0)")
      ("grad-floor", po::value<double>(), "degenerate-gradient cutoff")
      ("qp-tol", po::value<double>(), "QP feasibility tolerance");
}

bsteer::ConfigDocument load_config(const po::variables_map& vm) {
  std::optional<std::string> path = flag<std::string>(vm, "config");
  if (!path)
    if (auto env = bsteer::env_override("CONFIG")) path = *env;
  if (!path) return {};
  return bsteer::ConfigDocument::load_file(*path);
}

// Resolves the steering parameters through all layers. `mode_fallback` may be
// empty, in which case cfg.mode keeps its default and the raw string (empty
// when nothing was specified anywhere) is reported via mode_out.
bsteer::SteeringConfig resolve_steering(bsteer::LayeredOptions& layers,
                                        const po::variables_map& vm,
                                        std::string mode_fallback = "lse",
                                        std::string* mode_out = nullptr) {
  bsteer::SteeringConfig def;
  bsteer::SteeringConfig cfg;
  cfg.alpha = layers.number(flag<double>(vm, "alpha"), "ALPHA", "steer", "alpha", def.alpha);
  cfg.delta = layers.number(flag<double>(vm, "delta"), "DELTA", "steer", "delta", def.delta);
  cfg.kappa = layers.number(flag<double>(vm, "kappa"), "KAPPA", "steer", "kappa", def.kappa);
  cfg.dt = layers.number(flag<double>(vm, "dt"), "DT", "steer", "dt", def.dt);
  cfg.grad_floor =
      layers.number(flag<double>(vm, "grad-floor"), "GRAD_FLOOR", "steer", "grad_floor",
                    def.grad_floor);
  cfg.qp_tol = layers.number(flag<double>(vm, "qp-tol"), "QP_TOL", "steer", "qp_tol", def.qp_tol);
  std::string mode =
      layers.text(flag<std::string>(vm, "mode"), "MODE", "steer", "mode", std::move(mode_fallback));
  if (!mode.empty()) cfg.mode = bsteer::mode_from_name(mode);
  if (mode_out) *mode_out = mode;
  cfg.validate();
  return cfg;
}

Json make_report(const char* command, const bsteer::LayeredOptions& layers) {
  Json report;
  report["command"] = command;
  report["version"] = bsteer::kArtifactVersion;
  report["effective_config"] = layers.effective();
  return report;
}

void emit_report(const Json& report, const std::string& out_path = "") {
  std::cout << report.dump(2) << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw bsteer::IoError("cannot open '" + out_path + "' for writing");
    out << report.dump(2) << "\n";
    if (!out) throw bsteer::IoError("write to '" + out_path + "' failed");
  }
}

void write_dataset_file(const std::string& path, const bsteer::SafetyDataset& data) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl")
    bsteer::write_jsonl(path, data);
  else
    bsteer::write_dump(path, data);
}

// --- gen-synth ------------------------------------------------------------

int cmd_gen_synth(const std::vector<std::string>& args) {
  po::options_description desc("bsteer gen-synth: generate a synthetic labeled dataset");
  add_common_options(desc);
  desc.add_options()
      ("family", po::value<std::string>(), "two-moons | gaussian-clusters | annulus-vs-core")
      ("n", po::value<long long>(), "records per class")
      ("dim", po::value<long long>(), "latent dimension (>= 2)")
      ("noise", po::value<double>(), "coordinate noise level")
      ("layer", po::value<long long>(), "layer index stamped into the dump")
      ("seed", po::value<long long>(), "generator seed")
      ("out", po::value<std::string>(), "output path (.jsonl for text, anything else binary)");
  po::variables_map vm = parse_args(desc, args);
  if (wants_help(vm, desc)) return 0;
  bsteer::LayeredOptions layers(load_config(vm));

  bsteer::SyntheticSpec spec;
  spec.family = bsteer::family_from_name(
      layers.text(flag<std::string>(vm, "family"), "FAMILY", "gen", "family", "two-moons"));
  spec.n_per_class =
      static_cast<int>(layers.integer(flag<long long>(vm, "n"), "N", "gen", "n", 1000));
  spec.dim = static_cast<int>(layers.integer(flag<long long>(vm, "dim"), "DIM", "gen", "dim", 2));
  spec.noise = layers.number(flag<double>(vm, "noise"), "NOISE", "gen", "noise", 0.1);
  spec.layer_index = static_cast<std::uint32_t>(
      layers.integer(flag<long long>(vm, "layer"), "LAYER", "gen", "layer", 0));
  spec.seed = static_cast<std::uint64_t>(
      layers.integer(flag<long long>(vm, "seed"), "SEED", "gen", "seed", 0));
  std::string out = layers.text(flag<std::string>(vm, "out"), "OUT", "paths", "out", "");
  if (out.empty()) throw ArgError("gen-synth requires --out");

  bsteer::SafetyDataset data = bsteer::generate_synthetic(spec);
  write_dataset_file(out, data);

  Json report = make_report("gen-synth", layers);
  report["records"] = data.size();
  report["path"] = out;
  emit_report(report);
  return 0;
}

// --- train ------------------------------------------------------------------

int cmd_train(const std::vector<std::string>& args) {
  po::options_description desc("bsteer train: fit a barrier bank to a labeled dataset");
  add_common_options(desc);
  desc.add_options()
      ("data", po::value<std::string>(), "input dataset (binary dump or .jsonl)")
      ("out", po::value<std::string>(), "output model path")
      ("history", po::value<std::string>(), "loss history CSV path (default: <out>.loss.csv)")
      ("epochs", po::value<long long>(), "training epochs")
      ("batch", po::value<long long>(), "batch size")
      ("lr", po::value<double>(), "learning rate")
      ("lambda-unsafe", po::value<double>(), "weight of the unsafe hinge")
      ("epsilon", po::value<double>(), "unsafe margin (> 0)")
      ("heads", po::value<long long>(), "number of barrier heads")
      ("hidden-dims", po::value<std::string>(), "comma-separated hidden widths")
      ("optimizer", po::value<std::string>(), "adam | sgd")
      ("seed", po::value<long long>(), "training seed")
      ("train-fraction", po::value<double>(), "source-id fraction assigned to training");
  po::variables_map vm = parse_args(desc, args);
  if (wants_help(vm, desc)) return 0;
  bsteer::LayeredOptions layers(load_config(vm));

  bsteer::TrainConfig tc;
  tc.epochs = static_cast<int>(
      layers.integer(flag<long long>(vm, "epochs"), "EPOCHS", "train", "epochs", tc.epochs));
  tc.batch_size = static_cast<int>(
      layers.integer(flag<long long>(vm, "batch"), "BATCH", "train", "batch_size", tc.batch_size));
  tc.learning_rate =
      layers.number(flag<double>(vm, "lr"), "LR", "train", "learning_rate", tc.learning_rate);
  tc.lambda_unsafe = layers.number(flag<double>(vm, "lambda-unsafe"), "LAMBDA_UNSAFE", "train",
                                   "lambda_unsafe", tc.lambda_unsafe);
  tc.epsilon_margin = layers.number(flag<double>(vm, "epsilon"), "EPSILON", "train",
                                    "epsilon_margin", tc.epsilon_margin);
  tc.heads = static_cast<int>(
      layers.integer(flag<long long>(vm, "heads"), "HEADS", "train", "heads", tc.heads));
  tc.hidden_dims = layers.int_list(flag<std::string>(vm, "hidden-dims"), "HIDDEN_DIMS", "train",
                                   "hidden_dims", tc.hidden_dims);
  tc.seed = static_cast<std::uint64_t>(
      layers.integer(flag<long long>(vm, "seed"), "SEED", "train", "seed", 0));
  std::string opt =
      layers.text(flag<std::string>(vm, "optimizer"), "OPTIMIZER", "train", "optimizer", "adam");
  if (opt == "adam")
    tc.optimizer = bsteer::Optimizer::Adam;
  else if (opt == "sgd")
    tc.optimizer = bsteer::Optimizer::Sgd;
  else
    throw bsteer::DataError("unknown optimizer '" + opt + "' (expected adam or sgd)");
  double fraction = layers.number(flag<double>(vm, "train-fraction"), "TRAIN_FRACTION", "train",
                                  "train_fraction", 0.8);

  std::string data_path = layers.text(flag<std::string>(vm, "data"), "DATA", "paths", "data", "");
  if (data_path.empty()) throw ArgError("train requires --data");
  std::string out = layers.text(flag<std::string>(vm, "out"), "OUT", "paths", "model", "");
  if (out.empty()) throw ArgError("train requires --out");
  std::string history_path = layers.text(flag<std::string>(vm, "history"), "HISTORY", "paths",
                                         "history", out + ".loss.csv");

  bsteer::DumpReadStats stats;
  bsteer::SafetyDataset data = bsteer::read_dataset(data_path, &stats);
  bsteer::SplitResult parts = bsteer::split(data, fraction, tc.seed);
  auto [bank, result] = bsteer::train(parts.train, tc);

  bsteer::save_model(out, bank, layers.effective()["train"]);
  {
    std::ofstream csv(history_path);
    if (!csv) throw bsteer::IoError("cannot open '" + history_path + "' for writing");
    csv << "epoch,loss\n";
    csv << "0," << result.initial_loss << "\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e)
      csv << (e + 1) << "," << result.loss_history[e] << "\n";
    if (!csv) throw bsteer::IoError("write to '" + history_path + "' failed");
  }

  Json report = make_report("train", layers);
  report["records"] = data.size();
  report["rejected_nonfinite"] = stats.rejected_nonfinite;
  report["train_records"] = parts.train.size();
  report["heldout_records"] = parts.heldout.size();
  report["initial_loss"] = result.initial_loss;
  report["final_loss"] = result.loss_history.empty() ? result.initial_loss
                                                     : result.loss_history.back();
  report["train_accuracy"] = bsteer::accuracy(bank, parts.train);
  report["heldout_accuracy"] = bsteer::accuracy(bank, parts.heldout);
  report["model"] = out;
  report["history"] = history_path;
  emit_report(report);
  return 0;
}

// --- steer ------------------------------------------------------------------

int cmd_steer(const std::vector<std::string>& args) {
  po::options_description desc("bsteer steer: filter recorded trajectories or dataset states");
  add_common_options(desc);
  add_steering_options(desc);
  desc.add_options()
      ("model", po::value<std::string>(), "trained bank")
      ("trajectory", po::value<std::string>(), "trajectory records to replay and filter")
      ("data", po::value<std::string>(), "dataset whose states are steered in place")
      ("steps", po::value<long long>(), "steering iterations per dataset state")
      ("out", po::value<std::string>(), "output trajectory records path");
  po::variables_map vm = parse_args(desc, args);
  if (wants_help(vm, desc)) return 0;
  bsteer::LayeredOptions layers(load_config(vm));

  bsteer::SteeringConfig cfg = resolve_steering(layers, vm);
  std::string model_path =
      layers.text(flag<std::string>(vm, "model"), "MODEL", "paths", "model", "");
  if (model_path.empty()) throw ArgError("steer requires --model");
  std::string traj_path =
      layers.text(flag<std::string>(vm, "trajectory"), "TRAJECTORY", "paths", "trajectory", "");
  std::string data_path = layers.text(flag<std::string>(vm, "data"), "DATA", "paths", "data", "");
  std::string out = layers.text(flag<std::string>(vm, "out"), "OUT", "paths", "out", "");
  if (out.empty()) throw ArgError("steer requires --out");
  long long steps =
      layers.integer(flag<long long>(vm, "steps"), "STEPS", "steer", "steps", 1);

  bsteer::BarrierBank bank = bsteer::load_model(model_path).as_barrier_bank();

  std::vector<std::pair<std::string, bsteer::LatentTrajectory>> outputs;
  long fallbacks = 0;
  long total_steps = 0;
  if (!traj_path.empty()) {
    auto sequences = bsteer::read_trajectory_states(traj_path);
    for (auto& [seq, states] : sequences) {
      if (states.size() < 2)
        throw bsteer::DataError("sequence '" + seq + "' has fewer than 2 states; nothing to steer");
      bsteer::ReplayDynamics replay;
      for (std::size_t t = 0; t + 1 < states.size(); ++t)
        replay.controls.push_back(bsteer::nominal_control(states[t], states[t + 1], cfg.dt));
      bsteer::LatentTrajectory traj =
          bsteer::rollout(states[0], bsteer::NominalDynamics{std::move(replay)}, bank, cfg,
                          static_cast<int>(states.size() - 1));
      for (auto f : traj.fallback_steps) fallbacks += f;
      total_steps += traj.steps();
      outputs.emplace_back(seq, std::move(traj));
    }
  } else if (!data_path.empty()) {
    if (steps < 1) throw ArgError("--steps must be >= 1");
    bsteer::SafetyDataset data = bsteer::read_dataset(data_path);
    bsteer::DriftToTarget still{bsteer::Vec::Zero(data.dim), 0.0};
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      const auto& rec = data.records[i];
      bsteer::LatentTrajectory traj =
          bsteer::rollout(rec.state, bsteer::NominalDynamics{still}, bank, cfg,
                          static_cast<int>(steps));
      for (auto f : traj.fallback_steps) fallbacks += f;
      total_steps += traj.steps();
      outputs.emplace_back(rec.source_id + "#" + std::to_string(i), std::move(traj));
    }
  } else {
    throw ArgError("steer requires --trajectory or --data");
  }

  bsteer::write_trajectories(out, outputs);

  Json report = make_report("steer", layers);
  report["sequences"] = outputs.size();
  report["steps"] = total_steps;
  report["fallbacks"] = fallbacks;
  report["path"] = out;
  emit_report(report);
  return 0;
}

// --- verify -----------------------------------------------------------------

int cmd_verify(const std::vector<std::string>& args) {
  po::options_description desc("bsteer verify: randomized safety suites over analytic banks");
  add_common_options(desc);
  add_steering_options(desc);
  desc.add_options()
      ("suite", po::value<std::string>(),
       "invariance | stabilization | negative-control (default invariance)")
      ("dims", po::value<std::string>(), "comma-separated scenario dimensions")
      ("scenarios", po::value<long long>(), "scenarios per dimension")
      ("steps", po::value<long long>(), "rollout steps per scenario")
      ("tol-scale", po::value<double>(), "violation tolerance as a multiple of dt^2")
      ("seed", po::value<long long>(), "suite seed")
      ("out", po::value<std::string>(), "also write the JSON report here");
  po::variables_map vm = parse_args(desc, args);
  if (wants_help(vm, desc)) return 0;
  bsteer::LayeredOptions layers(load_config(vm));

  std::string suite_name =
      layers.text(flag<std::string>(vm, "suite"), "SUITE", "verify", "suite", "invariance");
  if (suite_name != "invariance" && suite_name != "stabilization" &&
      suite_name != "negative-control")
    throw bsteer::DataError("unknown suite '" + suite_name +
                            "' (expected invariance, stabilization, or negative-control)");

  std::string mode_str;
  bsteer::SteeringConfig steer_cfg = resolve_steering(layers, vm, "", &mode_str);
  std::string out_path = layers.text(flag<std::string>(vm, "out"), "OUT", "paths", "out", "");

  bsteer::ScenarioSuiteConfig sc;
  sc.dims = layers.int_list(flag<std::string>(vm, "dims"), "DIMS", "verify", "dims", sc.dims);
  sc.scenarios_per_dim = static_cast<int>(layers.integer(
      flag<long long>(vm, "scenarios"), "SCENARIOS", "verify", "scenarios_per_dim", 100));
  sc.steps = static_cast<int>(
      layers.integer(flag<long long>(vm, "steps"), "STEPS", "verify", "steps", 500));
  sc.dt = layers.number(flag<double>(vm, "dt"), "DT", "verify", "dt", 0.01);
  sc.tol_scale =
      layers.number(flag<double>(vm, "tol-scale"), "TOL_SCALE", "verify", "tol_scale", 10.0);
  sc.seed = static_cast<std::uint64_t>(
      layers.integer(flag<long long>(vm, "seed"), "SEED", "verify", "seed", 1));
  sc.alpha = steer_cfg.alpha;
  sc.delta = steer_cfg.delta;
  sc.kappa = steer_cfg.kappa;
  sc.unsafe_start = suite_name == "stabilization";
  if (!mode_str.empty())
    sc.modes = {bsteer::mode_from_name(mode_str)};
  else if (suite_name == "stabilization")
    sc.modes = {bsteer::SteerMode::Lse};
  else
    sc.modes = {bsteer::SteerMode::Lse, bsteer::SteerMode::Qp};

  Json report = make_report("verify", layers);
  report["suite"] = suite_name;
  bool passed = true;

  if (suite_name == "negative-control") {
    // Unsteered rollouts of the same scenarios must cross the boundary; if
    // they never do, the harness is not testing anything.
    double tol = sc.tol_scale * sc.dt * sc.dt;
    long violations = 0;
    long rollouts = 0;
    double worst = std::numeric_limits<double>::infinity();
    bsteer::SteeringConfig cfg = steer_cfg;
    cfg.dt = sc.dt;
    for (int dim : sc.dims) {
      for (int i = 0; i < sc.scenarios_per_dim; ++i) {
        bsteer::Scenario scenario = bsteer::make_scenario(
            dim,
            bsteer::detail::mix_seed(sc.seed, static_cast<std::uint64_t>(dim),
                                     static_cast<std::uint64_t>(i)),
            false);
        bsteer::LatentTrajectory traj = bsteer::rollout_nominal(
            scenario.start, scenario.dynamics, scenario.bank, cfg, sc.steps);
        bsteer::VerificationReport vr = bsteer::verify_invariance(traj, cfg, tol);
        violations += vr.invariance_violations;
        worst = std::min(worst, vr.worst_margin);
        ++rollouts;
      }
    }
    passed = violations > 0;
    report["tolerance"] = tol;
    report["total_rollouts"] = rollouts;
    report["modes"] = Json::array({Json{{"mode", "nominal"},
                                        {"rollouts", rollouts},
                                        {"invariance_violations", violations},
                                        {"worst_margin", worst}}});
    report["expectation"] = "unsteered rollouts must violate at least once";
  } else {
    bsteer::SuiteReport suite = bsteer::run_scenario_suite(sc);
    report["tolerance"] = suite.tolerance;
    report["total_rollouts"] = suite.total_rollouts;
    Json modes = Json::array();
    for (const auto& m : suite.per_mode) {
      modes.push_back(Json{{"mode", bsteer::mode_name(m.mode)},
                           {"rollouts", m.rollouts},
                           {"invariance_violations", m.invariance_violations},
                           {"worst_margin", m.worst_margin},
                           {"violation_mass", m.violation_mass},
                           {"stabilization_bound_holds", m.stabilization_bound_holds},
                           {"worst_ratio", m.worst_ratio}});
      if (sc.unsafe_start)
        passed = passed && m.stabilization_bound_holds;
      else
        passed = passed && m.invariance_violations == 0;
    }
    report["modes"] = std::move(modes);
  }

  report["passed"] = passed;
  emit_report(report, out_path);
  return passed ? 0 : 3;
}

// --- compose ----------------------------------------------------------------

int cmd_compose(const std::vector<std::string>& args) {
  po::options_description desc("bsteer compose: merge banks and compare composition strategies");
  add_common_options(desc);
  add_steering_options(desc);
  desc.add_options()
      ("model", po::value<std::vector<std::string>>()->composing(), "model file (repeatable)")
      ("data", po::value<std::string>(), "dataset whose states are scored")
      ("steps", po::value<long long>(), "steering iterations per state")
      ("tol", po::value<double>(), "violation tolerance on the merged margin")
      ("no-per-category", "skip the single-head rows of the report")
      ("out", po::value<std::string>(), "also write the JSON report here");
  po::variables_map vm = parse_args(desc, args);
  if (wants_help(vm, desc)) return 0;
  bsteer::LayeredOptions layers(load_config(vm));

  std::string mode_str;
  bsteer::SteeringConfig cfg = resolve_steering(layers, vm, "", &mode_str);

  std::vector<std::string> model_paths;
  if (auto v = flag<std::vector<std::string>>(vm, "model")) model_paths = *v;
  if (model_paths.empty()) {
    std::string single = layers.text(std::nullopt, "MODEL", "paths", "model", "");
    if (!single.empty()) model_paths.push_back(single);
  }
  if (model_paths.empty()) throw ArgError("compose requires at least one --model");
  layers.effective()["paths"]["model"] = model_paths;

  std::string data_path = layers.text(flag<std::string>(vm, "data"), "DATA", "paths", "data", "");
  if (data_path.empty()) throw ArgError("compose requires --data");
  std::string out_path = layers.text(flag<std::string>(vm, "out"), "OUT", "paths", "out", "");

  bsteer::ComposeConfig cc;
  cc.steps = static_cast<int>(
      layers.integer(flag<long long>(vm, "steps"), "STEPS", "steer", "steps", cc.steps));
  cc.violation_tol = layers.number(flag<double>(vm, "tol"), "TOL", "compose", "tol",
                                   cc.violation_tol);
  cc.per_category = !vm.count("no-per-category");
  if (!mode_str.empty()) cc.modes = {bsteer::mode_from_name(mode_str)};

  std::vector<bsteer::BarrierBank> banks;
  for (const auto& p : model_paths) banks.push_back(bsteer::load_model(p).as_barrier_bank());
  bsteer::BarrierBank merged = bsteer::merge_banks(banks);

  bsteer::SafetyDataset data = bsteer::read_dataset(data_path);
  std::vector<bsteer::Vec> states;
  states.reserve(data.records.size());
  for (const auto& rec : data.records) states.push_back(rec.state);

  bsteer::ComposeReport cr = bsteer::evaluate_composition(merged, states, cfg, cc);

  Json report = make_report("compose", layers);
  report["models"] = model_paths;
  report["n_states"] = cr.n_states;
  Json composed = Json::array();
  for (const auto& s : cr.composed)
    composed.push_back(Json{{"name", s.name}, {"violations", s.violations}, {"rate", s.rate}});
  report["composed"] = std::move(composed);
  Json per_cat = Json::array();
  for (const auto& s : cr.per_category)
    per_cat.push_back(Json{{"name", s.name}, {"violations", s.violations}, {"rate", s.rate}});
  report["per_category"] = std::move(per_cat);
  emit_report(report, out_path);
  return 0;
}

// --- bench ------------------------------------------------------------------

int cmd_bench(const std::vector<std::string>& args) {
  po::options_description desc("bsteer bench: per-call latency of the steering modes");
  add_common_options(desc);
  add_steering_options(desc);
  desc.add_options()
      ("model", po::value<std::string>(), "trained bank (otherwise a random bank is built)")
      ("heads", po::value<long long>(), "heads of the random bank")
      ("dim", po::value<long long>(), "input dimension of the random bank")
      ("hidden-dims", po::value<std::string>(), "comma-separated hidden widths of the random bank")
      ("trials", po::value<long long>(), "timed calls per mode")
      ("warmup", po::value<long long>(), "untimed warmup calls per mode")
      ("seed", po::value<long long>(), "bank/state seed")
      ("ref-iterations", po::value<long long>(), "iterations of the projection reference")
      ("ref-lr", po::value<double>(), "learning rate of the projection reference")
      ("ref-penalty", po::value<double>(), "constraint penalty of the projection reference")
      ("out", po::value<std::string>(), "also write the JSON report here");
  po::variables_map vm = parse_args(desc, args);
  if (wants_help(vm, desc)) return 0;
  bsteer::LayeredOptions layers(load_config(vm));

  bsteer::SteeringConfig cfg = resolve_steering(layers, vm);

  bsteer::BenchConfig bc;
  bc.trials = static_cast<int>(
      layers.integer(flag<long long>(vm, "trials"), "TRIALS", "bench", "trials", 1000));
  bc.warmup = static_cast<int>(
      layers.integer(flag<long long>(vm, "warmup"), "WARMUP", "bench", "warmup", 10));
  bc.seed = static_cast<std::uint64_t>(
      layers.integer(flag<long long>(vm, "seed"), "SEED", "bench", "seed", 7));
  bc.reference.iterations = static_cast<int>(layers.integer(
      flag<long long>(vm, "ref-iterations"), "REF_ITERATIONS", "bench", "ref_iterations", 100));
  bc.reference.learning_rate = layers.number(flag<double>(vm, "ref-lr"), "REF_LR", "bench",
                                             "ref_learning_rate", 1e-2);
  bc.reference.penalty = layers.number(flag<double>(vm, "ref-penalty"), "REF_PENALTY", "bench",
                                       "ref_penalty", 10.0);
  if (bc.trials < 100)
    std::cerr << "warning: " << bc.trials
              << " trials is below the recommended minimum of 100; statistics will be noisy\n";

  std::string model_path =
      layers.text(flag<std::string>(vm, "model"), "MODEL", "paths", "model", "");
  std::string out_path = layers.text(flag<std::string>(vm, "out"), "OUT", "paths", "out", "");
  bsteer::BarrierBank bank = [&] {
    if (!model_path.empty()) return bsteer::load_model(model_path).as_barrier_bank();
    int heads = static_cast<int>(
        layers.integer(flag<long long>(vm, "heads"), "HEADS", "bench", "heads", 4));
    int dim =
        static_cast<int>(layers.integer(flag<long long>(vm, "dim"), "DIM", "bench", "dim", 64));
    std::vector<int> hidden =
        layers.int_list(flag<std::string>(vm, "hidden-dims"), "HIDDEN_DIMS", "bench",
                        "hidden_dims", bsteer::default_hidden_dims());
    return bsteer::make_mlp_bank(heads, dim, hidden, bc.seed).as_barrier_bank();
  }();

  bsteer::BenchReport br = bsteer::run_bench(bank, cfg, bc);

  Json report = make_report("bench", layers);
  report["heads"] = br.heads;
  report["dim"] = br.dim;
  report["trials"] = br.trials;
  report["hardware"] = br.hardware;
  Json stats = Json::array();
  for (const auto& s : br.stats)
    stats.push_back(Json{{"name", s.name},
                         {"mean_ms", s.mean_ms},
                         {"stddev_ms", s.stddev_ms},
                         {"min_ms", s.min_ms},
                         {"max_ms", s.max_ms}});
  report["stats"] = std::move(stats);
  report["speedups"] = Json{
      {"reference_over_lse", br.speedup_lse_vs_reference},
      {"top2_over_lse", br.stats[0].mean_ms > 0 ? br.stats[1].mean_ms / br.stats[0].mean_ms : 0.0},
      {"qp_over_lse", br.stats[0].mean_ms > 0 ? br.stats[2].mean_ms / br.stats[0].mean_ms : 0.0}};
  emit_report(report, out_path);
  return 0;
}

void print_usage() {
  std::cout << "usage: bsteer <command> [options]\n\n"
               "commands:\n"
               "  gen-synth   generate a synthetic labeled dataset\n"
               "  train       fit a barrier bank to a labeled dataset\n"
               "  steer       filter recorded trajectories or dataset states\n"
               "  verify      run randomized invariance/stabilization suites\n"
               "  compose     merge banks and compare composition strategies\n"
               "  bench       time the steering modes against the projection reference\n\n"
               "run 'bsteer <command> --help' for per-command options.\n";
}

int run(int argc, char** argv) {
  po::options_description top("top");
  top.add_options()
      ("command", po::value<std::string>(), "")
      ("subargs", po::value<std::vector<std::string>>(), "");
  po::positional_options_description pos;
  pos.add("command", 1).add("subargs", -1);
  po::parsed_options parsed =
      po::command_line_parser(argc, argv).options(top).positional(pos).allow_unregistered().run();
  po::variables_map vm;
  po::store(parsed, vm);

  if (!vm.count("command")) {
    print_usage();
    bool help_only = argc > 1;
    for (int i = 1; i < argc; ++i) {
      std::string a = argv[i];
      help_only = help_only && (a == "--help" || a == "-h");
    }
    return help_only ? 0 : 1;  // bare or malformed invocation is an error, --help is not
  }
  std::string command = vm["command"].as<std::string>();
  std::vector<std::string> rest =
      po::collect_unrecognized(parsed.options, po::include_positional);
  rest.erase(rest.begin());

  if (command == "gen-synth") return cmd_gen_synth(rest);
  if (command == "train") return cmd_train(rest);
  if (command == "steer") return cmd_steer(rest);
  if (command == "verify") return cmd_verify(rest);
  if (command == "compose") return cmd_compose(rest);
  if (command == "bench") return cmd_bench(rest);
  if (command == "help") {
    print_usage();
    return 0;
  }
  std::cerr << "error: unknown command '" << command << "'\n";
  print_usage();
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ArgError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const po::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const bsteer::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const bsteer::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
