// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: simulate, train-trigger, sweep, keygen,
// compare-size and gen-scenario. All science parameters live in the JSON
// experiment config; HESTIA_VERBOSE=1 enables progress output.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hestia/harness.hpp"

namespace fs = std::filesystem;
using namespace hestia;

namespace {

bool verbose() {
  const char* v = std::getenv("HESTIA_VERBOSE");
  return v != nullptr && std::string(v) != "0";
}

void info(const std::string& msg) {
  if (verbose()) std::cerr << "[hestia] " << msg << "\n";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::optional<policy::TrainedPolicy> load_policy_if_needed(
    const harness::ExperimentConfig& cfg) {
  using harness::TriggerMode;
  const auto mode = cfg.trigger.mode;
  if (mode == TriggerMode::kPeriodic || mode == TriggerMode::kThreshold)
    return std::nullopt;
  if (cfg.trigger.policy_path.empty())
    throw ConfigError("trigger mode requires trigger.policy_path");
  return policy::load_policy(cfg.trigger.policy_path);
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
  auto cfg = harness::load_experiment(config_path);
  if (seed) cfg.seed = *seed;
  auto rt = harness::make_runtime(cfg);
  auto tp = load_policy_if_needed(cfg);

  std::vector<proto::Transcript> transcripts;
  harness::LoopOptions opts;
  if (cfg.encryption.enabled) opts.transcript_sink = &transcripts;

  info("running closed loop (" + std::to_string(rt.steps()) + " steps)");
  auto res = harness::run_closed_loop(
      rt, harness::make_decision_fn(rt, tp ? &*tp : nullptr), opts);

  fs::create_directories(out_dir);
  harness::write_trace_csv(res, (fs::path(out_dir) / "trace.csv").string());
  write_file(fs::path(out_dir) / "metrics.json",
             harness::metrics_to_json(res.metrics).dump(2) + "\n");
  if (!transcripts.empty()) {
    std::ostringstream os;
    for (const auto& t : transcripts) os << t.to_jsonl();
    write_file(fs::path(out_dir) / "transcript.jsonl", os.str());
  }
  std::cout << harness::metrics_to_json(res.metrics).dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<double> lambda, int iterations, int batch,
              double lr, std::optional<double> beta, bool baseline,
              std::optional<std::uint64_t> seed) {
  auto cfg = harness::load_experiment(config_path);
  if (seed) cfg.seed = *seed;
  if (lambda) cfg.trigger.lambda = *lambda;
  if (beta) cfg.trigger.beta = *beta;
  auto rt = harness::make_runtime(cfg);

  harness::TrainSettings ts;
  ts.learner.iterations = iterations;
  ts.learner.batch_size = batch;
  ts.learner.learning_rate = lr;
  ts.learner.beta = cfg.trigger.beta;
  ts.learner.subtract_baseline = baseline;
  ts.learner.seed = cfg.seed;

  info("training trigger policy (lambda=" +
       std::to_string(cfg.trigger.lambda) + ")");
  auto out = harness::train_trigger_policy(rt, ts);

  fs::create_directories(out_dir);
  policy::save_policy(out.policy, (fs::path(out_dir) / "policy.bin").string());
  harness::write_curve_csv(out.curve,
                           (fs::path(out_dir) / "learning_curve.csv").string());

  // Greedy evaluation of the freshly trained policy.
  auto res =
      harness::run_closed_loop(rt, harness::learned_decision(rt, out.policy));
  write_file(fs::path(out_dir) / "metrics.json",
             harness::metrics_to_json(res.metrics).dump(2) + "\n");
  std::cout << harness::metrics_to_json(res.metrics).dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& param, const std::vector<double>& values,
              int iterations, int batch, double lr) {
  auto cfg = harness::load_experiment(config_path);
  auto rt = harness::make_runtime(cfg);
  fs::create_directories(out_dir);
  std::vector<harness::SweepRow> rows;
  if (param == "alpha") {
    rows = harness::sweep_threshold(rt, values);
  } else if (param == "lambda") {
    harness::TrainSettings ts;
    ts.learner.iterations = iterations;
    ts.learner.batch_size = batch;
    ts.learner.learning_rate = lr;
    ts.learner.subtract_baseline = true;
    ts.learner.seed = cfg.seed;
    rows = harness::sweep_lambda(rt, values, ts);
  } else {
    throw ConfigError("sweep parameter must be alpha or lambda");
  }
  harness::write_sweep_csv(rows, param,
                           (fs::path(out_dir) / "sweep.csv").string());
  for (const auto& r : rows)
    std::cout << param << "=" << r.value << " comm_rate=" << r.comm_rate_pct
              << "% viol_temp=" << r.violation_pct_temp
              << "% viol_co2=" << r.violation_pct_co2 << "%\n";
  return 0;
}

int cmd_keygen(const std::string& config_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed) {
  auto cfg = harness::load_experiment(config_path);
  const std::uint64_t kg_seed = seed.value_or(cfg.encryption.keygen_seed);
  ckks::Context ctx(cfg.encryption.params);
  info("generating keys (N=" + std::to_string(ctx.degree()) + ", security ~" +
       std::to_string(ctx.security_bits()) + " bit)");
  auto keys = ckks::keygen(ctx, kg_seed);
  fs::create_directories(out_dir);
  write_bytes(fs::path(out_dir) / "secret.key",
              ckks::serialize(ctx, keys.secret));
  write_bytes(fs::path(out_dir) / "public.key", ckks::serialize(ctx, keys.pub));
  write_bytes(fs::path(out_dir) / "eval.key", ckks::serialize(ctx, keys.eval));
  std::cout << "wrote secret.key, public.key, eval.key to " << out_dir << "\n";
  return 0;
}

int cmd_compare_size(const std::string& config_path,
                     const std::string& out_dir) {
  auto cfg = harness::load_experiment(config_path);
  auto rt = harness::make_runtime(cfg);
  auto tp = load_policy_if_needed(cfg);
  auto sc = harness::data_size_comparison(rt, tp ? &*tp : nullptr);
  fs::create_directories(out_dir);
  harness::write_size_comparison_csv(
      sc, (fs::path(out_dir) / "size_comparison.csv").string());
  nlohmann::json summary = {
      {"encrypted_over_plaintext", sc.encrypted_over_plaintext},
      {"triggered_over_periodic", sc.triggered_over_periodic},
      {"comm_rate", sc.comm_rate},
      {"plaintext_periodic_total", sc.plaintext_periodic.back()},
      {"encrypted_periodic_total", sc.encrypted_periodic.back()},
      {"encrypted_triggered_total", sc.encrypted_triggered.back()},
  };
  write_file(fs::path(out_dir) / "size_summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_gen_scenario(int days, int zones, std::uint64_t seed,
                     const std::string& out_dir) {
  auto sc = scenario::make_synthetic_scenario(days, zones, seed);
  fs::create_directories(out_dir);
  const std::string suffix = std::to_string(days) + "d";
  scenario::write_weather_csv(
      sc, (fs::path(out_dir) / ("weather_" + suffix + ".csv")).string());
  scenario::write_occupancy_csv(
      sc, (fs::path(out_dir) / ("occupancy_" + suffix + ".csv")).string());
  std::cout << "wrote weather_" << suffix << ".csv and occupancy_" << suffix
            << ".csv (" << sc.size() << " samples)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hestia: encrypted event-triggered building control testbed"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", param = "lambda";
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda, beta;
  std::vector<double> values;
  int iterations = 300, batch = 8, days = 30, zones = 4;
  double lr = 1e-3;
  bool baseline = true;
  std::uint64_t gen_seed = 2024;

  auto* sim = app.add_subcommand("simulate", "run the closed loop");
  sim->add_option("--config", config_path)->required();
  sim->add_option("--out-dir", out_dir);
  sim->add_option("--seed", seed);

  auto* train = app.add_subcommand("train-trigger", "train the trigger policy");
  train->add_option("--config", config_path)->required();
  train->add_option("--out-dir", out_dir);
  train->add_option("--lambda", lambda);
  train->add_option("--beta", beta);
  train->add_option("--iterations", iterations);
  train->add_option("--batch", batch);
  train->add_option("--lr", lr);
  train->add_flag("--baseline,!--no-baseline", baseline,
                  "subtract the batch-mean baseline");
  train->add_option("--seed", seed);

  auto* sweep =
      app.add_subcommand("sweep", "trade-off sweep over alpha or lambda");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--out-dir", out_dir);
  sweep->add_option("--param", param)->check(CLI::IsMember({"alpha", "lambda"}));
  sweep->add_option("--values", values)->required()->expected(-2);
  sweep->add_option("--iterations", iterations);
  sweep->add_option("--batch", batch);
  sweep->add_option("--lr", lr);

  auto* keygen = app.add_subcommand("keygen", "generate HE key files");
  keygen->add_option("--config", config_path)->required();
  keygen->add_option("--out-dir", out_dir);
  keygen->add_option("--seed", seed);

  auto* size = app.add_subcommand("compare-size",
                                  "communicated-bytes comparison across modes");
  size->add_option("--config", config_path)->required();
  size->add_option("--out-dir", out_dir);

  auto* gen = app.add_subcommand("gen-scenario",
                                 "write synthetic weather/occupancy CSVs");
  gen->add_option("--days", days);
  gen->add_option("--zones", zones);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out-dir", out_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, seed);
    if (train->parsed())
      return cmd_train(config_path, out_dir, lambda, iterations, batch, lr,
                       beta, baseline, seed);
    if (sweep->parsed())
      return cmd_sweep(config_path, out_dir, param, values, iterations, batch,
                       lr);
    if (keygen->parsed()) return cmd_keygen(config_path, out_dir, seed);
    if (size->parsed()) return cmd_compare_size(config_path, out_dir);
    if (gen->parsed()) return cmd_gen_scenario(days, zones, gen_seed, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
