// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop experiment harness: configuration, the plant/controller/
// trigger loop with optional encryption, the comfort and communication
// metrics, policy training on the loop, parameter sweeps and file exports.
//
// Byte accounting: only protocol messages are counted (state up, gradient
// rounds, projected iterates, final plan). Context provisioning (encrypted
// model constants, key material) is deployment setup, identical across
// triggering policies, and excluded. In plaintext mode a trigger costs the
// raw state vector up and the two stacked plans down, as little-endian
// doubles behind a 16-byte frame header.

#ifndef HESTIA_HARNESS_HPP_
#define HESTIA_HARNESS_HPP_

#include <chrono>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hestia/building.hpp"
#include "hestia/ckks.hpp"
#include "hestia/common.hpp"
#include "hestia/mpc.hpp"
#include "hestia/policy.hpp"
#include "hestia/protocol.hpp"
#include "hestia/scenario.hpp"
#include "hestia/trigger.hpp"

namespace hestia::harness {

enum class TriggerMode {
  kPeriodic,
  kThreshold,
  kLearned,
  kEpsilonRandomized,
  kEntropyRegularized,
};

inline TriggerMode trigger_mode_from_string(const std::string& s) {
  if (s == "periodic") return TriggerMode::kPeriodic;
  if (s == "threshold") return TriggerMode::kThreshold;
  if (s == "learned") return TriggerMode::kLearned;
  if (s == "epsilon") return TriggerMode::kEpsilonRandomized;
  if (s == "entropy") return TriggerMode::kEntropyRegularized;
  throw ConfigError("unknown trigger mode: " + s);
}

inline const char* to_string(TriggerMode m) {
  switch (m) {
    case TriggerMode::kPeriodic: return "periodic";
    case TriggerMode::kThreshold: return "threshold";
    case TriggerMode::kLearned: return "learned";
    case TriggerMode::kEpsilonRandomized: return "epsilon";
    case TriggerMode::kEntropyRegularized: return "entropy";
  }
  return "?";
}

struct WeightsConfig {
  // MPC weights.
  double q_zone_temp = 1.0;
  double q_wall_temp = 1e-6;
  double r_temp = 0.2;
  double q_co2 = 1.0;
  double r_co2 = 2.0e5;
  // Trigger stage-cost weights (stacked state).
  double trig_q_temp = 1.0;
  double trig_q_co2 = 6.25e-4;  // (5 K / 200 ppm)^2 unit balance
  double trig_r_temp = 0.05;
  double trig_r_co2 = 1.0e4;
};

struct TriggerSettings {
  TriggerMode mode = TriggerMode::kPeriodic;
  double alpha = 0.5;         // threshold on the normalized deviation
  double lambda = 2.0;        // communication penalty
  std::string policy_path;    // trained policy for the learned modes
  double epsilon = 0.1;
  double beta = 0.0;
};

struct EncryptionSettings {
  bool enabled = false;
  ckks::HeParams params;
  std::uint64_t keygen_seed = 7;
};

struct ExperimentConfig {
  std::string building_path;
  std::string weather_csv;
  std::string occupancy_csv;
  double temp_ref = 23.5;
  double co2_ref = 800.0;
  double band_lo = 22.0;
  double band_hi = 25.0;
  double co2_limit = 800.0;
  double dt = 300.0;
  int horizon = 7;
  int t_s = 7;
  int fgm_iterations = 1;
  double temp_scale = 5.0;   // normalization scales for policies/threshold
  double co2_scale = 200.0;
  TriggerSettings trigger;
  EncryptionSettings encryption;
  WeightsConfig weights;
  std::uint64_t seed = 1;
  int duration_steps = -1;  // -1: full scenario
  int start_step = 0;

  void validate() const {
    if (band_lo >= band_hi) throw ConfigError("comfort band is empty");
    if (horizon < 1) throw ConfigError("horizon must be positive");
    if (t_s < 1) throw ConfigError("forced-trigger cap must be positive");
    if (t_s > horizon)
      throw ConfigError(
          "forced-trigger cap exceeds the MPC horizon: stored plans would "
          "not cover all hold offsets");
    if (fgm_iterations < 1) throw ConfigError("fgm iterations must be >= 1");
    if (temp_scale <= 0.0 || co2_scale <= 0.0)
      throw ConfigError("state scales must be positive");
  }
};

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.building_path = j.at("building").get<std::string>();
  c.weather_csv = j.at("weather_csv").get<std::string>();
  c.occupancy_csv = j.at("occupancy_csv").get<std::string>();
  c.temp_ref = j.value("temp_ref_c", 23.5);
  c.co2_ref = j.value("co2_ref_ppm", 800.0);
  if (j.contains("comfort_band_c")) {
    c.band_lo = j.at("comfort_band_c").at(0).get<double>();
    c.band_hi = j.at("comfort_band_c").at(1).get<double>();
  }
  c.co2_limit = j.value("co2_limit_ppm", 800.0);
  c.dt = j.value("sample_period_s", 300.0);
  c.horizon = j.value("horizon", 7);
  c.t_s = j.value("t_s", 7);
  c.fgm_iterations = j.value("fgm_iterations", 1);
  c.temp_scale = j.value("temp_scale", 5.0);
  c.co2_scale = j.value("co2_scale", 200.0);
  if (j.contains("trigger")) {
    const auto& t = j.at("trigger");
    c.trigger.mode = trigger_mode_from_string(t.value("mode", "periodic"));
    c.trigger.alpha = t.value("alpha", 0.5);
    c.trigger.lambda = t.value("lambda", 2.0);
    c.trigger.policy_path = t.value("policy_path", "");
    c.trigger.epsilon = t.value("epsilon", 0.1);
    c.trigger.beta = t.value("beta", 0.0);
  }
  if (j.contains("encryption")) {
    const auto& e = j.at("encryption");
    c.encryption.enabled = e.value("enabled", false);
    c.encryption.params.ring_degree = e.value("ring_degree", std::size_t{8192});
    if (e.contains("coeff_modulus_bits"))
      c.encryption.params.coeff_modulus_bits =
          e.at("coeff_modulus_bits").get<std::vector<int>>();
    c.encryption.params.scale = std::pow(2.0, e.value("scale_bits", 26));
    c.encryption.params.error_stddev = e.value("error_stddev", 3.2);
    c.encryption.params.secret_hamming_weight =
        e.value("secret_hamming_weight", std::size_t{64});
    c.encryption.keygen_seed = e.value("keygen_seed", std::uint64_t{7});
  }
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.q_zone_temp = w.value("q_zone_temp", c.weights.q_zone_temp);
    c.weights.q_wall_temp = w.value("q_wall_temp", c.weights.q_wall_temp);
    c.weights.r_temp = w.value("r_temp", c.weights.r_temp);
    c.weights.q_co2 = w.value("q_co2", c.weights.q_co2);
    c.weights.r_co2 = w.value("r_co2", c.weights.r_co2);
    c.weights.trig_q_temp = w.value("trig_q_temp", c.weights.trig_q_temp);
    c.weights.trig_q_co2 = w.value("trig_q_co2", c.weights.trig_q_co2);
    c.weights.trig_r_temp = w.value("trig_r_temp", c.weights.trig_r_temp);
    c.weights.trig_r_co2 = w.value("trig_r_co2", c.weights.trig_r_co2);
  }
  c.seed = j.value("seed", std::uint64_t{1});
  c.duration_steps = j.value("duration_steps", -1);
  c.start_step = j.value("start_step", 0);
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config: " + path);
  nlohmann::json j;
  in >> j;
  return experiment_from_json(j);
}

// ---------------------------------------------------------------------------
// Runtime
// ---------------------------------------------------------------------------

struct Runtime {
  ExperimentConfig cfg;
  building::Topology topo;
  building::LinearPlant plant;
  scenario::Scenario scen;
  trigger::TriggerConfig trig_cfg;  // stacked-state stage cost
  policy::Normalizer normalizer;
  Vec norm_scale_stacked;  // componentwise scales of the stacked state
  int n_zones = 0, n_thermal = 0, n_stacked = 0;
  // Typical-day profiles (mean over days per time-of-day slot), the
  // prediction-side disturbance model.
  std::vector<Vec> mean_thermal_dist;  // discrete thermal offset per slot
  std::vector<Vec> mean_co2_dist;      // discrete generation per slot

  int steps() const {
    const int avail = static_cast<int>(scen.size()) - cfg.start_step;
    return cfg.duration_steps < 0 ? avail
                                  : std::min(cfg.duration_steps, avail);
  }

  int steps_per_day() const {
    return static_cast<int>(86400.0 / cfg.dt);
  }

  /// Horizon window of per-step mean disturbances starting at a step.
  std::vector<Vec> mean_window(const std::vector<Vec>& profile,
                               int abs_step) const {
    const int per_day = steps_per_day();
    std::vector<Vec> w(cfg.horizon);
    for (int k = 0; k < cfg.horizon; ++k)
      w[k] = profile[(abs_step + k) % per_day];
    return w;
  }
};

inline Runtime make_runtime_from_parts(const ExperimentConfig& cfg,
                                       building::Topology topo,
                                       scenario::Scenario scen) {
  cfg.validate();
  Runtime rt;
  rt.cfg = cfg;
  rt.topo = std::move(topo);
  rt.plant = building::discretize(
      rt.topo, building::build_continuous_model(rt.topo), cfg.dt);
  rt.scen = std::move(scen);
  rt.scen.disturbance.validate(rt.topo.num_zones(),
                               static_cast<std::size_t>(cfg.start_step) + 1);

  rt.n_zones = rt.topo.num_zones();
  rt.n_thermal = rt.topo.num_thermal_nodes();
  rt.n_stacked = rt.n_thermal + rt.n_zones;

  // Stacked stage cost for the triggering layer.
  trigger::TriggerConfig tc;
  tc.lambda = cfg.trigger.lambda;
  tc.t_s = cfg.t_s;
  tc.horizon = std::max(1, rt.steps());
  tc.x_ref = Vec::Zero(rt.n_stacked);
  tc.x_ref.head(rt.n_thermal).setConstant(cfg.temp_ref);
  tc.x_ref.tail(rt.n_zones).setConstant(cfg.co2_ref);
  Vec qdiag(rt.n_stacked);
  qdiag.head(rt.n_zones).setConstant(cfg.weights.trig_q_temp);
  qdiag.segment(rt.n_zones, rt.n_thermal - rt.n_zones).setConstant(0.0);
  qdiag.tail(rt.n_zones).setConstant(cfg.weights.trig_q_co2);
  tc.Q = qdiag.asDiagonal();
  Vec rdiag(2 * rt.n_zones);
  rdiag.head(rt.n_zones).setConstant(cfg.weights.trig_r_temp);
  rdiag.tail(rt.n_zones).setConstant(cfg.weights.trig_r_co2);
  tc.R = rdiag.asDiagonal();
  rt.trig_cfg = tc;

  rt.norm_scale_stacked = Vec::Ones(rt.n_stacked);
  rt.norm_scale_stacked.head(rt.n_thermal).setConstant(cfg.temp_scale);
  rt.norm_scale_stacked.tail(rt.n_zones).setConstant(cfg.co2_scale);
  rt.normalizer.center = tc.x_ref;
  rt.normalizer.scale = rt.norm_scale_stacked;
  rt.normalizer.t_s = cfg.t_s;

  // Typical-day disturbance profiles for the prediction model: mean over
  // days of each signal at every time-of-day slot.
  const int per_day = rt.steps_per_day();
  const int days = std::max<int>(1, static_cast<int>(rt.scen.size()) / per_day);
  rt.mean_thermal_dist.resize(per_day);
  rt.mean_co2_dist.resize(per_day);
  for (int k = 0; k < per_day; ++k) {
    double temp = 0.0, solar = 0.0;
    Vec occ = Vec::Zero(rt.n_zones);
    int count = 0;
    for (int d = 0; d < days; ++d) {
      const std::size_t t = static_cast<std::size_t>(d) * per_day + k;
      if (t >= rt.scen.size()) break;
      temp += rt.scen.disturbance.outdoor_temp[t];
      solar += rt.scen.disturbance.solar_wm2[t];
      occ += rt.scen.disturbance.occupancy[t].cast<double>();
      ++count;
    }
    temp /= count;
    solar /= count;
    occ /= count;
    const Vec qh = rt.topo.occupant_heat_w * occ +
                   Vec::Constant(rt.n_zones, rt.topo.base_load_w);
    rt.mean_thermal_dist[k] =
        rt.plant.thermal_disturbance(rt.topo, temp, solar, qh);
    Vec gen(rt.n_zones);
    for (int i = 0; i < rt.n_zones; ++i)
      gen(i) = cfg.dt * rt.topo.co2_gen_ppm_m3() * occ(i) /
               rt.topo.zones[i].volume_m3;
    rt.mean_co2_dist[k] = gen;
  }
  return rt;
}

inline Runtime make_runtime(const ExperimentConfig& cfg) {
  cfg.validate();
  return make_runtime_from_parts(
      cfg, building::load_topology(cfg.building_path),
      scenario::load_scenario_csv(cfg.weather_csv, cfg.occupancy_csv, cfg.dt));
}

/// The two condensed MPC problems. Structure (H, F, box) is time-invariant;
/// the affine offset is refreshed per trigger from the time-of-day mean
/// profiles via CondensedQP::offset_for.
struct Engines {
  mpc::CondensedQP thermal;
  mpc::CondensedQP co2;
};

inline Engines build_engines(const Runtime& rt) {
  const auto& cfg = rt.cfg;
  const int nz = rt.n_zones;
  const int nt = rt.n_thermal;

  mpc::MpcProblem tem;
  tem.A = rt.plant.A_tem;
  tem.B = rt.plant.B_tem;
  Vec qdiag(nt);
  qdiag.head(nz).setConstant(cfg.weights.q_zone_temp);
  qdiag.tail(nt - nz).setConstant(cfg.weights.q_wall_temp);
  tem.Q = qdiag.asDiagonal();
  tem.R = cfg.weights.r_temp * Mat::Identity(nz, nz);
  tem.x_ref = Vec::Constant(nt, cfg.temp_ref);
  tem.horizon = cfg.horizon;
  tem.mean_disturbance = {rt.mean_thermal_dist.front()};
  // Box referenced at the setpoint: the inversion saturates (clamped, and
  // flagged) below the reference, where cooling is not wanted anyway.
  tem.box_lo = rt.topo.max_flow *
               (rt.topo.supply_air_temp - Vec::Constant(nz, cfg.temp_ref));
  tem.box_hi = Vec::Zero(nz);

  mpc::MpcProblem co2;
  co2.A = rt.plant.A_c;
  co2.B = rt.plant.B_c;
  co2.Q = cfg.weights.q_co2 * Mat::Identity(nz, nz);
  co2.R = cfg.weights.r_co2 * Mat::Identity(nz, nz);
  co2.x_ref = Vec::Constant(nz, cfg.co2_ref);
  co2.horizon = cfg.horizon;
  co2.mean_disturbance = {rt.mean_co2_dist.front()};
  Vec vent_max(nz);
  for (int i = 0; i < nz; ++i)
    vent_max(i) =
        rt.topo.max_flow / (rt.topo.air_density * rt.topo.zones[i].volume_m3);
  co2.box_lo = -vent_max * (cfg.co2_ref - rt.topo.outdoor_co2);
  co2.box_hi = Vec::Zero(nz);

  return {mpc::condense(tem), mpc::condense(co2)};
}

inline proto::StateConditioning thermal_conditioning(const Runtime& rt) {
  return {Vec::Constant(rt.n_thermal, rt.cfg.temp_ref),
          Vec::Constant(rt.n_thermal, rt.cfg.temp_scale)};
}

inline proto::StateConditioning co2_conditioning(const Runtime& rt) {
  return {Vec::Constant(rt.n_zones, rt.cfg.co2_ref),
          Vec::Constant(rt.n_zones, rt.cfg.co2_scale)};
}

// ---------------------------------------------------------------------------
// Byte accounting
// ---------------------------------------------------------------------------

constexpr std::size_t kPlainFrameHeader = 16;

/// Plaintext payload of one trigger: state vector up, two stacked plans down.
inline std::size_t plaintext_bytes_per_trigger(const Runtime& rt) {
  const std::size_t up = kPlainFrameHeader + 8 * rt.n_stacked;
  const std::size_t down =
      2 * (kPlainFrameHeader + 8 * rt.n_zones * rt.cfg.horizon);
  return up + down;
}

namespace detail {

inline std::size_t ct_bytes(const ckks::Context& ctx, std::size_t level) {
  const std::size_t header = 4 + 2 + 8 + 1 + 1 + 8 + 4;
  return header + 2 * (4 + 1 + (level + 1) * ctx.degree() * 8);
}

inline std::size_t wire_bytes(std::size_t ct_count, std::size_t ct_size) {
  return 9 + ct_count * (8 + ct_size);
}

}  // namespace detail

/// Exact message bytes of one encrypted FGM session (mirrors the wire
/// layout of run_encrypted_fgm; checked against real transcripts in tests).
inline std::size_t encrypted_session_bytes(const ckks::Context& ctx, int n_u,
                                           int n_x, int k) {
  const std::size_t lvl_u = ctx.top_level();
  const std::size_t lvl_c = lvl_u - 1;
  const std::size_t init = 9 + n_x * (8 + detail::ct_bytes(ctx, lvl_c)) +
                           n_u * (8 + detail::ct_bytes(ctx, lvl_u)) +
                           n_u * (8 + detail::ct_bytes(ctx, lvl_c)) +
                           (8 + detail::ct_bytes(ctx, lvl_c));  // offset
  const std::size_t grad = detail::wire_bytes(1, detail::ct_bytes(ctx, lvl_c - 1));
  const std::size_t proj = detail::wire_bytes(n_u, detail::ct_bytes(ctx, lvl_u));
  const std::size_t result = proj;
  return init + static_cast<std::size_t>(k) * (grad + proj) + result;
}

/// Per-trigger encrypted payload: one session per MPC problem.
inline std::size_t encrypted_bytes_per_trigger(const ckks::Context& ctx,
                                               const Runtime& rt) {
  const int n_u = rt.n_zones * rt.cfg.horizon;
  return encrypted_session_bytes(ctx, n_u, rt.n_thermal, rt.cfg.fgm_iterations) +
         encrypted_session_bytes(ctx, n_u, rt.n_zones, rt.cfg.fgm_iterations);
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

struct RunMetrics {
  double violation_pct_temp = 0.0;
  double violation_pct_co2 = 0.0;
  double max_violation_temp = 0.0;  // K beyond the band
  double max_violation_co2 = 0.0;   // ppm beyond the limit
  double comm_rate_pct = 0.0;
  std::size_t total_bytes = 0;
  double total_cost = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  int steps = 0;
  int triggers = 0;
};

struct StepRow {
  int t = 0;
  int action = 0;
  bool forced = false;
  building::PlantState state;  // after the step
  Vec u_tem, u_c, flow;
  double stage_cost = 0.0;
  std::size_t bytes = 0;
};

struct RunResult {
  std::vector<StepRow> rows;
  double terminal_cost = 0.0;
  policy::EpisodeTrace learning;  // populated when recording is on
  RunMetrics metrics;
};

struct Decision {
  int action = 0;
  double prob = 0.0;        // policy probability of a = 1 where applicable
  bool policy_backed = false;  // contributes to the score-function gradient
};

using DecisionFn =
    std::function<Decision(const trigger::TriggerState&, int step, Rng&)>;

struct LoopOptions {
  bool record_learning = false;
  std::optional<building::PlantState> initial_state;
  int start_step = -1;   // -1: config value
  int num_steps = -1;    // -1: config value
  std::optional<std::uint64_t> seed_override;
  // When set, every encrypted solve appends its transcript here.
  std::vector<proto::Transcript>* transcript_sink = nullptr;
};

inline building::PlantState default_initial_state(const Runtime& rt,
                                                  int start_step) {
  building::PlantState s;
  s.zone_temps = Vec::Constant(rt.n_zones, rt.cfg.temp_ref);
  const double ambient = rt.scen.disturbance.outdoor_temp[start_step];
  s.wall_temps = Vec::Constant(rt.n_thermal - rt.n_zones,
                               0.5 * (rt.cfg.temp_ref + ambient));
  s.zone_co2 = Vec::Constant(rt.n_zones, rt.cfg.co2_ref - 150.0);
  return s;
}

/// Sample-count metrics over a finished run: a sample violates when any
/// zone is outside the band (temperature) or above the limit (CO2); the
/// maximum violation is taken over all zones and samples.
inline RunMetrics compute_metrics(const std::vector<StepRow>& rows,
                                  double terminal_cost,
                                  const ExperimentConfig& cfg) {
  RunMetrics m;
  m.steps = static_cast<int>(rows.size());
  if (rows.empty()) return m;
  const int nz = static_cast<int>(rows.front().state.zone_temps.size());
  for (const auto& row : rows) {
    m.triggers += row.action;
    m.total_bytes += row.bytes;
    m.total_cost += row.stage_cost;
    bool viol_t = false, viol_c = false;
    for (int i = 0; i < nz; ++i) {
      const double temp = row.state.zone_temps(i);
      if (temp < cfg.band_lo || temp > cfg.band_hi) {
        viol_t = true;
        m.max_violation_temp =
            std::max(m.max_violation_temp,
                     std::max(cfg.band_lo - temp, temp - cfg.band_hi));
      }
      const double co2 = row.state.zone_co2(i);
      if (co2 > cfg.co2_limit) {
        viol_c = true;
        m.max_violation_co2 = std::max(m.max_violation_co2, co2 - cfg.co2_limit);
      }
    }
    m.violation_pct_temp += viol_t ? 1.0 : 0.0;
    m.violation_pct_co2 += viol_c ? 1.0 : 0.0;
  }
  m.total_cost += terminal_cost;
  m.violation_pct_temp *= 100.0 / m.steps;
  m.violation_pct_co2 *= 100.0 / m.steps;
  m.comm_rate_pct = 100.0 * m.triggers / m.steps;
  return m;
}

/// Steps the nonlinear plant under the event-triggered MPC. At every
/// trigger both problems are solved (plaintext FGM or the encrypted
/// protocol), the two flow requests are arbitrated by componentwise max,
/// and the plans are stored for replay at hold offsets.
inline RunResult run_closed_loop(const Runtime& rt, const DecisionFn& decide,
                                 const LoopOptions& opts = {}) {
  const auto& cfg = rt.cfg;
  const int start = opts.start_step >= 0 ? opts.start_step : cfg.start_step;
  const int steps = opts.num_steps >= 0
                        ? opts.num_steps
                        : (cfg.duration_steps < 0
                               ? static_cast<int>(rt.scen.size()) - start
                               : cfg.duration_steps);
  if (start < 0 || static_cast<std::size_t>(start + steps) > rt.scen.size())
    throw ConfigError("run window exceeds the scenario length");
  rt.scen.disturbance.validate(rt.n_zones,
                               static_cast<std::size_t>(start + steps));

  const std::uint64_t seed = opts.seed_override.value_or(cfg.seed);
  Rng loop_rng = Rng(seed).derive(0xC10);
  Rng he_rng = Rng(seed).derive(0xE7C);

  Engines engines = build_engines(rt);

  // Optional encryption stack; contexts are static, the per-session offset
  // travels in each init message.
  std::optional<ckks::Context> he_ctx;
  std::optional<ckks::KeySet> he_keys;
  std::optional<proto::ProtocolPair> pair_tem, pair_co2;
  if (cfg.encryption.enabled) {
    he_ctx.emplace(cfg.encryption.params);
    he_keys = ckks::keygen(*he_ctx, cfg.encryption.keygen_seed);
    pair_tem = proto::make_protocol_pair(*he_ctx, *he_keys, engines.thermal,
                                         thermal_conditioning(rt),
                                         he_rng.next_u64());
    pair_co2 = proto::make_protocol_pair(*he_ctx, *he_keys, engines.co2,
                                         co2_conditioning(rt),
                                         he_rng.next_u64());
  }

  const int n_u = rt.n_zones * cfg.horizon;

  building::PlantState state =
      opts.initial_state ? *opts.initial_state
                         : default_initial_state(rt, start);
  trigger::TriggerState ts{state.stacked(), state.stacked(), 0};
  trigger::StoredPlan plan_tem{Mat::Zero(rt.n_zones, cfg.horizon)};
  trigger::StoredPlan plan_co2{Mat::Zero(rt.n_zones, cfg.horizon)};
  Vec last_sol_tem = Vec::Zero(n_u), last_sol_co2 = Vec::Zero(n_u);
  int last_solve_step = -1;

  RunResult result;
  result.rows.reserve(steps);
  double solve_ms_sum = 0.0;
  int solve_count = 0;

  for (int t = 0; t < steps; ++t) {
    const int abs_step = start + t;

    Decision dec;
    bool forced = false;
    if (t == 0) {
      dec.action = 1;  // the loop always communicates at episode start
      forced = true;
    } else if (trigger::forced_trigger(ts, rt.trig_cfg)) {
      dec.action = 1;
      forced = true;
    } else {
      dec = decide(ts, t, loop_rng);
    }
    const int a = dec.action;

    double solve_ms = 0.0;
    std::size_t bytes = 0;
    if (a == 1) {
      const int shift = last_solve_step < 0 ? 0 : t - last_solve_step;
      const Vec warm_tem =
          last_solve_step < 0
              ? mpc::project_box(Vec::Zero(n_u), engines.thermal.lo,
                                 engines.thermal.hi)
              : mpc::shift_plan(engines.thermal, last_sol_tem, shift, rt.n_zones);
      const Vec warm_co2 =
          last_solve_step < 0
              ? mpc::project_box(Vec::Zero(n_u), engines.co2.lo, engines.co2.hi)
              : mpc::shift_plan(engines.co2, last_sol_co2, shift, rt.n_zones);

      // Receding-horizon prediction: typical-day disturbances over the
      // upcoming window set the affine term of both QPs.
      const Vec offset_tem = engines.thermal.offset_for(
          rt.mean_window(rt.mean_thermal_dist, abs_step));
      const Vec offset_co2 =
          engines.co2.offset_for(rt.mean_window(rt.mean_co2_dist, abs_step));

      const Vec x_tem = state.thermal();
      const Vec x_co2 = state.zone_co2;
      const auto t0 = std::chrono::steady_clock::now();
      if (cfg.encryption.enabled) {
        auto res_t = proto::run_encrypted_fgm(pair_tem->cloud, pair_tem->system,
                                              x_tem, warm_tem,
                                              cfg.fgm_iterations, nullptr,
                                              &offset_tem);
        auto res_c = proto::run_encrypted_fgm(pair_co2->cloud, pair_co2->system,
                                              x_co2, warm_co2,
                                              cfg.fgm_iterations, nullptr,
                                              &offset_co2);
        last_sol_tem = res_t.u;
        last_sol_co2 = res_c.u;
        bytes = res_t.transcript.total_bytes() + res_c.transcript.total_bytes();
        if (opts.transcript_sink) {
          opts.transcript_sink->push_back(std::move(res_t.transcript));
          opts.transcript_sink->push_back(std::move(res_c.transcript));
        }
      } else {
        engines.thermal.offset = offset_tem;
        engines.co2.offset = offset_co2;
        last_sol_tem =
            mpc::fgm_solve(engines.thermal, x_tem, warm_tem, cfg.fgm_iterations);
        last_sol_co2 =
            mpc::fgm_solve(engines.co2, x_co2, warm_co2, cfg.fgm_iterations);
        bytes = plaintext_bytes_per_trigger(rt);
      }
      const auto t1 = std::chrono::steady_clock::now();
      solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      solve_ms_sum += solve_ms;
      ++solve_count;
      result.metrics.max_solve_ms = std::max(result.metrics.max_solve_ms, solve_ms);
      last_solve_step = t;

      plan_tem.inputs = Eigen::Map<const Mat>(last_sol_tem.data(), rt.n_zones,
                                              cfg.horizon);
      plan_co2.inputs = Eigen::Map<const Mat>(last_sol_co2.data(), rt.n_zones,
                                              cfg.horizon);
    }

    const Vec u_tem = trigger::select_input(ts, a, plan_tem, plan_tem);
    const Vec u_c = trigger::select_input(ts, a, plan_co2, plan_co2);
    Vec u_stacked(2 * rt.n_zones);
    u_stacked << u_tem, u_c;
    const double cost = trigger::stage_cost(ts, u_stacked, a, rt.trig_cfg);

    auto flows = building::feedback_linearize(rt.topo, state, u_tem, u_c);
    const Vec flow = mpc::arbitrate_flows(flows.flow_tem, flows.flow_c);
    state = building::step_plant(rt.topo, rt.plant, state, flow,
                                 rt.scen.at(abs_step));

    if (opts.record_learning) {
      policy::StepRecord rec;
      rec.features = rt.normalizer.features(ts);
      rec.action = a;
      rec.stage_cost = cost;
      rec.policy_backed = dec.policy_backed && !forced;
      if (rec.policy_backed) {
        const double p = std::clamp(dec.prob, policy::kProbClamp,
                                    1.0 - policy::kProbClamp);
        rec.log_prob = a ? std::log(p) : std::log(1.0 - p);
        rec.entropy = policy::entropy_of(p);
      }
      result.learning.steps.push_back(rec);
    }

    StepRow row;
    row.t = abs_step;
    row.action = a;
    row.forced = forced;
    row.state = state;
    row.u_tem = u_tem;
    row.u_c = u_c;
    row.flow = flow;
    row.stage_cost = cost;
    row.bytes = bytes;
    result.rows.push_back(std::move(row));

    ts = trigger::advance_trigger_state(ts, a, state.stacked());
  }

  result.terminal_cost = trigger::terminal_cost(ts.x, rt.trig_cfg);
  result.learning.terminal_cost = result.terminal_cost;

  const double max_ms = result.metrics.max_solve_ms;
  result.metrics = compute_metrics(result.rows, result.terminal_cost, cfg);
  result.metrics.mean_solve_ms =
      solve_count > 0 ? solve_ms_sum / solve_count : 0.0;
  result.metrics.max_solve_ms = max_ms;
  result.learning.total_bytes = result.metrics.total_bytes;
  return result;
}

// ---------------------------------------------------------------------------
// Decision functions
// ---------------------------------------------------------------------------

inline DecisionFn periodic_decision() {
  return [](const trigger::TriggerState&, int, Rng&) {
    return Decision{1, 1.0, false};
  };
}

/// Threshold on the componentwise-normalized deviation from the last
/// communicated state (temperatures and CO2 carry different units). The
/// error is evaluated over the sensed channels, zone temperatures and zone
/// CO2; interior wall nodes carry no sensors.
inline DecisionFn threshold_decision(const Runtime& rt, double alpha) {
  const Vec scale = rt.norm_scale_stacked;
  const int nz = rt.n_zones;
  const int nt = rt.n_thermal;
  (void)nt;
  return [scale, alpha, nz](const trigger::TriggerState& s, int, Rng&) {
    const Vec err = (s.x - s.y).cwiseQuotient(scale).cwiseAbs();
    const double sensed =
        std::max(err.head(nz).maxCoeff(), err.tail(nz).maxCoeff());
    return Decision{sensed > alpha ? 1 : 0, 0.0, false};
  };
}

/// Deterministic (greedy) execution of a trained policy.
inline DecisionFn learned_decision(const Runtime& rt,
                                   const policy::TrainedPolicy& tp) {
  return [&rt, tp](const trigger::TriggerState& s, int, Rng&) {
    const double p = policy::policy_prob(tp.params, tp.normalizer.features(s));
    return Decision{p > 0.5 ? 1 : 0, p, false};
  };
}

/// Greedy policy wrapped by the epsilon randomizer.
inline DecisionFn epsilon_decision(const Runtime& rt,
                                   const policy::TrainedPolicy& tp,
                                   double epsilon) {
  return [&rt, tp, epsilon](const trigger::TriggerState& s, int, Rng& rng) {
    const double p = policy::policy_prob(tp.params, tp.normalizer.features(s));
    const int a_star = p > 0.5 ? 1 : 0;
    return Decision{policy::epsilon_randomize(a_star, epsilon, rng), p, false};
  };
}

/// Stochastic execution: sample the policy distribution (used by the
/// entropy-regularized deployments and during training).
inline DecisionFn sampled_decision(const Runtime& rt,
                                   const policy::TrainedPolicy& tp) {
  return [&rt, tp](const trigger::TriggerState& s, int, Rng& rng) {
    const double p = policy::policy_prob(tp.params, tp.normalizer.features(s));
    return Decision{rng.bernoulli(p) ? 1 : 0, p, true};
  };
}

inline DecisionFn make_decision_fn(const Runtime& rt,
                                   const policy::TrainedPolicy* tp) {
  switch (rt.cfg.trigger.mode) {
    case TriggerMode::kPeriodic:
      return periodic_decision();
    case TriggerMode::kThreshold:
      return threshold_decision(rt, rt.cfg.trigger.alpha);
    case TriggerMode::kLearned:
      if (!tp) throw ConfigError("learned mode needs a trained policy");
      return learned_decision(rt, *tp);
    case TriggerMode::kEpsilonRandomized:
      if (!tp) throw ConfigError("epsilon mode needs a trained policy");
      return epsilon_decision(rt, *tp, rt.cfg.trigger.epsilon);
    case TriggerMode::kEntropyRegularized:
      if (!tp) throw ConfigError("entropy mode needs a trained policy");
      return sampled_decision(rt, *tp);
  }
  throw ConfigError("unhandled trigger mode");
}

// ---------------------------------------------------------------------------
// Policy training on the closed loop
// ---------------------------------------------------------------------------

struct TrainSettings {
  policy::LearnerConfig learner;
  int episode_steps = 288;  // one day
  int hidden = 100;
  double init_stddev = 0.05;
};

/// Episode generator: a one-day window at a random scenario offset with a
/// randomized initial state, rolled under the sampled policy. Training uses
/// the plaintext MPC path; protocol equivalence is enforced separately.
inline policy::EpisodeGenerator make_training_env(const Runtime& rt,
                                                  const TrainSettings& ts) {
  return [&rt, ts](const policy::PolicyParams& params,
                   Rng& rng) -> policy::EpisodeTrace {
    const int days =
        static_cast<int>(rt.scen.size()) / rt.steps_per_day();
    const int day = rng.next_int(0, std::max(0, days - 1));
    const int start = day * rt.steps_per_day();

    building::PlantState init = default_initial_state(rt, start);
    for (int i = 0; i < rt.n_zones; ++i) {
      init.zone_temps(i) += rng.uniform(-0.8, 0.8);
      init.zone_co2(i) += rng.uniform(-120.0, 120.0);
    }
    for (int i = 0; i < init.wall_temps.size(); ++i)
      init.wall_temps(i) += rng.uniform(-1.5, 1.5);

    policy::TrainedPolicy tp;
    tp.params = params;
    tp.normalizer = rt.normalizer;
    auto decide = sampled_decision(rt, tp);

    LoopOptions opts;
    opts.record_learning = true;
    opts.initial_state = init;
    opts.start_step = start;
    opts.num_steps = std::min(ts.episode_steps,
                              static_cast<int>(rt.scen.size()) - start);
    opts.seed_override = rng.next_u64();
    auto result = run_closed_loop(rt, decide, opts);
    return result.learning;
  };
}

struct TrainOutput {
  policy::TrainedPolicy policy;
  policy::TrainResult curve;
};

inline TrainOutput train_trigger_policy(const Runtime& rt,
                                        const TrainSettings& ts) {
  Rng init_rng(ts.learner.seed ^ 0x7a11);
  TrainOutput out;
  out.policy.params = policy::PolicyParams::random(
      rt.normalizer.feature_dim(), init_rng, ts.hidden, ts.init_stddev);
  out.policy.normalizer = rt.normalizer;
  out.policy.config_hash = fnv1a_value(rt.cfg.trigger.lambda,
                                       fnv1a_value(rt.cfg.seed));
  auto env = make_training_env(rt, ts);
  out.curve = policy::train(out.policy.params, env, ts.learner);
  return out;
}

// ---------------------------------------------------------------------------
// Size comparison and sweeps
// ---------------------------------------------------------------------------

struct SizeComparison {
  std::vector<std::size_t> plaintext_periodic;   // cumulative bytes per step
  std::vector<std::size_t> encrypted_periodic;
  std::vector<std::size_t> encrypted_triggered;
  double encrypted_over_plaintext = 0.0;
  double triggered_over_periodic = 0.0;
  double comm_rate = 0.0;  // of the event-triggered run
};

/// Cumulative communicated bytes for plaintext periodic, encrypted periodic
/// and encrypted event-triggered control over the same scenario and seed.
/// Trigger decisions come from the plaintext loop (the triggering unit sees
/// plaintext state either way); encrypted byte counts use the exact
/// per-session formula.
inline SizeComparison data_size_comparison(const Runtime& rt,
                                           const policy::TrainedPolicy* tp) {
  const ckks::Context ctx(rt.cfg.encryption.params);
  const std::size_t enc_bytes = encrypted_bytes_per_trigger(ctx, rt);
  const std::size_t plain_bytes = plaintext_bytes_per_trigger(rt);

  auto triggered = run_closed_loop(rt, make_decision_fn(rt, tp));

  SizeComparison out;
  std::size_t acc_pp = 0, acc_ep = 0, acc_et = 0;
  for (const auto& row : triggered.rows) {
    acc_pp += plain_bytes;  // periodic: every step is a trigger
    acc_ep += enc_bytes;
    acc_et += row.action ? enc_bytes : 0;
    out.plaintext_periodic.push_back(acc_pp);
    out.encrypted_periodic.push_back(acc_ep);
    out.encrypted_triggered.push_back(acc_et);
  }
  out.encrypted_over_plaintext =
      static_cast<double>(acc_ep) / static_cast<double>(acc_pp);
  out.triggered_over_periodic =
      static_cast<double>(acc_et) / static_cast<double>(acc_ep);
  out.comm_rate = triggered.metrics.comm_rate_pct / 100.0;
  return out;
}

struct SweepRow {
  double value = 0.0;
  double comm_rate_pct = 0.0;
  double violation_pct_temp = 0.0;
  double violation_pct_co2 = 0.0;
  double max_violation_temp = 0.0;
  double max_violation_co2 = 0.0;
  double total_cost = 0.0;
};

/// One evaluation run per threshold value (no training involved).
inline std::vector<SweepRow> sweep_threshold(const Runtime& rt,
                                             const std::vector<double>& alphas) {
  if (alphas.size() < 2) throw ArgError("sweep needs at least two values");
  std::vector<SweepRow> rows;
  for (double a : alphas) {
    Runtime local = rt;
    local.cfg.trigger.mode = TriggerMode::kThreshold;
    local.cfg.trigger.alpha = a;
    auto res = run_closed_loop(local, threshold_decision(local, a));
    rows.push_back({a, res.metrics.comm_rate_pct, res.metrics.violation_pct_temp,
                    res.metrics.violation_pct_co2, res.metrics.max_violation_temp,
                    res.metrics.max_violation_co2, res.metrics.total_cost});
  }
  return rows;
}

/// Retrains the policy per lambda value, then evaluates greedily.
inline std::vector<SweepRow> sweep_lambda(const Runtime& rt,
                                          const std::vector<double>& lambdas,
                                          const TrainSettings& ts) {
  if (lambdas.size() < 2) throw ArgError("sweep needs at least two values");
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    Runtime local = rt;
    local.cfg.trigger.mode = TriggerMode::kLearned;
    local.cfg.trigger.lambda = l;
    local.trig_cfg.lambda = l;
    auto trained = train_trigger_policy(local, ts);
    auto res = run_closed_loop(local, learned_decision(local, trained.policy));
    rows.push_back({l, res.metrics.comm_rate_pct, res.metrics.violation_pct_temp,
                    res.metrics.violation_pct_co2, res.metrics.max_violation_temp,
                    res.metrics.max_violation_co2, res.metrics.total_cost});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
  return {
      {"violation_pct_temp", m.violation_pct_temp},
      {"violation_pct_co2", m.violation_pct_co2},
      {"max_violation_temp_k", m.max_violation_temp},
      {"max_violation_co2_ppm", m.max_violation_co2},
      {"comm_rate_pct", m.comm_rate_pct},
      {"total_bytes", m.total_bytes},
      {"total_cost", m.total_cost},
      {"mean_solve_ms", m.mean_solve_ms},
      {"max_solve_ms", m.max_solve_ms},
      {"steps", m.steps},
      {"triggers", m.triggers},
  };
}

/// Deterministic per-step trace (timing intentionally excluded).
inline void write_trace_csv(const RunResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace csv: " + path);
  const int nz = static_cast<int>(res.rows.front().state.zone_temps.size());
  out << "t,action,forced";
  for (int i = 1; i <= nz; ++i) out << ",temp_zone" << i;
  for (int i = 1; i <= nz; ++i) out << ",co2_zone" << i;
  for (int i = 1; i <= nz; ++i) out << ",flow_zone" << i;
  out << ",stage_cost,bytes\n";
  char buf[64];
  for (const auto& r : res.rows) {
    out << r.t << ',' << r.action << ',' << (r.forced ? 1 : 0);
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, ",%.6f", v);
      out << buf;
    };
    for (int i = 0; i < nz; ++i) put(r.state.zone_temps(i));
    for (int i = 0; i < nz; ++i) put(r.state.zone_co2(i));
    for (int i = 0; i < nz; ++i) put(r.flow(i));
    std::snprintf(buf, sizeof buf, ",%.9g,%zu\n", r.stage_cost, r.bytes);
    out << buf;
  }
}

inline void write_curve_csv(const policy::TrainResult& tr,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write curve csv: " + path);
  out << "iteration,mean_cost,comm_rate,mean_entropy\n";
  char buf[96];
  for (const auto& p : tr.curve) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6f\n", p.iteration,
                  p.mean_cost, p.comm_rate, p.mean_entropy);
    out << buf;
  }
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows,
                            const std::string& param_name,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write sweep csv: " + path);
  out << param_name
      << ",comm_rate_pct,violation_pct_temp,violation_pct_co2,"
         "max_violation_temp,max_violation_co2,total_cost\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g,%.4f,%.4f,%.4f,%.4f,%.4f,%.9g\n",
                  r.value, r.comm_rate_pct, r.violation_pct_temp,
                  r.violation_pct_co2, r.max_violation_temp,
                  r.max_violation_co2, r.total_cost);
    out << buf;
  }
}

inline void write_size_comparison_csv(const SizeComparison& sc,
                                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write size csv: " + path);
  out << "step,plaintext_periodic,encrypted_periodic,encrypted_triggered\n";
  for (std::size_t t = 0; t < sc.plaintext_periodic.size(); ++t)
    out << t << ',' << sc.plaintext_periodic[t] << ','
        << sc.encrypted_periodic[t] << ',' << sc.encrypted_triggered[t] << "\n";
}

}  // namespace hestia::harness

#endif  // HESTIA_HARNESS_HPP_
