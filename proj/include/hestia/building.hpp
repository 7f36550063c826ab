// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Lumped RC thermal network and per-zone CO2 mass balance. Walls and rooms
// are separate thermal nodes; each wall couples to its adjacent rooms
// through half the wall resistance plus the inner film resistance, and
// external walls couple to ambient through the outer film. Ventilation
// enters bilinearly (mass flow times supply/room temperature difference),
// which the controller removes with a change of input variables
// (feedback linearization) and re-applies at actuation time.

#ifndef HESTIA_BUILDING_HPP_
#define HESTIA_BUILDING_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hestia/common.hpp"

namespace hestia::building {

struct ZoneSpec {
  std::string name;
  double volume_m3 = 0.0;
  double heat_capacity = 0.0;  // J/K
  // Effective window aperture (area x transmittance x orientation): maps the
  // global radiation signal directly into the room node.
  double window_eff_m2 = 0.0;
};

struct WallSpec {
  std::string name;
  double resistance = 0.0;   // total wall resistance, K/W
  double inner_film = 0.0;   // convective resistance, room side, K/W
  double outer_film = 0.0;   // convective resistance, ambient side, K/W
  double heat_capacity = 0.0;  // J/K
  double area_m2 = 0.0;
  double absorptivity = 0.0;
  double solar_fraction = 0.0;  // orientation weight on the global radiation signal
  bool external = false;
  std::vector<int> zones;  // adjacent zone indices
};

struct Topology {
  std::vector<ZoneSpec> zones;
  std::vector<WallSpec> walls;
  Vec supply_air_temp;          // per zone, degC
  double specific_heat_air = 1005.0;  // J/(kg K)
  double outdoor_co2 = 420.0;         // ppm
  double air_density = 1.2;           // kg/m3
  double max_flow = 0.12;             // per-zone mass flow clamp, kg/s
  double co2_gen_lps_per_person = 0.004;  // litres CO2 per second per person
  double occupant_heat_w = 100.0;
  double base_load_w = 0.0;

  int num_zones() const { return static_cast<int>(zones.size()); }
  int num_walls() const { return static_cast<int>(walls.size()); }
  int num_thermal_nodes() const { return num_zones() + num_walls(); }

  /// ppm * m3 / s generated by one person.
  double co2_gen_ppm_m3() const { return co2_gen_lps_per_person * 1000.0; }

  void validate() const {
    if (zones.empty()) throw ConfigError("topology has no zones");
    if (supply_air_temp.size() != num_zones())
      throw ConfigError("supply_air_temp size must match zone count");
    for (const auto& z : zones)
      if (z.volume_m3 <= 0.0 || z.heat_capacity <= 0.0)
        throw ConfigError("zone volumes and capacities must be positive");
    for (const auto& w : walls) {
      if (w.resistance <= 0.0 || w.inner_film <= 0.0 || w.heat_capacity <= 0.0)
        throw ConfigError("wall resistances and capacities must be positive");
      if (w.external && w.outer_film <= 0.0)
        throw ConfigError("external walls need a positive outer film resistance");
      if (w.zones.empty()) throw ConfigError("wall adjacent to no zone");
      if (w.external && w.zones.size() != 1)
        throw ConfigError("external walls must be adjacent to exactly one zone");
      for (int z : w.zones)
        if (z < 0 || z >= num_zones())
          throw ConfigError("wall adjacency references unknown zone");
    }
    if (specific_heat_air <= 0.0 || air_density <= 0.0 || max_flow <= 0.0)
      throw ConfigError("air constants must be positive");
  }

  /// Zone-side adjacency derived from the wall-side sets, so the two views
  /// are symmetric by construction.
  std::vector<std::vector<int>> walls_of_zone() const {
    std::vector<std::vector<int>> out(zones.size());
    for (int j = 0; j < num_walls(); ++j)
      for (int z : walls[j].zones) out[z].push_back(j);
    return out;
  }
};

struct PlantState {
  Vec zone_temps;  // degC
  Vec wall_temps;  // degC
  Vec zone_co2;    // ppm

  Vec stacked() const {
    Vec x(zone_temps.size() + wall_temps.size() + zone_co2.size());
    x << zone_temps, wall_temps, zone_co2;
    return x;
  }

  Vec thermal() const {
    Vec x(zone_temps.size() + wall_temps.size());
    x << zone_temps, wall_temps;
    return x;
  }
};

struct DisturbanceSample {
  double outdoor_temp = 0.0;  // degC
  double solar_wm2 = 0.0;     // global radiation signal
  Eigen::VectorXi occupancy;  // heads per zone
};

/// Disturbance trajectories covering a simulation horizon at the plant
/// sample period.
struct Disturbance {
  std::vector<double> outdoor_temp;
  std::vector<double> solar_wm2;
  std::vector<Eigen::VectorXi> occupancy;

  std::size_t size() const { return outdoor_temp.size(); }

  void validate(int num_zones, std::size_t horizon) const {
    if (outdoor_temp.size() < horizon || solar_wm2.size() < horizon ||
        occupancy.size() < horizon)
      throw ConfigError("disturbance trajectories shorter than the horizon");
    for (const auto& occ : occupancy) {
      if (occ.size() != num_zones)
        throw ConfigError("occupancy row does not match zone count");
      if (occ.minCoeff() < 0) throw ConfigError("negative occupancy");
    }
  }

  DisturbanceSample at(std::size_t t) const {
    return {outdoor_temp[t], solar_wm2[t], occupancy[t]};
  }
};

/// Continuous-time thermal ODE coefficients plus the exogenous channel maps.
struct ContinuousModel {
  Mat A;        // thermal nodes x thermal nodes
  Mat B;        // thermal nodes x zones (zero rows for walls)
  Vec coef_to;     // coefficient on outdoor temperature per node
  Vec coef_solar;  // coefficient on the global radiation signal per node
  Mat coef_qh;     // map from per-zone internal heat gain (W) to node rates
};

inline ContinuousModel build_continuous_model(const Topology& topo) {
  topo.validate();
  const int nz = topo.num_zones();
  const int nw = topo.num_walls();
  const int nt = nz + nw;

  ContinuousModel m;
  m.A = Mat::Zero(nt, nt);
  m.B = Mat::Zero(nt, nz);
  m.coef_to = Vec::Zero(nt);
  m.coef_solar = Vec::Zero(nt);
  m.coef_qh = Mat::Zero(nt, nz);

  for (int j = 0; j < nw; ++j) {
    const WallSpec& w = topo.walls[j];
    const int wj = nz + j;
    const double cw = w.heat_capacity;
    const double cond_in = 1.0 / (w.inner_film + 0.5 * w.resistance);
    for (int i : w.zones) {
      const double ci = topo.zones[i].heat_capacity;
      // Wall node balance, room side.
      m.A(wj, wj) -= cond_in / cw;
      m.A(wj, i) += cond_in / cw;
      // Room node balance, wall side.
      m.A(i, i) -= cond_in / ci;
      m.A(i, wj) += cond_in / ci;
    }
    if (w.external) {
      const double cond_out = 1.0 / (w.outer_film + 0.5 * w.resistance);
      m.A(wj, wj) -= cond_out / cw;
      m.coef_to(wj) += cond_out / cw;
      m.coef_solar(wj) += w.absorptivity * w.area_m2 * w.solar_fraction / cw;
    }
  }
  for (int i = 0; i < nz; ++i) {
    const double ci = topo.zones[i].heat_capacity;
    m.B(i, i) = topo.specific_heat_air / ci;
    m.coef_qh(i, i) = 1.0 / ci;
    m.coef_solar(i) += topo.zones[i].window_eff_m2 / ci;
  }
  return m;
}

enum class Discretization { kForwardEuler, kZeroOrderHold };

/// Discrete plant model. Thermal and CO2 blocks are kept separate for the
/// two MPC problems and combined block-diagonally for the trigger layer.
struct LinearPlant {
  Mat A_tem, B_tem;
  Mat A_c, B_c;
  Mat A, B;
  Mat w_map;  // maps continuous thermal exogenous rates to discrete offsets
  double dt = 0.0;
  int n_zones = 0, n_walls = 0;
  ContinuousModel cont;
  double spectral_radius = 0.0;
  bool stability_warning = false;

  /// Discrete thermal disturbance w_t for one sample.
  Vec thermal_disturbance(const Topology& topo, double outdoor_temp,
                          double solar_wm2, const Vec& zone_heat_w) const {
    Vec rate = cont.coef_to * outdoor_temp + cont.coef_solar * solar_wm2 +
               cont.coef_qh * zone_heat_w;
    return w_map * rate;
  }

  /// Per-zone internal heat gains for a disturbance sample.
  Vec zone_heat_w(const Topology& topo, const DisturbanceSample& d) const {
    Vec q(n_zones);
    for (int i = 0; i < n_zones; ++i)
      q(i) = topo.occupant_heat_w * d.occupancy(i) + topo.base_load_w;
    return q;
  }

  /// Discrete CO2 disturbance (generation term) for one sample, ppm.
  Vec co2_disturbance(const Topology& topo, const DisturbanceSample& d) const {
    Vec w(n_zones);
    for (int i = 0; i < n_zones; ++i)
      w(i) = dt * topo.co2_gen_ppm_m3() * d.occupancy(i) /
             topo.zones[i].volume_m3;
    return w;
  }
};

inline LinearPlant discretize(const Topology& topo, const ContinuousModel& cm,
                              double dt,
                              Discretization scheme = Discretization::kForwardEuler) {
  if (dt <= 0.0) throw ArgError("sample period must be positive");
  const int nz = topo.num_zones();
  const int nt = cm.A.rows();

  LinearPlant p;
  p.dt = dt;
  p.n_zones = nz;
  p.n_walls = nt - nz;
  p.cont = cm;

  if (scheme == Discretization::kForwardEuler) {
    p.A_tem = Mat::Identity(nt, nt) + dt * cm.A;
    p.B_tem = dt * cm.B;
    p.w_map = dt * Mat::Identity(nt, nt);
  } else {
    // Exact hold via the augmented exponential
    //   exp([[A, I], [0, 0]] dt) = [[Ad, Wd], [0, I]].
    Mat aug = Mat::Zero(2 * nt, 2 * nt);
    aug.topLeftCorner(nt, nt) = cm.A * dt;
    aug.topRightCorner(nt, nt) = Mat::Identity(nt, nt) * dt;
    // Scaling-and-squaring with a Taylor core; the RC dynamics are slow
    // relative to the sample period, so a short series suffices.
    int squarings = 0;
    double norm = aug.cwiseAbs().rowwise().sum().maxCoeff();
    while (norm > 0.5) {
      norm *= 0.5;
      ++squarings;
    }
    Mat x = aug / std::pow(2.0, squarings);
    Mat expm = Mat::Identity(2 * nt, 2 * nt);
    Mat term = Mat::Identity(2 * nt, 2 * nt);
    for (int k = 1; k <= 12; ++k) {
      term = term * x / static_cast<double>(k);
      expm += term;
    }
    for (int s = 0; s < squarings; ++s) expm = expm * expm;
    p.A_tem = expm.topLeftCorner(nt, nt);
    p.w_map = expm.topRightCorner(nt, nt);
    p.B_tem = p.w_map * cm.B;
  }

  p.A_c = Mat::Identity(nz, nz);
  p.B_c = dt * Mat::Identity(nz, nz);

  p.A = Mat::Zero(nt + nz, nt + nz);
  p.A.topLeftCorner(nt, nt) = p.A_tem;
  p.A.bottomRightCorner(nz, nz) = p.A_c;
  p.B = Mat::Zero(nt + nz, 2 * nz);
  p.B.topLeftCorner(nt, nz) = p.B_tem;
  p.B.bottomRightCorner(nz, nz) = p.B_c;

  p.spectral_radius = 0.0;
  for (const auto& ev : p.A_tem.eigenvalues())
    p.spectral_radius = std::max(p.spectral_radius, std::abs(ev));
  p.stability_warning = p.spectral_radius > 1.0 + 1e-9;
  return p;
}

/// One sample of the nonlinear plant: thermal update with the bilinear
/// ventilation term, CO2 update with the mass balance.
inline PlantState step_plant(const Topology& topo, const LinearPlant& plant,
                             const PlantState& state, const Vec& mass_flow,
                             const DisturbanceSample& dist) {
  const int nz = plant.n_zones;
  if (mass_flow.size() != nz) throw ArgError("mass flow size mismatch");
  if (state.zone_temps.size() != nz ||
      state.wall_temps.size() != plant.n_walls || state.zone_co2.size() != nz)
    throw ArgError("plant state dimensions mismatch");
  if (mass_flow.minCoeff() < 0.0) throw ArgError("mass flow must be nonnegative");

  // Virtual inputs implied by the physical flows.
  const Vec u_tem =
      mass_flow.cwiseProduct(topo.supply_air_temp - state.zone_temps);
  Vec u_c(nz);
  for (int i = 0; i < nz; ++i) {
    const double vent = mass_flow(i) / (topo.air_density * topo.zones[i].volume_m3);
    u_c(i) = vent * (topo.outdoor_co2 - state.zone_co2(i));
  }

  const Vec w_tem = plant.thermal_disturbance(
      topo, dist.outdoor_temp, dist.solar_wm2, plant.zone_heat_w(topo, dist));
  const Vec t_next =
      plant.A_tem * state.thermal() + plant.B_tem * u_tem + w_tem;
  const Vec c_next = plant.A_c * state.zone_co2 + plant.B_c * u_c +
                     plant.co2_disturbance(topo, dist);

  PlantState next;
  next.zone_temps = t_next.head(nz);
  next.wall_temps = t_next.tail(plant.n_walls);
  next.zone_co2 = c_next;
  return next;
}

/// Linear step of the feedback-linearized model; shares the arithmetic of
/// step_plant so that substituting the change of variables is exact.
inline PlantState step_linear(const Topology& topo, const LinearPlant& plant,
                              const PlantState& state, const Vec& u_tem,
                              const Vec& u_c, const DisturbanceSample& dist) {
  const Vec w_tem = plant.thermal_disturbance(
      topo, dist.outdoor_temp, dist.solar_wm2, plant.zone_heat_w(topo, dist));
  const Vec t_next =
      plant.A_tem * state.thermal() + plant.B_tem * u_tem + w_tem;
  const Vec c_next = plant.A_c * state.zone_co2 + plant.B_c * u_c +
                     plant.co2_disturbance(topo, dist);
  PlantState next;
  next.zone_temps = t_next.head(plant.n_zones);
  next.wall_temps = t_next.tail(plant.n_walls);
  next.zone_co2 = c_next;
  return next;
}

constexpr double kSingularTolerance = 1e-6;

struct FlowCommand {
  Vec flow_tem;  // kg/s per zone, from the thermal virtual input
  Vec flow_c;    // kg/s per zone, from the CO2 virtual input
  bool clamped = false;
  bool singular = false;
};

/// Invert both changes of variables and clamp to the physical flow range.
inline FlowCommand feedback_linearize(const Topology& topo,
                                      const PlantState& state, const Vec& u_tem,
                                      const Vec& u_c) {
  const int nz = topo.num_zones();
  FlowCommand cmd;
  cmd.flow_tem = Vec::Zero(nz);
  cmd.flow_c = Vec::Zero(nz);
  for (int i = 0; i < nz; ++i) {
    const double denom_t = topo.supply_air_temp(i) - state.zone_temps(i);
    if (std::abs(denom_t) < kSingularTolerance) {
      cmd.flow_tem(i) = u_tem(i) == 0.0 ? 0.0 : topo.max_flow;
      cmd.singular = cmd.singular || u_tem(i) != 0.0;
    } else {
      cmd.flow_tem(i) = u_tem(i) / denom_t;
    }
    const double denom_c = topo.outdoor_co2 - state.zone_co2(i);
    if (std::abs(denom_c) < kSingularTolerance) {
      cmd.flow_c(i) = u_c(i) == 0.0 ? 0.0 : topo.max_flow;
      cmd.singular = cmd.singular || u_c(i) != 0.0;
    } else {
      cmd.flow_c(i) =
          u_c(i) * topo.air_density * topo.zones[i].volume_m3 / denom_c;
    }
    for (double* f : {&cmd.flow_tem(i), &cmd.flow_c(i)}) {
      if (*f < 0.0 || *f > topo.max_flow) cmd.clamped = true;
      *f = std::clamp(*f, 0.0, topo.max_flow);
    }
  }
  return cmd;
}

// ---------------------------------------------------------------------------
// Topology config file
// ---------------------------------------------------------------------------

inline Topology topology_from_json(const nlohmann::json& j) {
  Topology t;
  for (const auto& z : j.at("zones")) {
    ZoneSpec zs;
    zs.name = z.value("name", "");
    zs.volume_m3 = z.at("volume_m3").get<double>();
    zs.heat_capacity = z.at("heat_capacity_j_per_k").get<double>();
    zs.window_eff_m2 = z.value("window_eff_m2", 0.0);
    t.zones.push_back(zs);
  }
  for (const auto& w : j.at("walls")) {
    WallSpec ws;
    ws.name = w.value("name", "");
    ws.resistance = w.at("resistance_k_per_w").get<double>();
    ws.inner_film = w.at("inner_film_k_per_w").get<double>();
    ws.outer_film = w.value("outer_film_k_per_w", 0.0);
    ws.heat_capacity = w.at("heat_capacity_j_per_k").get<double>();
    ws.area_m2 = w.value("area_m2", 0.0);
    ws.absorptivity = w.value("absorptivity", 0.0);
    ws.solar_fraction = w.value("solar_fraction", 0.0);
    ws.external = w.at("external").get<bool>();
    ws.zones = w.at("zones").get<std::vector<int>>();
    t.walls.push_back(ws);
  }
  const auto supply = j.at("supply_air_temp_c").get<std::vector<double>>();
  t.supply_air_temp = Eigen::Map<const Vec>(supply.data(), supply.size());
  t.specific_heat_air = j.value("specific_heat_air", 1005.0);
  t.outdoor_co2 = j.value("outdoor_co2_ppm", 420.0);
  t.air_density = j.value("air_density", 1.2);
  t.max_flow = j.value("max_flow_kg_s", 0.12);
  t.co2_gen_lps_per_person = j.value("co2_gen_lps_per_person", 0.004);
  t.occupant_heat_w = j.value("occupant_heat_w", 100.0);
  t.base_load_w = j.value("base_load_w", 0.0);
  t.validate();
  return t;
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open topology file: " + path);
  nlohmann::json j;
  in >> j;
  return topology_from_json(j);
}

}  // namespace hestia::building

#endif  // HESTIA_BUILDING_HPP_
