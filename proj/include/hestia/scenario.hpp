// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Weather and occupancy trajectories: CSV ingestion plus a deterministic
// synthetic generator (diurnal ambient profile, daylight radiation, office
// style occupancy between 1 and 8 heads per zone).

#ifndef HESTIA_SCENARIO_HPP_
#define HESTIA_SCENARIO_HPP_

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hestia/building.hpp"
#include "hestia/common.hpp"

namespace hestia::scenario {

struct Scenario {
  double dt = 300.0;
  std::vector<double> timestamps;  // seconds from start
  building::Disturbance disturbance;

  std::size_t size() const { return timestamps.size(); }

  building::DisturbanceSample at(std::size_t t) const {
    return disturbance.at(t);
  }

  /// Per-day means of the exogenous signals, for the prediction model.
  struct DayMeans {
    double outdoor_temp = 0.0;
    double solar = 0.0;
    Vec occupancy;
  };

  DayMeans day_means(int day) const {
    const std::size_t per_day = static_cast<std::size_t>(86400.0 / dt);
    const std::size_t lo = std::min(day * per_day, size());
    const std::size_t hi = std::min(lo + per_day, size());
    DayMeans m;
    const int nz = static_cast<int>(disturbance.occupancy.front().size());
    m.occupancy = Vec::Zero(nz);
    if (hi == lo) return m;
    for (std::size_t t = lo; t < hi; ++t) {
      m.outdoor_temp += disturbance.outdoor_temp[t];
      m.solar += disturbance.solar_wm2[t];
      m.occupancy += disturbance.occupancy[t].cast<double>();
    }
    const double n = static_cast<double>(hi - lo);
    m.outdoor_temp /= n;
    m.solar /= n;
    m.occupancy /= n;
    return m;
  }
};

/// Smooth diurnal ambient profile with day-to-day variation, peaking
/// mid-afternoon.
inline double synthetic_ambient(double hour_of_day, double day_mean,
                                double day_amp) {
  return day_mean + day_amp * std::cos(2.0 * M_PI * (hour_of_day - 15.0) / 24.0);
}

/// Daylight radiation signal, W/m2 on the unweighted global channel.
inline double synthetic_solar(double hour_of_day, double peak) {
  if (hour_of_day < 6.0 || hour_of_day > 20.0) return 0.0;
  return peak * std::sin(M_PI * (hour_of_day - 6.0) / 14.0);
}

/// Office-style schedule with meeting bursts: within working hours a zone
/// holds one of a few discrete levels for an hour-scale block, so the head
/// count steps sharply between 1 and 8.
inline int synthetic_occupancy(double hour_of_day, Rng& rng) {
  if (hour_of_day < 7.0 || hour_of_day >= 20.0) return 1;
  if (hour_of_day >= 18.0) return rng.next_int(1, 3);
  // Blocks pick a level; meetings fill a zone, quiet spells empty it.
  const double roll = rng.next_double();
  if (roll < 0.35) return rng.next_int(1, 2);
  if (roll < 0.55) return rng.next_int(3, 5);
  return rng.next_int(6, 8);
}

/// Passing front: sharp ambient/solar drop at a random afternoon hour with
/// a slow recovery. Returns multiplicative solar factor and additive
/// ambient offset for the given hour.
struct FrontShape {
  bool active = false;
  double onset_hour = 14.0;
  double depth_k = 6.0;

  double ambient_offset(double hour) const {
    if (!active) return 0.0;
    const double ramp = 0.4;      // 24-minute drop
    const double recovery = 2.5;  // hours
    if (hour < onset_hour) return 0.0;
    if (hour < onset_hour + ramp)
      return -depth_k * (hour - onset_hour) / ramp;
    const double since = hour - onset_hour - ramp;
    if (since > recovery) return 0.0;
    return -depth_k * (1.0 - since / recovery);
  }

  double solar_factor(double hour) const {
    return 1.0 + 0.85 * ambient_offset(hour) / std::max(depth_k, 1e-9);
  }
};

inline Scenario make_synthetic_scenario(int days, int zones,
                                        std::uint64_t seed,
                                        double dt = 300.0) {
  if (days < 1 || zones < 1) throw ArgError("days and zones must be positive");
  Scenario sc;
  sc.dt = dt;
  const std::size_t per_day = static_cast<std::size_t>(86400.0 / dt);
  const std::size_t total = per_day * static_cast<std::size_t>(days);
  Rng weather_rng(seed);
  Rng occ_rng = weather_rng.derive(1);

  // Occupancy changes on an hourly grid, held in between.
  const std::size_t occ_hold = std::max<std::size_t>(1, 3600.0 / dt);
  std::vector<int> current_occ(zones, 1);

  for (int d = 0; d < days; ++d) {
    // Hot-summer profile with a heat wave every ninth day and occasional
    // afternoon fronts.
    const bool heat_wave = (d % 9) == 4;
    const double day_mean = 27.5 + 1.2 * std::sin(2.0 * M_PI * d / 9.0) +
                            (heat_wave ? 2.0 : 0.0) +
                            weather_rng.uniform(-0.7, 0.7);
    const double day_amp = 6.6 + weather_rng.uniform(-0.5, 0.5);
    const double solar_peak = 580.0 + weather_rng.uniform(-40.0, 40.0);
    FrontShape front;
    front.active = weather_rng.next_double() < 0.25;
    front.onset_hour = weather_rng.uniform(13.0, 17.0);
    front.depth_k = weather_rng.uniform(4.5, 7.0);
    // Broken-cloud radiation: a random telegraph between full sun and deep
    // shade, with a day-level clear fraction setting the duty cycle.
    const double clear_frac = weather_rng.uniform(0.30, 0.80);
    double cloud_factor = 1.0;
    std::size_t cloud_until = 0;
    for (std::size_t k = 0; k < per_day; ++k) {
      const std::size_t t = d * per_day + k;
      const double hour = static_cast<double>(k) * dt / 3600.0;
      sc.timestamps.push_back(static_cast<double>(t) * dt);
      sc.disturbance.outdoor_temp.push_back(
          synthetic_ambient(hour, day_mean, day_amp) +
          front.ambient_offset(hour));
      if (k >= cloud_until) {
        cloud_factor = weather_rng.bernoulli(clear_frac) ? 1.0 : 0.2;
        cloud_until = k + 6 + weather_rng.next_below(7);  // 30-60 minutes
      }
      sc.disturbance.solar_wm2.push_back(synthetic_solar(hour, solar_peak) *
                                         front.solar_factor(hour) *
                                         cloud_factor);
      if (t % occ_hold == 0)
        for (int z = 0; z < zones; ++z)
          current_occ[z] = synthetic_occupancy(hour, occ_rng);
      Eigen::VectorXi occ(zones);
      for (int z = 0; z < zones; ++z) occ(z) = current_occ[z];
      sc.disturbance.occupancy.push_back(occ);
    }
  }
  (void)total;
  return sc;
}

// ---------------------------------------------------------------------------
// CSV files: one row per sample period.
//   weather:   timestamp_s,outdoor_temp_c,solar_wm2
//   occupancy: timestamp_s,occ_zone1,...,occ_zoneN
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace detail

inline void write_weather_csv(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write weather csv: " + path);
  out << "timestamp_s,outdoor_temp_c,solar_wm2\n";
  char buf[96];
  for (std::size_t t = 0; t < sc.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%.0f,%.4f,%.4f\n", sc.timestamps[t],
                  sc.disturbance.outdoor_temp[t], sc.disturbance.solar_wm2[t]);
    out << buf;
  }
}

inline void write_occupancy_csv(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write occupancy csv: " + path);
  const int nz = static_cast<int>(sc.disturbance.occupancy.front().size());
  out << "timestamp_s";
  for (int z = 1; z <= nz; ++z) out << ",occ_zone" << z;
  out << "\n";
  for (std::size_t t = 0; t < sc.size(); ++t) {
    out << static_cast<long long>(sc.timestamps[t]);
    for (int z = 0; z < nz; ++z) out << ',' << sc.disturbance.occupancy[t](z);
    out << "\n";
  }
}

/// Loads weather and occupancy files and checks their sample grids agree.
inline Scenario load_scenario_csv(const std::string& weather_path,
                                  const std::string& occupancy_path,
                                  double dt = 300.0) {
  Scenario sc;
  sc.dt = dt;

  std::ifstream weather(weather_path);
  if (!weather) throw ConfigError("cannot open weather csv: " + weather_path);
  std::string line;
  if (!std::getline(weather, line))
    throw ConfigError("weather csv is empty: " + weather_path);
  while (std::getline(weather, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 3)
      throw ConfigError("weather csv expects 3 columns: " + weather_path);
    sc.timestamps.push_back(std::stod(f[0]));
    sc.disturbance.outdoor_temp.push_back(std::stod(f[1]));
    sc.disturbance.solar_wm2.push_back(std::stod(f[2]));
  }

  std::ifstream occ(occupancy_path);
  if (!occ) throw ConfigError("cannot open occupancy csv: " + occupancy_path);
  if (!std::getline(occ, line))
    throw ConfigError("occupancy csv is empty: " + occupancy_path);
  const auto header = detail::split_csv_line(line);
  const int nz = static_cast<int>(header.size()) - 1;
  if (nz < 1) throw ConfigError("occupancy csv needs zone columns");
  std::size_t row = 0;
  while (std::getline(occ, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (static_cast<int>(f.size()) != nz + 1)
      throw ConfigError("occupancy csv has inconsistent columns");
    if (row >= sc.timestamps.size())
      throw ConfigError("occupancy csv longer than weather csv");
    if (std::abs(std::stod(f[0]) - sc.timestamps[row]) > 1e-6)
      throw ConfigError("weather/occupancy timestamps disagree");
    Eigen::VectorXi o(nz);
    for (int z = 0; z < nz; ++z) o(z) = std::stoi(f[z + 1]);
    sc.disturbance.occupancy.push_back(o);
    ++row;
  }
  if (row != sc.timestamps.size())
    throw ConfigError("occupancy csv shorter than weather csv");
  return sc;
}

}  // namespace hestia::scenario

#endif  // HESTIA_SCENARIO_HPP_
