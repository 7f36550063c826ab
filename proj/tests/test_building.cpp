// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0

#include "hestia/building.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "test_support.hpp"

using namespace hestia;
using namespace hestia::building;

namespace {

Topology single_room_single_wall(double r = 1.0, double rn = 1.0,
                                 double rx = 1.0) {
  Topology t;
  ZoneSpec z;
  z.volume_m3 = 100.0;
  z.heat_capacity = 1.0;
  t.zones.push_back(z);
  WallSpec w;
  w.resistance = r;
  w.inner_film = rn;
  w.outer_film = rx;
  w.heat_capacity = 1.0;
  w.area_m2 = 10.0;
  w.external = true;
  w.zones = {0};
  t.walls.push_back(w);
  t.supply_air_temp = Vec::Constant(1, 12.0);
  t.max_flow = 5.0;
  return t;
}

// Independent RK4 integration of the continuous nonlinear ODE.
PlantState rk4_oracle(const Topology& topo, const ContinuousModel& cm,
                      const PlantState& s0, const Vec& flow,
                      const DisturbanceSample& d, double dt, int substeps) {
  const int nz = topo.num_zones();
  const int nt = topo.num_thermal_nodes();
  Vec qh(nz);
  for (int i = 0; i < nz; ++i)
    qh(i) = topo.occupant_heat_w * d.occupancy(i) + topo.base_load_w;
  const Vec w_cont =
      cm.coef_to * d.outdoor_temp + cm.coef_solar * d.solar_wm2 + cm.coef_qh * qh;

  auto deriv = [&](const Vec& x) {
    Vec dx(nt + nz);
    const Vec therm = x.head(nt);
    const Vec co2 = x.tail(nz);
    const Vec u_tem = flow.cwiseProduct(topo.supply_air_temp - therm.head(nz));
    dx.head(nt) = cm.A * therm + cm.B * u_tem + w_cont;
    for (int i = 0; i < nz; ++i) {
      const double vent =
          flow(i) / (topo.air_density * topo.zones[i].volume_m3);
      dx(nt + i) = vent * (topo.outdoor_co2 - co2(i)) +
                   topo.co2_gen_ppm_m3() * d.occupancy(i) /
                       topo.zones[i].volume_m3;
    }
    return dx;
  };

  Vec x(nt + nz);
  x << s0.thermal(), s0.zone_co2;
  const double h = dt / substeps;
  for (int k = 0; k < substeps; ++k) {
    const Vec k1 = deriv(x);
    const Vec k2 = deriv(x + 0.5 * h * k1);
    const Vec k3 = deriv(x + 0.5 * h * k2);
    const Vec k4 = deriv(x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  PlantState out;
  out.zone_temps = x.head(nz);
  out.wall_temps = x.segment(nz, nt - nz);
  out.zone_co2 = x.tail(nz);
  return out;
}

}  // namespace

TEST_CASE("continuous model of one room behind one external wall") {
  auto topo = single_room_single_wall();
  auto cm = build_continuous_model(topo);
  // Node order: room 0, wall 1. All resistances and capacities are 1, so
  // each coupling is 1/(1 + 1/2) = 2/3.
  const double c = 2.0 / 3.0;
  CHECK(cm.A(1, 0) == Catch::Approx(c));
  CHECK(cm.A(1, 1) == Catch::Approx(-2.0 * c));
  CHECK(cm.A(0, 1) == Catch::Approx(c));
  CHECK(cm.A(0, 0) == Catch::Approx(-c));
  CHECK(cm.coef_to(1) == Catch::Approx(c));
  CHECK(cm.coef_to(0) == 0.0);
  CHECK(cm.B(0, 0) == Catch::Approx(topo.specific_heat_air));
  CHECK(cm.B(1, 0) == 0.0);  // zero input row for the wall node
}

TEST_CASE("internal wall at room temperature has zero net flux") {
  Topology t;
  for (int i = 0; i < 2; ++i) {
    ZoneSpec z;
    z.volume_m3 = 50.0;
    z.heat_capacity = 1.0e5;
    t.zones.push_back(z);
  }
  WallSpec w;
  w.resistance = 0.5;
  w.inner_film = 0.1;
  w.heat_capacity = 1.0e4;
  w.external = false;
  w.zones = {0, 1};
  t.walls.push_back(w);
  t.supply_air_temp = Vec::Constant(2, 12.0);
  auto cm = build_continuous_model(t);
  const double temp = 21.0;
  Vec x = Vec::Constant(3, temp);
  CHECK(std::abs((cm.A * x)(2)) < 1e-14);
}

TEST_CASE("four-zone model matches a hand-assembled instance") {
  auto topo = testing::four_zone_topology();
  auto cm = build_continuous_model(topo);
  const int nz = 4, nw = 8, nt = 12;
  REQUIRE(cm.A.rows() == nt);

  // Hand assembly of the nodal balance equations for the same graph,
  // written as explicit per-node sums rather than the builder's loops.
  Mat a = Mat::Zero(nt, nt);
  auto wall_cond = [&](int j) {
    return 1.0 / (topo.walls[j].inner_film + 0.5 * topo.walls[j].resistance);
  };
  for (int i = 0; i < nz; ++i) {
    double sum = 0.0;
    for (int j = 0; j < nw; ++j) {
      const auto& w = topo.walls[j];
      if (std::find(w.zones.begin(), w.zones.end(), i) == w.zones.end())
        continue;
      sum += wall_cond(j);
      a(i, nz + j) += wall_cond(j) / topo.zones[i].heat_capacity;
    }
    a(i, i) = -sum / topo.zones[i].heat_capacity;
  }
  for (int j = 0; j < nw; ++j) {
    const auto& w = topo.walls[j];
    double sum = 0.0;
    for (int i : w.zones) {
      sum += wall_cond(j);
      a(nz + j, i) += wall_cond(j) / w.heat_capacity;
    }
    if (w.external) sum += 1.0 / (w.outer_film + 0.5 * w.resistance);
    a(nz + j, nz + j) = -sum / w.heat_capacity;
  }
  CHECK((cm.A - a).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("configuration errors are rejected") {
  auto topo = single_room_single_wall();
  SECTION("unknown zone in adjacency") {
    topo.walls[0].zones = {3};
    CHECK_THROWS_AS(build_continuous_model(topo), ConfigError);
  }
  SECTION("external wall with two zones") {
    topo.zones.push_back(topo.zones[0]);
    topo.supply_air_temp = Vec::Constant(2, 12.0);
    topo.walls[0].zones = {0, 1};
    CHECK_THROWS_AS(build_continuous_model(topo), ConfigError);
  }
  SECTION("nonpositive capacity") {
    topo.zones[0].heat_capacity = 0.0;
    CHECK_THROWS_AS(build_continuous_model(topo), ConfigError);
  }
}

TEST_CASE("discretization") {
  SECTION("zero dynamics give the identity") {
    auto topo = single_room_single_wall();
    ContinuousModel cm = build_continuous_model(topo);
    cm.A.setZero();
    auto plant = discretize(topo, cm, 123.0);
    CHECK((plant.A_tem - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("scalar decay") {
    Topology t;
    ZoneSpec z;
    z.volume_m3 = 1.0;
    z.heat_capacity = 1.0;
    t.zones.push_back(z);
    t.supply_air_temp = Vec::Constant(1, 12.0);
    ContinuousModel cm = build_continuous_model(t);
    cm.A(0, 0) = -1.0;
    auto plant = discretize(t, cm, 0.1);
    CHECK(plant.A_tem(0, 0) == Catch::Approx(0.9));
  }

  SECTION("four-zone model is stable at the 5-minute sample") {
    auto topo = testing::four_zone_topology();
    auto plant = discretize(topo, build_continuous_model(topo), 300.0);
    CHECK(plant.spectral_radius < 1.0);
    CHECK_FALSE(plant.stability_warning);
  }

  SECTION("oversized step raises the stability warning") {
    auto topo = testing::four_zone_topology();
    auto plant = discretize(topo, build_continuous_model(topo), 2.0e5);
    CHECK(plant.stability_warning);
  }

  SECTION("zero-order hold stays close to Euler for slow dynamics") {
    auto topo = testing::four_zone_topology();
    auto cm = build_continuous_model(topo);
    auto euler = discretize(topo, cm, 300.0);
    auto zoh = discretize(topo, cm, 300.0, Discretization::kZeroOrderHold);
    CHECK_FALSE(zoh.stability_warning);
    CHECK((euler.A_tem - zoh.A_tem).cwiseAbs().maxCoeff() < 0.01);
    // ZOH of the pure-integrator CO2 block equals the Euler block.
    CHECK((euler.B_c - zoh.B_c).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("combined matrices are block diagonal") {
    auto topo = testing::four_zone_topology();
    auto plant = discretize(topo, build_continuous_model(topo), 300.0);
    CHECK(plant.A.topRightCorner(12, 4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(plant.A.bottomLeftCorner(4, 12).cwiseAbs().maxCoeff() == 0.0);
    CHECK(plant.B.topRightCorner(12, 4).cwiseAbs().maxCoeff() == 0.0);
    CHECK(plant.B.bottomLeftCorner(4, 4).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("plant stepping") {
  auto topo = testing::four_zone_topology();
  auto cm = build_continuous_model(topo);
  auto plant = discretize(topo, cm, 300.0);

  SECTION("equilibrium with ambient equal to all node temperatures") {
    Topology quiet = topo;
    quiet.base_load_w = 0.0;
    auto qplant = discretize(quiet, build_continuous_model(quiet), 300.0);
    auto s = testing::nominal_state(quiet, 24.0);
    DisturbanceSample d;
    d.outdoor_temp = 24.0;
    d.solar_wm2 = 0.0;
    d.occupancy = Eigen::VectorXi::Zero(4);
    auto next = step_plant(quiet, qplant, s, Vec::Zero(4), d);
    CHECK((next.zone_temps - s.zone_temps).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((next.wall_temps - s.wall_temps).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((next.zone_co2 - s.zone_co2).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("no ventilation: co2 rises by exactly dt*G/V") {
    auto s = testing::nominal_state(topo);
    auto d = testing::mild_disturbance(4, 24.0, 0.0, 3);
    auto next = step_plant(topo, plant, s, Vec::Zero(4), d);
    const double expected =
        300.0 * topo.co2_gen_ppm_m3() * 3.0 / topo.zones[0].volume_m3;
    for (int i = 0; i < 4; ++i)
      CHECK(next.zone_co2(i) - s.zone_co2(i) == Catch::Approx(expected));
  }

  SECTION("one step matches the RK4 oracle within 0.5 percent") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      PlantState s;
      s.zone_temps = Vec::NullaryExpr(4, [&](int) { return rng.uniform(20.0, 27.0); });
      s.wall_temps = Vec::NullaryExpr(8, [&](int) { return rng.uniform(18.0, 32.0); });
      s.zone_co2 = Vec::NullaryExpr(4, [&](int) { return rng.uniform(500.0, 1100.0); });
      Vec flow = Vec::NullaryExpr(4, [&](int) { return rng.uniform(0.0, topo.max_flow); });
      DisturbanceSample d;
      d.outdoor_temp = rng.uniform(18.0, 38.0);
      d.solar_wm2 = rng.uniform(0.0, 600.0);
      d.occupancy =
          Eigen::VectorXi::NullaryExpr(4, [&](int) { return rng.next_int(0, 8); });

      auto euler = step_plant(topo, plant, s, flow, d);
      auto exact = rk4_oracle(topo, cm, s, flow, d, 300.0, 100);
      const Vec diff = euler.stacked() - exact.stacked();
      const double rel = diff.cwiseAbs().maxCoeff() /
                         std::max(1.0, exact.stacked().cwiseAbs().maxCoeff());
      REQUIRE(rel < 0.005);
    }
  }

  SECTION("monotonicity: more cooling flow never raises a zone temperature") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      auto s = testing::nominal_state(topo, rng.uniform(20.0, 27.0));
      auto d = testing::mild_disturbance(4, rng.uniform(18.0, 36.0),
                                         rng.uniform(0.0, 500.0), 4);
      Vec m1 = Vec::NullaryExpr(4, [&](int) { return rng.uniform(0.0, 0.06); });
      Vec m2 = m1 + Vec::NullaryExpr(4, [&](int) { return rng.uniform(0.0, 0.06); });
      auto n1 = step_plant(topo, plant, s, m1, d);
      auto n2 = step_plant(topo, plant, s, m2, d);
      REQUIRE(((n2.zone_temps - n1.zone_temps).array() <= 1e-12).all());
    }
  }

  SECTION("co2 stays nonnegative") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      PlantState s = testing::nominal_state(topo, 23.0, rng.uniform(0.0, 50.0));
      Vec flow = Vec::NullaryExpr(4, [&](int) { return rng.uniform(0.0, topo.max_flow); });
      auto d = testing::mild_disturbance(4, 25.0, 0.0, rng.next_int(0, 8));
      auto next = step_plant(topo, plant, s, flow, d);
      REQUIRE(next.zone_co2.minCoeff() >= 0.0);
    }
  }

  SECTION("negative flow rejected") {
    auto s = testing::nominal_state(topo);
    auto d = testing::mild_disturbance(4);
    CHECK_THROWS_AS(step_plant(topo, plant, s, Vec::Constant(4, -0.1), d),
                    ArgError);
  }
}

TEST_CASE("feedback linearization") {
  auto topo = single_room_single_wall();  // max_flow = 5 keeps tests unclamped
  topo.supply_air_temp(0) = 12.0;
  PlantState s;
  s.zone_temps = Vec::Constant(1, 23.0);
  s.wall_temps = Vec::Constant(1, 23.0);
  s.zone_co2 = Vec::Constant(1, 800.0);

  SECTION("zero input gives zero flow") {
    auto cmd = feedback_linearize(topo, s, Vec::Zero(1), Vec::Zero(1));
    CHECK(cmd.flow_tem(0) == 0.0);
    CHECK(cmd.flow_c(0) == 0.0);
    CHECK_FALSE(cmd.singular);
  }

  SECTION("unit ratio gives unit flow") {
    Vec u = Vec::Constant(1, topo.supply_air_temp(0) - s.zone_temps(0));
    auto cmd = feedback_linearize(topo, s, u, Vec::Zero(1));
    CHECK(cmd.flow_tem(0) == Catch::Approx(1.0));
  }

  SECTION("round trip recovers the virtual input to 1e-12") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const double m_t = rng.uniform(0.01, 4.9);
      const double m_c = rng.uniform(0.01, 4.9);
      Vec u_tem =
          Vec::Constant(1, m_t * (topo.supply_air_temp(0) - s.zone_temps(0)));
      Vec u_c = Vec::Constant(
          1, m_c / (topo.air_density * topo.zones[0].volume_m3) *
                 (topo.outdoor_co2 - s.zone_co2(0)));
      auto cmd = feedback_linearize(topo, s, u_tem, u_c);
      const double u_t_back =
          cmd.flow_tem(0) * (topo.supply_air_temp(0) - s.zone_temps(0));
      const double u_c_back =
          cmd.flow_c(0) / (topo.air_density * topo.zones[0].volume_m3) *
          (topo.outdoor_co2 - s.zone_co2(0));
      REQUIRE(std::abs(u_t_back - u_tem(0)) < 1e-12);
      REQUIRE(std::abs(u_c_back - u_c(0)) < 1e-12);
    }
  }

  SECTION("near-singular denominator clamps to max flow and flags") {
    s.zone_temps(0) = topo.supply_air_temp(0) + 1e-9;
    auto cmd =
        feedback_linearize(topo, s, Vec::Constant(1, -1.0), Vec::Zero(1));
    CHECK(cmd.flow_tem(0) == topo.max_flow);
    CHECK(cmd.singular);
  }

  SECTION("flow clamp range") {
    auto cmd = feedback_linearize(topo, s, Vec::Constant(1, -1000.0),
                                  Vec::Constant(1, 1000.0));
    CHECK(cmd.flow_tem(0) == topo.max_flow);  // huge cooling demand saturates
    CHECK(cmd.flow_c(0) == 0.0);  // wrong-sign demand floors at zero
    CHECK(cmd.clamped);
  }
}

TEST_CASE("substituting the change of variables reproduces the linear step") {
  auto topo = testing::four_zone_topology();
  auto plant = discretize(topo, build_continuous_model(topo), 300.0);
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    PlantState s;
    s.zone_temps = Vec::NullaryExpr(4, [&](int) { return rng.uniform(20.0, 27.0); });
    s.wall_temps = Vec::NullaryExpr(8, [&](int) { return rng.uniform(18.0, 30.0); });
    s.zone_co2 = Vec::NullaryExpr(4, [&](int) { return rng.uniform(500.0, 1000.0); });
    Vec flow = Vec::NullaryExpr(4, [&](int) { return rng.uniform(0.0, topo.max_flow); });
    auto d = testing::mild_disturbance(4, 30.0, 300.0, 4);

    const Vec u_tem = flow.cwiseProduct(topo.supply_air_temp - s.zone_temps);
    Vec u_c(4);
    for (int i = 0; i < 4; ++i)
      u_c(i) = flow(i) / (topo.air_density * topo.zones[i].volume_m3) *
               (topo.outdoor_co2 - s.zone_co2(i));

    auto nonlinear = step_plant(topo, plant, s, flow, d);
    auto linear = step_linear(topo, plant, s, u_tem, u_c, d);
    REQUIRE((nonlinear.stacked() - linear.stacked()).cwiseAbs().maxCoeff() <
            1e-10);
  }
}

TEST_CASE("disturbance trajectory validation") {
  Disturbance d;
  d.outdoor_temp = {20.0, 21.0};
  d.solar_wm2 = {0.0, 100.0};
  d.occupancy = {Eigen::VectorXi::Constant(4, 2),
                 Eigen::VectorXi::Constant(4, 3)};
  CHECK_NOTHROW(d.validate(4, 2));
  CHECK_THROWS_AS(d.validate(4, 3), ConfigError);
  CHECK_THROWS_AS(d.validate(3, 2), ConfigError);
  d.occupancy[1](0) = -1;
  CHECK_THROWS_AS(d.validate(4, 2), ConfigError);
}

TEST_CASE("topology json roundtrip") {
  nlohmann::json j = {
      {"zones",
       {{{"name", "z1"},
         {"volume_m3", 270.0},
         {"heat_capacity_j_per_k", 2.0e6}}}},
      {"walls",
       {{{"name", "w1"},
         {"resistance_k_per_w", 0.039},
         {"inner_film_k_per_w", 0.0025},
         {"outer_film_k_per_w", 0.00088},
         {"heat_capacity_j_per_k", 1.0e7},
         {"area_m2", 57.0},
         {"absorptivity", 0.06},
         {"solar_fraction", 0.3},
         {"external", true},
         {"zones", {0}}}}},
      {"supply_air_temp_c", {12.0}},
      {"max_flow_kg_s", 0.12}};
  auto topo = topology_from_json(j);
  CHECK(topo.num_zones() == 1);
  CHECK(topo.num_walls() == 1);
  CHECK(topo.walls[0].external);
  CHECK(topo.max_flow == 0.12);
  CHECK(topo.outdoor_co2 == 420.0);  // default applies
}
