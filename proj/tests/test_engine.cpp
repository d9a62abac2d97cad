#include "doctest.h"

#include <cmath>

#include "midelbm/engine.hpp"

using namespace midelbm;
using namespace midelbm::engine;

namespace {

geometry::Metaball ball(double r, double rs = 0.0) {
  geometry::Metaball m;
  m.control_points = {{Vec3::Zero(), r * r}};
  m.sphero_radius = rs;
  return m;
}

// 2D box of 40 x 48 cells of 1 mm with one disc of diameter 10 mm.
SimulationConfig disc_box(double particle_density, double gravity) {
  SimulationConfig c;
  c.dimension = 2;
  c.extent = Vec3(0.040, 0.048, 0.001);
  c.dx = 1e-3;
  c.dt_lbm = 1e-4;
  c.dt_dem = 1e-5;
  c.fluid.density = 1000;
  c.fluid.viscosity = 1.0;
  c.gravity = Vec3(0, -gravity, 0);
  c.contact.kn = 1000;
  c.contact.kt = 500;
  ParticleSpec p;
  p.shape = ball(0.005, 0.00025);
  p.density = particle_density;
  p.position = Vec3(0.020, 0.030, 0);
  c.particles = {p};
  c.duration = 0.1;
  return c;
}

double max_speed(const Simulation& s) {
  double v = 0.0;
  for (const auto& p : s.world().particles) v = std::max(v, p.velocity.norm());
  return v;
}

}  // namespace

TEST_CASE("stationary particle in quiescent fluid without gravity stays at rest") {
  SimulationConfig c;
  c.extent = Vec3(0.02, 0.02, 0.02);
  c.dx = 1e-3;
  c.dt_lbm = 1e-4;
  c.dt_dem = 1e-5;
  c.fluid.viscosity = 1.0;
  c.gravity = Vec3::Zero();
  c.contact.kn = 100;
  ParticleSpec p;
  p.shape = ball(0.003, 0.0002);
  p.density = 2000;
  p.position = Vec3(0.0101, 0.0098, 0.0103);
  c.particles = {p};
  Simulation sim(c);
  for (int i = 0; i < 100; ++i) sim.step();
  CHECK(max_speed(sim) < 1e-10);
}

TEST_CASE("neutrally buoyant particle stays at rest") {
  auto c = disc_box(1000.0, 9.81);
  Simulation sim(c);
  const Vec3 x0 = sim.world().particles[0].position;
  for (int i = 0; i < 1000; ++i) sim.step();
  CHECK((sim.world().particles[0].position - x0).norm() < 1e-4 * sim.equivalent_diameter(0));
}

TEST_CASE("dense disc settles and records a monotone time series") {
  auto c = disc_box(1500.0, 9.81);
  c.output.record_every = 10;
  Simulation sim(c);
  sim.run();
  const auto& r = sim.records();
  REQUIRE(r.size() == 101);
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i].time > r[i - 1].time);
  CHECK(r.back().particles[0].velocity.y() < -0.01);
  CHECK(r.back().particles[0].hydro_force.y() > 0.0);
}

TEST_CASE("identical runs are bit-identical") {
  auto c = disc_box(1500.0, 9.81);
  c.duration = 0.05;
  Simulation a(c), b(c);
  a.run();
  b.run();
  REQUIRE(a.records().size() == b.records().size());
  for (std::size_t i = 0; i < a.records().size(); ++i) {
    const auto& pa = a.records()[i].particles[0];
    const auto& pb = b.records()[i].particles[0];
    CHECK(pa.position == pb.position);
    CHECK(pa.velocity == pb.velocity);
    CHECK(pa.hydro_force == pb.hydro_force);
  }
}

TEST_CASE("halving the DEM step barely changes the settling series") {
  auto c = disc_box(1500.0, 9.81);
  c.duration = 0.2;
  auto fine = c;
  fine.dt_dem = 0.5 * c.dt_dem;
  Simulation a(c), b(fine);
  a.run();
  b.run();
  double peak = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.records().size(); ++i) {
    const double va = a.records()[i].particles[0].velocity.y();
    const double vb = b.records()[i].particles[0].velocity.y();
    peak = std::max(peak, std::abs(va));
    diff = std::max(diff, std::abs(va - vb));
  }
  CHECK(diff < 0.005 * peak);
}

TEST_CASE("configuration validation") {
  auto c = disc_box(1500.0, 9.81);
  CHECK(c.substeps() == 10);
  c.dt_dem = 3e-5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("positive integer"), Error);

  c = disc_box(1500.0, 9.81);
  c.extent.x() = 0.0405;
  CHECK_THROWS_AS(c.validate(), Error);

  c = disc_box(1500.0, 9.81);
  c.particles[0].position = Vec3(0.002, 0.030, 0);
  CHECK_THROWS_WITH_AS(Simulation{c}, doctest::Contains("particles[0]"), Error);

  c = disc_box(1500.0, 9.81);
  c.particles[0].density = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("reynolds number") {
  CHECK(reynolds(1000, 0.1, 0.01, 0.1) == doctest::Approx(10.0));
  CHECK(reynolds(1000, 0.0, 0.01, 0.1) == 0.0);
  CHECK_THROWS_AS(reynolds(1000, 0.1, 0.01, 0.0), Error);

  std::vector<TimeSeriesRecord> series(3);
  for (int i = 0; i < 3; ++i) {
    series[i].particles.resize(1);
    series[i].particles[0].velocity = Vec3(0, -0.05 * i, 0);
  }
  lbm::FluidConfig f;
  f.density = 1000;
  f.viscosity = 0.1;
  CHECK(reynolds(series, 0, f, 0.01) == doctest::Approx(10.0));
  CHECK_THROWS_AS(reynolds(std::vector<TimeSeriesRecord>{}, 0, f, 0.01), Error);
}

TEST_CASE("sphere descriptors are one") {
  const auto d = shape_descriptors(ball(0.7), 128);
  CHECK(d.sphericity == doctest::Approx(1.0).epsilon(0.02));
  CHECK(d.sphericity <= 1.0);
  CHECK(d.dn_over_ds() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(d.csf == doctest::Approx(1.0).epsilon(0.02));
  CHECK(d.nominal_diameter == doctest::Approx(1.4).epsilon(0.01));
}

TEST_CASE("elongated two-ball shapes lower the CSF monotonically") {
  double last = 1.0;
  for (double sep : {0.3, 0.6, 0.9, 1.2}) {
    geometry::Metaball m;
    m.control_points = {{Vec3(-sep / 2, 0, 0), 0.25}, {Vec3(sep / 2, 0, 0), 0.25}};
    const auto d = shape_descriptors(m, 64);
    CHECK(d.csf < last);
    CHECK(d.sphericity < 1.0);
    last = d.csf;
  }
}

TEST_CASE("descriptors converge and are a pure function") {
  geometry::Metaball m;
  m.control_points = {{Vec3(-0.3, 0.1, 0), 0.3}, {Vec3(0.4, 0, 0.1), 0.2}, {Vec3(0, 0.3, -0.2), 0.15}};
  const auto a = shape_descriptors(m, 64);
  const auto b = shape_descriptors(m, 128);
  CHECK(std::abs(a.sphericity - b.sphericity) < 0.01 * b.sphericity);
  const auto c = shape_descriptors(m, 64);
  CHECK(a.sphericity == c.sphericity);
  CHECK(a.csf == c.csf);
  CHECK(a.projected_area == c.projected_area);
  CHECK_THROWS_AS(shape_descriptors(geometry::Metaball{{{Vec3::Zero(), 0.0}}}, 64), Error);
}

namespace {

TimeSeriesRecord pair_record(double t, const Vec3& a, const Vec3& b) {
  TimeSeriesRecord r;
  r.time = t;
  r.particles.resize(2);
  r.particles[0].position = a;
  r.particles[1].position = b;
  r.particles[0].velocity = Vec3(0, 0, -1);
  r.particles[1].angular_velocity = Vec3(0, 2 * M_PI, 0);
  return r;
}

}  // namespace

TEST_CASE("dkt normalisation with unit scales is the identity") {
  std::vector<TimeSeriesRecord> r = {pair_record(0.5, Vec3(0, 0, 3), Vec3(0.1, 0, 1))};
  const auto s = dkt_metrics(r, 1.0, 1.0, 1.0, Vec3::UnitZ(), 0.5);
  CHECK(s.time[0] == 0.5);
  CHECK(s.height[0][0] == 3.0);
  CHECK(s.height[1][0] == 1.0);
  CHECK(s.distance[0] == doctest::Approx(std::sqrt(4.01)));
  CHECK(s.vertical_velocity[0][0] == -1.0);
  CHECK(s.angular_speed[1][0] == doctest::Approx(1.0));
}

TEST_CASE("dkt phase detection on a synthetic sequence") {
  std::vector<TimeSeriesRecord> r;
  // Trailing particle 0 closes in from above, touches, then passes below.
  for (int i = 0; i <= 40; ++i) {
    const double t = i;
    const double z1 = 10.0 - 0.1 * t;
    double gap = i < 5 ? 3.0 : std::max(1.0, 3.0 - 0.2 * (t - 5));
    double lateral = 0.0;
    if (i > 20) lateral = 0.3 * (t - 20);
    double dz = std::sqrt(std::max(gap * gap - lateral * lateral, 0.0));
    if (i > 20 && lateral >= gap) dz = 0.0;
    if (i > 28) dz = -0.2 * (t - 28);
    r.push_back(pair_record(t, Vec3(lateral, 0, z1 + dz), Vec3(0, 0, z1)));
  }
  const auto s = dkt_metrics(r, 1.0, 1.0, 1.0, Vec3::UnitZ(), 1.0);
  CHECK(s.drafting_index == 5);
  CHECK(s.kissing_index > s.drafting_index);
  CHECK(s.tumbling_index > s.kissing_index);
  CHECK(s.height[0].back() < s.height[1].back());
}

TEST_CASE("side by side release never tumbles") {
  std::vector<TimeSeriesRecord> r;
  for (int i = 0; i < 20; ++i) r.push_back(pair_record(i, Vec3(-1 - 0.01 * i, 0, 5 - 0.1 * i), Vec3(1 + 0.01 * i, 0, 5 - 0.1 * i)));
  const auto s = dkt_metrics(r, 1.0, 1.0, 1.0, Vec3::UnitZ(), 1.0);
  CHECK(s.tumbling_index == -1);
  CHECK(s.kissing_index == -1);

  auto bad = r;
  bad[3].particles.resize(3);
  CHECK_THROWS_AS(dkt_metrics(bad, 1.0, 1.0, 1.0, Vec3::UnitZ(), 1.0), Error);
}

TEST_CASE("momentum exchanged with the particle balances the fluid momentum") {
  SimulationConfig c;
  c.extent = Vec3(0.016, 0.016, 0.024);
  c.periodic = {true, true, true};
  c.dx = 1e-3;
  c.dt_lbm = 1e-4;
  c.dt_dem = 1e-5;
  c.fluid.viscosity = 0.1;
  c.gravity = Vec3(0, 0, -9.81);
  c.contact.kn = 1000;
  ParticleSpec p;
  p.shape = ball(0.003, 0.0);
  p.density = 3000;
  p.position = Vec3(0.0081, 0.0077, 0.0123);
  c.particles = {p};
  Simulation sim(c);
  const auto& L = sim.lattice();
  Vec3 impulse = Vec3::Zero();
  for (int t = 0; t < 400; ++t) {
    sim.step();
    impulse += sim.hydrodynamic()[0].force / L.force_scale();
  }
  Vec3 fluid = Vec3::Zero();
  for (int n = 0; n < static_cast<int>(L.size()); ++n)
    if (L.node_class(n) != lbm::NodeClass::Solid) fluid += L.momentum(n);
  const auto& d = L.diagnostics();
  CHECK(d.refilled_nodes > 0);
  CHECK(d.covered_nodes > 0);
  const Vec3 expected = -impulse + d.refill_momentum - d.covered_momentum;
  CHECK((fluid - expected).norm() < 0.01 * impulse.norm());
}
