#include "doctest.h"

#include <cmath>
#include <random>

#include "midelbm/dem.hpp"

using namespace midelbm;
using namespace midelbm::dem;

namespace {

ParticleState sphere(double r, double rs, const Vec3& c, double mass = 1.0) {
  ParticleState p;
  p.shape.control_points = {{Vec3::Zero(), r * r}};
  p.shape.sphero_radius = rs;
  p.position = c;
  p.mass = mass;
  p.inertia = Mat3::Identity() * (0.4 * mass * (r + rs) * (r + rs));
  return p;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

Quat random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized();
}

}  // namespace

TEST_CASE("closest points of two spheres lie on the center line") {
  const auto a = sphere(1.0, 0.3, Vec3::Zero());
  const auto b = sphere(1.0, 0.3, Vec3(2.5, 0, 0));
  const auto cp = closest_points_pair(a, b);
  REQUIRE(cp);
  CHECK((cp->x_c0 - Vec3(1, 0, 0)).norm() < 1e-6);
  CHECK((cp->x_c1 - Vec3(1.5, 0, 0)).norm() < 1e-6);
  CHECK(std::abs(cp->x_m.y()) < 1e-12);
  CHECK(std::abs(cp->x_m.z()) < 1e-12);
  CHECK(cp->x_m.x() == doctest::Approx(1.25));
}

TEST_CASE("closest points are rotation equivariant") {
  geometry::Metaball shape;
  shape.control_points = {{Vec3(-0.4, 0, 0), 0.3}, {Vec3(0.5, 0.1, 0), 0.25}, {Vec3(0, 0.3, 0.2), 0.2}};
  shape.sphero_radius = 0.2;
  ParticleState a, b;
  a.shape = b.shape = shape;
  a.position = Vec3(0, 0, 0);
  b.position = Vec3(2.4, 0.3, 0.1);
  b.orientation = Quat(Eigen::AngleAxisd(0.7, Vec3(0, 0, 1)));
  const auto cp = closest_points_pair(a, b);
  REQUIRE(cp);

  const Quat Q(Eigen::AngleAxisd(1.1, Vec3(1, 2, 3).normalized()));
  const Vec3 t(0.3, -1.2, 4.0);
  ParticleState ar = a, br = b;
  ar.position = Q * a.position + t;
  br.position = Q * b.position + t;
  ar.orientation = Q * a.orientation;
  br.orientation = Q * b.orientation;
  const auto cpr = closest_points_pair(ar, br, Q * cp->x_m + t);
  REQUIRE(cpr);
  CHECK((cpr->x_m - (Q * cp->x_m + t)).norm() < 1e-9);
  CHECK((cpr->x_c0 - (Q * cp->x_c0 + t)).norm() < 1e-9);
  CHECK((cpr->x_c1 - (Q * cp->x_c1 + t)).norm() < 1e-9);
}

TEST_CASE("broad phase rejects distant spheres") {
  CHECK_FALSE(closest_points_pair(sphere(1, 0.1, Vec3::Zero()), sphere(1, 0.1, Vec3(10, 0, 0))));
}

TEST_CASE("contact_pair matches the sphere overlap") {
  const auto a = sphere(0.9, 0.1, Vec3::Zero());
  const auto b = sphere(0.9, 0.1, Vec3(1.95, 0, 0));
  const auto info = contact_pair(a, b, *closest_points_pair(a, b));
  REQUIRE(info);
  CHECK(info->overlap == doctest::Approx(0.05).epsilon(1e-6));
  CHECK((info->normal - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK((info->point - Vec3(0.975, 0, 0)).norm() < 1e-6);

  CHECK_FALSE(closest_points_pair(a, sphere(0.9, 0.1, Vec3(2.2, 0, 0))));
  const auto c = sphere(0.9, 0.1, Vec3(1.5, 1.5, 0));
  const auto cp = closest_points_pair(a, c);
  REQUIRE(cp);
  CHECK_FALSE(contact_pair(a, c, *cp));
}

TEST_CASE("contact_pair is symmetric in its arguments") {
  geometry::Metaball shape;
  shape.control_points = {{Vec3(-0.3, 0, 0), 0.2}, {Vec3(0.3, 0, 0), 0.2}};
  shape.sphero_radius = 0.15;
  ParticleState a, b;
  a.shape = b.shape = shape;
  b.position = Vec3(0.2, 1.3, 0.1);
  b.orientation = Quat(Eigen::AngleAxisd(0.4, Vec3(1, 0, 0)));
  const auto ab = contact_pair(a, b, *closest_points_pair(a, b));
  const auto ba = contact_pair(b, a, *closest_points_pair(b, a));
  REQUIRE(ab);
  REQUIRE(ba);
  CHECK((ab->point - ba->point).norm() < 1e-9);
  CHECK(std::abs(ab->overlap - ba->overlap) < 1e-9);
  CHECK((ab->normal + ba->normal).norm() < 1e-9);
}

TEST_CASE("sphere specialization over random configurations") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  int contacts = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double ra = 0.5 + u(rng), rb = 0.5 + u(rng);
    const double sa = 0.05 + 0.25 * u(rng), sb = 0.05 + 0.25 * u(rng);
    const double delta = -0.1 + 0.1 * u(rng) + 0.9 * std::min(sa, sb) * u(rng);
    const Vec3 dir = random_unit(rng);
    const Vec3 ca(u(rng), u(rng), u(rng));
    const double d = ra + rb + sa + sb - delta;
    const Vec3 cb = ca + d * dir;
    auto a = sphere(ra, sa, ca);
    auto b = sphere(rb, sb, cb);
    a.orientation = random_rotation(rng);
    b.orientation = random_rotation(rng);
    const auto cp = closest_points_pair(a, b);
    REQUIRE(cp);
    CHECK((cp->x_c0 - (ca + ra * dir)).norm() < 1e-6);
    CHECK((cp->x_c1 - (cb - rb * dir)).norm() < 1e-6);
    const auto info = contact_pair(a, b, *cp);
    if (delta <= 0.0) {
      CHECK_FALSE(info);
      continue;
    }
    REQUIRE(info);
    ++contacts;
    CHECK(std::abs(info->overlap - delta) < 1e-6);
    CHECK((info->normal + dir).norm() < 1e-6);
    const Vec3 expected = ca + (ra + sa - 0.5 * delta) * dir;
    CHECK((info->point - expected).norm() < 1e-6);
  }
  CHECK(contacts > 300);
}

TEST_CASE("contact_wall matches the sphere-plane overlap") {
  const auto a = sphere(0.5, 0.5, Vec3(0.3, -0.2, 0.95));
  const WallPlane floor{Vec3::Zero(), Vec3::UnitZ()};
  const auto info = contact_wall(a, floor);
  REQUIRE(info);
  CHECK(info->overlap == doctest::Approx(0.05).epsilon(1e-6));
  CHECK((info->normal - Vec3::UnitZ()).norm() < 1e-12);
  CHECK((info->point - Vec3(0.3, -0.2, 0.025)).norm() < 1e-6);

  const auto tiny = sphere(0.01, 0.99, Vec3(0, 0, 0.95));
  const auto info2 = contact_wall(tiny, floor);
  REQUIRE(info2);
  CHECK(info2->overlap == doctest::Approx(0.05).epsilon(1e-6));

  CHECK_FALSE(contact_wall(sphere(0.5, 0.5, Vec3(0, 0, 2)), floor));
}

TEST_CASE("contact_wall is rotation equivariant") {
  geometry::Metaball shape;
  shape.control_points = {{Vec3(-0.3, 0, 0), 0.2}, {Vec3(0.3, 0.1, 0), 0.15}};
  shape.sphero_radius = 0.1;
  ParticleState a;
  a.shape = shape;
  a.position = Vec3(0, 0, 0.65);
  a.orientation = Quat(Eigen::AngleAxisd(0.5, Vec3(0, 1, 0)));
  const WallPlane floor{Vec3::Zero(), Vec3::UnitZ()};
  const auto info = contact_wall(a, floor);
  REQUIRE(info);

  const Quat Q(Eigen::AngleAxisd(0.8, Vec3(1, -1, 0.5).normalized()));
  const Vec3 t(1, 2, 3);
  ParticleState ar = a;
  ar.position = Q * a.position + t;
  ar.orientation = Q * a.orientation;
  const WallPlane tilted{t, Q * Vec3::UnitZ()};
  const auto infor = contact_wall(ar, tilted);
  REQUIRE(infor);
  CHECK(std::abs(infor->overlap - info->overlap) < 1e-9);
  CHECK((infor->normal - Q * info->normal).norm() < 1e-9);
  CHECK((infor->point - (Q * info->point + t)).norm() < 1e-9);
}

TEST_CASE("deep interpenetration is reported") {
  const auto a = sphere(1.0, 0.1, Vec3::Zero());
  const auto b = sphere(1.0, 0.1, Vec3(1.0, 0, 0));
  CHECK_THROWS_AS(closest_points_pair(a, b), DeepPenetration);
  CHECK_THROWS_AS(contact_wall(sphere(1.0, 0.1, Vec3(0, 0, 0.5)), WallPlane{}), DeepPenetration);
}

TEST_CASE("contact_force worked values") {
  ContactParams p;
  p.kn = 1e5;
  p.kt = 5e4;
  p.mu_s = 0.5;
  auto a = sphere(1.0, 0.1, Vec3::Zero());
  auto b = sphere(1.0, 0.1, Vec3(2.2 - 1e-4, 0, 0));
  ContactInfo info;
  info.normal = Vec3(-1, 0, 0);
  info.overlap = 1e-4;
  info.point = Vec3(1.1, 0, 0);
  auto cf = contact_force(info, a, &b, p, 1e-5);
  CHECK(cf.normal_magnitude == doctest::Approx(10.0).epsilon(1e-12));
  CHECK((cf.force - Vec3(-10, 0, 0)).norm() < 1e-12);
  CHECK(cf.tangential_spring.norm() == 0.0);

  SUBCASE("sliding saturates at the Coulomb cap") {
    a.velocity = Vec3(0, 50, 0);
    cf = contact_force(info, a, &b, p, 1e-3);
    CHECK(cf.sliding);
    const Vec3 ft = cf.force - cf.force.dot(info.normal) * info.normal;
    CHECK(ft.norm() == doctest::Approx(p.mu_s * cf.normal_magnitude).epsilon(1e-12));
    CHECK(ft.y() < 0.0);
  }
  SUBCASE("swapping the roles negates the force") {
    a.velocity = Vec3(0.3, -0.2, 0.1);
    a.angular_velocity = Vec3(1, 2, 3);
    b.velocity = Vec3(-0.1, 0.4, 0);
    p.eta_n = 2.0;
    p.eta_t = 1.0;
    info.tangential_spring = Vec3(0, 1e-5, -2e-5);
    ContactInfo swapped = info;
    swapped.normal = -info.normal;
    swapped.tangential_spring = -info.tangential_spring;
    const auto f1 = contact_force(info, a, &b, p, 1e-5);
    const auto f2 = contact_force(swapped, b, &a, p, 1e-5);
    CHECK((f1.force + f2.force).norm() < 1e-12);
  }
  SUBCASE("tensile damping is clamped") {
    a.velocity = Vec3(-100, 0, 0);
    p.eta_n = 10.0;
    cf = contact_force(info, a, &b, p, 1e-5);
    CHECK(cf.normal_magnitude == 0.0);
  }
}

TEST_CASE("free fall follows the ballistic parabola") {
  World w;
  auto p = sphere(1.0, 0.1, Vec3(0, 0, 10), 2.0);
  p.velocity = Vec3(1.0, 0.5, 3.0);
  w.particles.push_back(p);
  w.gravity = Vec3(0, 0, -9.81);
  w.dt = 1e-5;
  w.validate();
  for (int i = 0; i < 1000; ++i) w.step();
  const double t = 1000 * w.dt;
  const Vec3 expected = p.position + p.velocity * t + 0.5 * w.gravity * t * t;
  CHECK((w.particles[0].position - expected).norm() / expected.norm() < 1e-8);
  CHECK((w.particles[0].velocity - (p.velocity + w.gravity * t)).norm() < 1e-10);
}

TEST_CASE("torque-free rotation conserves energy and angular momentum") {
  geometry::Metaball shape;
  shape.control_points = {{Vec3(-0.6, 0, 0), 0.25}, {Vec3(0.6, 0, 0), 0.16}, {Vec3(0, 0.4, 0.1), 0.09}};
  auto p = make_particle(shape, 1000.0, 48);
  p.angular_velocity = Vec3(1.0, 3.0, -2.0);
  World w;
  w.particles.push_back(p);
  w.dt = 1e-4;
  const double e0 = w.particles[0].kinetic_energy();
  const double l0 = w.particles[0].angular_momentum().norm();
  for (int i = 0; i < 10000; ++i) w.step();
  const auto& q = w.particles[0];
  CHECK(std::abs(q.kinetic_energy() - e0) / e0 < 1e-3);
  CHECK(std::abs(q.angular_momentum().norm() - l0) / l0 < 1e-3);
  const Vec3 body_L = q.inertia * (q.orientation.conjugate() * q.angular_velocity);
  CHECK(std::abs(body_L.norm() - l0) / l0 < 1e-3);
  CHECK(std::abs(q.orientation.norm() - 1.0) < 1e-9);
}

TEST_CASE("head-on elastic collision conserves momentum") {
  World w;
  auto a = sphere(0.5, 0.1, Vec3(0, 0, 0), 1.0);
  auto b = sphere(0.5, 0.1, Vec3(1.3, 0.05, 0), 3.0);
  a.velocity = Vec3(1.0, 0, 0);
  b.velocity = Vec3(-0.5, 0, 0);
  w.particles = {a, b};
  w.dt = 1e-4;
  w.params.kn = 1e4;
  w.params.kt = 5e3;
  w.validate();
  const Vec3 p0 = a.mass * a.velocity + b.mass * b.velocity;
  int touched = 0;
  for (int i = 0; i < 3000; ++i) touched += w.step().pair_contacts;
  CHECK(touched > 0);
  const Vec3 p1 = w.particles[0].mass * w.particles[0].velocity + w.particles[1].mass * w.particles[1].velocity;
  CHECK((p1 - p0).norm() < 1e-10);
  CHECK(w.particles[0].velocity.x() < 0.0);
}

TEST_CASE("elastic bouncing on a wall conserves energy") {
  World w;
  auto p = sphere(0.05, 0.01, Vec3(0, 0, 0.2), 0.01);
  w.particles.push_back(p);
  w.walls = {WallPlane{Vec3::Zero(), Vec3::UnitZ()}};
  w.gravity = Vec3(0, 0, -9.81);
  w.params.kn = 1e3;
  w.params.mu_s = 0.0;
  w.dt = 0.09 * std::sqrt(p.mass / w.params.kn);
  w.validate();
  auto energy = [&] {
    const auto& q = w.particles[0];
    return q.kinetic_energy() - q.mass * w.gravity.dot(q.position) + w.spring_energy();
  };
  w.compute_forces();
  const double e0 = energy();
  int contacts = 0;
  for (int i = 0; i < 100000; ++i) contacts += w.step().wall_contacts;
  CHECK(contacts > 0);
  CHECK(std::abs(energy() - e0) / e0 < 0.01);
}

TEST_CASE("configuration errors") {
  World w;
  w.particles.push_back(sphere(1.0, 0.1, Vec3::Zero(), 1.0));
  w.params.kn = 1e5;
  w.dt = 0.1 * std::sqrt(1.0 / 1e5);
  CHECK_THROWS_AS(w.validate(), Error);
  w.dt *= 0.5;
  CHECK_NOTHROW(w.validate());
  w.params.eta_n = -1;
  CHECK_THROWS_AS(w.validate(), Error);
  CHECK_THROWS_AS(damping_from_restitution(0.0, 1.0, 1.0), Error);
  CHECK(damping_from_restitution(1.0, 1.0, 1.0) == 0.0);
}

// The no-tension clamp ends the contact early, so the rebound exceeds the linear-oscillator target.
TEST_CASE("restitution heuristic damps the rebound") {
  World w;
  auto p = sphere(0.05, 0.01, Vec3(0, 0, 0.0605), 0.01);
  p.velocity = Vec3(0, 0, -1.0);
  w.particles.push_back(p);
  w.walls = {WallPlane{}};
  w.params.kn = 1e4;
  w.params.eta_n = damping_from_restitution(0.2, p.mass, w.params.kn);
  w.dt = 1e-6;
  for (int i = 0; i < 20000; ++i) w.step();
  CHECK(w.particles[0].velocity.z() > 0.2);
  CHECK(w.particles[0].velocity.z() < 0.35);
}
