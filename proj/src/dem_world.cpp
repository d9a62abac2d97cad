#include <algorithm>
#include <cmath>

#include "midelbm/dem.hpp"

namespace midelbm::dem {

namespace {

Quat rotation_exp(const Vec3& omega, double dt) {
  const double angle = omega.norm() * dt;
  if (angle == 0.0) return Quat::Identity();
  return Quat(Eigen::AngleAxisd(angle, omega.normalized()));
}

}  // namespace

double ParticleState::value(const Vec3& x) const { return geometry::evaluate(shape, to_body(x)); }

Vec3 ParticleState::gradient(const Vec3& x) const {
  return orientation * geometry::gradient(shape, to_body(x));
}

Mat3 ParticleState::hessian(const Vec3& x) const {
  const Mat3 R = rotation();
  return R * geometry::hessian(shape, to_body(x)) * R.transpose();
}

Aabb ParticleState::world_box(double margin) const {
  const Aabb body = geometry::bounding_box(shape, margin);
  Aabb out;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner((c & 1) ? body.hi.x() : body.lo.x(), (c & 2) ? body.hi.y() : body.lo.y(),
                      (c & 4) ? body.hi.z() : body.lo.z());
    out.expand(to_world(corner));
  }
  return out;
}

Mat3 ParticleState::inverse_inertia_world() const {
  const Mat3 R = rotation();
  return R * inertia.inverse() * R.transpose();
}

Vec3 ParticleState::angular_momentum() const {
  const Mat3 R = rotation();
  return R * inertia * R.transpose() * angular_velocity;
}

double ParticleState::kinetic_energy() const {
  return 0.5 * mass * velocity.squaredNorm() + 0.5 * angular_velocity.dot(angular_momentum());
}

void ParticleState::validate() const {
  shape.validate();
  if (!(mass > 0.0)) throw Error("particle: mass must be > 0");
  if (!inertia.isApprox(inertia.transpose(), 1e-12))
    throw Error("particle: inertia tensor is not symmetric");
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
  if (!(eig.eigenvalues().minCoeff() > 0.0))
    throw Error("particle: inertia tensor is not positive definite");
  if (std::abs(orientation.norm() - 1.0) > 1e-9) throw Error("particle: orientation is not unit");
}

ParticleState make_particle(const geometry::Metaball& shape_world, double density, int resolution) {
  const auto mp = geometry::mass_properties(shape_world, density, resolution);
  ParticleState p;
  p.shape = shape_world.translated(-mp.centroid);
  p.mass = mp.mass;
  p.inertia = 0.5 * (mp.inertia + mp.inertia.transpose());
  p.position = mp.centroid;
  return p;
}

void ContactParams::validate() const {
  if (!(kn > 0.0 && kt > 0.0)) throw Error("contact params: kn and kt must be > 0");
  if (!(eta_n >= 0.0 && eta_t >= 0.0)) throw Error("contact params: damping must be >= 0");
  if (!(mu_s >= 0.0)) throw Error("contact params: mu_s must be >= 0");
}

double damping_from_restitution(double e, double m_eff, double kn) {
  if (!(e > 0.0 && e <= 1.0)) throw Error("restitution must be in (0, 1]");
  if (e == 1.0) return 0.0;
  const double le = std::log(e);
  return -2.0 * le * std::sqrt(m_eff * kn / (le * le + M_PI * M_PI));
}

std::vector<WallPlane> box_walls(const Vec3& lo, const Vec3& hi) {
  std::vector<WallPlane> w;
  for (int d = 0; d < 3; ++d) {
    Vec3 n = Vec3::Zero();
    n[d] = 1.0;
    w.push_back({lo, n});
    w.push_back({hi, -n});
  }
  return w;
}

void World::validate() const {
  params.validate();
  if (!(dt > 0.0)) throw Error("DEM: dt must be > 0");
  double m_min = kInf;
  for (const auto& p : particles) {
    p.validate();
    if (p.motion == Motion::Dynamic) m_min = std::min(m_min, p.mass);
  }
  for (const auto& w : walls)
    if (std::abs(w.outward_normal.norm() - 1.0) > 1e-12) throw Error("DEM: wall normal must be unit");
  if (std::isfinite(m_min) && !(dt < 0.1 * std::sqrt(m_min / params.kn)))
    throw Error("DEM: time step violates dt < 0.1 sqrt(m_min / kn)");
}

void World::reset_contacts() {
  pair_cache_.clear();
  wall_xi_.clear();
  forces_valid_ = false;
}

double World::kinetic_energy() const {
  double e = 0.0;
  for (const auto& p : particles) e += p.kinetic_energy();
  return e;
}

StepStats World::contact_forces() {
  StepStats stats;
  const std::size_t n = particles.size();
  contact_.assign(n, Wrench{});
  spring_energy_ = 0.0;
  const double step_dt = dt;

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = particles[i];
      const auto& b = particles[j];
      const auto key = std::make_pair(static_cast<int>(i), static_cast<int>(j));
      if (!a.world_box().overlaps(b.world_box())) {
        pair_cache_.erase(key);
        continue;
      }
      auto it = pair_cache_.find(key);
      std::optional<Vec3> seed;
      if (it != pair_cache_.end()) seed = it->second.seed;
      const auto cp = closest_points_pair(a, b, seed);
      if (!cp) {
        ++stats.nonconverged;
        continue;
      }
      auto& cache = pair_cache_[key];
      cache.seed = cp->x_m;
      auto info = contact_pair(a, b, *cp);
      if (!info) {
        cache.xi.setZero();
        cache.touching = false;
        continue;
      }
      info->tangential_spring = cache.touching ? cache.xi : Vec3::Zero();
      const ContactForce cf = contact_force(*info, a, &b, params, step_dt);
      cache.xi = cf.tangential_spring;
      cache.touching = true;
      contact_[i].force += cf.force;
      contact_[i].torque += (info->point - a.position).cross(cf.force);
      contact_[j].force -= cf.force;
      contact_[j].torque -= (info->point - b.position).cross(cf.force);
      spring_energy_ += 0.5 * params.kn * info->overlap * info->overlap;
      ++stats.pair_contacts;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = particles[i];
    for (std::size_t k = 0; k < walls.size(); ++k) {
      const auto key = std::make_pair(static_cast<int>(i), static_cast<int>(k));
      auto info = contact_wall(a, walls[k]);
      if (!info) {
        wall_xi_.erase(key);
        continue;
      }
      auto it = wall_xi_.find(key);
      info->tangential_spring = it != wall_xi_.end() ? it->second : Vec3::Zero();
      const ContactForce cf = contact_force(*info, a, nullptr, params, step_dt);
      wall_xi_[key] = cf.tangential_spring;
      contact_[i].force += cf.force;
      contact_[i].torque += (info->point - a.position).cross(cf.force);
      spring_energy_ += 0.5 * params.kn * info->overlap * info->overlap;
      ++stats.wall_contacts;
    }
  }
  forces_valid_ = true;
  return stats;
}

void World::assemble(const std::vector<Wrench>& external) {
  if (!external.empty() && external.size() != particles.size())
    throw Error("DEM: external wrench list does not match the particle count");
  for (std::size_t i = 0; i < particles.size(); ++i) {
    auto& p = particles[i];
    p.force = contact_[i].force + p.mass * p.gravity_factor * gravity;
    p.torque = contact_[i].torque;
    if (!external.empty()) {
      p.force += external[i].force;
      p.torque += external[i].torque;
    }
    if (planar) {
      p.force.z() = 0.0;
      p.torque.x() = 0.0;
      p.torque.y() = 0.0;
    }
  }
}

StepStats World::compute_forces(const std::vector<Wrench>& external) {
  const StepStats s = contact_forces();
  assemble(external);
  return s;
}

StepStats World::step(const std::vector<Wrench>& external) {
  if (!forces_valid_ || contact_.size() != particles.size()) contact_forces();
  assemble(external);
  const double h = 0.5 * dt;

  std::vector<Vec3> momentum(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    auto& p = particles[i];
    if (p.motion == Motion::Kinematic) {
      p.position += p.velocity * dt;
      p.orientation = (rotation_exp(p.angular_velocity, dt) * p.orientation).normalized();
      continue;
    }
    p.velocity += p.force / p.mass * h;
    if (planar) {
      p.velocity.z() = 0.0;
      p.angular_velocity.x() = p.angular_velocity.y() = 0.0;
      p.angular_velocity.z() += p.torque.z() / p.inertia(2, 2) * h;
      p.position += p.velocity * dt;
      p.orientation = (rotation_exp(p.angular_velocity, dt) * p.orientation).normalized();
      continue;
    }
    // Angular momentum is constant during the drift; the midpoint orientation sets the rate.
    Vec3 L = p.angular_momentum() + p.torque * h;
    p.angular_velocity = p.inverse_inertia_world() * L;
    const Quat q0 = p.orientation;
    p.orientation = (rotation_exp(p.angular_velocity, h) * q0).normalized();
    const Vec3 w_mid = p.inverse_inertia_world() * L;
    p.orientation = (rotation_exp(w_mid, dt) * q0).normalized();
    p.angular_velocity = p.inverse_inertia_world() * L;
    momentum[i] = L;
    p.position += p.velocity * dt;
  }

  const StepStats stats = contact_forces();
  assemble(external);

  for (std::size_t i = 0; i < particles.size(); ++i) {
    auto& p = particles[i];
    if (p.motion == Motion::Kinematic) continue;
    p.velocity += p.force / p.mass * h;
    if (planar) {
      p.velocity.z() = 0.0;
      p.angular_velocity.z() += p.torque.z() / p.inertia(2, 2) * h;
      continue;
    }
    momentum[i] += p.torque * h;
    p.angular_velocity = p.inverse_inertia_world() * momentum[i];
  }
  return stats;
}

StepStats integrate(World& world, const std::vector<Wrench>& external) {
  return world.step(external);
}

}  // namespace midelbm::dem
