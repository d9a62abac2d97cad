#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "midelbm/core.hpp"
#include "midelbm/geometry.hpp"

namespace midelbm::dem {

/// Raised when two internal Metaballs (or a Metaball and a wall) interpenetrate.
class DeepPenetration : public Error {
 public:
  using Error::Error;
};

enum class Motion { Dynamic, Kinematic };

struct ParticleState {
  geometry::Metaball shape;  // body frame, centroid at the origin
  double mass = 1.0;
  Mat3 inertia = Mat3::Identity();  // body frame
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();  // world frame
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
  double gravity_factor = 1.0;  // 1 - rho_f / rho_p when buoyancy is folded into gravity
  Motion motion = Motion::Dynamic;
  int id = 0;

  Mat3 rotation() const { return orientation.toRotationMatrix(); }
  Vec3 to_body(const Vec3& x) const { return orientation.conjugate() * (x - position); }
  Vec3 to_world(const Vec3& xb) const { return orientation * xb + position; }
  double sphero_radius() const { return shape.sphero_radius; }

  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  Mat3 hessian(const Vec3& x) const;
  /// Rigid velocity of the material point at x.
  Vec3 velocity_at(const Vec3& x) const { return velocity + angular_velocity.cross(x - position); }
  /// World box of the dilated shape.
  Aabb world_box(double margin = 0.0) const;
  /// World-frame inverse inertia tensor R I^-1 R^T.
  Mat3 inverse_inertia_world() const;
  Vec3 angular_momentum() const;
  double kinetic_energy() const;

  void validate() const;
};

/// Builds a particle whose body frame sits at the Metaball centroid.
ParticleState make_particle(const geometry::Metaball& shape_world, double density,
                            int resolution = 64);

struct ContactParams {
  double kn = 1e5;
  double kt = 5e4;
  double eta_n = 0.0;
  double eta_t = 0.0;
  double mu_s = 0.5;

  void validate() const;
};

/// Normal damping giving restitution e for effective mass m_eff.
double damping_from_restitution(double restitution, double m_eff, double kn);

struct ContactInfo {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // points toward particle a
  double overlap = 0.0;
  Vec3 tangential_spring = Vec3::Zero();
};

struct WallPlane {
  Vec3 point = Vec3::Zero();
  Vec3 outward_normal = Vec3::UnitZ();  // from the wall into the domain

  double signed_distance(const Vec3& x) const { return outward_normal.dot(x - point); }
};

struct ClosestPoints {
  Vec3 x_c0, x_c1, x_m;
  int iterations = 0;
};

struct NarrowOptions {
  int max_iterations = 50;
  double gradient_tol = 1e-10;
  double c_tol = 1e-6;
};

/// Minimum of f_a + f_b between the two particles and its projections onto both surfaces.
/// Returns nullopt when the broad phase rejects the pair or Newton does not converge.
std::optional<ClosestPoints> closest_points_pair(const ParticleState& a, const ParticleState& b,
                                                 const std::optional<Vec3>& seed = std::nullopt,
                                                 const NarrowOptions& opts = {});

std::optional<ContactInfo> contact_pair(const ParticleState& a, const ParticleState& b,
                                        const ClosestPoints& cp);

std::optional<ContactInfo> contact_wall(const ParticleState& a, const WallPlane& w,
                                        const NarrowOptions& opts = {});

struct ContactForce {
  Vec3 force = Vec3::Zero();  // on particle a, at info.point
  Vec3 tangential_spring = Vec3::Zero();
  double normal_magnitude = 0.0;
  bool sliding = false;
};

/// Spring-dashpot force on a. b == nullptr means a static wall.
ContactForce contact_force(const ContactInfo& info, const ParticleState& a,
                           const ParticleState* b, const ContactParams& p, double dt);

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

struct StepStats {
  int pair_contacts = 0;
  int wall_contacts = 0;
  int nonconverged = 0;
};

class World {
 public:
  std::vector<ParticleState> particles;
  std::vector<WallPlane> walls;
  ContactParams params;
  Vec3 gravity = Vec3::Zero();
  double dt = 1e-5;
  bool planar = false;  // motion restricted to the xy plane, rotation about z

  /// Throws on invalid particles/params or dt >= 0.1 sqrt(m_min / kn).
  void validate() const;
  /// One velocity-Verlet step. `external` is indexed like `particles` (may be empty).
  StepStats step(const std::vector<Wrench>& external = {});
  /// Recompute contact + gravity + external forces at the current state.
  StepStats compute_forces(const std::vector<Wrench>& external = {});
  double kinetic_energy() const;
  /// Elastic energy stored in active normal springs at the last force evaluation.
  double spring_energy() const { return spring_energy_; }
  void reset_contacts();
  /// Call after editing particle state directly.
  void invalidate() { forces_valid_ = false; }

 private:
  struct PairCache {
    Vec3 seed = Vec3::Zero();
    Vec3 xi = Vec3::Zero();
    bool touching = false;
  };
  std::map<std::pair<int, int>, PairCache> pair_cache_;
  std::map<std::pair<int, int>, Vec3> wall_xi_;
  std::vector<Wrench> contact_;
  bool forces_valid_ = false;
  double spring_energy_ = 0.0;

  StepStats contact_forces();
  void assemble(const std::vector<Wrench>& external);
};

/// Free-function form of World::step.
StepStats integrate(World& world, const std::vector<Wrench>& external = {});

/// Six inward-facing planes of the box [lo, hi].
std::vector<WallPlane> box_walls(const Vec3& lo, const Vec3& hi);

}  // namespace midelbm::dem
