#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "midelbm/core.hpp"
#include "midelbm/dem.hpp"

namespace midelbm::lbm {

struct VelocitySet {
  std::string name;
  int dimension = 3;
  int q = 0;
  std::vector<std::array<int, 3>> e;
  std::vector<double> w;
  std::vector<int> opposite;

  Vec3 velocity(int i) const { return Vec3(e[i][0], e[i][1], e[i][2]); }

  static const VelocitySet& d2q9();
  static const VelocitySet& d3q15();
};

enum class ViscosityUnit { Dynamic, Kinematic };  // Pa s or m^2/s

struct FluidConfig {
  double density = 1000.0;
  double viscosity = 1e-3;
  ViscosityUnit unit = ViscosityUnit::Dynamic;
  Vec3 body_acceleration = Vec3::Zero();

  double kinematic_viscosity() const {
    return unit == ViscosityUnit::Dynamic ? viscosity / density : viscosity;
  }
  double dynamic_viscosity() const { return kinematic_viscosity() * density; }
  /// BGK relaxation time for the given cell size and time step.
  double tau(double dx, double dt) const { return 0.5 + 3.0 * kinematic_viscosity() * dt / (dx * dx); }
};

struct LatticeSpec {
  int dimension = 3;
  int nx = 1, ny = 1, nz = 1;
  double dx = 1.0;
  double dt = 1.0;
  Vec3 origin = Vec3::Zero();  // position of node (0, 0, 0)

  double speed() const { return dx / dt; }
  const VelocitySet& velocity_set() const {
    return dimension == 2 ? VelocitySet::d2q9() : VelocitySet::d3q15();
  }
};

/// Per-axis boundary: periodic, or a pair of bounce-back walls with prescribed velocities.
struct DomainBoundary {
  std::array<bool, 3> periodic{false, false, false};
  std::array<Vec3, 6> wall_velocity{};  // faces -x, +x, -y, +y, -z, +z (physical units)

  DomainBoundary() { wall_velocity.fill(Vec3::Zero()); }
};

enum class NodeClass : std::uint8_t { Fluid = 0, Solid = 1, Boundary = 2 };

struct BoundaryLink {
  int node = 0;   // fluid node x_f
  int dir = 0;    // direction from x_f toward the solid
  double q = 0;   // wall fraction along the link
  Vec3 wall_point = Vec3::Zero();      // physical, in the frame of the owning particle image
  Vec3 wall_velocity = Vec3::Zero();   // lattice units
  int owner = -1;                      // particle index
};

struct Diagnostics {
  long fallback_links = 0;  // IBB links without an ff neighbour
  long refilled_nodes = 0;
  long covered_nodes = 0;
  double refill_mass = 0.0;   // lattice mass added by refilling
  double covered_mass = 0.0;  // lattice mass removed by covering
  Vec3 refill_momentum = Vec3::Zero();
  Vec3 covered_momentum = Vec3::Zero();
};

/// Hydrodynamic level c_0 of a Metaball: f at a surface point pushed R_s outward along the normal.
double hydrodynamic_level(const geometry::Metaball& mb);

class Lattice {
 public:
  Lattice(const LatticeSpec& spec, const FluidConfig& fluid, const DomainBoundary& boundary = {});

  const LatticeSpec& spec() const { return spec_; }
  const VelocitySet& velocity_set() const { return *vs_; }
  const FluidConfig& fluid() const { return fluid_; }
  double tau() const { return tau_; }
  std::size_t size() const { return n_; }
  int index(int i, int j, int k) const { return i + spec_.nx * (j + spec_.ny * k); }
  std::array<int, 3> coords(int n) const;
  Vec3 node_position(int n) const;

  /// Uniform equilibrium with lattice density rho and lattice velocity u.
  void init_equilibrium(double rho, const Vec3& u);
  void set_equilibrium(int n, double rho, const Vec3& u);
  double f(int n, int i) const { return f_[static_cast<std::size_t>(i) * n_ + n]; }
  double& f(int n, int i) { return f_[static_cast<std::size_t>(i) * n_ + n]; }
  double equilibrium(int i, double rho, const Vec3& u) const;

  /// Density and lattice velocity from the current distributions.
  double density(int n) const;
  Vec3 velocity(int n) const;
  /// Raw first moment sum f_i e_i, lattice units.
  Vec3 momentum(int n) const;
  /// Physical velocity.
  Vec3 velocity_physical(int n) const { return velocity(n) * spec_.speed(); }
  NodeClass node_class(int n) const { return cls_[n]; }
  int owner(int n) const { return owner_[n]; }
  const std::vector<BoundaryLink>& links() const { return links_; }
  const Diagnostics& diagnostics() const { return diag_; }
  /// Sum of density over fluid and boundary nodes.
  double fluid_mass() const;
  long solid_count() const;

  /// Marks solid and boundary nodes and rebuilds the link list. Nodes that turned from solid
  /// to fluid are queued for refill. c0 holds one hydrodynamic level per particle.
  void classify(const std::vector<dem::ParticleState>& particles, const std::vector<double>& c0);
  void refill(const std::vector<dem::ParticleState>& particles);
  void collide_stream();
  void apply_ibb();
  /// Galilean-invariant momentum exchange, physical force and torque per particle.
  std::vector<dem::Wrench> momentum_exchange(const std::vector<dem::ParticleState>& particles) const;
  /// classify, refill, collide_stream, apply_ibb, momentum_exchange.
  std::vector<dem::Wrench> step(const std::vector<dem::ParticleState>& particles,
                                const std::vector<double>& c0);
  /// Throws with cell diagnostics when a fluid node has rho <= 0 or non-finite values.
  void check_health() const;

  /// Conversion factor from lattice force to physical force.
  double force_scale() const;

 private:
  LatticeSpec spec_;
  FluidConfig fluid_;
  DomainBoundary boundary_;
  const VelocitySet* vs_;
  std::size_t n_;
  double tau_;
  Vec3 accel_lattice_;
  std::array<Vec3, 6> wall_u_lattice_;
  std::vector<double> f_, f_next_;
  std::vector<double> rho_;
  std::vector<Vec3> u_;
  std::vector<NodeClass> cls_, prev_cls_;
  std::vector<int> owner_, prev_owner_;
  std::vector<int> fresh_;
  std::vector<BoundaryLink> links_;
  Diagnostics diag_;

  // Neighbor of n along direction i; -1 and the exited face when it leaves a walled side.
  int neighbor(int n, int i, int* face = nullptr) const;
  // Pre-collision density and velocity at IBB stencil nodes.
  void store_link_macros();
  template <class VS, bool Forced>
  void collide_stream_kernel();
};

}  // namespace midelbm::lbm
