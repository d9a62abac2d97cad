#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "midelbm/dem.hpp"
#include "midelbm/lbm.hpp"

namespace midelbm::engine {

struct ParticleSpec {
  std::string metaball_path;  // informational; `shape` holds the loaded parameters
  geometry::Metaball shape;   // in its file frame; the mass centroid is placed at `position`
  double density = 2500.0;
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  bool kinematic = false;
};

struct OutputConfig {
  int record_every = 1;    // macro-steps between time-series records
  int snapshot_every = 0;  // macro-steps between field snapshots, 0 = none
  bool binary_vtk = false;
};

struct SimulationConfig {
  int dimension = 3;
  Vec3 extent = Vec3::Ones();  // domain size; walls sit on the box faces
  Vec3 origin = Vec3::Zero();  // lower corner of the box
  std::array<bool, 3> periodic{false, false, false};
  std::array<Vec3, 6> wall_velocity{};
  double dx = 0.01;
  double dt_lbm = 1e-3;
  double dt_dem = 1e-4;
  lbm::FluidConfig fluid;
  std::vector<ParticleSpec> particles;
  Vec3 gravity = Vec3(0, 0, -9.81);
  dem::ContactParams contact;
  double restitution = 0.0;  // > 0 derives eta_n from the lightest pair when eta_n is 0
  OutputConfig output;
  double duration = 1.0;
  std::uint64_t seed = 1;
  int mass_resolution = 64;

  SimulationConfig() { wall_velocity.fill(Vec3::Zero()); }

  /// dt_lbm / dt_dem; throws unless it is a positive integer.
  int substeps() const;
  /// Lattice node counts; the box must hold an integer number of cells.
  std::array<int, 3> grid() const;
  long total_steps() const;
  /// Throws Error naming the offending field.
  void validate() const;
};

struct ParticleRecord {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  Vec3 hydro_force = Vec3::Zero();
  Vec3 hydro_torque = Vec3::Zero();
};

struct TimeSeriesRecord {
  long step = 0;
  double time = 0.0;
  std::vector<ParticleRecord> particles;
  int contacts = 0;
};

struct Timing {
  double classify_lbm = 0.0;  // seconds in the lattice step
  double dem = 0.0;
  double output = 0.0;
};

class Simulation {
 public:
  explicit Simulation(const SimulationConfig& cfg);

  /// One LBM macro-step followed by the DEM substeps.
  void step();
  /// Steps until the configured duration; `on_step` runs after every macro-step.
  void run(const std::function<void(const Simulation&)>& on_step = {});

  const SimulationConfig& config() const { return cfg_; }
  const dem::World& world() const { return world_; }
  const lbm::Lattice& lattice() const { return lattice_; }
  long step_index() const { return step_; }
  double time() const { return step_ * cfg_.dt_lbm; }
  const std::vector<dem::Wrench>& hydrodynamic() const { return hydro_; }
  const std::vector<TimeSeriesRecord>& records() const { return records_; }
  TimeSeriesRecord snapshot() const;
  const Timing& timing() const { return timing_; }
  /// Volume-equivalent diameter of particle i (from the undilated shape).
  double equivalent_diameter(int i) const { return equivalent_diameter_[i]; }

 private:
  SimulationConfig cfg_;
  dem::World world_;
  lbm::Lattice lattice_;
  std::vector<double> c0_;
  std::vector<double> equivalent_diameter_;
  std::vector<dem::Wrench> hydro_;
  std::vector<TimeSeriesRecord> records_;
  int contacts_ = 0;
  long step_ = 0;
  Timing timing_;
};

double reynolds(double fluid_density, double speed, double diameter, double dynamic_viscosity);
/// Re from the peak speed of particle `particle` over the series.
double reynolds(const std::vector<TimeSeriesRecord>& series, int particle, const lbm::FluidConfig& fluid,
                double diameter);

struct ShapeDescriptors {
  double sphericity = 0.0;
  double nominal_diameter = 0.0;  // volume-equivalent
  double projected_diameter = 0.0;  // sqrt(4 A_p / pi)
  double csf = 0.0;
  double surface_area = 0.0;
  double volume = 0.0;
  double projected_area = 0.0;
  std::array<double, 3> extents{};  // longest, intermediate, shortest
  double dn_over_ds() const { return nominal_diameter / projected_diameter; }
};

ShapeDescriptors shape_descriptors(const geometry::Metaball& mb, int resolution = 128);

struct DktSeries {
  std::vector<double> time;                   // t / t_r
  std::array<std::vector<double>, 2> height;  // vertical position / H
  std::vector<double> distance;               // centre distance / D_e
  std::array<std::vector<double>, 2> vertical_velocity;  // / sqrt(H g)
  std::array<std::vector<double>, 2> angular_speed;      // |omega| t_r / 2 pi
  int drafting_index = -1;
  int kissing_index = -1;
  int tumbling_index = -1;
};

/// `up` is the unit vertical; `contact_distance` is the centre distance at touching
/// (sum of the effective radii), the kissing threshold being 1.05 times that.
DktSeries dkt_metrics(const std::vector<TimeSeriesRecord>& records, double H, double De, double g,
                      const Vec3& up, double contact_distance);

}  // namespace midelbm::engine
