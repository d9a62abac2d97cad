#include <algorithm>
#include <chrono>
#include <cmath>

#include "midelbm/engine.hpp"
#include "midelbm/mesh.hpp"

namespace midelbm::engine {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

lbm::LatticeSpec lattice_spec(const SimulationConfig& cfg) {
  const auto g = cfg.grid();
  lbm::LatticeSpec s;
  s.dimension = cfg.dimension;
  s.nx = g[0];
  s.ny = g[1];
  s.nz = g[2];
  s.dx = cfg.dx;
  s.dt = cfg.dt_lbm;
  s.origin = cfg.origin + Vec3::Constant(0.5 * cfg.dx);
  if (cfg.dimension == 2) s.origin.z() = 0.0;
  return s;
}

lbm::DomainBoundary domain_boundary(const SimulationConfig& cfg) {
  lbm::DomainBoundary b;
  b.periodic = cfg.periodic;
  b.wall_velocity = cfg.wall_velocity;
  return b;
}

int active_axes(const SimulationConfig& cfg) { return cfg.dimension == 2 ? 2 : 3; }

dem::ParticleState build_particle(const SimulationConfig& cfg, const ParticleSpec& spec) {
  dem::ParticleState p;
  if (cfg.dimension == 3) {
    p = dem::make_particle(spec.shape, spec.density, cfg.mass_resolution);
  } else {
    // A 2D particle is a slab of one lattice cell thickness cut at z = 0.
    const auto sec = geometry::section_properties(spec.shape, cfg.mass_resolution);
    const Vec3 c(sec.centroid.x(), sec.centroid.y(), 0.0);
    p.shape = spec.shape.translated(-c);
    p.mass = spec.density * sec.area * cfg.dx;
    p.inertia = Mat3::Identity() * (spec.density * sec.polar_moment * cfg.dx);
  }
  p.position = spec.position;
  p.orientation = spec.orientation.normalized();
  p.velocity = spec.velocity;
  p.angular_velocity = spec.angular_velocity;
  p.gravity_factor = 1.0 - cfg.fluid.density / spec.density;
  p.motion = spec.kinematic ? dem::Motion::Kinematic : dem::Motion::Dynamic;
  if (cfg.dimension == 2) {
    p.position.z() = 0.0;
    p.velocity.z() = 0.0;
    p.angular_velocity.x() = p.angular_velocity.y() = 0.0;
  }
  return p;
}

double equivalent_diameter_of(const SimulationConfig& cfg, const geometry::Metaball& shape) {
  if (cfg.dimension == 3) {
    const double v = geometry::mass_properties(shape, 1.0, cfg.mass_resolution).volume;
    return std::cbrt(6.0 * v / M_PI);
  }
  return std::sqrt(4.0 * geometry::section_properties(shape, cfg.mass_resolution).area / M_PI);
}

dem::World build_world(const SimulationConfig& cfg) {
  cfg.validate();
  dem::World w;
  w.params = cfg.contact;
  w.gravity = cfg.gravity;
  w.dt = cfg.dt_dem;
  w.planar = cfg.dimension == 2;
  if (w.planar) w.gravity.z() = 0.0;
  for (const auto& s : cfg.particles) w.particles.push_back(build_particle(cfg, s));
  const Vec3 hi = cfg.origin + cfg.extent;
  for (int a = 0; a < active_axes(cfg); ++a) {
    if (cfg.periodic[a]) continue;
    Vec3 n = Vec3::Zero();
    n[a] = 1.0;
    w.walls.push_back({cfg.origin, n});
    w.walls.push_back({hi, -n});
  }
  if (cfg.restitution > 0.0 && w.params.eta_n == 0.0 && !w.particles.empty()) {
    double m_min = kInf;
    for (const auto& p : w.particles) m_min = std::min(m_min, p.mass);
    w.params.eta_n = dem::damping_from_restitution(cfg.restitution, 0.5 * m_min, w.params.kn);
  }
  for (std::size_t i = 0; i < w.particles.size(); ++i) {
    try {
      w.particles[i].id = static_cast<int>(i);
      w.particles[i].validate();
      const Aabb box = w.particles[i].world_box();
      for (int a = 0; a < active_axes(cfg); ++a) {
        if (cfg.periodic[a]) continue;
        if (box.lo[a] < cfg.origin[a] || box.hi[a] > hi[a])
          throw Error("initial bounding box leaves the domain");
      }
    } catch (const Error& e) {
      throw Error("particles[" + std::to_string(i) + "]: " + e.what());
    }
  }
  w.validate();
  return w;
}

}  // namespace

int SimulationConfig::substeps() const {
  if (!(dt_lbm > 0.0 && dt_dem > 0.0)) throw Error("dt_lbm and dt_dem must be > 0");
  const double r = dt_lbm / dt_dem;
  const double n = std::round(r);
  if (n < 1.0 || std::abs(r - n) > 1e-9 * n)
    throw Error("dt_lbm / dt_dem must be a positive integer (got " + std::to_string(r) + ")");
  return static_cast<int>(n);
}

std::array<int, 3> SimulationConfig::grid() const {
  std::array<int, 3> g{1, 1, 1};
  const char* names = "xyz";
  for (int a = 0; a < active_axes(*this); ++a) {
    const double cells = extent[a] / dx;
    const double n = std::round(cells);
    if (n < 1.0 || std::abs(cells - n) > 1e-6 * n)
      throw Error(std::string("domain.extent[") + names[a] + "] must be a whole number of cells");
    g[a] = static_cast<int>(n);
  }
  return g;
}

long SimulationConfig::total_steps() const { return std::lround(duration / dt_lbm); }

void SimulationConfig::validate() const {
  if (dimension != 2 && dimension != 3) throw Error("dimension must be 2 or 3");
  if (!(dx > 0.0)) throw Error("lattice.dx must be > 0");
  if (!(extent.head(active_axes(*this)).array() > 0.0).all()) throw Error("domain.extent must be > 0");
  substeps();
  grid();
  if (!(duration >= 0.0)) throw Error("output.duration must be >= 0");
  if (output.record_every < 1) throw Error("output.record_every must be >= 1");
  if (output.snapshot_every < 0) throw Error("output.snapshot_every must be >= 0");
  if (mass_resolution < 32) throw Error("mass_resolution must be >= 32");
  if (!(restitution >= 0.0 && restitution <= 1.0)) throw Error("contact.restitution must be in [0, 1]");
  if (!(fluid.density > 0.0)) throw Error("fluid.density must be > 0");
  if (!(fluid.viscosity > 0.0)) throw Error("fluid.viscosity must be > 0");
  if (!(fluid.tau(dx, dt_lbm) > 0.5)) throw Error("fluid: relaxation time must exceed 0.5");
  contact.validate();
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const auto& p = particles[i];
    const std::string where = "particles[" + std::to_string(i) + "]";
    if (!(p.density > 0.0)) throw Error(where + ".density must be > 0");
    try {
      p.shape.validate();
    } catch (const Error& e) {
      throw Error(where + ".metaball (" + p.metaball_path + "): " + e.what());
    }
  }
}

Simulation::Simulation(const SimulationConfig& cfg)
    : cfg_(cfg),
      world_(build_world(cfg)),
      lattice_(lattice_spec(cfg), cfg.fluid, domain_boundary(cfg)) {
  for (const auto& s : cfg_.particles) {
    c0_.push_back(lbm::hydrodynamic_level(s.shape));
    equivalent_diameter_.push_back(equivalent_diameter_of(cfg_, s.shape));
  }
  hydro_.assign(world_.particles.size(), dem::Wrench{});
  records_.push_back(snapshot());
}

TimeSeriesRecord Simulation::snapshot() const {
  TimeSeriesRecord r;
  r.step = step_;
  r.time = time();
  r.contacts = contacts_;
  for (std::size_t i = 0; i < world_.particles.size(); ++i) {
    const auto& p = world_.particles[i];
    r.particles.push_back({p.position, p.velocity, p.angular_velocity, hydro_[i].force, hydro_[i].torque});
  }
  return r;
}

void Simulation::step() {
  const long index = step_ + 1;
  try {
    auto t0 = Clock::now();
    hydro_ = lattice_.step(world_.particles, c0_);
    if (index % 100 == 0) lattice_.check_health();
    timing_.classify_lbm += seconds_since(t0);

    t0 = Clock::now();
    const int n_sub = cfg_.substeps();
    for (int s = 0; s < n_sub; ++s) {
      const auto stats = world_.step(hydro_);
      contacts_ = stats.pair_contacts + stats.wall_contacts;
    }
    for (std::size_t i = 0; i < world_.particles.size(); ++i) {
      const auto& p = world_.particles[i];
      if (!p.position.allFinite() || !p.velocity.allFinite())
        throw Error("particle " + std::to_string(i) + " has a non-finite state");
    }
    timing_.dem += seconds_since(t0);
  } catch (const Error& e) {
    throw Error("step " + std::to_string(index) + ": " + e.what());
  }
  step_ = index;
  if (step_ % cfg_.output.record_every == 0) records_.push_back(snapshot());
}

void Simulation::run(const std::function<void(const Simulation&)>& on_step) {
  const long total = cfg_.total_steps();
  while (step_ < total) {
    step();
    if (on_step) on_step(*this);
  }
}

double reynolds(double fluid_density, double speed, double diameter, double dynamic_viscosity) {
  if (!(dynamic_viscosity > 0.0)) throw Error("reynolds: viscosity must be > 0");
  return fluid_density * speed * diameter / dynamic_viscosity;
}

double reynolds(const std::vector<TimeSeriesRecord>& series, int particle, const lbm::FluidConfig& fluid,
                double diameter) {
  if (series.empty()) throw Error("reynolds: empty series");
  double peak = 0.0;
  for (const auto& r : series) {
    if (particle < 0 || particle >= static_cast<int>(r.particles.size()))
      throw Error("reynolds: particle index out of range");
    peak = std::max(peak, r.particles[particle].velocity.norm());
  }
  return reynolds(fluid.density, peak, diameter, fluid.dynamic_viscosity());
}

namespace {

// Area of the union of the triangles projected on the plane spanned by (u, v).
double silhouette_area(const geometry::TriMesh& mesh, const Vec3& u, const Vec3& v, double pixel) {
  std::vector<Eigen::Vector2d> p(mesh.vertices.size());
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(kInf), hi = Eigen::Vector2d::Constant(-kInf);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = {mesh.vertices[i].dot(u), mesh.vertices[i].dot(v)};
    lo = lo.cwiseMin(p[i]);
    hi = hi.cwiseMax(p[i]);
  }
  const int nu = static_cast<int>(std::ceil((hi.x() - lo.x()) / pixel)) + 1;
  const int nv = static_cast<int>(std::ceil((hi.y() - lo.y()) / pixel)) + 1;
  std::vector<unsigned char> covered(static_cast<std::size_t>(nu) * nv, 0);
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector2d &a = p[t[0]], &b = p[t[1]], &c = p[t[2]];
    const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    if (area2 == 0.0) continue;
    const Eigen::Vector2d tlo = a.cwiseMin(b).cwiseMin(c), thi = a.cwiseMax(b).cwiseMax(c);
    const int i0 = std::max(0, static_cast<int>(std::floor((tlo.x() - lo.x()) / pixel - 0.5)));
    const int i1 = std::min(nu - 1, static_cast<int>(std::ceil((thi.x() - lo.x()) / pixel - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::floor((tlo.y() - lo.y()) / pixel - 0.5)));
    const int j1 = std::min(nv - 1, static_cast<int>(std::ceil((thi.y() - lo.y()) / pixel - 0.5)));
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const Eigen::Vector2d q = lo + pixel * Eigen::Vector2d(i + 0.5, j + 0.5);
        const double w0 = (b - q).x() * (c - q).y() - (b - q).y() * (c - q).x();
        const double w1 = (c - q).x() * (a - q).y() - (c - q).y() * (a - q).x();
        const double w2 = (a - q).x() * (b - q).y() - (a - q).y() * (b - q).x();
        const bool in = area2 > 0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0) : (w0 <= 0 && w1 <= 0 && w2 <= 0);
        if (in) covered[static_cast<std::size_t>(j) * nu + i] = 1;
      }
    }
  }
  const double count = static_cast<double>(std::count(covered.begin(), covered.end(), 1));
  return count * pixel * pixel;
}

}  // namespace

ShapeDescriptors shape_descriptors(const geometry::Metaball& mb, int resolution) {
  const auto mesh = geometry::extract_surface(mb, resolution);
  ShapeDescriptors d;
  d.surface_area = mesh.area();
  if (!(d.surface_area > 0.0)) throw Error("shape_descriptors: degenerate level set");
  const auto mp = geometry::mass_properties(mb, 1.0, std::max(resolution, 32));
  d.volume = mp.volume;
  if (!(d.volume > 0.0)) throw Error("shape_descriptors: degenerate level set");
  d.nominal_diameter = std::cbrt(6.0 * d.volume / M_PI);
  // Area and volume from the same triangulation keep Phi <= 1 (isoperimetric inequality).
  const double dm = std::cbrt(6.0 * mesh.volume() / M_PI);
  d.sphericity = M_PI * dm * dm / d.surface_area;

  const Eigen::SelfAdjointEigenSolver<Mat3> eig(0.5 * (mp.inertia + mp.inertia.transpose()));
  const Mat3 axes = eig.eigenvectors();
  std::array<double, 3> ext{};
  for (int a = 0; a < 3; ++a) {
    double lo = kInf, hi = -kInf;
    for (const auto& v : mesh.vertices) {
      const double s = v.dot(axes.col(a));
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    ext[a] = hi - lo;
  }
  const double pixel = *std::max_element(ext.begin(), ext.end()) / (2.0 * resolution);
  for (int a = 0; a < 3; ++a) {
    const double area = silhouette_area(mesh, axes.col((a + 1) % 3), axes.col((a + 2) % 3), pixel);
    d.projected_area = std::max(d.projected_area, area);
  }
  d.projected_diameter = std::sqrt(4.0 * d.projected_area / M_PI);
  std::sort(ext.begin(), ext.end(), std::greater<>());
  d.extents = ext;
  d.csf = ext[2] / std::sqrt(ext[0] * ext[1]);
  return d;
}

DktSeries dkt_metrics(const std::vector<TimeSeriesRecord>& records, double H, double De, double g,
                      const Vec3& up, double contact_distance) {
  if (records.empty()) throw Error("dkt_metrics: empty series");
  for (const auto& r : records)
    if (r.particles.size() != 2) throw Error("dkt_metrics: exactly two particles required");
  if (!(H > 0.0 && De > 0.0 && g > 0.0)) throw Error("dkt_metrics: H, D_e and g must be > 0");
  const Vec3 z = up.normalized();
  const double tr = std::sqrt(H / g);
  const double vref = std::sqrt(H * g);

  DktSeries s;
  for (const auto& r : records) {
    s.time.push_back(r.time / tr);
    s.distance.push_back((r.particles[0].position - r.particles[1].position).norm() / De);
    for (int i = 0; i < 2; ++i) {
      const auto& p = r.particles[i];
      s.height[i].push_back(p.position.dot(z) / H);
      s.vertical_velocity[i].push_back(p.velocity.dot(z) / vref);
      s.angular_speed[i].push_back(p.angular_velocity.norm() * tr / (2.0 * M_PI));
    }
  }

  const int n = static_cast<int>(records.size());
  const double kiss = 1.05 * contact_distance / De;
  for (int i = 0; i < n && s.kissing_index < 0; ++i)
    if (s.distance[i] < kiss) s.kissing_index = i;

  int end = s.kissing_index;
  if (end < 0) {
    end = static_cast<int>(std::min_element(s.distance.begin(), s.distance.end()) - s.distance.begin());
    if (!(s.distance[end] < 0.9 * s.distance[0])) end = -1;
  }
  if (end > 0) {
    int start = end;
    while (start > 0 && s.distance[start - 1] > s.distance[start]) --start;
    if (start < end) s.drafting_index = start;
  }

  auto rank = [&](int i) {
    const double d = s.height[0][i] - s.height[1][i];
    return (d > 0) - (d < 0);
  };
  const int r0 = rank(0);
  if (r0 != 0) {
    for (int i = std::max(1, s.kissing_index); i < n; ++i) {
      if (rank(i) == -r0) {
        s.tumbling_index = i;
        break;
      }
    }
  }
  return s;
}

}  // namespace midelbm::engine
