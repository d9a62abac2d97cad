#include <algorithm>
#include <cmath>
#include <sstream>

#include "midelbm/lbm.hpp"

namespace midelbm::lbm {

namespace {

VelocitySet make_set(std::string name, int dim, std::vector<std::array<int, 3>> e,
                     std::vector<double> w) {
  VelocitySet vs;
  vs.name = std::move(name);
  vs.dimension = dim;
  vs.q = static_cast<int>(e.size());
  vs.e = std::move(e);
  vs.w = std::move(w);
  vs.opposite.resize(vs.e.size());
  for (int i = 0; i < vs.q; ++i)
    for (int j = 0; j < vs.q; ++j)
      if (vs.e[j][0] == -vs.e[i][0] && vs.e[j][1] == -vs.e[i][1] && vs.e[j][2] == -vs.e[i][2])
        vs.opposite[i] = j;
  return vs;
}

}  // namespace

const VelocitySet& VelocitySet::d2q9() {
  static const VelocitySet vs = make_set(
      "D2Q9", 2,
      {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {1, 1, 0}, {-1, -1, 0}, {1, -1, 0}, {-1, 1, 0}},
      {4.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 36, 1.0 / 36, 1.0 / 36, 1.0 / 36});
  return vs;
}

const VelocitySet& VelocitySet::d3q15() {
  static const VelocitySet vs = make_set(
      "D3Q15", 3,
      {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1},
       {1, 1, 1}, {-1, -1, -1}, {1, 1, -1}, {-1, -1, 1}, {1, -1, 1}, {-1, 1, -1}, {-1, 1, 1}, {1, -1, -1}},
      {2.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9,
       1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72});
  return vs;
}

double hydrodynamic_level(const geometry::Metaball& mb) {
  mb.validate();
  if (mb.sphero_radius <= 0.0) return mb.surface_level;
  // Reference surface point: first hit of a ray shot at the box center from outside along -x.
  const Aabb box = geometry::bounding_box(mb);
  const Vec3 target = box.center();
  const double reach = box.extent().norm() + 1.0;
  Vec3 origin = target + Vec3(reach, 0, 0);
  const auto t = geometry::ray_surface_parameter(mb, origin, Vec3(-1, 0, 0), mb.surface_level, 2.0 * reach);
  if (!t) throw Error("hydrodynamic_level: could not locate a reference surface point");
  const Vec3 xs = origin + *t * Vec3(-1, 0, 0);
  const Vec3 outward = -geometry::gradient(mb, xs).normalized();
  return geometry::evaluate(mb, xs + mb.sphero_radius * outward);
}

Lattice::Lattice(const LatticeSpec& spec, const FluidConfig& fluid, const DomainBoundary& boundary)
    : spec_(spec), fluid_(fluid), boundary_(boundary), vs_(&spec.velocity_set()) {
  if (spec.dimension != 2 && spec.dimension != 3) throw Error("lattice: dimension must be 2 or 3");
  if (spec.nx < 1 || spec.ny < 1 || spec.nz < 1) throw Error("lattice: node counts must be >= 1");
  if (spec.dimension == 2 && spec.nz != 1) throw Error("lattice: 2D lattices have nz = 1");
  if (!(spec.dx > 0.0 && spec.dt > 0.0)) throw Error("lattice: dx and dt must be > 0");
  if (!(fluid.density > 0.0 && fluid.viscosity > 0.0))
    throw Error("fluid: density and viscosity must be > 0");
  tau_ = fluid.tau(spec.dx, spec.dt);
  if (!(tau_ > 0.5)) throw Error("fluid: relaxation time must exceed 0.5");
  if (spec_.dimension == 2) boundary_.periodic[2] = true;
  n_ = static_cast<std::size_t>(spec.nx) * spec.ny * spec.nz;
  const double to_lat = spec.dt / spec.dx;
  accel_lattice_ = fluid.body_acceleration * spec.dt * to_lat;
  for (int k = 0; k < 6; ++k) wall_u_lattice_[k] = boundary_.wall_velocity[k] * to_lat;
  f_.assign(static_cast<std::size_t>(vs_->q) * n_, 0.0);
  f_next_ = f_;
  rho_.assign(n_, 1.0);
  u_.assign(n_, Vec3::Zero());
  cls_.assign(n_, NodeClass::Fluid);
  prev_cls_ = cls_;
  owner_.assign(n_, -1);
  prev_owner_ = owner_;
  init_equilibrium(1.0, Vec3::Zero());
}

std::array<int, 3> Lattice::coords(int n) const {
  const int i = n % spec_.nx;
  const int j = (n / spec_.nx) % spec_.ny;
  const int k = n / (spec_.nx * spec_.ny);
  return {i, j, k};
}

Vec3 Lattice::node_position(int n) const {
  const auto c = coords(n);
  return spec_.origin + spec_.dx * Vec3(c[0], c[1], c[2]);
}

double Lattice::equilibrium(int i, double rho, const Vec3& u) const {
  const double eu = vs_->e[i][0] * u.x() + vs_->e[i][1] * u.y() + vs_->e[i][2] * u.z();
  return vs_->w[i] * rho * (1.0 + 3.0 * eu + 4.5 * eu * eu - 1.5 * u.squaredNorm());
}

void Lattice::set_equilibrium(int n, double rho, const Vec3& u) {
  for (int i = 0; i < vs_->q; ++i) f(n, i) = equilibrium(i, rho, u);
  rho_[n] = rho;
  u_[n] = u;
}

void Lattice::init_equilibrium(double rho, const Vec3& u) {
  for (std::size_t n = 0; n < n_; ++n) set_equilibrium(static_cast<int>(n), rho, u);
}

double Lattice::density(int n) const {
  double r = 0.0;
  for (int i = 0; i < vs_->q; ++i) r += f(n, i);
  return r;
}

Vec3 Lattice::momentum(int n) const {
  Vec3 m = Vec3::Zero();
  for (int i = 0; i < vs_->q; ++i) m += f(n, i) * vs_->velocity(i);
  return m;
}

Vec3 Lattice::velocity(int n) const {
  double r = 0.0;
  Vec3 m = Vec3::Zero();
  for (int i = 0; i < vs_->q; ++i) {
    const double fi = f(n, i);
    r += fi;
    m += fi * vs_->velocity(i);
  }
  return (m + 0.5 * r * accel_lattice_) / r;
}

double Lattice::fluid_mass() const {
  double m = 0.0;
  for (std::size_t n = 0; n < n_; ++n)
    if (cls_[n] != NodeClass::Solid) m += density(static_cast<int>(n));
  return m;
}

long Lattice::solid_count() const {
  return static_cast<long>(std::count(cls_.begin(), cls_.end(), NodeClass::Solid));
}

double Lattice::force_scale() const {
  return fluid_.density * std::pow(spec_.dx, 4) / (spec_.dt * spec_.dt);
}

int Lattice::neighbor(int n, int i, int* face) const {
  const int dims[3] = {spec_.nx, spec_.ny, spec_.nz};
  auto c = coords(n);
  for (int a = 0; a < 3; ++a) {
    c[a] += vs_->e[i][a];
    if (c[a] < 0 || c[a] >= dims[a]) {
      if (boundary_.periodic[a]) {
        c[a] = (c[a] + dims[a]) % dims[a];
      } else {
        if (face) *face = 2 * a + (c[a] < 0 ? 0 : 1);
        return -1;
      }
    }
  }
  return index(c[0], c[1], c[2]);
}

void Lattice::classify(const std::vector<dem::ParticleState>& particles, const std::vector<double>& c0) {
  if (c0.size() != particles.size()) throw Error("classify: one hydrodynamic level per particle required");
  prev_cls_ = cls_;
  prev_owner_ = owner_;
  std::fill(cls_.begin(), cls_.end(), NodeClass::Fluid);
  std::fill(owner_.begin(), owner_.end(), -1);
  links_.clear();
  fresh_.clear();

  const int dims[3] = {spec_.nx, spec_.ny, spec_.nz};
  const Vec3 lo_dom = spec_.origin - 0.5 * spec_.dx * Vec3::Ones();
  const Vec3 period = spec_.dx * Vec3(dims[0], dims[1], dims[2]);

  // Periodic images of every particle whose box reaches into the domain.
  struct Image {
    int p;
    Vec3 shift;
    std::array<int, 6> range;
  };
  std::vector<Image> images;
  for (std::size_t p = 0; p < particles.size(); ++p) {
    const Aabb box = particles[p].world_box();
    std::vector<Vec3> shifts{Vec3::Zero()};
    for (int a = 0; a < 3; ++a) {
      if (!boundary_.periodic[a] || (spec_.dimension == 2 && a == 2)) continue;
      const std::size_t m = shifts.size();
      for (std::size_t s = 0; s < m; ++s)
        for (int sign : {-1, 1}) {
          Vec3 sh = shifts[s];
          sh[a] += sign * period[a];
          shifts.push_back(sh);
        }
    }
    for (const auto& sh : shifts) {
      Image im{static_cast<int>(p), sh, {}};
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        const double lo = box.lo[a] + sh[a], hi = box.hi[a] + sh[a];
        im.range[2 * a] = std::max(0, static_cast<int>(std::floor((lo - spec_.origin[a]) / spec_.dx)) - 1);
        im.range[2 * a + 1] = std::min(dims[a] - 1, static_cast<int>(std::ceil((hi - spec_.origin[a]) / spec_.dx)) + 1);
        if (hi < lo_dom[a] - spec_.dx || lo > lo_dom[a] + period[a] + spec_.dx) inside = false;
        if (im.range[2 * a] > im.range[2 * a + 1]) inside = false;
      }
      if (inside) images.push_back(im);
    }
  }

  for (const auto& im : images) {
    const auto& part = particles[im.p];
    const auto& r = im.range;
    for (int k = r[4]; k <= r[5]; ++k)
      for (int j = r[2]; j <= r[3]; ++j)
        for (int i = r[0]; i <= r[1]; ++i) {
          const int n = index(i, j, k);
          if (cls_[n] == NodeClass::Solid) continue;
          const Vec3 x = node_position(n) - im.shift;
          if (geometry::evaluate_unchecked(part.shape, part.to_body(x)) >= c0[im.p]) {
            cls_[n] = NodeClass::Solid;
            owner_[n] = im.p;
          }
        }
  }

  const double to_lat = spec_.dt / spec_.dx;
  for (const auto& im : images) {
    const auto& part = particles[im.p];
    const auto& r = im.range;
    for (int k = r[4]; k <= r[5]; ++k)
      for (int j = r[2]; j <= r[3]; ++j)
        for (int i = r[0]; i <= r[1]; ++i) {
          const int n = index(i, j, k);
          if (cls_[n] == NodeClass::Solid) continue;
          const Vec3 x = node_position(n) - im.shift;
          for (int d = 1; d < vs_->q; ++d) {
            const int nb = neighbor(n, d);
            if (nb < 0 || cls_[nb] != NodeClass::Solid || owner_[nb] != im.p) continue;
            const Vec3 step = spec_.dx * vs_->velocity(d);
            // Only the image that owns the neighbour across this link.
            const Vec3 xn = x + step;
            if (geometry::evaluate_unchecked(part.shape, part.to_body(xn)) < c0[im.p]) continue;
            const Vec3 ob = part.to_body(x);
            const Vec3 db = part.orientation.conjugate() * step;
            const auto t = geometry::ray_surface_parameter(part.shape, ob, db, c0[im.p], 1.0);
            BoundaryLink link;
            link.node = n;
            link.dir = d;
            link.q = t ? std::clamp(*t, 1e-12, 1.0) : 1.0;
            link.wall_point = x + link.q * step;  // in the particle's own frame of images
            link.wall_velocity = part.velocity_at(link.wall_point) * to_lat;
            link.owner = im.p;
            links_.push_back(link);
            cls_[n] = NodeClass::Boundary;
          }
        }
  }
  // Bodies wider than the period produce the same link from several images.
  std::stable_sort(links_.begin(), links_.end(), [](const BoundaryLink& a, const BoundaryLink& b) {
    return a.node != b.node ? a.node < b.node : a.dir < b.dir;
  });
  links_.erase(std::unique(links_.begin(), links_.end(),
                           [](const BoundaryLink& a, const BoundaryLink& b) {
                             return a.node == b.node && a.dir == b.dir;
                           }),
               links_.end());
  for (std::size_t n = 0; n < n_; ++n) {
    if (prev_cls_[n] == NodeClass::Solid && cls_[n] != NodeClass::Solid) fresh_.push_back(static_cast<int>(n));
    if (prev_cls_[n] != NodeClass::Solid && cls_[n] == NodeClass::Solid) {
      ++diag_.covered_nodes;
      diag_.covered_mass += density(static_cast<int>(n));
      diag_.covered_momentum += momentum(static_cast<int>(n));
    }
  }
}

void Lattice::refill(const std::vector<dem::ParticleState>& particles) {
  const double to_lat = spec_.dt / spec_.dx;
  const double rho0 = 1.0;
  std::vector<double> g(static_cast<std::size_t>(vs_->q));
  for (int n : fresh_) {
    const int p = prev_owner_[n];
    const Vec3 x = node_position(n);
    Vec3 uw = Vec3::Zero();
    if (p >= 0 && p < static_cast<int>(particles.size())) uw = particles[p].velocity_at(x) * to_lat;
    std::vector<bool> has(static_cast<std::size_t>(vs_->q), false);
    for (int i = 1; i < vs_->q; ++i) {
      const int src = neighbor(n, vs_->opposite[i]);
      has[i] = src >= 0 && prev_cls_[src] != NodeClass::Solid;
    }
    for (int i = 0; i < vs_->q; ++i) {
      const int o = vs_->opposite[i];
      if (has[i])
        g[i] = f(n, i);
      else if (has[o])
        g[i] = f(n, o) + 6.0 * vs_->w[i] * rho0 * vs_->velocity(i).dot(uw);
      else
        g[i] = equilibrium(i, rho0, uw);
    }
    double r = 0.0;
    for (int i = 0; i < vs_->q; ++i) {
      f(n, i) = g[i];
      r += g[i];
    }
    if (!(r > 0.0) || !std::isfinite(r)) {
      const auto c = coords(n);
      std::ostringstream os;
      os << "refill: non-positive density " << r << " at node (" << c[0] << ", " << c[1] << ", " << c[2] << ")";
      throw Error(os.str());
    }
    ++diag_.refilled_nodes;
    diag_.refill_mass += r;
    diag_.refill_momentum += momentum(n);
  }
  fresh_.clear();
}

namespace {

struct D2Q9 {
  static constexpr int Q = 9;
  static constexpr int ex[Q] = {0, 1, -1, 0, 0, 1, -1, 1, -1};
  static constexpr int ey[Q] = {0, 0, 0, 1, -1, 1, -1, -1, 1};
  static constexpr int ez[Q] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  static constexpr double w[Q] = {4.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9,
                                  1.0 / 36, 1.0 / 36, 1.0 / 36, 1.0 / 36};
};

struct D3Q15 {
  static constexpr int Q = 15;
  static constexpr int ex[Q] = {0, 1, -1, 0, 0, 0, 0, 1, -1, 1, -1, 1, -1, -1, 1};
  static constexpr int ey[Q] = {0, 0, 0, 1, -1, 0, 0, 1, -1, 1, -1, -1, 1, 1, -1};
  static constexpr int ez[Q] = {0, 0, 0, 0, 0, 1, -1, 1, -1, -1, 1, 1, -1, 1, -1};
  static constexpr double w[Q] = {2.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9,
                                  1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72, 1.0 / 72};
};

}  // namespace

template <class VS, bool Forced>
void Lattice::collide_stream_kernel() {
  constexpr int Q = VS::Q;
  const int nx = spec_.nx, ny = spec_.ny, nz = spec_.nz;
  const double omega = 1.0 / tau_;
  const double force_pref = 1.0 - 0.5 * omega;
  const double ax = accel_lattice_.x(), ay = accel_lattice_.y(), az = accel_lattice_.z();
  long offset[Q];
  for (int d = 0; d < Q; ++d) offset[d] = VS::ex[d] + static_cast<long>(nx) * (VS::ey[d] + static_cast<long>(ny) * VS::ez[d]);
  const std::size_t N = n_;
  const double* src = f_.data();
  double* dst = f_next_.data();
  const NodeClass* cls = cls_.data();
  const bool flat = spec_.dimension == 2;
  const int dims[3] = {nx, ny, nz};
  const std::array<bool, 3> periodic = boundary_.periodic;

#pragma omp parallel
  {
    std::vector<double> buf(static_cast<std::size_t>(Q) * nx + 1);
    double* post = buf.data();
    std::vector<double> rho_row(nx);

#pragma omp for collapse(2) schedule(static)
    for (int k = 0; k < nz; ++k) {
      for (int j = 0; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(nx) * (j + static_cast<std::size_t>(ny) * k);
        bool any_solid = false;
        for (int i = 0; i < nx; ++i) any_solid |= cls[row + i] == NodeClass::Solid;

        // Collision for the whole row; solid nodes are computed and discarded.
#pragma omp simd
        for (int i = 0; i < nx; ++i) {
          const std::size_t n = row + i;
          double fl[Q];
          double r = 0.0, mx = 0.0, my = 0.0, mz = 0.0;
#pragma GCC unroll 16
          for (int d = 0; d < Q; ++d) {
            const double v = src[d * N + n];
            fl[d] = v;
            r += v;
            mx += v * VS::ex[d];
            my += v * VS::ey[d];
            mz += v * VS::ez[d];
          }
          const double inv = 1.0 / r;
          double ux = mx * inv, uy = my * inv, uz = mz * inv;
          if constexpr (Forced) {
            ux += 0.5 * ax;
            uy += 0.5 * ay;
            uz += 0.5 * az;
          }
          rho_row[i] = r;
          const double usq = 1.5 * (ux * ux + uy * uy + uz * uz);
#pragma GCC unroll 16
          for (int d = 0; d < Q; ++d) {
            const double eu = VS::ex[d] * ux + VS::ey[d] * uy + VS::ez[d] * uz;
            const double feq = VS::w[d] * r * (1.0 + 3.0 * eu + 4.5 * eu * eu - usq);
            double v = fl[d] - omega * (fl[d] - feq);
            if constexpr (Forced) {
              const double ea = VS::ex[d] * ax + VS::ey[d] * ay + VS::ez[d] * az;
              const double ua = ux * ax + uy * ay + uz * az;
              v += force_pref * VS::w[d] * r * (3.0 * (ea - ua) + 9.0 * eu * ea);
            }
            post[d * nx + i] = v;
          }
        }

        const bool inner_jk = (flat || (k > 0 && k < nz - 1)) && j > 0 && j < ny - 1;
        auto push_general = [&](int i) {
          const std::size_t n = row + i;
          for (int d = 0; d < Q; ++d) {
            int face = -1;
            int c[3] = {i + VS::ex[d], j + VS::ey[d], k + VS::ez[d]};
            for (int a = 0; a < 3 && face < 0; ++a) {
              if (c[a] >= 0 && c[a] < dims[a]) continue;
              if (periodic[a])
                c[a] = (c[a] + dims[a]) % dims[a];
              else
                face = 2 * a + (c[a] < 0 ? 0 : 1);
            }
            const double v = post[d * nx + i];
            if (face < 0) {
              dst[d * N + c[0] + static_cast<std::size_t>(nx) * (c[1] + static_cast<std::size_t>(ny) * c[2])] = v;
            } else {
              const int o = vs_->opposite[d];
              const Vec3& uw = wall_u_lattice_[face];
              dst[o * N + n] = v - 6.0 * VS::w[d] * rho_row[i] *
                                       (VS::ex[d] * uw.x() + VS::ey[d] * uw.y() + VS::ez[d] * uw.z());
            }
          }
        };

        if (inner_jk && !any_solid && nx > 2) {
          for (int d = 0; d < Q; ++d) {
            double* out = dst + d * N + row + offset[d];
            const double* in = post + d * nx;
            for (int i = 1; i < nx - 1; ++i) out[i] = in[i];
          }
          push_general(0);
          push_general(nx - 1);
          continue;
        }
        for (int i = 0; i < nx; ++i) {
          if (cls[row + i] == NodeClass::Solid) continue;
          if (inner_jk && i > 0 && i < nx - 1) {
            const std::size_t n = row + i;
            for (int d = 0; d < Q; ++d) dst[d * N + n + offset[d]] = post[d * nx + i];
          } else {
            push_general(i);
          }
        }
      }
    }
  }
  f_.swap(f_next_);
}

void Lattice::store_link_macros() {
  auto store = [&](int n) {
    rho_[n] = density(n);
    u_[n] = velocity(n);
  };
  for (const auto& L : links_) {
    store(L.node);
    const int xff = neighbor(L.node, vs_->opposite[L.dir]);
    if (xff >= 0 && cls_[xff] != NodeClass::Solid) store(xff);
  }
}

void Lattice::collide_stream() {
  store_link_macros();
  const bool forced = accel_lattice_.squaredNorm() > 0.0;
  if (spec_.dimension == 2) {
    forced ? collide_stream_kernel<D2Q9, true>() : collide_stream_kernel<D2Q9, false>();
  } else {
    forced ? collide_stream_kernel<D3Q15, true>() : collide_stream_kernel<D3Q15, false>();
  }
}

void Lattice::apply_ibb() {
  diag_.fallback_links = 0;
  const std::size_t N = n_;
  for (const auto& L : links_) {
    const int j = L.dir;
    const int o = vs_->opposite[j];
    const int xs = neighbor(L.node, j);
    const double gplus = f_[static_cast<std::size_t>(j) * N + xs];  // pushed into the solid slot
    const double rho = rho_[L.node];
    const Vec3& uw = L.wall_velocity;
    const double wall_term = 6.0 * vs_->w[j] * rho * vs_->velocity(j).dot(uw);
    const int xff = neighbor(L.node, o);
    double out;
    if (xff < 0 || cls_[xff] == NodeClass::Solid) {
      ++diag_.fallback_links;
      out = gplus - wall_term;
    } else {
      const double q = L.q;
      const Vec3& uf = u_[L.node];
      const Vec3& uff = u_[xff];
      const Vec3 u1 = q <= 0.5 ? Vec3(2.0 * q * uf + (1.0 - 2.0 * q) * uff)
                               : Vec3((1.0 - q) / q * uf + (2.0 * q - 1.0) / q * uw);
      const Vec3 u2 = (1.0 - q) / (1.0 + q) * uff + 2.0 * q / (1.0 + q) * uw;
      const Vec3 ud = u1 / 3.0 + 2.0 * u2 / 3.0;
      const double neq = gplus - equilibrium(j, rho, uf);
      out = equilibrium(j, rho, ud) + neq - wall_term;
    }
    f_[static_cast<std::size_t>(o) * N + L.node] = out;
  }
}

std::vector<dem::Wrench> Lattice::momentum_exchange(const std::vector<dem::ParticleState>& particles) const {
  std::vector<dem::Wrench> out(particles.size());
  const std::size_t N = n_;
  const double scale = force_scale();
  for (const auto& L : links_) {
    if (L.owner < 0 || L.owner >= static_cast<int>(particles.size())) continue;
    const int j = L.dir;
    const int o = vs_->opposite[j];
    const int xs = neighbor(L.node, j);
    const double gplus = f_[static_cast<std::size_t>(j) * N + xs];
    const double gback = f_[static_cast<std::size_t>(o) * N + L.node];
    const Vec3 e = vs_->velocity(j);
    const Vec3 dp = ((e - L.wall_velocity) * gplus + (e + L.wall_velocity) * gback) * scale;
    out[L.owner].force += dp;
    out[L.owner].torque += (L.wall_point - particles[L.owner].position).cross(dp);
  }
  return out;
}

std::vector<dem::Wrench> Lattice::step(const std::vector<dem::ParticleState>& particles,
                                       const std::vector<double>& c0) {
  classify(particles, c0);
  refill(particles);
  collide_stream();
  apply_ibb();
  return momentum_exchange(particles);
}

void Lattice::check_health() const {
  for (std::size_t n = 0; n < n_; ++n) {
    if (cls_[n] == NodeClass::Solid) continue;
    const double r = density(static_cast<int>(n));
    bool finite = std::isfinite(r);
    for (int i = 0; i < vs_->q && finite; ++i) finite = std::isfinite(f(static_cast<int>(n), i));
    if (!(r > 0.0) || !finite) {
      const auto c = coords(static_cast<int>(n));
      std::ostringstream os;
      os << "lattice: invalid state at node (" << c[0] << ", " << c[1] << ", " << c[2] << "), rho = " << r;
      throw Error(os.str());
    }
  }
}

}  // namespace midelbm::lbm
