#include <algorithm>
#include <array>
#include <cmath>

#include "midelbm/dem.hpp"

namespace midelbm::dem {

namespace {

constexpr int kMaxHalvings = 40;
constexpr double kStallAccept = 1e-7;

// Surface point along the +grad direction from x (f(x) < level). Newton on f^(-1/2), which is
// linear in distance for a single ball, with bisection once the surface is bracketed.
Vec3 project_to_surface(const ParticleState& p, const Vec3& x) {
  const Vec3 g0 = p.gradient(x);
  const double gn = g0.norm();
  if (!(gn > 0.0)) throw DeepPenetration("surface projection: zero gradient");
  const Vec3 dir_world = g0 / gn;
  const Vec3 origin = p.to_body(x);
  const Vec3 dir = p.orientation.conjugate() * dir_world;
  const double level = p.shape.surface_level;
  const double target = 1.0 / std::sqrt(level);

  double lo = 0.0, hi = kInf, t = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Vec3 q = origin + t * dir;
    const double f = geometry::evaluate_unchecked(p.shape, q);
    if (!std::isfinite(f)) {
      hi = t;
    } else {
      if (std::abs(f - level) <= 1e-15 * level) return x + t * dir_world;
      (f < level ? lo : hi) = t;
    }
    double next = kInf;
    if (std::isfinite(f) && f > 0.0) {
      const double slope = geometry::gradient(p.shape, q).dot(dir);
      if (slope > 0.0) {
        const double psi = 1.0 / std::sqrt(f) - target;
        const double dpsi = -0.5 * slope / (f * std::sqrt(f));
        next = t - psi / dpsi;
      }
    }
    if (!(next > lo && next < hi)) {
      if (!std::isfinite(hi)) break;
      next = 0.5 * (lo + hi);
    }
    if (std::isfinite(hi) && hi - lo <= 1e-15 * hi) return x + 0.5 * (lo + hi) * dir_world;
    t = next;
  }
  if (std::isfinite(hi)) return x + 0.5 * (lo + hi) * dir_world;
  const Aabb box = geometry::bounding_box(p.shape);
  const double reach = origin.norm() + box.extent().norm();
  const auto tr = geometry::ray_surface_parameter(p.shape, origin, dir, level, reach);
  if (tr) return x + *tr * dir_world;
  throw DeepPenetration("surface projection: ray from the contact region misses the particle");
}

double reference_length(const ParticleState& a, const ParticleState& b) {
  return 0.5 * (a.shape.scale() + b.shape.scale());
}

// Fallback when the minimum of f_a + f_b sits inside one body (dissimilar sizes, thin gap):
// the point where the level sets f_a/l_a = f_b/l_b = c touch with opposite normals.
std::optional<Vec3> equal_level_point(const ParticleState& a, const ParticleState& b,
                                      const NarrowOptions& opts) {
  const double la = a.shape.surface_level;
  const double lb = b.shape.surface_level;
  const double L = reference_length(a, b);
  auto fa = [&](const Vec3& x) { return geometry::evaluate_unchecked(a.shape, a.to_body(x)) / la; };
  auto fb = [&](const Vec3& x) { return geometry::evaluate_unchecked(b.shape, b.to_body(x)) / lb; };

  // Seed: sign change of f_a - f_b along the centroid line with the smallest level.
  const Vec3 ca = a.position, cb = b.position;
  constexpr int kSamples = 64;
  double best = kInf;
  std::optional<Vec3> x0;
  double t_prev = 0.0, h_prev = fa(ca) - fb(ca);
  for (int s = 1; s <= kSamples; ++s) {
    const double t = static_cast<double>(s) / kSamples;
    const double h = fa(ca + t * (cb - ca)) - fb(ca + t * (cb - ca));
    if (std::isfinite(h_prev) && std::isfinite(h) && h_prev > 0.0 && h <= 0.0) {
      double lo = t_prev, hi = t;
      for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (lo + hi);
        (fa(ca + mid * (cb - ca)) - fb(ca + mid * (cb - ca)) > 0.0 ? lo : hi) = mid;
      }
      const Vec3 x = ca + 0.5 * (lo + hi) * (cb - ca);
      if (fa(x) < best) {
        best = fa(x);
        x0 = x;
      }
    }
    t_prev = t;
    h_prev = h;
  }
  if (!x0) return std::nullopt;

  Vec3 x = *x0;
  auto grads = [&](const Vec3& p, Vec3& ga, Vec3& gb) {
    ga = a.gradient(p) / la;
    gb = b.gradient(p) / lb;
  };
  Vec3 ga, gb;
  grads(x, ga, gb);
  double lambda = ga.norm() / gb.norm();
  auto measure = [&](const Vec3& p, double lam, const Vec3& pa, const Vec3& pb) {
    return (pa + lam * pb).norm() * L + std::abs(fa(p) - fb(p));
  };
  double m = measure(x, lambda, ga, gb);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double c = fa(x);
    if ((ga + lambda * gb).norm() * L < opts.gradient_tol && std::abs(c - fb(x)) < opts.gradient_tol * c) {
      if (!(lambda > 0.0)) return std::nullopt;
      if (c >= 1.0) throw DeepPenetration("closest_points_pair: internal Metaballs overlap");
      return x;
    }
    Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
    J.topLeftCorner<3, 3>() = a.hessian(x) / la + lambda * b.hessian(x) / lb;
    J.block<3, 1>(0, 3) = gb;
    J.block<1, 3>(3, 0) = (ga - gb).transpose();
    Eigen::Vector4d r;
    r.head<3>() = ga + lambda * gb;
    r(3) = c - fb(x);
    Eigen::Vector4d step = J.fullPivLu().solve(-r);
    if (!step.allFinite()) return std::nullopt;
    bool moved = false;
    for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
      const Vec3 xt = x + step.head<3>();
      const double lt = lambda + step(3);
      if (!std::isfinite(fa(xt)) || !std::isfinite(fb(xt))) continue;
      Vec3 gat, gbt;
      grads(xt, gat, gbt);
      const double mt = measure(xt, lt, gat, gbt);
      if (mt < m) {
        x = xt;
        lambda = lt;
        ga = gat;
        gb = gbt;
        m = mt;
        moved = true;
        break;
      }
    }
    if (!moved) {
      if ((ga + lambda * gb).norm() * L < kStallAccept && lambda > 0.0) {
        if (fa(x) >= 1.0) throw DeepPenetration("closest_points_pair: internal Metaballs overlap");
        return x;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<ClosestPoints> closest_points_pair(const ParticleState& a, const ParticleState& b,
                                                 const std::optional<Vec3>& seed,
                                                 const NarrowOptions& opts) {
  if (!a.world_box().overlaps(b.world_box())) return std::nullopt;
  const double la = a.shape.surface_level;
  const double lb = b.shape.surface_level;
  const double L = reference_length(a, b);

  auto finish = [&](const Vec3& x, int it) {
    ClosestPoints out;
    out.iterations = it;
    out.x_m = x;
    out.x_c0 = project_to_surface(a, x);
    out.x_c1 = project_to_surface(b, x);
    return out;
  };
  auto admissible = [&](const Vec3& x, double* fsum) {
    if (!x.allFinite()) return false;
    const double fa = geometry::evaluate_unchecked(a.shape, a.to_body(x));
    const double fb = geometry::evaluate_unchecked(b.shape, b.to_body(x));
    if (!(fa < la && fb < lb)) return false;
    if (fsum) *fsum = fa + fb;
    return fa + fb > opts.c_tol;
  };

  Vec3 x;
  bool found = false;
  if (seed && admissible(*seed, nullptr)) {
    x = *seed;
    found = true;
  } else {
    double best = kInf;
    for (int s = 1; s < 32; ++s) {
      const double t = (s % 2 ? 0.5 + 0.5 * (s / 2) / 16.0 : 0.5 - 0.5 * (s / 2) / 16.0);
      const Vec3 c = a.position + t * (b.position - a.position);
      double fs;
      if (admissible(c, &fs) && fs < best) {
        best = fs;
        x = c;
        found = true;
      }
    }
  }

  // Newton on grad(f_a + f_b) = 0 inside the admissible region.
  if (found) {
    Vec3 g = a.gradient(x) + b.gradient(x);
    for (int it = 0; it < opts.max_iterations; ++it) {
      const double gnorm = g.norm();
      if (gnorm * L < opts.gradient_tol) return finish(x, it);
      const Mat3 H = a.hessian(x) + b.hessian(x);
      Vec3 step = H.fullPivLu().solve(-g);
      if (!step.allFinite()) step = -g * (L * L);
      bool moved = false;
      for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
        const Vec3 trial = x + step;
        if (!admissible(trial, nullptr)) continue;
        const Vec3 gt = a.gradient(trial) + b.gradient(trial);
        if (gt.norm() < gnorm) {
          x = trial;
          g = gt;
          moved = true;
          break;
        }
      }
      if (!moved) {
        if (gnorm * L < kStallAccept) return finish(x, it);
        break;
      }
    }
  }

  const auto xe = equal_level_point(a, b, opts);
  if (!xe) return std::nullopt;
  return finish(*xe, opts.max_iterations);
}

std::optional<ContactInfo> contact_pair(const ParticleState& a, const ParticleState& b,
                                        const ClosestPoints& cp) {
  const Vec3 d = cp.x_c0 - cp.x_c1;
  const double dist = d.norm();
  if (dist < 1e-12 * reference_length(a, b))
    throw DeepPenetration("contact_pair: internal Metaballs touch (zero gap between closest points)");
  const double delta = a.sphero_radius() + b.sphero_radius() - dist;
  if (!(delta > 0.0)) return std::nullopt;
  ContactInfo info;
  info.normal = d / dist;
  info.overlap = delta;
  info.point = cp.x_c0 - (a.sphero_radius() - 0.5 * delta) * info.normal;
  return info;
}

std::optional<ContactInfo> contact_wall(const ParticleState& a, const WallPlane& w,
                                        const NarrowOptions& opts) {
  const Vec3 n = w.outward_normal;
  const Aabb box = a.world_box();
  double min_sd = kInf;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner((c & 1) ? box.hi.x() : box.lo.x(), (c & 2) ? box.hi.y() : box.lo.y(),
                      (c & 4) ? box.hi.z() : box.lo.z());
    min_sd = std::min(min_sd, w.signed_distance(corner));
  }
  if (min_sd > 0.0) return std::nullopt;

  // Tangent basis of the wall.
  const Vec3 t1 = n.unitOrthogonal();
  const Vec3 t2 = n.cross(t1);
  Eigen::Matrix<double, 2, 3> T;
  T.row(0) = t1.transpose();
  T.row(1) = t2.transpose();

  Vec3 x = a.position - w.signed_distance(a.position) * n;
  const double level = a.shape.surface_level;
  auto value = [&](const Vec3& p) { return geometry::evaluate_unchecked(a.shape, a.to_body(p)); };
  if (!(value(x) < level))
    throw DeepPenetration("contact_wall: internal Metaball crosses the wall");

  auto tangential = [&](const Vec3& gr) -> Eigen::Vector2d { return T * gr; };
  Vec3 grad = a.gradient(x);
  Eigen::Vector2d gt = tangential(grad);
  bool converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    if (gt.norm() <= opts.gradient_tol * grad.norm()) {
      converged = true;
      break;
    }
    const Eigen::Matrix2d J = T * a.hessian(x) * T.transpose();
    Eigen::Vector2d s = J.fullPivLu().solve(-gt);
    if (!s.allFinite()) s = -gt / grad.squaredNorm();
    bool moved = false;
    for (int h = 0; h < kMaxHalvings; ++h, s *= 0.5) {
      const Vec3 trial = x + T.transpose() * s;
      const double f = value(trial);
      if (!(f < level)) continue;
      const Vec3 gtrial = a.gradient(trial);
      const Eigen::Vector2d ttrial = tangential(gtrial);
      if (ttrial.norm() / gtrial.norm() < gt.norm() / grad.norm()) {
        x = trial;
        grad = gtrial;
        gt = ttrial;
        moved = true;
        break;
      }
    }
    if (!moved) {
      converged = gt.norm() <= kStallAccept * grad.norm();
      break;
    }
  }
  if (!converged || !(grad.dot(n) > 0.0)) return std::nullopt;

  const Vec3 x_cm = project_to_surface(a, x);
  const double delta = a.sphero_radius() - w.signed_distance(x_cm);
  if (!(delta > 0.0)) return std::nullopt;
  ContactInfo info;
  info.normal = n;
  info.overlap = delta;
  info.point = x + 0.5 * delta * n;
  return info;
}

ContactForce contact_force(const ContactInfo& info, const ParticleState& a,
                           const ParticleState* b, const ContactParams& p, double dt) {
  ContactForce out;
  if (!(info.overlap > 0.0)) return out;
  const Vec3& n = info.normal;
  const Vec3 u = a.velocity_at(info.point) - (b ? b->velocity_at(info.point) : Vec3::Zero());
  const double un = u.dot(n);
  const Vec3 ut = u - un * n;

  const double fn = std::max(0.0, p.kn * info.overlap - p.eta_n * un);

  Vec3 xi = info.tangential_spring - info.tangential_spring.dot(n) * n;
  const double xi_old = info.tangential_spring.norm();
  const double xi_proj = xi.norm();
  if (xi_proj > 0.0) xi *= xi_old / xi_proj;
  xi += ut * dt;

  Vec3 ft = -p.kt * xi - p.eta_t * ut;
  const double ft_norm = ft.norm();
  const double cap = p.mu_s * fn;
  if (ft_norm > cap) {
    out.sliding = true;
    ft = ft_norm > 0.0 ? Vec3(ft * (cap / ft_norm)) : Vec3::Zero();
    xi = -(ft + p.eta_t * ut) / p.kt;
  }
  out.normal_magnitude = fn;
  out.force = fn * n + ft;
  out.tangential_spring = xi;
  return out;
}

}  // namespace midelbm::dem
