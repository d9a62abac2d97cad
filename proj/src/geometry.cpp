#include "midelbm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace midelbm::geometry {

namespace {

constexpr double kSingularRel = 1e-12;
constexpr int kRayScanSamples = 64;

double singular_radius2(const Metaball& mb) {
  const double r = kSingularRel * mb.scale();
  return r * r;
}

[[noreturn]] void throw_singular(const Vec3& x) {
  std::ostringstream os;
  os << "metaball evaluated at a control point (" << x.transpose() << ")";
  throw SingularEvaluation(os.str());
}

}  // namespace

double Metaball::scale() const {
  double s = 0.0;
  for (const auto& cp : control_points) s = std::max(s, std::sqrt(std::max(cp.weight, 0.0)));
  return s > 0.0 ? s : 1.0;
}

void Metaball::validate() const {
  if (control_points.empty()) throw Error("metaball has no control points");
  for (const auto& cp : control_points) {
    if (!(cp.weight >= 0.0) || !cp.position.allFinite())
      throw Error("metaball control point has a negative or non-finite parameter");
  }
  if (!(sphero_radius >= 0.0)) throw Error("metaball sphero radius must be >= 0");
}

Metaball Metaball::translated(const Vec3& shift) const {
  Metaball out = *this;
  for (auto& cp : out.control_points) cp.position += shift;
  return out;
}

Metaball Metaball::transformed(const Mat3& rotation, const Vec3& shift) const {
  Metaball out = *this;
  for (auto& cp : out.control_points) cp.position = rotation * cp.position + shift;
  return out;
}

double evaluate(const Metaball& mb, const Vec3& x) {
  const double guard = singular_radius2(mb);
  double f = 0.0;
  for (const auto& cp : mb.control_points) {
    const double r2 = (x - cp.position).squaredNorm();
    if (r2 <= guard) throw_singular(x);
    f += cp.weight / r2;
  }
  return f;
}

double evaluate_unchecked(const Metaball& mb, const Vec3& x) noexcept {
  double f = 0.0;
  for (const auto& cp : mb.control_points) {
    const double r2 = (x - cp.position).squaredNorm();
    if (r2 == 0.0) return cp.weight != 0.0 ? kInf : f;
    f += cp.weight / r2;
  }
  return f;
}

ValueGrad evaluate_with_gradient(const Metaball& mb, const Vec3& x) {
  const double guard = singular_radius2(mb);
  ValueGrad out{0.0, Vec3::Zero()};
  for (const auto& cp : mb.control_points) {
    const Vec3 d = x - cp.position;
    const double r2 = d.squaredNorm();
    if (r2 <= guard) throw_singular(x);
    const double inv = 1.0 / r2;
    out.value += cp.weight * inv;
    out.grad -= (2.0 * cp.weight * inv * inv) * d;
  }
  return out;
}

Vec3 gradient(const Metaball& mb, const Vec3& x) { return evaluate_with_gradient(mb, x).grad; }

Mat3 hessian(const Metaball& mb, const Vec3& x) {
  const double guard = singular_radius2(mb);
  Mat3 h = Mat3::Zero();
  for (const auto& cp : mb.control_points) {
    const Vec3 d = x - cp.position;
    const double r2 = d.squaredNorm();
    if (r2 <= guard) throw_singular(x);
    const double inv = 1.0 / r2;
    const double inv2 = inv * inv;
    // d/dx (-2k d / r^4) = -2k I / r^4 + 8k d d^T / r^6
    h.diagonal().array() -= 2.0 * cp.weight * inv2;
    h.noalias() += (8.0 * cp.weight * inv2 * inv) * (d * d.transpose());
  }
  return h;
}

std::optional<double> ray_surface_parameter(const Metaball& mb, const Vec3& origin,
                                            const Vec3& direction, double level,
                                            double max_t) {
  if (!(max_t > 0.0)) throw Error("ray_surface_parameter: max_t must be positive");
  auto g = [&](double t) { return evaluate_unchecked(mb, origin + t * direction) - level; };

  double lo = 0.0;
  double g_lo = g(0.0);
  if (!(g_lo < 0.0)) throw Error("ray_surface_parameter: ray origin is not outside the level set");

  double hi = -1.0;
  for (int s = 1; s <= kRayScanSamples; ++s) {
    const double t = max_t * static_cast<double>(s) / kRayScanSamples;
    const double gt = g(t);
    if (gt >= 0.0) {
      hi = t;
      break;
    }
    lo = t;
    g_lo = gt;
  }
  if (hi < 0.0) return std::nullopt;

  const double tol = 1e-12 * max_t;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }

  // Newton polish inside the final bracket; bisection alone leaves |f - level| ~ |f'| * tol.
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {
    const Vec3 p = origin + t * direction;
    double value = 0.0;
    double slope = 0.0;
    for (const auto& cp : mb.control_points) {
      const Vec3 d = p - cp.position;
      const double r2 = d.squaredNorm();
      if (r2 == 0.0) return hi;
      value += cp.weight / r2;
      slope -= 2.0 * cp.weight * d.dot(direction) / (r2 * r2);
    }
    const double res = value - level;
    if (res == 0.0 || slope == 0.0) break;
    const double next = t - res / slope;
    if (!(next >= lo - tol && next <= hi + tol)) break;
    if (std::abs(next - t) == 0.0) break;
    t = next;
  }
  return t;
}

Aabb bounding_box(const Metaball& mb, double margin) {
  if (margin < 0.0) throw Error("bounding_box: margin must be >= 0");
  std::size_t active = 0;
  for (const auto& cp : mb.control_points)
    if (cp.weight > 0.0) ++active;
  Aabb box;
  // f >= 1 needs at least one term >= 1/n, i.e. |x - x_i| <= sqrt(n k_i).
  for (const auto& cp : mb.control_points) {
    if (cp.weight <= 0.0) continue;
    const double r = std::sqrt(static_cast<double>(active) * cp.weight);
    box.merge({cp.position.array() - r, cp.position.array() + r});
  }
  if (box.empty()) return box;
  return box.inflated(mb.sphero_radius + margin);
}

Metaball sphero_dilated(const Metaball& mb, double radius) {
  Metaball out = mb;
  for (auto& cp : out.control_points) {
    if (cp.weight <= 0.0) continue;
    const double r = std::sqrt(cp.weight) + radius;
    cp.weight = r * r;
  }
  return out;
}

MassProperties mass_properties(const Metaball& mb, double density, const MassOptions& opts) {
  mb.validate();
  if (opts.resolution < 32) throw Error("mass_properties: resolution must be >= 32");
  const Metaball shape = opts.sphero_dilation ? sphero_dilated(mb, mb.sphero_radius) : mb;
  Metaball core = shape;
  core.sphero_radius = 0.0;
  const Aabb box = bounding_box(core);
  if (box.empty()) throw Error("mass_properties: empty level set");

  const int n = opts.resolution;
  const Vec3 h = box.extent() / n;
  const double cell = h.prod();
  const double level = shape.surface_level;

  // First pass: volume and first moment; second pass: inertia about the centroid.
  std::vector<unsigned char> inside(static_cast<std::size_t>(n) * n * n);
  double count = 0.0;
  Vec3 first = Vec3::Zero();
  std::size_t idx = 0;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i, ++idx) {
        const Vec3 p = box.lo + Vec3(i + 0.5, j + 0.5, k + 0.5).cwiseProduct(h);
        const bool in = evaluate_unchecked(shape, p) >= level;
        inside[idx] = in;
        if (in) {
          count += 1.0;
          first += p;
        }
      }
    }
  }
  if (count == 0.0) throw Error("mass_properties: empty level set");

  MassProperties out;
  out.volume = count * cell;
  out.mass = density * out.volume;
  out.centroid = first / count;

  Mat3 second = Mat3::Zero();
  idx = 0;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i, ++idx) {
        if (!inside[idx]) continue;
        const Vec3 r = box.lo + Vec3(i + 0.5, j + 0.5, k + 0.5).cwiseProduct(h) - out.centroid;
        second.noalias() += r * r.transpose();
      }
    }
  }
  // Cell self-inertia h^2/12 per axis keeps coarse grids unbiased.
  const Vec3 self = h.cwiseProduct(h) / 12.0;
  second.diagonal() += count * self;
  second *= density * cell;
  out.inertia = second.trace() * Mat3::Identity() - second;
  out.inertia = 0.5 * (out.inertia + out.inertia.transpose()).eval();
  return out;
}

SectionProperties section_properties(const Metaball& mb, int resolution) {
  mb.validate();
  if (resolution < 32) throw Error("section_properties: resolution must be >= 32");
  Metaball core = mb;
  core.sphero_radius = 0.0;
  const Aabb box = bounding_box(core);
  if (box.empty()) throw Error("section_properties: empty level set");
  const int n = resolution;
  const double hx = box.extent().x() / n;
  const double hy = box.extent().y() / n;
  double count = 0.0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = box.lo.x() + (i + 0.5) * hx;
      const double y = box.lo.y() + (j + 0.5) * hy;
      if (evaluate_unchecked(mb, Vec3(x, y, 0.0)) < mb.surface_level) continue;
      count += 1.0;
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
    }
  }
  if (count == 0.0) throw Error("section_properties: empty cross-section at z = 0");
  SectionProperties out;
  const double da = hx * hy;
  out.area = count * da;
  out.centroid = Vec3(sx / count, sy / count, 0.0);
  const double cxx = sxx - count * out.centroid.x() * out.centroid.x();
  const double cyy = syy - count * out.centroid.y() * out.centroid.y();
  out.polar_moment = (cxx + cyy + count * (hx * hx + hy * hy) / 12.0) * da;
  return out;
}

Metaball read_metaball(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next_line()) throw Error("metaball file: missing header");
  std::istringstream header(line);
  std::string tag;
  long long n = -1;
  double rs = 0.0;
  if (!(header >> tag >> n >> rs) || tag != "metaball" || n <= 0)
    throw Error("metaball file: bad header at line " + std::to_string(line_no) +
                " (expected 'metaball <n> <sphero_radius>')");
  Metaball mb;
  mb.sphero_radius = rs;
  mb.control_points.reserve(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    if (!next_line())
      throw Error("metaball file: expected " + std::to_string(n) + " control points, got " +
                  std::to_string(i));
    std::istringstream row(line);
    ControlPoint cp;
    if (!(row >> cp.position.x() >> cp.position.y() >> cp.position.z() >> cp.weight))
      throw Error("metaball file: malformed control point at line " + std::to_string(line_no));
    mb.control_points.push_back(cp);
  }
  mb.validate();
  return mb;
}

Metaball read_metaball_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metaball file: " + path);
  return read_metaball(in);
}

void write_metaball(std::ostream& out, const Metaball& mb) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  out << "metaball " << mb.control_points.size() << ' ' << mb.sphero_radius << '\n';
  for (const auto& cp : mb.control_points) {
    out << cp.position.x() << ' ' << cp.position.y() << ' ' << cp.position.z() << ' '
        << cp.weight << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

void write_metaball_file(const std::string& path, const Metaball& mb) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write metaball file: " + path);
  write_metaball(out, mb);
}

}  // namespace midelbm::geometry
