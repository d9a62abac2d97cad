#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "midelbm/core.hpp"

namespace midelbm::geometry {

struct ControlPoint {
  Vec3 position = Vec3::Zero();
  double weight = 0.0;  // length^2
};

/// Implicit shape f(x) = sum_i k_i / |x - x_i|^2. The solid is {f >= surface_level}.
struct Metaball {
  std::vector<ControlPoint> control_points;
  double sphero_radius = 0.0;
  double surface_level = 1.0;

  /// Characteristic length: the largest single-ball radius sqrt(k_i).
  double scale() const;
  /// Throws Error when the shape has no control points or a negative weight.
  void validate() const;
  /// Control points moved by `shift`.
  Metaball translated(const Vec3& shift) const;
  /// Control points mapped by x -> rotation * x + shift.
  Metaball transformed(const Mat3& rotation, const Vec3& shift) const;
};

struct MassProperties {
  double volume = 0.0;
  double mass = 0.0;
  Vec3 centroid = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  // about the centroid, body axes
};

/// 2D counterpart on the z = 0 slice: area and the polar moment about the centroid.
struct SectionProperties {
  double area = 0.0;
  Vec3 centroid = Vec3::Zero();
  double polar_moment = 0.0;  // integral of r^2 dA about the centroid
};

double evaluate(const Metaball& mb, const Vec3& x);
Vec3 gradient(const Metaball& mb, const Vec3& x);
Mat3 hessian(const Metaball& mb, const Vec3& x);

/// Value and gradient in a single pass.
struct ValueGrad {
  double value;
  Vec3 grad;
};
ValueGrad evaluate_with_gradient(const Metaball& mb, const Vec3& x);

/// Like evaluate but returns +inf instead of throwing at a control point.
double evaluate_unchecked(const Metaball& mb, const Vec3& x) noexcept;

/// Smallest t in (0, max_t] with f(origin + t*direction) == level, or nullopt.
/// Requires f(origin) < level. Scans 64 samples, then bisects the first bracket.
std::optional<double> ray_surface_parameter(const Metaball& mb, const Vec3& origin,
                                            const Vec3& direction, double level,
                                            double max_t);

/// Box containing {f >= 1} dilated by sphero_radius + margin.
Aabb bounding_box(const Metaball& mb, double margin = 0.0);

struct MassOptions {
  int resolution = 128;
  bool sphero_dilation = false;
};

MassProperties mass_properties(const Metaball& mb, double density, const MassOptions& opts);
inline MassProperties mass_properties(const Metaball& mb, double density, int resolution) {
  return mass_properties(mb, density, MassOptions{resolution, false});
}

SectionProperties section_properties(const Metaball& mb, int resolution);

/// Weights rescaled so every single-ball radius sqrt(k) grows by `radius`.
Metaball sphero_dilated(const Metaball& mb, double radius);

// Parameter file: "metaball <n> <sphero_radius>" followed by n lines "x y z k".
Metaball read_metaball(std::istream& in);
Metaball read_metaball_file(const std::string& path);
void write_metaball(std::ostream& out, const Metaball& mb);
void write_metaball_file(const std::string& path, const Metaball& mb);

}  // namespace midelbm::geometry
