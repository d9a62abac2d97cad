#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "midelbm/geometry.hpp"

namespace midelbm::geometry {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise seen from outside

  double area() const;
  /// Enclosed volume (divergence theorem); positive for outward orientation.
  double volume() const;
  /// Every edge is shared by exactly two triangles with opposite orientation.
  bool watertight() const;
};

/// Triangulated level set {f = surface_level} (or the sphero-dilated surface). `resolution`
/// is the number of grid cells along the longest side of the bounding box.
TriMesh extract_surface(const Metaball& mb, int resolution, bool sphero_dilation = false);

void write_stl(std::ostream& out, const TriMesh& mesh, const std::string& name = "metaball");
/// Reads ASCII STL; coincident vertices are merged.
TriMesh read_stl(std::istream& in);

}  // namespace midelbm::geometry
