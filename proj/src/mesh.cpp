#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "midelbm/mesh.hpp"

namespace midelbm::geometry {

double TriMesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles)
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  return a;
}

double TriMesh::volume() const {
  double v = 0.0;
  for (const auto& t : triangles) v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  return v / 6.0;
}

bool TriMesh::watertight() const {
  if (triangles.empty()) return false;
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    const auto it = directed.find({edge.second, edge.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

namespace {

// Kuhn split of the unit cube into six tetrahedra sharing the 0-7 diagonal; corner bits are x, y, z.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7},
                             {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

}  // namespace

TriMesh extract_surface(const Metaball& mb_in, int resolution, bool sphero_dilation) {
  mb_in.validate();
  if (resolution < 4) throw Error("extract_surface: resolution must be >= 4");
  Metaball mb = sphero_dilation ? sphero_dilated(mb_in, mb_in.sphero_radius) : mb_in;
  mb.sphero_radius = 0.0;
  const Aabb core = bounding_box(mb);
  if (core.empty()) throw Error("extract_surface: empty level set");
  const double h = core.extent().maxCoeff() / resolution;
  // Offset the grid so symmetric shapes do not put extreme points exactly on nodes.
  Aabb box = core.inflated(h);
  box.lo -= Vec3(0.318309886, 0.271828183, 0.141421356) * h;
  box.hi += Vec3::Constant(h);
  int dims[3];
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil(box.extent()[a] / h)) + 1;
  const double level = mb.surface_level;

  auto index = [&](int i, int j, int k) {
    return static_cast<long>(i) + dims[0] * (static_cast<long>(j) + static_cast<long>(dims[1]) * k);
  };
  auto point = [&](long n) {
    const long i = n % dims[0];
    const long j = (n / dims[0]) % dims[1];
    const long k = n / (static_cast<long>(dims[0]) * dims[1]);
    return Vec3(box.lo + h * Vec3(i, j, k));
  };

  std::vector<double> value(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < static_cast<long>(value.size()); ++n) value[n] = evaluate_unchecked(mb, point(n));
  bool any_inside = false;
  for (double v : value) any_inside |= v >= level;
  if (!any_inside) throw Error("extract_surface: empty level set at this resolution");

  TriMesh mesh;
  std::unordered_map<long, int> edge_vertex;
  const long total = static_cast<long>(value.size());

  // Surface crossing on the edge a (inside) - b (outside), refined by Illinois regula falsi.
  auto vertex_on = [&](long a, long b) {
    const long key = std::min(a, b) * total + std::max(a, b);
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const Vec3 pa = point(a), pb = point(b);
    double ta = 0.0, tb = 1.0;
    double ga = value[a] - level, gb = value[b] - level;
    double t = std::isfinite(ga) ? ga / (ga - gb) : 0.5;
    if (std::isfinite(ga)) {
      int side = 0;
      for (int it2 = 0; it2 < 60; ++it2) {
        t = (ta * gb - tb * ga) / (gb - ga);
        const double g = evaluate_unchecked(mb, pa + t * (pb - pa)) - level;
        if (g == 0.0 || (tb - ta) < 1e-13) break;
        if (g > 0.0) {
          ta = t;
          ga = g;
          if (side == 1) gb *= 0.5;
          side = 1;
        } else {
          tb = t;
          gb = g;
          if (side == -1) ga *= 0.5;
          side = -1;
        }
      }
    } else {
      for (int it2 = 0; it2 < 60; ++it2) {
        t = 0.5 * (ta + tb);
        (evaluate_unchecked(mb, pa + t * (pb - pa)) >= level ? ta : tb) = t;
      }
    }
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(key, id);
    return id;
  };

  // `inner` lies strictly on the inside of the triangle's plane.
  auto emit = [&](int v0, int v1, int v2, const Vec3& inner) {
    const Vec3& a = mesh.vertices[v0];
    const Vec3 n = (mesh.vertices[v1] - a).cross(mesh.vertices[v2] - a);
    if (n.dot(a - inner) >= 0.0)
      mesh.triangles.push_back({v0, v1, v2});
    else
      mesh.triangles.push_back({v0, v2, v1});
  };

  for (int k = 0; k + 1 < dims[2]; ++k) {
    for (int j = 0; j + 1 < dims[1]; ++j) {
      for (int i = 0; i + 1 < dims[0]; ++i) {
        long corner[8];
        int inside_mask = 0;
        for (int c = 0; c < 8; ++c) {
          corner[c] = index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (value[corner[c]] >= level) inside_mask |= 1 << c;
        }
        if (inside_mask == 0 || inside_mask == 255) continue;
        for (const auto& tet : kTets) {
          long in[4], out[4];
          int n_in = 0, n_out = 0;
          for (int v : tet) {
            if (inside_mask >> v & 1)
              in[n_in++] = corner[v];
            else
              out[n_out++] = corner[v];
          }
          if (n_in == 0 || n_out == 0) continue;
          if (n_in == 1) {
            const int a = vertex_on(in[0], out[0]);
            const int b = vertex_on(in[0], out[1]);
            const int c = vertex_on(in[0], out[2]);
            emit(a, b, c, point(in[0]));
          } else if (n_in == 3) {
            const int a = vertex_on(in[0], out[0]);
            const int b = vertex_on(in[1], out[0]);
            const int c = vertex_on(in[2], out[0]);
            emit(a, b, c, Vec3(2.0 * mesh.vertices[a] - point(out[0])));
          } else {
            const int a = vertex_on(in[0], out[0]);
            const int b = vertex_on(in[0], out[1]);
            const int c = vertex_on(in[1], out[1]);
            const int d = vertex_on(in[1], out[0]);
            emit(a, b, c, point(in[0]));
            emit(a, c, d, point(in[1]));
          }
        }
      }
    }
  }
  return mesh;
}

void write_stl(std::ostream& out, const TriMesh& mesh, const std::string& name) {
  out.precision(9);
  out << "solid " << name << "\n";
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    Vec3 n = (b - a).cross(c - a);
    if (n.norm() > 0.0) n.normalize();
    out << "  facet normal " << n.x() << ' ' << n.y() << ' ' << n.z() << "\n    outer loop\n";
    for (const Vec3* v : {&a, &b, &c})
      out << "      vertex " << v->x() << ' ' << v->y() << ' ' << v->z() << "\n";
    out << "    endloop\n  endfacet\n";
  }
  out << "endsolid " << name << "\n";
}

TriMesh read_stl(std::istream& in) {
  TriMesh mesh;
  std::map<std::array<double, 3>, int> ids;
  std::string line, word;
  std::array<int, 3> tri{};
  int corner = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    if (!(ls >> word) || word != "vertex") continue;
    std::array<double, 3> p{};
    if (!(ls >> p[0] >> p[1] >> p[2])) throw Error("stl: malformed vertex on line " + std::to_string(line_no));
    auto [it, inserted] = ids.emplace(p, static_cast<int>(mesh.vertices.size()));
    if (inserted) mesh.vertices.emplace_back(p[0], p[1], p[2]);
    tri[corner++] = it->second;
    if (corner == 3) {
      mesh.triangles.push_back(tri);
      corner = 0;
    }
  }
  if (corner != 0) throw Error("stl: truncated facet");
  return mesh;
}

}  // namespace midelbm::geometry
