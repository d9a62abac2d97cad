#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "midelbm/io.hpp"

namespace midelbm::io {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

Vec3 parse_xyz(const std::string& line, int line_no) {
  std::istringstream ls(line);
  double x, y, z;
  if (!(ls >> x >> y >> z)) throw Error("line " + std::to_string(line_no) + ": expected three numbers");
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
    throw Error("line " + std::to_string(line_no) + ": non-finite coordinate");
  return {x, y, z};
}

std::vector<Vec3> read_ply(std::istream& in, int& line_no) {
  std::string line;
  long vertices = -1;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(trim(line));
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw Error("line " + std::to_string(line_no) + ": only ASCII PLY is supported");
    } else if (word == "element") {
      std::string name;
      long count;
      ls >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) vertices = count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (vertices < 0) throw Error("ply: missing vertex element");
  int ix = -1, iy = -1, iz = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    if (props[i] == "x") ix = i;
    if (props[i] == "y") iy = i;
    if (props[i] == "z") iz = i;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw Error("ply: vertex element lacks x, y, z properties");
  std::vector<Vec3> pts;
  while (static_cast<long>(pts.size()) < vertices && std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> v(props.size());
    for (auto& x : v)
      if (!(ls >> x)) throw Error("line " + std::to_string(line_no) + ": malformed vertex");
    pts.emplace_back(v[ix], v[iy], v[iz]);
  }
  if (static_cast<long>(pts.size()) < vertices) throw Error("ply: file ends before all vertices are read");
  return pts;
}

}  // namespace

std::vector<Vec3> read_point_cloud(std::istream& in) {
  std::vector<Vec3> pts;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (first && t == "ply") {
      pts = read_ply(in, line_no);
      break;
    }
    if (t.empty() || t[0] == '#') continue;
    first = false;
    pts.push_back(parse_xyz(t, line_no));
  }
  if (pts.empty()) throw Error("no points");
  return pts;
}

std::vector<Vec3> read_point_cloud_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open point cloud: " + path);
  try {
    return read_point_cloud(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void write_point_cloud(std::ostream& out, const std::vector<Vec3>& points) {
  out << std::setprecision(17);
  for (const auto& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

namespace {

// Typed accessors that report the JSON path of the offending field.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& what) const { throw Error("config " + path_ + ": " + what); }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) Node(v, path_ + "." + k).fail("unknown field");
  }
  bool has(const char* key) const { return j_.contains(key); }
  Node at(const char* key) const {
    if (!j_.contains(key)) Node(j_, path_ + "." + key).fail("required field missing");
    return Node(j_.at(key), path_ + "." + key);
  }
  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  long integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<long>();
  }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  Vec3 vec3() const {
    if (!j_.is_array() || j_.size() != 3) fail("expected an array of three numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = Node(j_[i], path_ + "[" + std::to_string(i) + "]").number();
    return v;
  }
  double number_or(const char* key, double d) const { return has(key) ? at(key).number() : d; }
  Vec3 vec3_or(const char* key, const Vec3& d) const { return has(key) ? at(key).vec3() : d; }
  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string path_;
};

constexpr const char* kFaces[6] = {"-x", "+x", "-y", "+y", "-z", "+z"};

}  // namespace

engine::SimulationConfig parse_config(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  const Node root(doc, "$");
  root.expect_object({"dimension", "domain", "lattice", "dem", "fluid", "gravity", "particles", "output",
                      "duration", "seed", "mass_resolution"});
  engine::SimulationConfig cfg;
  cfg.dimension = static_cast<int>(root.at("dimension").integer());

  const Node domain = root.at("domain");
  domain.expect_object({"origin", "extent", "periodic", "wall_velocity"});
  cfg.extent = domain.at("extent").vec3();
  cfg.origin = domain.vec3_or("origin", Vec3::Zero());
  if (domain.has("periodic")) {
    const Node p = domain.at("periodic");
    if (!p.raw().is_array() || p.raw().size() != 3) p.fail("expected an array of three booleans");
    for (int a = 0; a < 3; ++a) cfg.periodic[a] = Node(p.raw()[a], p.path() + "[" + std::to_string(a) + "]").boolean();
  }
  if (domain.has("wall_velocity")) {
    const Node wv = domain.at("wall_velocity");
    wv.expect_object({"-x", "+x", "-y", "+y", "-z", "+z"});
    for (int f = 0; f < 6; ++f)
      if (wv.has(kFaces[f])) cfg.wall_velocity[f] = wv.at(kFaces[f]).vec3();
  }

  const Node lattice = root.at("lattice");
  lattice.expect_object({"dx", "dt"});
  cfg.dx = lattice.at("dx").number();
  cfg.dt_lbm = lattice.at("dt").number();

  const Node dem = root.at("dem");
  dem.expect_object({"dt", "kn", "kt", "eta_n", "eta_t", "mu_s", "restitution"});
  cfg.dt_dem = dem.at("dt").number();
  cfg.contact.kn = dem.number_or("kn", cfg.contact.kn);
  cfg.contact.kt = dem.number_or("kt", cfg.contact.kt);
  cfg.contact.eta_n = dem.number_or("eta_n", cfg.contact.eta_n);
  cfg.contact.eta_t = dem.number_or("eta_t", cfg.contact.eta_t);
  cfg.contact.mu_s = dem.number_or("mu_s", cfg.contact.mu_s);
  if (dem.has("eta_n") && dem.has("restitution")) dem.fail("give either eta_n or restitution, not both");
  cfg.restitution = dem.has("eta_n") ? 0.0 : dem.number_or("restitution", 0.2);

  const Node fluid = root.at("fluid");
  fluid.expect_object({"density", "viscosity", "viscosity_unit", "body_acceleration"});
  cfg.fluid.density = fluid.at("density").number();
  cfg.fluid.viscosity = fluid.at("viscosity").number();
  if (fluid.has("viscosity_unit")) {
    const Node u = fluid.at("viscosity_unit");
    const std::string unit = u.string();
    if (unit == "dynamic")
      cfg.fluid.unit = lbm::ViscosityUnit::Dynamic;
    else if (unit == "kinematic")
      cfg.fluid.unit = lbm::ViscosityUnit::Kinematic;
    else
      u.fail("expected \"dynamic\" or \"kinematic\"");
  }
  cfg.fluid.body_acceleration = fluid.vec3_or("body_acceleration", Vec3::Zero());

  cfg.gravity = root.vec3_or("gravity", cfg.gravity);
  cfg.duration = root.at("duration").number();
  if (root.has("seed")) {
    const long s = root.at("seed").integer();
    if (s < 0) root.at("seed").fail("expected a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (root.has("mass_resolution")) cfg.mass_resolution = static_cast<int>(root.at("mass_resolution").integer());

  if (root.has("output")) {
    const Node out = root.at("output");
    out.expect_object({"record_every", "snapshot_every", "binary_vtk"});
    if (out.has("record_every")) cfg.output.record_every = static_cast<int>(out.at("record_every").integer());
    if (out.has("snapshot_every")) cfg.output.snapshot_every = static_cast<int>(out.at("snapshot_every").integer());
    if (out.has("binary_vtk")) cfg.output.binary_vtk = out.at("binary_vtk").boolean();
  }

  const Node parts = root.at("particles");
  if (!parts.raw().is_array()) parts.fail("expected an array");
  for (std::size_t i = 0; i < parts.raw().size(); ++i) {
    const Node p(parts.raw()[i], parts.path() + "[" + std::to_string(i) + "]");
    p.expect_object({"metaball", "density", "position", "orientation", "velocity", "angular_velocity", "kinematic",
                      "sphero_radius"});
    engine::ParticleSpec s;
    const Node mbn = p.at("metaball");
    std::filesystem::path mp = mbn.string();
    if (mp.is_relative()) mp = std::filesystem::path(base_dir) / mp;
    s.metaball_path = mp.string();
    if (!std::filesystem::exists(mp)) mbn.fail("file not found: " + s.metaball_path);
    try {
      s.shape = geometry::read_metaball_file(s.metaball_path);
    } catch (const Error& e) {
      mbn.fail(std::string(e.what()));
    }
    if (p.has("sphero_radius"))
      s.shape.sphero_radius = p.at("sphero_radius").number();
    else if (s.shape.sphero_radius == 0.0)
      s.shape.sphero_radius = cfg.dx;
    s.density = p.at("density").number();
    s.position = p.at("position").vec3();
    if (p.has("orientation")) {
      const Node o = p.at("orientation");
      if (!o.raw().is_array() || o.raw().size() != 4) o.fail("expected a quaternion [w, x, y, z]");
      double q[4];
      for (int k = 0; k < 4; ++k) q[k] = Node(o.raw()[k], o.path() + "[" + std::to_string(k) + "]").number();
      s.orientation = Quat(q[0], q[1], q[2], q[3]);
      if (!(s.orientation.norm() > 0.0)) o.fail("quaternion must be non-zero");
      s.orientation.normalize();
    }
    s.velocity = p.vec3_or("velocity", Vec3::Zero());
    s.angular_velocity = p.vec3_or("angular_velocity", Vec3::Zero());
    if (p.has("kinematic")) s.kinematic = p.at("kinematic").boolean();
    cfg.particles.push_back(std::move(s));
  }

  cfg.validate();
  return cfg;
}

engine::SimulationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string config_hash(const std::string& json_text) {
  std::string canonical;
  try {
    canonical = json::parse(json_text).dump();
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string csv_header() {
  return "step,time,particle,x,y,z,vx,vy,vz,wx,wy,wz,fx,fy,fz,tx,ty,tz,contacts";
}

void write_csv_rows(std::ostream& out, const engine::TimeSeriesRecord& r) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < r.particles.size(); ++i) {
    const auto& p = r.particles[i];
    out << r.step << ',' << r.time << ',' << i;
    for (const Vec3* v : {&p.position, &p.velocity, &p.angular_velocity, &p.hydro_force, &p.hydro_torque})
      out << ',' << v->x() << ',' << v->y() << ',' << v->z();
    out << ',' << r.contacts << '\n';
  }
}

void write_particles_csv(std::ostream& out, const std::vector<engine::TimeSeriesRecord>& records) {
  out << csv_header() << '\n';
  for (const auto& r : records) write_csv_rows(out, r);
}

std::vector<engine::TimeSeriesRecord> read_particles_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != csv_header()) throw Error("csv: unexpected header");
  std::vector<engine::TimeSeriesRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> v;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error("csv: line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != 19) throw Error("csv: line " + std::to_string(line_no) + ": expected 19 columns");
    const long step = static_cast<long>(v[0]);
    if (out.empty() || out.back().step != step) {
      engine::TimeSeriesRecord r;
      r.step = step;
      r.time = v[1];
      r.contacts = static_cast<int>(v[18]);
      out.push_back(r);
    }
    engine::ParticleRecord p;
    p.position = {v[3], v[4], v[5]};
    p.velocity = {v[6], v[7], v[8]};
    p.angular_velocity = {v[9], v[10], v[11]};
    p.hydro_force = {v[12], v[13], v[14]};
    p.hydro_torque = {v[15], v[16], v[17]};
    out.back().particles.push_back(p);
  }
  return out;
}

namespace {

template <class T>
void write_be(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::little) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T read_be(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw Error("vtk: truncated binary data");
  if constexpr (std::endian::native == std::endian::little) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_vtk(std::ostream& out, const lbm::Lattice& lattice, bool binary) {
  const auto& s = lattice.spec();
  const std::size_t n = lattice.size();
  out << "# vtk DataFile Version 3.0\nmidelbm lattice fields\n" << (binary ? "BINARY" : "ASCII") << "\n";
  out << "DATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << s.nx << ' ' << s.ny << ' ' << s.nz << "\n";
  out << std::setprecision(17);
  out << "ORIGIN " << s.origin.x() << ' ' << s.origin.y() << ' ' << s.origin.z() << "\n";
  out << "SPACING " << s.dx << ' ' << s.dx << ' ' << s.dx << "\n";
  out << "POINT_DATA " << n << "\n";
  const double rho_scale = lattice.fluid().density;

  out << "SCALARS density double 1\nLOOKUP_TABLE default\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i);
    const double v = lattice.node_class(k) == lbm::NodeClass::Solid ? 0.0 : lattice.density(k) * rho_scale;
    binary ? write_be(out, v) : void(out << v << '\n');
  }
  if (binary) out << '\n';
  out << "VECTORS velocity double\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i);
    const Vec3 u = lattice.node_class(k) == lbm::NodeClass::Solid ? Vec3::Zero() : lattice.velocity_physical(k);
    if (binary) {
      for (int c = 0; c < 3; ++c) write_be(out, u[c]);
    } else {
      out << u.x() << ' ' << u.y() << ' ' << u.z() << '\n';
    }
  }
  if (binary) out << '\n';
  out << "SCALARS node_class int 1\nLOOKUP_TABLE default\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(lattice.node_class(static_cast<int>(i)));
    binary ? write_be(out, static_cast<std::int32_t>(c)) : void(out << c << '\n');
  }
  if (binary) out << '\n';
}

const VtkField& VtkGrid::field(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name) return f;
  throw Error("vtk: no field named " + name);
}

VtkGrid read_vtk(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# vtk DataFile", 0) != 0) throw Error("vtk: missing header");
  std::getline(in, line);
  std::string mode;
  std::getline(in, mode);
  mode = trim(mode);
  const bool binary = mode == "BINARY";
  if (!binary && mode != "ASCII") throw Error("vtk: unknown encoding " + mode);
  VtkGrid g;
  long points = 0;
  std::string word;
  while (in >> word) {
    if (word == "DATASET") {
      in >> word;
      if (word != "STRUCTURED_POINTS") throw Error("vtk: only STRUCTURED_POINTS is supported");
    } else if (word == "DIMENSIONS") {
      in >> g.dims[0] >> g.dims[1] >> g.dims[2];
    } else if (word == "ORIGIN") {
      in >> g.origin.x() >> g.origin.y() >> g.origin.z();
    } else if (word == "SPACING") {
      in >> g.spacing.x() >> g.spacing.y() >> g.spacing.z();
    } else if (word == "POINT_DATA") {
      in >> points;
    } else if (word == "SCALARS" || word == "VECTORS") {
      VtkField f;
      std::string type;
      in >> f.name >> type;
      f.components = word == "VECTORS" ? 3 : 1;
      if (word == "SCALARS") {
        std::getline(in, line);
        std::istringstream ls(line);
        int nc = 1;
        if (ls >> nc) f.components = nc;
        std::getline(in, line);  // LOOKUP_TABLE
      } else {
        std::getline(in, line);
      }
      const long count = points * f.components;
      f.values.resize(count);
      for (long i = 0; i < count; ++i) {
        if (binary) {
          f.values[i] = type == "int" ? read_be<std::int32_t>(in) : read_be<double>(in);
        } else if (!(in >> f.values[i])) {
          throw Error("vtk: truncated field " + f.name);
        }
      }
      g.fields.push_back(std::move(f));
    } else {
      throw Error("vtk: unexpected token " + word);
    }
  }
  return g;
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["code_version"] = m.code_version;
  j["csv_version"] = m.csv_version;
  j["wall_clock_s"] = m.wall_clock;
  j["timing_s"] = m.timing;
  j["status"] = m.status;
  j["failure_step"] = m.failure_step;
  j["message"] = m.message;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& text) {
  const json j = json::parse(text);
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.code_version = j.at("code_version").get<std::string>();
  m.csv_version = j.at("csv_version").get<std::string>();
  m.wall_clock = j.at("wall_clock_s").get<double>();
  m.timing = j.at("timing_s").get<std::map<std::string, double>>();
  m.status = j.at("status").get<std::string>();
  m.failure_step = j.at("failure_step").get<long>();
  m.message = j.at("message").get<std::string>();
  return m;
}

}  // namespace midelbm::io
