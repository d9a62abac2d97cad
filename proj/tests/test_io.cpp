#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "midelbm/io.hpp"
#include "midelbm/mesh.hpp"

using namespace midelbm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path d = fs::temp_directory_path() / "midelbm_test_io";
  fs::create_directories(d);
  return d;
}

std::string base_config(const std::string& extra = "") {
  return R"({
    "dimension": 2,
    "domain": {"extent": [0.04, 0.048, 0.001], "periodic": [true, false, false],
               "wall_velocity": {"+y": [0.01, 0, 0]}},
    "lattice": {"dx": 0.001, "dt": 1e-4},
    "dem": {"dt": 1e-5, "kn": 1000, "kt": 500},
    "fluid": {"density": 1000, "viscosity": 0.001, "viscosity_unit": "kinematic"},
    "gravity": [0, -9.81, 0],
    "particles": [{"metaball": "disc.mb", "density": 1500, "position": [0.02, 0.03, 0]}],
    "output": {"record_every": 5},
    "duration": 0.01)" + extra + "}";
}

void write_disc() {
  std::ofstream(scratch_dir() / "disc.mb") << "metaball 1 0.00025\n0 0 0 2.5e-05\n";
}

}  // namespace

TEST_CASE("XYZ point clouds") {
  std::istringstream in("# comment\n1 2 3\n\n4 5 6\n");
  const auto pts = io::read_point_cloud(in);
  REQUIRE(pts.size() == 2);
  CHECK(pts[1] == Vec3(4, 5, 6));

  std::istringstream empty("");
  CHECK_THROWS_WITH_AS(io::read_point_cloud(empty), "no points", Error);
  std::istringstream comments("# only\n\n");
  CHECK_THROWS_WITH_AS(io::read_point_cloud(comments), "no points", Error);
  std::istringstream bad("1 2 3\n1 2 x\n");
  CHECK_THROWS_WITH_AS(io::read_point_cloud(bad), doctest::Contains("line 2"), Error);
}

TEST_CASE("PLY point clouds") {
  std::istringstream in(
      "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
      "property float nx\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n"
      "1 2 3 9\n4 5 6 9\n");
  const auto pts = io::read_point_cloud(in);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0] == Vec3(1, 2, 3));

  std::istringstream bin("ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n");
  CHECK_THROWS_AS(io::read_point_cloud(bin), Error);
}

TEST_CASE("point cloud round trip") {
  const std::vector<Vec3> pts = {{0.1, 1.0 / 3.0, -2e-7}, {5, 6, 7}};
  std::stringstream ss;
  io::write_point_cloud(ss, pts);
  CHECK(io::read_point_cloud(ss) == pts);
}

TEST_CASE("scenario config parsing") {
  write_disc();
  const auto cfg = io::parse_config(base_config(), scratch_dir().string());
  CHECK(cfg.dimension == 2);
  CHECK(cfg.substeps() == 10);
  CHECK(cfg.grid()[0] == 40);
  CHECK(cfg.periodic[0]);
  CHECK(cfg.wall_velocity[3].x() == 0.01);
  CHECK(cfg.fluid.unit == lbm::ViscosityUnit::Kinematic);
  CHECK(cfg.fluid.kinematic_viscosity() == 0.001);
  REQUIRE(cfg.particles.size() == 1);
  CHECK(cfg.particles[0].shape.control_points.size() == 1);
  CHECK(cfg.output.record_every == 5);
}

TEST_CASE("scenario config rejects invalid documents") {
  write_disc();
  const std::string dir = scratch_dir().string();
  CHECK_THROWS_WITH_AS(io::parse_config(base_config(R"(, "bogus": 1)"), dir), doctest::Contains("$.bogus"), Error);
  CHECK_THROWS_WITH_AS(io::parse_config("{", dir), doctest::Contains("invalid JSON"), Error);

  std::string s = base_config();
  s.replace(s.find("\"dt\": 1e-5"), 10, "\"dt\": 3e-5");
  CHECK_THROWS_WITH_AS(io::parse_config(s, dir), doctest::Contains("positive integer"), Error);

  s = base_config();
  s.replace(s.find("disc.mb"), 7, "missing.mb");
  CHECK_THROWS_WITH_AS(io::parse_config(s, dir), doctest::Contains("missing.mb"), Error);

  s = base_config();
  s.replace(s.find("\"kinematic\""), 11, "\"poise\"");
  CHECK_THROWS_WITH_AS(io::parse_config(s, dir), doctest::Contains("$.fluid.viscosity_unit"), Error);

  s = base_config();
  s.replace(s.find("\"density\": 1500"), 15, "\"density\": \"x\"");
  CHECK_THROWS_WITH_AS(io::parse_config(s, dir), doctest::Contains("$.particles[0].density"), Error);

  s = base_config();
  s.replace(s.find("\"duration\": 0.01"), 16, "\"time\": 0.01");
  CHECK_THROWS_WITH_AS(io::parse_config(s, dir), doctest::Contains("$.time"), Error);
}

TEST_CASE("contact damping and sphero radius defaults") {
  const std::string dir = scratch_dir().string();
  std::ofstream(scratch_dir() / "point.mb") << "metaball 1 0\n0 0 0 2.5e-05\n";
  std::string s = base_config();
  s.replace(s.find("disc.mb"), 7, "point.mb");
  auto cfg = io::parse_config(s, dir);
  CHECK(cfg.restitution == 0.2);
  CHECK(cfg.particles[0].shape.sphero_radius == 0.001);

  s.replace(s.find("\"density\": 1500"), 15, "\"density\": 1500, \"sphero_radius\": 0");
  s.replace(s.find("\"kt\": 500"), 9, "\"kt\": 500, \"eta_n\": 0.5");
  cfg = io::parse_config(s, dir);
  CHECK(cfg.restitution == 0.0);
  CHECK(cfg.contact.eta_n == 0.5);
  CHECK(cfg.particles[0].shape.sphero_radius == 0.0);

  s.replace(s.find("\"eta_n\": 0.5"), 12, "\"eta_n\": 0.5, \"restitution\": 0.3");
  CHECK_THROWS_WITH_AS(io::parse_config(s, dir), doctest::Contains("not both"), Error);
}

TEST_CASE("shipped scenario configs parse") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(MIDELBM_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    const auto cfg = io::load_config(e.path().string());
    CHECK(cfg.substeps() >= 1);
    CHECK(!cfg.particles.empty());
    ++n;
  }
  CHECK(n >= 5);
}

TEST_CASE("config hash is canonical") {
  const std::string a = R"({"a": 1, "b": [1, 2]})";
  const std::string b = "{\n  \"b\": [1,2],\n  \"a\": 1\n}";
  CHECK(io::config_hash(a) == io::config_hash(b));
  CHECK(io::config_hash(a) != io::config_hash(R"({"a": 2, "b": [1, 2]})"));
  CHECK(io::config_hash(a).size() == 16);
}

TEST_CASE("CSV round trip") {
  write_disc();
  const auto cfg = io::parse_config(base_config(), scratch_dir().string());
  engine::Simulation sim(cfg);
  sim.run();
  std::stringstream ss;
  io::write_particles_csv(ss, sim.records());
  const auto back = io::read_particles_csv(ss);
  REQUIRE(back.size() == sim.records().size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].step == sim.records()[i].step);
    CHECK(back[i].time == sim.records()[i].time);
    CHECK(back[i].particles[0].position == sim.records()[i].particles[0].position);
    CHECK(back[i].particles[0].hydro_force == sim.records()[i].particles[0].hydro_force);
  }
  std::istringstream bad("step,x\n");
  CHECK_THROWS_AS(io::read_particles_csv(bad), Error);
}

TEST_CASE("VTK round trip, ASCII and binary") {
  write_disc();
  const auto cfg = io::parse_config(base_config(), scratch_dir().string());
  engine::Simulation sim(cfg);
  for (int i = 0; i < 20; ++i) sim.step();
  const auto& L = sim.lattice();
  for (bool binary : {false, true}) {
    std::stringstream ss;
    io::write_vtk(ss, L, binary);
    const auto g = io::read_vtk(ss);
    CHECK(g.dims == std::array<int, 3>{40, 48, 1});
    CHECK(g.spacing.x() == cfg.dx);
    const auto& rho = g.field("density");
    const auto& vel = g.field("velocity");
    const auto& cls = g.field("node_class");
    REQUIRE(rho.values.size() == L.size());
    REQUIRE(vel.values.size() == 3 * L.size());
    for (int n = 0; n < static_cast<int>(L.size()); n += 37) {
      CHECK(cls.values[n] == static_cast<int>(L.node_class(n)));
      if (L.node_class(n) == lbm::NodeClass::Solid) continue;
      CHECK(rho.values[n] == L.density(n) * cfg.fluid.density);
      CHECK(vel.values[3 * n + 1] == L.velocity_physical(n).y());
    }
  }
}

TEST_CASE("STL round trip keeps a watertight sphere") {
  geometry::Metaball m;
  m.control_points = {{Vec3(0.2, 0, 0), 0.49}};
  const auto mesh = geometry::extract_surface(m, 24);
  CHECK(mesh.watertight());
  const double h = (2 * 0.7) / 24;
  for (const auto& v : mesh.vertices) CHECK(std::abs((v - Vec3(0.2, 0, 0)).norm() - 0.7) < h);
  std::stringstream ss;
  geometry::write_stl(ss, mesh);
  const auto back = geometry::read_stl(ss);
  CHECK(back.triangles.size() == mesh.triangles.size());
  CHECK(back.watertight());
  CHECK(back.volume() == doctest::Approx(mesh.volume()).epsilon(1e-6));

  const auto fine = geometry::extract_surface(m, 48);
  const double ratio = static_cast<double>(fine.triangles.size()) / mesh.triangles.size();
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);

  geometry::Metaball empty;
  empty.control_points = {{Vec3::Zero(), 0.0}};
  CHECK_THROWS_AS(geometry::extract_surface(empty, 16), Error);
}

TEST_CASE("manifest round trip") {
  io::RunManifest m;
  m.command = "sim";
  m.config_hash = "0123456789abcdef";
  m.seed = 42;
  m.wall_clock = 1.5;
  m.timing = {{"lbm", 1.0}, {"dem", 0.25}};
  m.status = "error";
  m.failure_step = 17;
  m.message = "step 17: boom";
  const auto back = io::parse_manifest(io::manifest_json(m));
  CHECK(back.command == m.command);
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.seed == 42);
  CHECK(back.timing == m.timing);
  CHECK(back.failure_step == 17);
  CHECK(back.message == m.message);
  CHECK(back.csv_version == io::kCsvVersion);
}
