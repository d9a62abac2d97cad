#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "midelbm/engine.hpp"
#include "midelbm/imaging.hpp"
#include "midelbm/io.hpp"
#include "midelbm/mesh.hpp"

namespace fs = std::filesystem;
using namespace midelbm;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  bool seed_given = false;
  int threads = 0;
  std::string out_dir = ".";
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(p, mode);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

class Run {
 public:
  Run(const Globals& g, std::string command) : g_(g), t0_(std::chrono::steady_clock::now()) {
    m_.command = std::move(command);
    m_.seed = g.seed;
    fs::create_directories(g.out_dir);
  }
  io::RunManifest& manifest() { return m_; }
  void finish() {
    m_.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    auto out = open_out(fs::path(g_.out_dir) / "manifest.json");
    out << io::manifest_json(m_);
  }

 private:
  Globals g_;
  io::RunManifest m_;
  std::chrono::steady_clock::time_point t0_;
};

// Hash of the inputs that define a non-simulation run.
std::string inputs_hash(const nlohmann::json& params, const std::string& input_path) {
  nlohmann::json j = params;
  j["input"] = io::config_hash(nlohmann::json(slurp(input_path)).dump());
  return io::config_hash(j.dump());
}

int cmd_fit(const Globals& g, const std::string& cloud, imaging::GaConfig ga, const imaging::GsConfig& gs,
            double sphero_radius) {
  Run run(g, "fit");
  ga.rng_seed = g.seed;
  run.manifest().config_hash = inputs_hash({{"generations", ga.generations}, {"population", ga.population},
                                            {"genes", ga.genes}, {"mutation", ga.mutation_coeff},
                                            {"crossover", ga.crossover_coeff}, {"epochs", gs.epochs},
                                            {"learning_rate", gs.learning_rate}, {"sphero_radius", sphero_radius},
                                            {"seed", g.seed}},
                                           cloud);
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto points = io::read_point_cloud_file(cloud);
    auto result = imaging::fit_point_cloud(points, ga, gs);
    result.model.sphero_radius = sphero_radius;
    run.manifest().timing["fit"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    geometry::write_metaball_file((fs::path(g.out_dir) / "model.mb").string(), result.model);
    auto rep = open_out(fs::path(g.out_dir) / "fit_report.txt");
    rep << imaging::format_report(result.report);
    std::cout << imaging::format_report(result.report);
  } catch (const Error& e) {
    run.manifest().status = "error";
    run.manifest().message = e.what();
    run.finish();
    throw;
  }
  run.finish();
  return 0;
}

int cmd_sim(const Globals& g, std::string config_path) {
  Run run(g, "sim");
  try {
    run.manifest().config_hash = io::config_hash(slurp(config_path));
    auto cfg = io::load_config(config_path);
    if (g.seed_given) cfg.seed = g.seed;
    run.manifest().seed = cfg.seed;
    engine::Simulation sim(cfg);
    auto csv = open_out(fs::path(g.out_dir) / "particles.csv");
    csv << io::csv_header() << '\n';
    io::write_csv_rows(csv, sim.records().back());
    double output_time = 0.0;
    auto snapshot = [&](const engine::Simulation& s) {
      const auto t0 = std::chrono::steady_clock::now();
      if (s.step_index() % cfg.output.record_every == 0) io::write_csv_rows(csv, s.records().back());
      const int every = cfg.output.snapshot_every;
      if (every > 0 && s.step_index() % every == 0) {
        std::ostringstream name;
        name << "fields_" << std::setw(8) << std::setfill('0') << s.step_index() << ".vtk";
        auto out = open_out(fs::path(g.out_dir) / name.str(), std::ios::out | std::ios::binary);
        io::write_vtk(out, s.lattice(), cfg.output.binary_vtk);
      }
      output_time += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if (cfg.output.snapshot_every > 0) snapshot(sim);
    try {
      sim.run(snapshot);
    } catch (const Error& e) {
      run.manifest().failure_step = sim.step_index() + 1;
      throw;
    }
    run.manifest().timing["lbm"] = sim.timing().classify_lbm;
    run.manifest().timing["dem"] = sim.timing().dem;
    run.manifest().timing["output"] = output_time;
    std::cout << "completed " << sim.step_index() << " steps, t = " << sim.time() << " s\n";
  } catch (const Error& e) {
    run.manifest().status = "error";
    run.manifest().message = e.what();
    run.finish();
    throw;
  }
  run.finish();
  return 0;
}

int cmd_descriptors(const Globals& g, const std::string& path, int resolution) {
  Run run(g, "descriptors");
  run.manifest().config_hash = inputs_hash({{"resolution", resolution}}, path);
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto d = engine::shape_descriptors(geometry::read_metaball_file(path), resolution);
    run.manifest().timing["descriptors"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%.4f %.4f %.4f\n", d.sphericity, d.dn_over_ds(), d.csf);
  } catch (const Error& e) {
    run.manifest().status = "error";
    run.manifest().message = e.what();
    run.finish();
    throw;
  }
  run.finish();
  return 0;
}

int cmd_mesh(const Globals& g, const std::string& path, int resolution, bool dilated, std::string output) {
  Run run(g, "mesh");
  run.manifest().config_hash = inputs_hash({{"resolution", resolution}, {"dilated", dilated}}, path);
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mesh = geometry::extract_surface(geometry::read_metaball_file(path), resolution, dilated);
    run.manifest().timing["mesh"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (output.empty()) output = (fs::path(g.out_dir) / "mesh.stl").string();
    auto out = open_out(output);
    geometry::write_stl(out, mesh, fs::path(path).stem().string());
    std::cout << mesh.triangles.size() << " triangles -> " << output << "\n";
  } catch (const Error& e) {
    run.manifest().status = "error";
    run.manifest().message = e.what();
    run.finish();
    throw;
  }
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metaball DEM-LBM toolkit"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed (overrides the config seed for sim)")->capture_default_str();
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Fit a Metaball to a surface point cloud (XYZ or PLY)");
  std::string cloud;
  imaging::GaConfig ga;
  imaging::GsConfig gs;
  double sphero = 0.0;
  fit->add_option("cloud", cloud, "Point cloud file")->required()->check(CLI::ExistingFile);
  fit->add_option("--generations", ga.generations)->capture_default_str();
  fit->add_option("--population", ga.population)->capture_default_str();
  fit->add_option("--genes", ga.genes, "Genes per individual (4 per control point)")->capture_default_str();
  fit->add_option("--mutation", ga.mutation_coeff)->capture_default_str();
  fit->add_option("--crossover", ga.crossover_coeff)->capture_default_str();
  fit->add_option("--epochs", gs.epochs)->capture_default_str();
  fit->add_option("--learning-rate", gs.learning_rate)->capture_default_str();
  fit->add_option("--sphero-radius", sphero, "Sphero radius written to the model")->capture_default_str();

  auto* sim = app.add_subcommand("sim", "Run a coupled scenario");
  std::string config;
  sim->add_option("config", config, "Scenario JSON (defaults to $MIDELBM_CONFIG)");

  auto* desc = app.add_subcommand("descriptors", "Print sphericity, dn/ds and CSF");
  std::string mb_path;
  int desc_res = 128;
  desc->add_option("metaball", mb_path)->required()->check(CLI::ExistingFile);
  desc->add_option("--resolution", desc_res)->capture_default_str()->check(CLI::Range(8, 1024));

  auto* mesh = app.add_subcommand("mesh", "Export the surface as ASCII STL");
  std::string mesh_mb, mesh_out;
  int mesh_res = 64;
  bool dilated = false;
  mesh->add_option("metaball", mesh_mb)->required()->check(CLI::ExistingFile);
  mesh->add_option("--resolution", mesh_res)->capture_default_str()->check(CLI::Range(4, 1024));
  mesh->add_option("-o,--output", mesh_out, "STL path (default <out-dir>/mesh.stl)");
  mesh->add_flag("--dilated", dilated, "Mesh the sphero-dilated surface");

  CLI11_PARSE(app, argc, argv);
  g.seed_given = seed_opt->count() > 0;
  if (g.threads > 0) omp_set_num_threads(g.threads);

  try {
    if (*fit) return cmd_fit(g, cloud, ga, gs, sphero);
    if (*sim) {
      if (config.empty()) {
        const char* env = std::getenv("MIDELBM_CONFIG");
        if (!env || !*env) throw Error("sim: no config given and MIDELBM_CONFIG is unset");
        config = env;
      }
      return cmd_sim(g, config);
    }
    if (*desc) return cmd_descriptors(g, mb_path, desc_res);
    if (*mesh) return cmd_mesh(g, mesh_mb, mesh_res, dilated, mesh_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
