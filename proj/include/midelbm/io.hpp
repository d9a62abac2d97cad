#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "midelbm/engine.hpp"

namespace midelbm::io {

inline constexpr const char* kCsvVersion = "particles-v1";
inline constexpr const char* kCodeVersion = "1.0.0";

/// ASCII XYZ (one "x y z" per line, '#' comments) or ASCII PLY with a vertex element.
std::vector<Vec3> read_point_cloud(std::istream& in);
std::vector<Vec3> read_point_cloud_file(const std::string& path);
void write_point_cloud(std::ostream& out, const std::vector<Vec3>& points);

/// Parses a scenario document. Relative Metaball paths are resolved against `base_dir`.
engine::SimulationConfig parse_config(const std::string& text, const std::string& base_dir = ".");
engine::SimulationConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical (key-sorted, whitespace-free) form of a JSON document, as hex.
std::string config_hash(const std::string& json_text);

/// CSV header and rows in the fixed column order.
std::string csv_header();
void write_csv_rows(std::ostream& out, const engine::TimeSeriesRecord& r);
void write_particles_csv(std::ostream& out, const std::vector<engine::TimeSeriesRecord>& records);
std::vector<engine::TimeSeriesRecord> read_particles_csv(std::istream& in);

/// Legacy VTK STRUCTURED_POINTS with density, velocity (physical units) and node class.
void write_vtk(std::ostream& out, const lbm::Lattice& lattice, bool binary = false);

struct VtkField {
  std::string name;
  int components = 1;
  std::vector<double> values;
};
struct VtkGrid {
  std::array<int, 3> dims{};
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::vector<VtkField> fields;
  const VtkField& field(const std::string& name) const;
};
VtkGrid read_vtk(std::istream& in);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string code_version = kCodeVersion;
  double wall_clock = 0.0;
  std::map<std::string, double> timing;
  std::string status = "ok";
  long failure_step = -1;
  std::string message;
  std::string csv_version = kCsvVersion;
};

std::string manifest_json(const RunManifest& m);
RunManifest parse_manifest(const std::string& text);

}  // namespace midelbm::io
