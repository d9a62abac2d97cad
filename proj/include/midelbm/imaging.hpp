#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "midelbm/core.hpp"
#include "midelbm/geometry.hpp"

namespace midelbm::imaging {

/// Surface point cloud translated so its centroid sits at the origin.
struct PointHull {
  std::vector<Vec3> points;
  Vec3 centroid_offset = Vec3::Zero();  // add to hull coordinates to recover input coordinates

  double bounding_radius() const;
};

/// Filters to `region` (if given), recentres, and rejects clouds that cannot bound a volume.
PointHull preprocess(std::span<const Vec3> raw_points, const std::optional<Aabb>& region = {});

/// Convex-combination membership test: p = sum a_i h_i with sum a_i = 1, a_i >= 0.
/// Solved as a phase-1 simplex feasibility problem.
bool point_in_hull(const PointHull& hull, const Vec3& p);

/// Stateful variant reusing the tableau buffers; results match point_in_hull.
class HullMembership {
 public:
  explicit HullMembership(const PointHull& hull);
  bool contains(const Vec3& p);

 private:
  std::vector<Vec3> scaled_;
  double scale_ = 1.0;
  std::vector<double> tableau_;
  std::vector<int> basis_;
};

struct Individual {
  std::vector<double> genes;  // (k, x, y, z) per control point
  double fitness = kInf;
};

struct GaConfig {
  int generations = 100;
  int population = 1200;
  int genes = 100;
  double mutation_coeff = 0.6;
  double crossover_coeff = 0.5;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct GsConfig {
  int epochs = 100000;
  double learning_rate = 0.001;
  double anomaly_tolerance = 0.0;  // weights <= tolerance count as sign anomalies

  void validate() const;
};

/// Decodes floor(N_G / 4) control points from (k, x, y, z) quadruples.
geometry::Metaball decode(std::span<const double> genes);
std::vector<double> encode(const geometry::Metaball& mb);

/// sum_i (f(h_i) - 1)^2. A control point sitting on a hull point makes the value +inf.
double fitness(std::span<const double> genes, const PointHull& hull);
double fitness(const geometry::Metaball& mb, const PointHull& hull);

struct GaResult {
  geometry::Metaball best;
  double best_fitness = kInf;
  std::vector<double> best_history;  // best fitness after each generation
};

GaResult run_ga(const PointHull& hull, const GaConfig& cfg);

/// Per-point piecewise loss: (f-1)^2 on [2, inf), |f-1| on [1, 2), (f-1)^2 + 1/f - 1 on (0, 1).
double loss_term(double f);
/// Derivative of loss_term. Zero within 1e-12 of f = 1 (the kink minimum); right branch at f = 2.
double loss_term_derivative(double f);

double gs_loss(const geometry::Metaball& mb, const PointHull& hull);

/// Loss and its gradient with respect to the (k, x, y, z) parameters of every control point.
struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad;
};
LossGradient gs_loss_gradient(const geometry::Metaball& mb, std::span<const Vec3> points);

struct AnomalyCounts {
  int overflow = 0;  // control point outside the hull
  int sign = 0;      // non-positive weight
};

/// Zeroes the weight of control points outside the hull or with k <= tolerance.
geometry::Metaball anomaly_detect(const geometry::Metaball& mb, const PointHull& hull,
                                  double tolerance = 0.0, AnomalyCounts* counts = nullptr);

struct GsResult {
  geometry::Metaball model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  AnomalyCounts anomalies;
  std::vector<double> loss_history;  // sampled every `history_stride` epochs
};

GsResult run_gs(const geometry::Metaball& start, const PointHull& hull, const GsConfig& cfg,
                int history_stride = 100);

struct FitReport {
  double final_loss = 0.0;
  double ga_fitness = 0.0;
  double mean_abs_residual = 0.0;
  double residual_quartiles[5] = {0, 0, 0, 0, 0};  // min, q1, median, q3, max of |f - 1|
  std::vector<std::pair<double, int>> histogram;    // (upper edge, count)
  AnomalyCounts anomalies;
  std::size_t control_points = 0;
  std::size_t hull_points = 0;
};

struct FitResult {
  geometry::Metaball model;  // in input coordinates
  geometry::Metaball model_centered;
  FitReport report;
  std::vector<double> ga_history;
};

/// preprocess -> run_ga -> run_gs.
FitResult fit_point_cloud(std::span<const Vec3> raw_points, const GaConfig& ga,
                          const GsConfig& gs, const std::optional<Aabb>& region = {});

FitReport make_report(const geometry::Metaball& centered_model, const PointHull& hull);
std::string format_report(const FitReport& report);

}  // namespace midelbm::imaging
