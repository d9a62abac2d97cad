#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "midelbm/imaging.hpp"

namespace midelbm::imaging {

namespace {

constexpr double kKinkBand = 1e-12;
constexpr int kDivergenceEpochs = 100;

geometry::Metaball scaled(const geometry::Metaball& mb, double s) {
  geometry::Metaball out = mb;
  for (auto& cp : out.control_points) {
    cp.position *= s;
    cp.weight *= s * s;
  }
  out.sphero_radius *= s;
  return out;
}

geometry::Metaball strip_zero_weights(const geometry::Metaball& mb) {
  geometry::Metaball out = mb;
  out.control_points.clear();
  for (const auto& cp : mb.control_points)
    if (cp.weight > 0.0) out.control_points.push_back(cp);
  return out;
}

double loss_over(const geometry::Metaball& mb, std::span<const Vec3> points) {
  double total = 0.0;
  for (const auto& p : points) total += loss_term(geometry::evaluate_unchecked(mb, p));
  return total;
}

}  // namespace

void GsConfig::validate() const {
  if (epochs < 1) throw Error("GS config: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("GS config: learning rate must be > 0");
}

double loss_term(double f) {
  if (!(f > 0.0)) return kInf;
  if (f >= 2.0) return (f - 1.0) * (f - 1.0);
  if (f >= 1.0) return f - 1.0;
  return (f - 1.0) * (f - 1.0) + 1.0 / f - 1.0;
}

double loss_term_derivative(double f) {
  if (!(f > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (std::abs(f - 1.0) <= kKinkBand) return 0.0;
  if (f >= 2.0) return 2.0 * (f - 1.0);
  if (f > 1.0) return 1.0;
  return 2.0 * (f - 1.0) - 1.0 / (f * f);
}

double gs_loss(const geometry::Metaball& mb, const PointHull& hull) {
  return loss_over(mb, hull.points);
}

LossGradient gs_loss_gradient(const geometry::Metaball& mb, std::span<const Vec3> points) {
  const std::size_t n = mb.control_points.size();
  LossGradient out;
  out.grad.assign(4 * n, 0.0);
  std::vector<double> inv_r2(n);
  for (const auto& p : points) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r2 = (p - mb.control_points[i].position).squaredNorm();
      inv_r2[i] = r2 > 0.0 ? 1.0 / r2 : kInf;
      f += mb.control_points[i].weight * inv_r2[i];
    }
    out.loss += loss_term(f);
    const double dl = loss_term_derivative(f);
    if (dl == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& cp = mb.control_points[i];
      double* g = out.grad.data() + 4 * i;
      g[0] += dl * inv_r2[i];
      // df/dx_i = 2 k (p - x_i) / r^4
      const double c = dl * 2.0 * cp.weight * inv_r2[i] * inv_r2[i];
      g[1] += c * (p.x() - cp.position.x());
      g[2] += c * (p.y() - cp.position.y());
      g[3] += c * (p.z() - cp.position.z());
    }
  }
  return out;
}

geometry::Metaball anomaly_detect(const geometry::Metaball& mb, const PointHull& hull,
                                  double tolerance, AnomalyCounts* counts) {
  HullMembership inside(hull);
  geometry::Metaball out = mb;
  AnomalyCounts local;
  bool any_left = false;
  for (auto& cp : out.control_points) {
    if (cp.weight == 0.0) continue;  // already cleared
    if (cp.weight <= tolerance) {
      ++local.sign;
      cp.weight = 0.0;
      continue;
    }
    if (!inside.contains(cp.position)) {
      ++local.overflow;
      cp.weight = 0.0;
      continue;
    }
    any_left = true;
  }
  if (counts) {
    counts->overflow += local.overflow;
    counts->sign += local.sign;
  }
  if (!any_left) throw Error("anomaly_detect: every control point is anomalous");
  return out;
}

GsResult run_gs(const geometry::Metaball& start, const PointHull& hull, const GsConfig& cfg,
                int history_stride) {
  cfg.validate();
  if (start.control_points.empty()) throw Error("run_gs: start model has no control points");
  const double rh = hull.bounding_radius();
  if (!(rh > 0.0)) throw Error("run_gs: degenerate hull");

  // Work in units of the hull radius so the learning rate does not depend on physical size.
  PointHull unit_hull;
  unit_hull.points.reserve(hull.points.size());
  for (const auto& p : hull.points) unit_hull.points.push_back(p / rh);
  const double inv_m = 1.0 / static_cast<double>(hull.points.size());

  GsResult result;
  result.initial_loss = gs_loss(start, hull);
  if (!std::isfinite(result.initial_loss))
    throw Error("run_gs: start model has an infinite loss (zero field at a hull point)");

  auto descend = [&](geometry::Metaball model, const std::vector<bool>& frozen) {
    geometry::Metaball best = model;
    double best_loss = kInf;
    double prev = kInf;
    int rising = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const LossGradient lg = gs_loss_gradient(model, unit_hull.points);
      if (!std::isfinite(lg.loss))
        throw Error("run_gs: loss became non-finite; reduce the learning rate");
      if (lg.loss < best_loss) {
        best_loss = lg.loss;
        best = model;
      }
      rising = (lg.loss > prev) ? rising + 1 : 0;
      if (rising >= kDivergenceEpochs)
        throw Error("run_gs: loss increased for 100 consecutive epochs; reduce the learning rate");
      prev = lg.loss;
      if (history_stride > 0 && epoch % history_stride == 0) result.loss_history.push_back(lg.loss);
      for (std::size_t i = 0; i < model.control_points.size(); ++i) {
        if (frozen[i]) continue;
        auto& cp = model.control_points[i];
        const double* g = lg.grad.data() + 4 * i;
        const double step = cfg.learning_rate * inv_m;
        cp.weight -= step * g[0];
        cp.position.x() -= step * g[1];
        cp.position.y() -= step * g[2];
        cp.position.z() -= step * g[3];
      }
    }
    const double last = loss_over(model, unit_hull.points);
    if (last < best_loss) best = model;
    return best;
  };

  geometry::Metaball model = scaled(start, 1.0 / rh);
  model.sphero_radius = start.sphero_radius / rh;

  model = descend(model, std::vector<bool>(model.control_points.size(), false));
  model = anomaly_detect(model, unit_hull, cfg.anomaly_tolerance, &result.anomalies);
  std::vector<bool> frozen(model.control_points.size());
  for (std::size_t i = 0; i < frozen.size(); ++i) frozen[i] = model.control_points[i].weight == 0.0;
  model = descend(model, frozen);
  model = anomaly_detect(model, unit_hull, cfg.anomaly_tolerance, &result.anomalies);

  geometry::Metaball refined = strip_zero_weights(scaled(model, rh));
  refined.sphero_radius = start.sphero_radius;
  refined.surface_level = start.surface_level;
  double refined_loss = gs_loss(refined, hull);
  if (refined_loss > result.initial_loss) {
    // Never hand back something worse than the warm start when the start itself is clean.
    AnomalyCounts ignored;
    try {
      geometry::Metaball fallback = strip_zero_weights(anomaly_detect(start, hull, cfg.anomaly_tolerance, &ignored));
      const double fallback_loss = gs_loss(fallback, hull);
      if (fallback_loss < refined_loss) {
        refined = fallback;
        refined_loss = fallback_loss;
      }
    } catch (const Error&) {
    }
  }
  result.model = refined;
  result.final_loss = refined_loss;
  return result;
}

FitReport make_report(const geometry::Metaball& centered_model, const PointHull& hull) {
  FitReport rep;
  rep.final_loss = gs_loss(centered_model, hull);
  rep.hull_points = hull.points.size();
  rep.control_points = centered_model.control_points.size();
  std::vector<double> res;
  res.reserve(hull.points.size());
  for (const auto& p : hull.points)
    res.push_back(std::abs(geometry::evaluate_unchecked(centered_model, p) - 1.0));
  double sum = 0.0;
  for (double r : res) sum += r;
  rep.mean_abs_residual = res.empty() ? 0.0 : sum / static_cast<double>(res.size());
  std::vector<double> sorted = res;
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty()) {
    for (int q = 0; q <= 4; ++q) {
      const double pos = 0.25 * q * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      rep.residual_quartiles[q] = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    }
  }
  const double edges[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, kInf};
  for (double e : edges) rep.histogram.emplace_back(e, 0);
  for (double r : res) {
    for (auto& [edge, count] : rep.histogram) {
      if (r < edge) {
        ++count;
        break;
      }
    }
  }
  return rep;
}

std::string format_report(const FitReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "final_loss " << r.final_loss << '\n';
  os << "ga_fitness " << r.ga_fitness << '\n';
  os << "hull_points " << r.hull_points << '\n';
  os << "control_points " << r.control_points << '\n';
  os << "mean_abs_residual " << r.mean_abs_residual << '\n';
  os << "residual_quartiles";
  for (double q : r.residual_quartiles) os << ' ' << q;
  os << '\n';
  os << "anomalies_overflow " << r.anomalies.overflow << '\n';
  os << "anomalies_sign " << r.anomalies.sign << '\n';
  for (const auto& [edge, count] : r.histogram) {
    os << "histogram_lt ";
    if (std::isinf(edge))
      os << "inf";
    else
      os << edge;
    os << ' ' << count << '\n';
  }
  return os.str();
}

FitResult fit_point_cloud(std::span<const Vec3> raw_points, const GaConfig& ga,
                          const GsConfig& gs, const std::optional<Aabb>& region) {
  const PointHull hull = preprocess(raw_points, region);
  const GaResult gar = run_ga(hull, ga);
  const GsResult gsr = run_gs(gar.best, hull, gs);
  FitResult out;
  out.model_centered = gsr.model;
  out.model = gsr.model.translated(hull.centroid_offset);
  out.report = make_report(gsr.model, hull);
  out.report.ga_fitness = gar.best_fitness;
  out.report.anomalies = gsr.anomalies;
  out.ga_history = gar.best_history;
  return out;
}

}  // namespace midelbm::imaging
