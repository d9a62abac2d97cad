#include <algorithm>
#include <cmath>

#include "midelbm/imaging.hpp"

namespace midelbm::imaging {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kPivotTol = 1e-12;

}  // namespace

double PointHull::bounding_radius() const {
  double r = 0.0;
  for (const auto& p : points) r = std::max(r, p.norm());
  return r;
}

PointHull preprocess(std::span<const Vec3> raw_points, const std::optional<Aabb>& region) {
  if (raw_points.empty()) throw Error("preprocess: no points");
  PointHull hull;
  for (const auto& p : raw_points) {
    if (!p.allFinite()) throw Error("preprocess: non-finite point");
    if (region && !region->contains(p)) continue;
    hull.points.push_back(p);
  }
  if (hull.points.size() < 4)
    throw Error("preprocess: fewer than 4 points survive the region filter");

  Vec3 mean = Vec3::Zero();
  for (const auto& p : hull.points) mean += p;
  mean /= static_cast<double>(hull.points.size());
  for (auto& p : hull.points) p -= mean;
  hull.centroid_offset = mean;

  Mat3 cov = Mat3::Zero();
  for (const auto& p : hull.points) cov.noalias() += p * p.transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * lmax)
    throw Error("preprocess: point cloud is degenerate (coplanar or collinear)");
  return hull;
}

HullMembership::HullMembership(const PointHull& hull) {
  if (hull.points.size() < 4) throw Error("point_in_hull: hull has fewer than 4 points");
  scale_ = hull.bounding_radius();
  if (!(scale_ > 0.0)) scale_ = 1.0;
  scaled_.reserve(hull.points.size());
  for (const auto& p : hull.points) scaled_.push_back(p / scale_);
}

// Phase-1 simplex on  [x_j; y_j; z_j; 1] a = [p; 1],  a >= 0, with four artificial
// variables as the starting basis. Bland's rule keeps the iteration finite.
bool HullMembership::contains(const Vec3& p) {
  const int m = static_cast<int>(scaled_.size());
  const int cols = m + 4 + 1;  // structural, artificial, rhs
  tableau_.assign(static_cast<std::size_t>(4) * cols, 0.0);
  basis_.assign(4, 0);
  auto at = [&](int r, int c) -> double& { return tableau_[static_cast<std::size_t>(r) * cols + c]; };

  const Vec3 q = p / scale_;
  const double rhs[4] = {q.x(), q.y(), q.z(), 1.0};
  for (int r = 0; r < 4; ++r) {
    const double sign = rhs[r] < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < m; ++j) at(r, j) = sign * (r < 3 ? scaled_[j][r] : 1.0);
    at(r, m + r) = 1.0;
    at(r, cols - 1) = sign * rhs[r];
    basis_[r] = m + r;
  }

  for (int iter = 0; iter < 50 * (m + 4); ++iter) {
    // Reduced cost of column j for the objective sum(artificials): -sum over artificial rows.
    int enter = -1;
    for (int j = 0; j < m + 4 && enter < 0; ++j) {
      if (std::find(basis_.begin(), basis_.end(), j) != basis_.end()) continue;
      double rc = (j >= m) ? 1.0 : 0.0;
      for (int r = 0; r < 4; ++r)
        if (basis_[r] >= m) rc -= at(r, j);
      if (rc < -kPivotTol) enter = j;
    }
    if (enter < 0) break;

    int leave = -1;
    double best = kInf;
    for (int r = 0; r < 4; ++r) {
      const double a = at(r, enter);
      if (a <= kPivotTol) continue;
      const double ratio = at(r, cols - 1) / a;
      if (ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && leave >= 0 &&
                                   basis_[r] < basis_[leave])) {
        best = ratio;
        leave = r;
      }
    }
    if (leave < 0) break;  // unbounded direction cannot occur for a phase-1 objective

    const double piv = at(leave, enter);
    for (int c = 0; c < cols; ++c) at(leave, c) /= piv;
    for (int r = 0; r < 4; ++r) {
      if (r == leave) continue;
      const double factor = at(r, enter);
      if (factor == 0.0) continue;
      for (int c = 0; c < cols; ++c) at(r, c) -= factor * at(leave, c);
    }
    basis_[leave] = enter;
  }

  double infeasibility = 0.0;
  for (int r = 0; r < 4; ++r)
    if (basis_[r] >= m) infeasibility += std::abs(at(r, cols - 1));
  return infeasibility <= kFeasTol;
}

bool point_in_hull(const PointHull& hull, const Vec3& p) {
  HullMembership lp(hull);
  return lp.contains(p);
}

}  // namespace midelbm::imaging
