#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "midelbm/imaging.hpp"

namespace midelbm::imaging {

namespace {

constexpr int kMaxRejections = 10000;
constexpr double kMutationScale = 0.05;

}  // namespace

void GaConfig::validate() const {
  if (generations < 1 || population < 1 || genes < 1)
    throw Error("GA config: generations, population and genes must be >= 1");
  if (genes < 4) throw Error("GA config: genes must be >= 4 (one control point is 4 genes)");
  if (!(mutation_coeff >= 0.0 && mutation_coeff <= 1.0))
    throw Error("GA config: mutation coefficient must be in [0, 1]");
  if (!(crossover_coeff > 0.0 && crossover_coeff < 1.0))
    throw Error("GA config: crossover coefficient must be in (0, 1)");
}

geometry::Metaball decode(std::span<const double> genes) {
  geometry::Metaball mb;
  const std::size_t n = genes.size() / 4;
  mb.control_points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = genes.data() + 4 * i;
    mb.control_points.push_back({Vec3(g[1], g[2], g[3]), g[0]});
  }
  return mb;
}

std::vector<double> encode(const geometry::Metaball& mb) {
  std::vector<double> genes;
  genes.reserve(4 * mb.control_points.size());
  for (const auto& cp : mb.control_points) {
    genes.push_back(cp.weight);
    genes.push_back(cp.position.x());
    genes.push_back(cp.position.y());
    genes.push_back(cp.position.z());
  }
  return genes;
}

double fitness(std::span<const double> genes, const PointHull& hull) {
  const std::size_t n = genes.size() / 4;
  double total = 0.0;
  for (const auto& h : hull.points) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = genes.data() + 4 * i;
      const double dx = h.x() - g[1];
      const double dy = h.y() - g[2];
      const double dz = h.z() - g[3];
      const double r2 = dx * dx + dy * dy + dz * dz;
      if (r2 == 0.0) return kInf;
      f += g[0] / r2;
    }
    total += (f - 1.0) * (f - 1.0);
  }
  return total;
}

double fitness(const geometry::Metaball& mb, const PointHull& hull) {
  const auto genes = encode(mb);
  return fitness(genes, hull);
}

GaResult run_ga(const PointHull& hull, const GaConfig& cfg) {
  cfg.validate();
  HullMembership inside(hull);
  const double rh = hull.bounding_radius();
  if (!(rh > 0.0)) throw Error("run_ga: degenerate hull");
  Aabb box;
  for (const auto& p : hull.points) box.expand(p);

  const int n_cp = cfg.genes / 4;
  const int n_genes = 4 * n_cp;
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Initialization: control points by rejection sampling against the hull LP.
  std::vector<Individual> pop(static_cast<std::size_t>(cfg.population));
  int rejections = 0;
  for (auto& ind : pop) {
    ind.genes.resize(static_cast<std::size_t>(n_genes));
    for (int c = 0; c < n_cp; ++c) {
      Vec3 p;
      for (;;) {
        p = box.lo + Vec3(unit(rng), unit(rng), unit(rng)).cwiseProduct(box.extent());
        if (inside.contains(p)) break;
        if (++rejections > kMaxRejections)
          throw Error("run_ga: could not sample control points inside the hull");
      }
      rejections = 0;
      double* g = ind.genes.data() + 4 * c;
      g[0] = rh * rh * (1.0 - unit(rng)) / n_cp;  // (0, r_h^2 / n]
      g[1] = p.x();
      g[2] = p.y();
      g[3] = p.z();
    }
  }

  auto evaluate_all = [&](std::vector<Individual>& group) {
    const long n = static_cast<long>(group.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) group[i].fitness = fitness(group[i].genes, hull);
  };
  evaluate_all(pop);

  int cut = static_cast<int>(std::floor(cfg.crossover_coeff * n_genes));
  cut = (cut / 4) * 4;
  cut = std::clamp(cut, 4, std::max(4, n_genes - 4));

  GaResult result;
  result.best_history.reserve(static_cast<std::size_t>(cfg.generations));
  std::vector<Individual> offspring(pop.size());
  std::vector<std::size_t> order(pop.size());
  std::vector<Individual> pool;
  pool.reserve(2 * pop.size());

  for (int gen = 0; gen < cfg.generations; ++gen) {
    // Mutation: each gene changes with probability C_m.
    for (std::size_t i = 0; i < pop.size(); ++i) {
      offspring[i].genes = pop[i].genes;
      auto& g = offspring[i].genes;
      for (int j = 0; j < n_genes; ++j) {
        if (unit(rng) >= cfg.mutation_coeff) continue;
        const double sigma = (j % 4 == 0) ? kMutationScale * std::abs(g[j]) : kMutationScale * rh;
        g[j] += sigma * normal(rng);
      }
    }
    // Crossover: random pairs swap everything after the cut.
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    if (n_cp > 1) {
      for (std::size_t i = 0; i + 1 < order.size(); i += 2) {
        auto& a = offspring[order[i]].genes;
        auto& b = offspring[order[i + 1]].genes;
        std::swap_ranges(a.begin() + cut, a.end(), b.begin() + cut);
      }
    }
    evaluate_all(offspring);

    // Selection: elitist truncation over parents and offspring.
    pool.clear();
    pool.insert(pool.end(), pop.begin(), pop.end());
    pool.insert(pool.end(), offspring.begin(), offspring.end());
    std::stable_sort(pool.begin(), pool.end(), [](const Individual& a, const Individual& b) {
      return a.fitness < b.fitness;
    });
    std::copy(pool.begin(), pool.begin() + static_cast<long>(pop.size()), pop.begin());
    result.best_history.push_back(pop.front().fitness);
  }

  result.best = decode(pop.front().genes);
  result.best_fitness = pop.front().fitness;
  return result;
}

}  // namespace midelbm::imaging
