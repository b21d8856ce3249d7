#include "mcnet/fixed_point.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "mcnet/tensor.hpp"

namespace mcnet::fixed_point {
namespace {

constexpr double kStagnationProgress = 1e-3;

struct Entry {
  Vector z, f, g;
};

SolveReport solve(const Problem& problem, const Vector& z0, const SolverConfig& cfg,
                  int memory, double mixing) {
  cfg.validate();
  if (z0.size() != problem.dim) {
    throw DimensionError("fixed point: z0 has dimension " +
                                std::to_string(z0.size()) + ", expected " +
                                std::to_string(problem.dim));
  }
  SolveReport report;
  Vector z = z0;
  std::deque<Entry> window;
  std::vector<double> abs_history;
  double min_rel = std::numeric_limits<double>::infinity();
  double initial_scale = 0.0;

  for (int k = 1; k <= cfg.max_iters; ++k) {
    if (!z.allFinite()) throw NumericError("fixed point: non-finite iterate", k);
    Vector f = problem.map(z);
    if (f.size() != problem.dim) {
      throw DimensionError("fixed point: map changed the dimension");
    }
    if (!f.allFinite()) throw NumericError("fixed point: non-finite map value", k);
    Vector g = f - z;
    const double abs_res = g.norm();
    const double rel = abs_res / (z.norm() + 1.0);
    report.residual_history.push_back(rel);
    abs_history.push_back(abs_res);
    report.iterations = k;
    if (k == 1) initial_scale = z.norm() + abs_res + 1.0;
    // An extrapolated iterate far outside the initial scale can make the
    // relative residual tiny while the absolute one has not improved at all.
    const bool escaped =
        cfg.iterate_growth_factor > 0.0 && z.norm() > cfg.iterate_growth_factor * initial_scale;

    if (rel <= cfg.tol && !escaped) {
      report.status = Status::converged;
      report.solution = std::move(z);
      report.image = std::move(f);
      return report;
    }
    min_rel = std::min(min_rel, rel);
    bool diverged = escaped || rel > cfg.divergence_factor * min_rel;
    const int w = cfg.stagnation_window;
    if (!diverged && w > 0 && k > w) {
      const auto split = abs_history.end() - w;
      const double before = *std::min_element(abs_history.begin(), split);
      const double recent = *std::min_element(split, abs_history.end());
      diverged = recent >= (1.0 - kStagnationProgress) * before;
    }
    if (diverged || k == cfg.max_iters) {
      report.status = diverged ? Status::diverged : Status::max_iters;
      report.solution = std::move(z);
      report.image = std::move(f);
      return report;
    }

    window.push_back({z, f, g});
    if (static_cast<int>(window.size()) > memory) window.pop_front();
    const Eigen::Index n = static_cast<Eigen::Index>(window.size()) - 1;
    if (n == 0) {
      z = mixing * f + (1.0 - mixing) * z;
      continue;
    }
    Eigen::MatrixXd dg(problem.dim, n), df(problem.dim, n), dz(problem.dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dg.col(i) = window[i + 1].g - window[i].g;
      df.col(i) = window[i + 1].f - window[i].f;
      dz.col(i) = window[i + 1].z - window[i].z;
    }
    Eigen::MatrixXd gram = dg.transpose() * dg;
    const double scale = std::max(gram.diagonal().maxCoeff(), std::numeric_limits<double>::min());
    gram.diagonal().array() += cfg.anderson_ridge * scale;
    const Vector gamma = gram.ldlt().solve(dg.transpose() * g);
    if (!gamma.allFinite()) {
      z = mixing * f + (1.0 - mixing) * z;
      continue;
    }
    Vector next = mixing * (f - df * gamma);
    if (mixing < 1.0) next += (1.0 - mixing) * (z - dz * gamma);
    z = std::move(next);
  }
  // Only reached when max_iters == 0 is rejected by validate(); kept for completeness.
  report.solution = z;
  report.image = z;
  return report;
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be > 0");
  if (anderson_memory < 1) throw std::invalid_argument("SolverConfig: anderson_memory >= 1");
  if (!(anderson_mixing > 0.0 && anderson_mixing <= 1.0)) {
    throw std::invalid_argument("SolverConfig: anderson_mixing must be in (0, 1]");
  }
  if (anderson_ridge < 0.0) throw std::invalid_argument("SolverConfig: anderson_ridge >= 0");
  if (stagnation_window < 0) throw std::invalid_argument("SolverConfig: stagnation_window >= 0");
  if (iterate_growth_factor < 0.0) {
    throw std::invalid_argument("SolverConfig: iterate_growth_factor >= 0");
  }
}

std::string to_string(Status status) {
  switch (status) {
    case Status::converged:
      return "Converged";
    case Status::max_iters:
      return "MaxIters";
    case Status::diverged:
      return "Diverged";
  }
  return "?";
}

SolveReport solve_picard(const Problem& problem, const Vector& z0, const SolverConfig& cfg) {
  return solve(problem, z0, cfg, 1, 1.0);
}

SolveReport solve_anderson(const Problem& problem, const Vector& z0, const SolverConfig& cfg) {
  return solve(problem, z0, cfg, cfg.anderson_memory, cfg.anderson_mixing);
}

Vector drs_step(const Map& first, const Map& second, const Vector& y) {
  const Vector a = first(y);
  if (a.size() != y.size()) throw DimensionError("drs_step: first map changed dimension");
  const Vector reflected = 2.0 * a - y;
  const Vector b = second(reflected);
  if (b.size() != y.size()) throw DimensionError("drs_step: second map changed dimension");
  return 0.5 * y + 0.5 * (2.0 * b - reflected);
}

void write_residual_csv(std::ostream& os, const SolveReport& report) {
  os << "iteration,residual\n";
  os.precision(17);
  for (std::size_t i = 0; i < report.residual_history.size(); ++i)
    os << i + 1 << "," << report.residual_history[i] << "\n";
}

}  // namespace mcnet::fixed_point
