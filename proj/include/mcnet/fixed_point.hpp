#pragma once

#include <Eigen/Core>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcnet::fixed_point {

using Vector = Eigen::VectorXd;
using Map = std::function<Vector(const Vector&)>;

/// Thrown when an iterate or map image contains NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

struct Problem {
  Map map;
  Eigen::Index dim = 0;
};

struct SolverConfig {
  int max_iters = 200;
  /// Threshold on ||F(z) - z|| / (||z|| + 1).
  double tol = 1e-6;
  /// Number of most recent iterates in the Anderson window (including the
  /// current one); 1 means plain iteration.
  int anderson_memory = 5;
  /// Ridge on the least-squares normal equations, relative to their largest
  /// diagonal entry.
  double anderson_ridge = 1e-4;
  double anderson_mixing = 1.0;
  /// Iterations without a 0.1% improvement of the best absolute residual after
  /// which the solve is declared non-convergent; 0 disables the check.
  int stagnation_window = 30;
  /// Relative-residual growth over its running minimum that counts as divergence.
  double divergence_factor = 1e3;
  /// Divergence is also declared when ||z|| exceeds this multiple of
  /// ||z0|| + ||F(z0) - z0|| + 1. For a gamma-contraction the fixed point lies
  /// within ||F(z0) - z0|| / (1 - gamma) of z0, so 1e3 admits gamma <= 0.999.
  /// 0 disables the check.
  double iterate_growth_factor = 1e3;

  void validate() const;
};

enum class Status { converged, max_iters, diverged };
std::string to_string(Status status);

struct SolveReport {
  /// Last iterate z; when converged its relative residual is <= tol.
  Vector solution;
  /// F(solution), the last map evaluation.
  Vector image;
  int iterations = 0;
  std::vector<double> residual_history;
  Status status = Status::max_iters;

  double final_residual() const {
    return residual_history.empty() ? 0.0 : residual_history.back();
  }
};

SolveReport solve_picard(const Problem& problem, const Vector& z0, const SolverConfig& cfg);

/// Type-II Anderson acceleration.
SolveReport solve_anderson(const Problem& problem, const Vector& z0, const SolverConfig& cfg);

/// One Douglas-Rachford step  y/2 + (2 second - I)(2 first - I)(y) / 2.
Vector drs_step(const Map& first, const Map& second, const Vector& y);

/// "iteration,residual" CSV of the residual history.
void write_residual_csv(std::ostream& os, const SolveReport& report);

}  // namespace mcnet::fixed_point
