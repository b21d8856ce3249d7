#pragma once

#include <optional>
#include <stdexcept>

#include "mcnet/denoiser.hpp"
#include "mcnet/fixed_point.hpp"
#include "mcnet/measurement.hpp"

namespace mcnet::layer {

using denoiser::DenoiserParams;
using fixed_point::SolveReport;
using fixed_point::SolverConfig;
using measurement::MeasurementModel;

/// Trade-off weight beta, augmented-Lagrangian weight rho and the budgets of
/// the forward and backward fixed-point solves. beta == 0 gives PnP-ADMM.
struct LayerConfig {
  double beta = 1.0;
  double rho = 1.0;
  SolverConfig forward_cfg{.max_iters = 200, .tol = 1e-6};
  SolverConfig backward_cfg{.max_iters = 80, .tol = 1e-6};

  void validate() const;
};

/// Joint ADMM variable z = (x, lambda); lambda is the scaled dual variable.
/// Also used for cotangents and tangents on the joint space.
struct FixedPointState {
  ImageTensor x;
  ImageTensor lambda;
};

/// Intermediates of one step: p = x + lambda, r = R(p), the pre-projection
/// point q and the denoiser tape at p.
struct StepCache {
  ImageTensor p, r, q;
  denoiser::DenoiserTape tape;
};

class LayerError : public std::runtime_error {
 public:
  LayerError(const std::string& what, SolveReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const SolveReport& report() const noexcept { return report_; }

 private:
  SolveReport report_;
};

/// One ADMM step with the denoiser in place of the proximal operator:
///   q  = (beta w + rho (R(x + lambda) - lambda)) / (beta + rho)
///   x+ = P_S[q],   lambda+ = lambda - R(x + lambda) + x+
FixedPointState f_theta_step(const FixedPointState& state, const LayerConfig& cfg,
                             const MeasurementModel& model, const DenoiserParams& params,
                             const ImageTensor& w, StepCache* cache = nullptr);

fixed_point::Vector pack(const FixedPointState& state);
FixedPointState unpack(const fixed_point::Vector& z, int height, int width);

/// (P_S[w], 0)
FixedPointState initial_state(const MeasurementModel& model, const ImageTensor& w);

struct ForwardResult {
  /// x-component of F(z_inf); lies in S exactly (up to inner-solver tolerance).
  ImageTensor x_hat;
  FixedPointState z_inf;
  SolveReport report;
};

/// Anderson-accelerated solve of z = F(z). Throws LayerError on divergence;
/// a MaxIters report is returned to the caller.
ForwardResult forward(const MeasurementModel& model, const DenoiserParams& params,
                      const LayerConfig& cfg, const ImageTensor& w,
                      std::optional<FixedPointState> z0 = std::nullopt);

/// [dF/dz]^T s at the cached point.
FixedPointState step_vjp(const StepCache& cache, const LayerConfig& cfg,
                         const MeasurementModel& model, const DenoiserParams& params,
                         const FixedPointState& s);

/// [dF/dz] v at the cached point.
FixedPointState step_jvp(const StepCache& cache, const LayerConfig& cfg,
                         const MeasurementModel& model, const DenoiserParams& params,
                         const FixedPointState& v);

struct LayerGradients {
  DenoiserParams d_theta;
  double d_beta = 0.0;
  /// d_beta * beta, the gradient for a log-domain beta.
  double d_log_beta = 0.0;
  ImageTensor d_w;
  SolveReport backward_report;
};

/// [dF/d(theta, beta, w)]^T s at the cached point.
LayerGradients step_param_vjp(const StepCache& cache, const LayerConfig& cfg,
                              const MeasurementModel& model, const DenoiserParams& params,
                              const ImageTensor& w, const FixedPointState& s);

/// Implicit-differentiation gradients: solves s = [dF/dz]^T s + (loss_grad, 0)
/// at z_inf by Anderson acceleration, then maps s through [dF/dtheta]^T and
/// dF/dbeta. Throws std::invalid_argument if z_inf is not a fixed point to the
/// forward tolerance and LayerError if the backward solve fails.
LayerGradients backward(const MeasurementModel& model, const DenoiserParams& params,
                        const LayerConfig& cfg, const ImageTensor& w,
                        const FixedPointState& z_inf, const ImageTensor& loss_grad);

/// Spectral norm of dF/dz at `z` by power iteration on J^T J.
double jacobian_spectral_norm(const MeasurementModel& model, const DenoiserParams& params,
                              const LayerConfig& cfg, const ImageTensor& w,
                              const FixedPointState& z, int iters = 30,
                              std::uint64_t seed = 7);

/// PnP-ADMM: the same iteration with beta = 0, started from (P_S[0], 0).
ForwardResult pnp_admm_solve(const MeasurementModel& model, const DenoiserParams& params,
                             double rho, const SolverConfig& budget);

}  // namespace mcnet::layer
