#include "mcnet/implicit_layer.hpp"

#include <cmath>
#include <random>

namespace mcnet::layer {
namespace {

using fixed_point::Status;
using fixed_point::Vector;

void check_shapes(const MeasurementModel& model, const ImageTensor& t, const char* what) {
  if (t.channels() != 1 || t.height() != model.hr_height() || t.width() != model.hr_width()) {
    throw DimensionError(std::string(what) + " " + t.shape_string() +
                         " does not match the HR shape");
  }
}

double relative_residual(const FixedPointState& z, const FixedPointState& fz) {
  const Vector a = pack(z);
  return (pack(fz) - a).norm() / (a.norm() + 1.0);
}

}  // namespace

void LayerConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be >= 0");
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("rho must be > 0");
  forward_cfg.validate();
  backward_cfg.validate();
}

FixedPointState f_theta_step(const FixedPointState& state, const LayerConfig& cfg,
                             const MeasurementModel& model, const DenoiserParams& params,
                             const ImageTensor& w, StepCache* cache) {
  check_shapes(model, state.x, "x");
  check_shapes(model, state.lambda, "lambda");
  check_shapes(model, w, "w");
  const double denom = cfg.beta + cfg.rho;
  ImageTensor p = state.x + state.lambda;
  auto [r, tape] = denoiser::forward(params, p);
  // q = (beta w + rho (r - lambda)) / (beta + rho)
  ImageTensor q = (cfg.rho / denom) * (r - state.lambda);
  q.axpy(cfg.beta / denom, w);
  FixedPointState next;
  next.x = measurement::project(model, q);
  next.lambda = state.lambda - r + next.x;
  if (cache) {
    cache->p = std::move(p);
    cache->r = std::move(r);
    cache->q = std::move(q);
    cache->tape = std::move(tape);
  }
  return next;
}

Vector pack(const FixedPointState& state) {
  const auto n = static_cast<Eigen::Index>(state.x.size());
  if (state.lambda.size() != state.x.size()) throw DimensionError("pack: x/lambda mismatch");
  Vector z(2 * n);
  z.head(n) = Eigen::Map<const Vector>(state.x.data().data(), n);
  z.tail(n) = Eigen::Map<const Vector>(state.lambda.data().data(), n);
  return z;
}

FixedPointState unpack(const Vector& z, int height, int width) {
  const auto n = static_cast<Eigen::Index>(height) * width;
  if (z.size() != 2 * n) throw DimensionError("unpack: joint vector has the wrong size");
  FixedPointState s{ImageTensor(height, width), ImageTensor(height, width)};
  Eigen::Map<Vector>(s.x.data().data(), n) = z.head(n);
  Eigen::Map<Vector>(s.lambda.data().data(), n) = z.tail(n);
  return s;
}

FixedPointState initial_state(const MeasurementModel& model, const ImageTensor& w) {
  check_shapes(model, w, "w");
  return {measurement::project(model, w), ImageTensor(w.height(), w.width())};
}

ForwardResult forward(const MeasurementModel& model, const DenoiserParams& params,
                      const LayerConfig& cfg, const ImageTensor& w,
                      std::optional<FixedPointState> z0) {
  cfg.validate();
  check_shapes(model, w, "w");
  const int h = w.height(), wd = w.width();
  const FixedPointState start = z0 ? std::move(*z0) : initial_state(model, w);
  fixed_point::Problem problem{
      [&](const Vector& z) {
        return pack(f_theta_step(unpack(z, h, wd), cfg, model, params, w));
      },
      2 * static_cast<Eigen::Index>(w.size())};
  SolveReport report = fixed_point::solve_anderson(problem, pack(start), cfg.forward_cfg);
  if (report.status == Status::diverged) {
    throw LayerError("implicit layer: forward solve diverged after " +
                         std::to_string(report.iterations) + " iterations",
                     std::move(report));
  }
  ForwardResult out;
  out.z_inf = unpack(report.solution, h, wd);
  out.x_hat = unpack(report.image, h, wd).x;
  out.report = std::move(report);
  return out;
}

FixedPointState step_vjp(const StepCache& cache, const LayerConfig& cfg,
                         const MeasurementModel& model, const DenoiserParams& params,
                         const FixedPointState& s) {
  const double a = cfg.rho / (cfg.beta + cfg.rho);
  const ImageTensor gq = measurement::projection_vjp(model, cache.q, s.x + s.lambda);
  ImageTensor gr = a * gq;
  gr -= s.lambda;
  ImageTensor gp = denoiser::vjp_input(params, cache.tape, gr);
  FixedPointState out;
  out.lambda = gp;
  out.lambda.axpy(-a, gq);
  out.lambda += s.lambda;
  out.x = std::move(gp);
  return out;
}

FixedPointState step_jvp(const StepCache& cache, const LayerConfig& cfg,
                         const MeasurementModel& model, const DenoiserParams& params,
                         const FixedPointState& v) {
  const double a = cfg.rho / (cfg.beta + cfg.rho);
  const ImageTensor dr = denoiser::jvp_input(params, cache.tape, v.x + v.lambda);
  const ImageTensor dq = a * (dr - v.lambda);
  FixedPointState out;
  out.x = measurement::projection_vjp(model, cache.q, dq);
  out.lambda = v.lambda - dr + out.x;
  return out;
}

LayerGradients step_param_vjp(const StepCache& cache, const LayerConfig& cfg,
                              const MeasurementModel& model, const DenoiserParams& params,
                              const ImageTensor& w, const FixedPointState& s) {
  const double denom = cfg.beta + cfg.rho;
  const ImageTensor gq = measurement::projection_vjp(model, cache.q, s.x + s.lambda);
  ImageTensor gr = (cfg.rho / denom) * gq;
  gr -= s.lambda;
  LayerGradients g;
  g.d_theta = denoiser::vjp_params(params, cache.tape, gr);
  // dq/dbeta = (w - q) / (beta + rho)
  g.d_beta = dot(gq, w - cache.q) / denom;
  g.d_log_beta = g.d_beta * cfg.beta;
  g.d_w = (cfg.beta / denom) * gq;
  return g;
}

LayerGradients backward(const MeasurementModel& model, const DenoiserParams& params,
                        const LayerConfig& cfg, const ImageTensor& w,
                        const FixedPointState& z_inf, const ImageTensor& loss_grad) {
  cfg.validate();
  check_shapes(model, loss_grad, "loss_grad");
  const int h = w.height(), wd = w.width();
  StepCache cache;
  const FixedPointState fz = f_theta_step(z_inf, cfg, model, params, w, &cache);
  const double residual = relative_residual(z_inf, fz);
  if (residual > cfg.forward_cfg.tol * (1.0 + 1e-9)) {
    throw std::invalid_argument("implicit layer backward: z_inf residual " +
                                std::to_string(residual) + " exceeds the forward tolerance");
  }

  const double scale = norm(loss_grad);
  if (scale == 0.0) {
    LayerGradients zero;
    zero.d_theta = params.zeros_like();
    zero.d_w = ImageTensor(h, wd);
    zero.backward_report.status = Status::converged;
    return zero;
  }
  // The adjoint system is linear; solve it for the unit-norm cotangent so the
  // relative tolerance does not depend on the loss scale.
  const Vector rhs = pack({(1.0 / scale) * loss_grad, ImageTensor(h, wd)});
  fixed_point::Problem problem{
      [&](const Vector& s) {
        return Vector(pack(step_vjp(cache, cfg, model, params, unpack(s, h, wd))) + rhs);
      },
      rhs.size()};
  SolveReport report = fixed_point::solve_anderson(problem, rhs, cfg.backward_cfg);
  if (report.status != Status::converged) {
    throw LayerError("implicit layer: backward solve " + fixed_point::to_string(report.status),
                     std::move(report));
  }
  FixedPointState s = unpack(report.image, h, wd);
  s.x *= scale;
  s.lambda *= scale;
  LayerGradients g = step_param_vjp(cache, cfg, model, params, w, s);
  g.backward_report = std::move(report);
  return g;
}

double jacobian_spectral_norm(const MeasurementModel& model, const DenoiserParams& params,
                              const LayerConfig& cfg, const ImageTensor& w,
                              const FixedPointState& z, int iters, std::uint64_t seed) {
  StepCache cache;
  f_theta_step(z, cfg, model, params, w, &cache);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FixedPointState v{ImageTensor(w.height(), w.width()), ImageTensor(w.height(), w.width())};
  for (double& t : v.x.data()) t = normal(rng);
  for (double& t : v.lambda.data()) t = normal(rng);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    const Vector vv = pack(v);
    const double nv = vv.norm();
    if (nv == 0.0) return 0.0;
    v = unpack(vv / nv, w.height(), w.width());
    const FixedPointState jv = step_jvp(cache, cfg, model, params, v);
    sigma = pack(jv).norm();
    v = step_vjp(cache, cfg, model, params, jv);
  }
  return sigma;
}

ForwardResult pnp_admm_solve(const MeasurementModel& model, const DenoiserParams& params,
                             double rho, const SolverConfig& budget) {
  LayerConfig cfg;
  cfg.beta = 0.0;
  cfg.rho = rho;
  cfg.forward_cfg = budget;
  const ImageTensor w(model.hr_height(), model.hr_width());
  return forward(model, params, cfg, w);
}

}  // namespace mcnet::layer
