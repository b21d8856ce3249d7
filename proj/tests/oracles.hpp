#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Everything here works on small problems through dense Eigen matrices.

#include <Eigen/Dense>
#include <functional>
#include <random>

#include "mcnet/implicit_layer.hpp"
#include "mcnet/tensor.hpp"

namespace oracle {

using mcnet::ImageTensor;

inline Eigen::VectorXd to_vec(const ImageTensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data().data(),
                                           static_cast<Eigen::Index>(t.size()));
}

inline ImageTensor from_vec(const Eigen::VectorXd& v, int h, int w, int c = 1) {
  ImageTensor t(h, w, c);
  Eigen::Map<Eigen::VectorXd>(t.data().data(), v.size()) = v;
  return t;
}

inline ImageTensor random_image(std::mt19937_64& rng, int h, int w, int c = 1,
                                double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImageTensor t(h, w, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline ImageTensor gaussian_image(std::mt19937_64& rng, int h, int w, int c = 1) {
  std::normal_distribution<double> n(0.0, 1.0);
  ImageTensor t(h, w, c);
  for (double& v : t.data()) v = n(rng);
  return t;
}

/// Materializes a linear map on (h, w, c) tensors column by column.
inline Eigen::MatrixXd dense(const std::function<ImageTensor(const ImageTensor&)>& f, int h,
                             int w, int c = 1) {
  const int n = h * w * c;
  Eigen::MatrixXd m;
  for (int j = 0; j < n; ++j) {
    ImageTensor e(h, w, c);
    e.data()[j] = 1.0;
    const Eigen::VectorXd col = to_vec(f(e));
    if (j == 0) m.resize(col.size(), n);
    m.col(j) = col;
  }
  return m;
}

/// argmin ||x - q|| s.t. A x = b via the Moore-Penrose pseudo-inverse.
inline Eigen::VectorXd affine_projection(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                         const Eigen::VectorXd& q) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  return q + cod.solve(b - A * q);
}

/// argmin ||x - q|| s.t. ||A x - b|| <= eps, from the SVD of A. With
/// A = U S V^T and e = A q - b, the KKT point has residual
/// U diag(1 / (1 + mu s_i^2)) U^T e; mu is found by bisection to full precision.
inline Eigen::VectorXd ball_projection(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                       const Eigen::VectorXd& q, double eps) {
  const Eigen::VectorXd e = A * q - b;
  if (e.norm() <= eps) return q;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd c = svd.matrixU().transpose() * e;
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(c.size());
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    s2(i) = svd.singularValues()(i) * svd.singularValues()(i);
  auto resid = [&](double mu) {
    return (c.array() / (1.0 + mu * s2.array())).matrix().norm();
  };
  double lo = 0.0, hi = 1.0;
  while (resid(hi) > eps) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (resid(mid) > eps ? lo : hi) = mid;
  }
  const double mu = hi;
  const Eigen::MatrixXd G = Eigen::MatrixXd::Identity(A.rows(), A.rows()) + mu * A * A.transpose();
  return q - mu * A.transpose() * G.ldlt().solve(e);
}

/// Gradients from backpropagating through `steps` explicit applications of the
/// layer map starting at z0, with the loss gradient applied to the x-part of
/// the last iterate.
struct UnrolledGradients {
  mcnet::denoiser::DenoiserParams d_theta;
  double d_beta = 0.0;
  ImageTensor x_last;
};

inline UnrolledGradients unrolled_backprop(
    const mcnet::measurement::MeasurementModel& model,
    const mcnet::denoiser::DenoiserParams& params, const mcnet::layer::LayerConfig& cfg,
    const ImageTensor& w, const mcnet::layer::FixedPointState& z0, int steps,
    const std::function<ImageTensor(const ImageTensor&)>& loss_grad) {
  using namespace mcnet::layer;
  std::vector<StepCache> caches(steps);
  FixedPointState z = z0;
  for (int k = 0; k < steps; ++k) z = f_theta_step(z, cfg, model, params, w, &caches[k]);
  UnrolledGradients out;
  out.x_last = z.x;
  out.d_theta = params.zeros_like();
  FixedPointState s{loss_grad(z.x), ImageTensor(w.height(), w.width())};
  for (int k = steps - 1; k >= 0; --k) {
    const LayerGradients g = step_param_vjp(caches[k], cfg, model, params, w, s);
    out.d_theta.axpy(1.0, g.d_theta);
    out.d_beta += g.d_beta;
    s = step_vjp(caches[k], cfg, model, params, s);
  }
  return out;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace oracle
