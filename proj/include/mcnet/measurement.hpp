#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "mcnet/conv.hpp"
#include "mcnet/tensor.hpp"

namespace mcnet::measurement {

enum class OperatorKind { box_downsample, blur_downsample };
enum class Boundary { circular, replicate };

std::string to_string(OperatorKind kind);
std::string to_string(Boundary boundary);
OperatorKind parse_operator_kind(const std::string& text);
Boundary parse_boundary(const std::string& text);

/// Decimating linear operator A: blur with a kernel, keep every `scale`-th
/// sample. BoxDownsample averages disjoint scale x scale blocks, so its rows
/// are orthogonal with A A^T = I / scale^2.
class DecimationOperator {
 public:
  static DecimationOperator box(int scale);
  /// Arbitrary single-channel blur kernel followed by decimation.
  static DecimationOperator blur(ConvKernel2D kernel, int scale, Boundary boundary);
  /// Anti-aliased bicubic blur (separable, about 4 * scale taps per axis).
  static DecimationOperator bicubic(int scale, Boundary boundary = Boundary::circular);

  ImageTensor apply(const ImageTensor& x) const;
  /// A^T y for an HR image of size hr_h x hr_w.
  ImageTensor adjoint(const ImageTensor& y, int hr_h, int hr_w) const;

  /// c such that A A^T = c I, when the rows are orthogonal with equal norm.
  std::optional<double> gram_scale() const { return gram_scale_; }

  OperatorKind kind() const noexcept { return kind_; }
  Boundary boundary() const noexcept { return boundary_; }
  int scale() const noexcept { return kernel_.stride; }
  const ConvKernel2D& kernel() const noexcept { return kernel_; }
  void check_hr_shape(int hr_h, int hr_w) const;

 private:
  DecimationOperator(OperatorKind kind, Boundary boundary, ConvKernel2D kernel,
                     std::optional<double> gram);
  OperatorKind kind_;
  Boundary boundary_;
  ConvKernel2D kernel_;
  std::optional<double> gram_scale_;
};

/// Serializable description of an operator plus the consistency radius.
struct OperatorSpec {
  OperatorKind kind = OperatorKind::box_downsample;
  int scale = 2;
  Boundary boundary = Boundary::circular;
  double epsilon = 0.0;
  // Custom blur taps (row-major kernel_size x kernel_size); empty selects the
  // bicubic kernel for blur_downsample.
  std::vector<double> taps;
  int kernel_size = 0;

  DecimationOperator build() const;
  std::map<std::string, std::string> to_config() const;
  static OperatorSpec from_config(const std::map<std::string, std::string>& cfg);
};

struct CgConfig {
  double tol = 1e-10;  // relative residual
  int max_iters = 500;
};

/// Feasible set S = { x : ||b - A x||_2 <= epsilon }.
class MeasurementModel {
 public:
  MeasurementModel(DecimationOperator op, ImageTensor b, double epsilon, int hr_h,
                   int hr_w, CgConfig cg = {});

  ImageTensor apply(const ImageTensor& x) const;
  ImageTensor adjoint(const ImageTensor& y) const;
  const DecimationOperator& op() const noexcept { return op_; }
  const ImageTensor& b() const noexcept { return b_; }
  double epsilon() const noexcept { return epsilon_; }
  int hr_height() const noexcept { return hr_h_; }
  int hr_width() const noexcept { return hr_w_; }
  const CgConfig& cg() const noexcept { return cg_; }
  /// ||A x - b||_2
  double residual_norm(const ImageTensor& x) const;
  MeasurementModel with_epsilon(double epsilon) const;
  MeasurementModel with_measurement(ImageTensor b) const;

 private:
  DecimationOperator op_;
  ImageTensor b_;
  double epsilon_;
  int hr_h_, hr_w_;
  CgConfig cg_;
};

/// Conjugate gradients for a symmetric positive definite operator. Throws
/// SolverError (carrying the final relative residual) when the budget runs out.
ImageTensor conjugate_gradient(const std::function<ImageTensor(const ImageTensor&)>& op,
                               const ImageTensor& rhs, const CgConfig& cfg);

/// Projection onto the affine set { x : A x = b } (epsilon is ignored):
/// q + A^T (A A^T)^{-1} (b - A q).
ImageTensor project_affine(const MeasurementModel& model, const ImageTensor& q);

/// Projection onto the ball constraint ||A x - b|| <= epsilon. Falls back to
/// project_affine when epsilon == 0.
ImageTensor project_ball(const MeasurementModel& model, const ImageTensor& q);

/// Projection onto S, dispatching on epsilon.
ImageTensor project(const MeasurementModel& model, const ImageTensor& q);

/// Transposed Jacobian of project(model, .) at q applied to `cotangent`. Both
/// projections have symmetric Jacobians, so this is also the JVP.
ImageTensor projection_vjp(const MeasurementModel& model, const ImageTensor& q,
                           const ImageTensor& cotangent);

}  // namespace mcnet::measurement
