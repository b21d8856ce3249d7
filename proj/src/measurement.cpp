#include "mcnet/measurement.hpp"

#include <cmath>
#include <sstream>

#include "mcnet/resize.hpp"

namespace mcnet::measurement {
namespace {

// Bisection stops once the residual norm is within this of epsilon (feasible side).
constexpr double kBallTol = 1e-12;
constexpr int kMaxBracketDoublings = 200;
constexpr int kMaxBisections = 200;

struct BallSolution {
  ImageTensor x;
  double mu = 0.0;  // KKT multiplier; 0 when the constraint is inactive
  bool active = false;
};

// Residual y(mu) = (I + mu A A^T)^{-1} e; the KKT point is x = q - mu A^T y and
// satisfies A x - b = y.
ImageTensor shifted_gram_solve(const MeasurementModel& m, double mu, const ImageTensor& e) {
  return conjugate_gradient(
      [&](const ImageTensor& y) {
        ImageTensor out = y;
        out.axpy(mu, m.apply(m.adjoint(y)));
        return out;
      },
      e, m.cg());
}

BallSolution solve_ball(const MeasurementModel& m, const ImageTensor& q) {
  ImageTensor e = m.apply(q) - m.b();
  const double r = norm(e);
  const double eps = m.epsilon();
  if (r <= eps) return {q, 0.0, false};

  if (auto c = m.op().gram_scale()) {
    const double kappa = 1.0 - eps / r;
    ImageTensor x = q;
    x.axpy(-kappa / *c, m.adjoint(e));
    return {std::move(x), (r / eps - 1.0) / *c, true};
  }

  auto residual = [&](double mu) { return norm(shifted_gram_solve(m, mu, e)); };
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (residual(hi) > eps) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > kMaxBracketDoublings) {
      throw SolverError("project_ball: could not bracket the multiplier", residual(hi));
    }
  }
  double mu = hi;
  for (int it = 0; it < kMaxBisections; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double phi = residual(mid);
    if (phi > eps) {
      lo = mid;
    } else {
      hi = mid;
      if (eps - phi <= kBallTol) break;
    }
    if (hi - lo <= 1e-15 * hi) break;
  }
  mu = hi;
  const ImageTensor y = shifted_gram_solve(m, mu, e);
  ImageTensor x = q;
  x.axpy(-mu, m.adjoint(y));
  return {std::move(x), mu, true};
}

// (A A^T)^{-1} v
ImageTensor gram_solve(const MeasurementModel& m, const ImageTensor& v) {
  if (auto c = m.op().gram_scale()) return (1.0 / *c) * v;
  return conjugate_gradient([&](const ImageTensor& y) { return m.apply(m.adjoint(y)); }, v,
                            m.cg());
}

}  // namespace

std::string to_string(OperatorKind kind) {
  return kind == OperatorKind::box_downsample ? "box" : "blur";
}

std::string to_string(Boundary boundary) {
  return boundary == Boundary::circular ? "circular" : "replicate";
}

OperatorKind parse_operator_kind(const std::string& text) {
  if (text == "box" || text == "box_downsample") return OperatorKind::box_downsample;
  if (text == "blur" || text == "bicubic" || text == "blur_downsample")
    return OperatorKind::blur_downsample;
  throw std::invalid_argument("unknown operator kind '" + text + "'");
}

Boundary parse_boundary(const std::string& text) {
  if (text == "circular") return Boundary::circular;
  if (text == "replicate") return Boundary::replicate;
  throw std::invalid_argument("unknown boundary '" + text + "'");
}

DecimationOperator::DecimationOperator(OperatorKind kind, Boundary boundary,
                                       ConvKernel2D kernel, std::optional<double> gram)
    : kind_(kind), boundary_(boundary), kernel_(std::move(kernel)), gram_scale_(gram) {}

DecimationOperator DecimationOperator::box(int scale) {
  if (scale < 1) throw DimensionError("box operator: scale must be >= 1");
  ConvKernel2D k(scale, scale, 1, 1, scale, Padding::circular);
  k.anchor_y = k.anchor_x = 0;
  std::fill(k.taps.begin(), k.taps.end(), 1.0 / (scale * scale));
  return DecimationOperator(OperatorKind::box_downsample, Boundary::circular, std::move(k),
                            1.0 / (scale * scale));
}

DecimationOperator DecimationOperator::blur(ConvKernel2D kernel, int scale,
                                            Boundary boundary) {
  if (kernel.in_channels != 1 || kernel.out_channels != 1) {
    throw DimensionError("blur operator: kernel must be single channel");
  }
  if (scale < 1) throw DimensionError("blur operator: scale must be >= 1");
  kernel.stride = scale;
  kernel.padding = boundary == Boundary::circular ? Padding::circular : Padding::replicate;
  return DecimationOperator(OperatorKind::blur_downsample, boundary, std::move(kernel),
                            std::nullopt);
}

DecimationOperator DecimationOperator::bicubic(int scale, Boundary boundary) {
  const DecimationTaps t = bicubic_decimation_taps(scale);
  const int n = static_cast<int>(t.taps.size());
  ConvKernel2D k(n, n, 1, 1, scale);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) k(0, 0, a, b) = t.taps[a] * t.taps[b];
  k.anchor_y = k.anchor_x = t.anchor;
  return blur(std::move(k), scale, boundary);
}

void DecimationOperator::check_hr_shape(int hr_h, int hr_w) const {
  if (hr_h % scale() != 0 || hr_w % scale() != 0) {
    throw DimensionError("decimation: HR size " + std::to_string(hr_h) + "x" +
                         std::to_string(hr_w) + " not divisible by scale " +
                         std::to_string(scale()));
  }
}

ImageTensor DecimationOperator::apply(const ImageTensor& x) const {
  if (x.channels() != 1) throw DimensionError("decimation: single-channel input expected");
  check_hr_shape(x.height(), x.width());
  return conv2d(x, kernel_);
}

ImageTensor DecimationOperator::adjoint(const ImageTensor& y, int hr_h, int hr_w) const {
  check_hr_shape(hr_h, hr_w);
  return conv2d_adjoint(y, kernel_, hr_h, hr_w);
}

DecimationOperator OperatorSpec::build() const {
  if (kind == OperatorKind::box_downsample) return DecimationOperator::box(scale);
  if (taps.empty()) return DecimationOperator::bicubic(scale, boundary);
  if (kernel_size <= 0 || taps.size() != static_cast<std::size_t>(kernel_size) * kernel_size) {
    throw DimensionError("operator spec: taps do not form a square kernel");
  }
  ConvKernel2D k(kernel_size, kernel_size, 1, 1, scale);
  k.taps = taps;
  return DecimationOperator::blur(std::move(k), scale, boundary);
}

std::map<std::string, std::string> OperatorSpec::to_config() const {
  std::map<std::string, std::string> cfg;
  cfg["operator"] = to_string(kind);
  cfg["scale"] = std::to_string(scale);
  cfg["boundary"] = to_string(boundary);
  std::ostringstream eps;
  eps.precision(17);
  eps << epsilon;
  cfg["epsilon"] = eps.str();
  if (!taps.empty()) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < taps.size(); ++i) os << (i ? "," : "") << taps[i];
    cfg["operator.kernel_size"] = std::to_string(kernel_size);
    cfg["operator.taps"] = os.str();
  }
  return cfg;
}

OperatorSpec OperatorSpec::from_config(const std::map<std::string, std::string>& cfg) {
  OperatorSpec spec;
  auto get = [&](const char* key) -> const std::string* {
    auto it = cfg.find(key);
    return it == cfg.end() ? nullptr : &it->second;
  };
  if (auto v = get("operator")) spec.kind = parse_operator_kind(*v);
  if (auto v = get("scale")) spec.scale = std::stoi(*v);
  if (auto v = get("boundary")) spec.boundary = parse_boundary(*v);
  if (auto v = get("epsilon")) spec.epsilon = std::stod(*v);
  if (auto v = get("operator.kernel_size")) spec.kernel_size = std::stoi(*v);
  if (auto v = get("operator.taps")) {
    std::istringstream is(*v);
    std::string item;
    while (std::getline(is, item, ',')) spec.taps.push_back(std::stod(item));
  }
  if (spec.epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
  return spec;
}

MeasurementModel::MeasurementModel(DecimationOperator op, ImageTensor b, double epsilon,
                                   int hr_h, int hr_w, CgConfig cg)
    : op_(std::move(op)), b_(std::move(b)), epsilon_(epsilon), hr_h_(hr_h), hr_w_(hr_w), cg_(cg) {
  if (epsilon < 0.0) throw std::invalid_argument("MeasurementModel: epsilon must be >= 0");
  op_.check_hr_shape(hr_h, hr_w);
  if (b_.channels() != 1 || b_.height() != hr_h / op_.scale() ||
      b_.width() != hr_w / op_.scale()) {
    throw DimensionError("MeasurementModel: measurement " + b_.shape_string() +
                         " does not match HR " + std::to_string(hr_h) + "x" +
                         std::to_string(hr_w) + " at scale " + std::to_string(op_.scale()));
  }
}

ImageTensor MeasurementModel::apply(const ImageTensor& x) const {
  if (x.height() != hr_h_ || x.width() != hr_w_) {
    throw DimensionError("MeasurementModel::apply: input " + x.shape_string() +
                         " is not the HR shape");
  }
  return op_.apply(x);
}

ImageTensor MeasurementModel::adjoint(const ImageTensor& y) const {
  return op_.adjoint(y, hr_h_, hr_w_);
}

double MeasurementModel::residual_norm(const ImageTensor& x) const {
  return norm(apply(x) - b_);
}

MeasurementModel MeasurementModel::with_epsilon(double epsilon) const {
  return MeasurementModel(op_, b_, epsilon, hr_h_, hr_w_, cg_);
}

MeasurementModel MeasurementModel::with_measurement(ImageTensor b) const {
  return MeasurementModel(op_, std::move(b), epsilon_, hr_h_, hr_w_, cg_);
}

ImageTensor conjugate_gradient(const std::function<ImageTensor(const ImageTensor&)>& op,
                               const ImageTensor& rhs, const CgConfig& cfg) {
  ImageTensor x(rhs.height(), rhs.width(), rhs.channels());
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) return x;
  ImageTensor r = rhs;
  ImageTensor p = r;
  double rr = dot(r, r);
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (std::sqrt(rr) <= cfg.tol * rhs_norm) return x;
    const ImageTensor ap = op(p);
    const double alpha = rr / dot(p, ap);
    x.axpy(alpha, p);
    r.axpy(-alpha, ap);
    const double rr_next = dot(r, r);
    p *= rr_next / rr;
    p += r;
    rr = rr_next;
  }
  const double rel = std::sqrt(rr) / rhs_norm;
  if (rel <= cfg.tol) return x;
  throw SolverError("conjugate_gradient: no convergence in " +
                        std::to_string(cfg.max_iters) + " iterations",
                    rel);
}

ImageTensor project_affine(const MeasurementModel& model, const ImageTensor& q) {
  ImageTensor x = q;
  x += model.adjoint(gram_solve(model, model.b() - model.apply(q)));
  return x;
}

ImageTensor project_ball(const MeasurementModel& model, const ImageTensor& q) {
  if (model.epsilon() == 0.0) return project_affine(model, q);
  return solve_ball(model, q).x;
}

ImageTensor project(const MeasurementModel& model, const ImageTensor& q) {
  return model.epsilon() > 0.0 ? project_ball(model, q) : project_affine(model, q);
}

ImageTensor projection_vjp(const MeasurementModel& model, const ImageTensor& q,
                           const ImageTensor& cotangent) {
  if (cotangent.height() != model.hr_height() || cotangent.width() != model.hr_width()) {
    throw DimensionError("projection_vjp: cotangent is not HR shaped");
  }
  if (model.epsilon() == 0.0) {
    ImageTensor out = cotangent;
    out -= model.adjoint(gram_solve(model, model.apply(cotangent)));
    return out;
  }
  const ImageTensor e = model.apply(q) - model.b();
  const double r = norm(e);
  const double eps = model.epsilon();
  // r == eps is treated as inactive.
  if (r <= eps) return cotangent;

  if (auto c = model.op().gram_scale()) {
    const double kappa = 1.0 - eps / r;
    const ImageTensor ag = model.apply(cotangent);
    ImageTensor out = cotangent;
    out.axpy(-kappa / *c, model.adjoint(ag));
    out.axpy(-eps / (*c * r * r * r) * dot(e, ag), model.adjoint(e));
    return out;
  }

  // General A: J = M^{-1} - v v^T / (r^T A v), M = I + mu A^T A, v = M^{-1} A^T r,
  // where r = A x - b at the projected point.
  const BallSolution sol = solve_ball(model, q);
  const double mu = sol.mu;
  auto m_inverse = [&](const ImageTensor& g) {
    ImageTensor out = g;
    out.axpy(-mu, model.adjoint(shifted_gram_solve(model, mu, model.apply(g))));
    return out;
  };
  const ImageTensor res = model.apply(sol.x) - model.b();
  const ImageTensor v = m_inverse(model.adjoint(res));
  const double denom = dot(res, model.apply(v));
  ImageTensor out = m_inverse(cotangent);
  out.axpy(-dot(v, cotangent) / denom, v);
  return out;
}

}  // namespace mcnet::measurement
