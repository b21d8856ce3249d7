#include "mcnet/denoiser.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <random>
#include <sstream>

namespace mcnet::denoiser {
namespace {

constexpr std::uint64_t kSnSeed = 0x5eedu;

void relu_inplace(ImageTensor& t, std::vector<std::uint8_t>& mask) {
  auto d = t.data();
  mask.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    mask[i] = d[i] > 0.0;
    if (!mask[i]) d[i] = 0.0;
  }
}

void apply_mask(ImageTensor& t, const std::vector<std::uint8_t>& mask) {
  auto d = t.data();
  if (mask.size() != d.size()) throw DimensionError("denoiser: tape mask shape mismatch");
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!mask[i]) d[i] = 0.0;
}

void check_input(const DenoiserParams& params, const ImageTensor& x) {
  if (params.layers.empty()) throw DimensionError("denoiser: no layers");
  if (x.channels() != params.layers.front().in_channels) {
    throw DimensionError("denoiser: input has " + std::to_string(x.channels()) +
                         " channels, network expects " +
                         std::to_string(params.layers.front().in_channels));
  }
}

void check_tape(const DenoiserParams& params, const DenoiserTape& tape,
                const ImageTensor& t) {
  if (tape.inputs.size() != params.layers.size() ||
      tape.masks.size() + 1 != params.layers.size()) {
    throw DimensionError("denoiser: tape does not match network depth");
  }
  const ImageTensor& x = tape.inputs.front();
  if (t.height() != x.height() || t.width() != x.width() || t.channels() != 1) {
    throw DimensionError("denoiser: tensor " + t.shape_string() +
                         " does not match taped input " + x.shape_string());
  }
}

ImageTensor random_gaussian(int h, int w, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ImageTensor t(h, w, c);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

}  // namespace

std::size_t DenoiserParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& k : layers) n += k.size();
  return n;
}

std::vector<double> DenoiserParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& k : layers) out.insert(out.end(), k.taps.begin(), k.taps.end());
  return out;
}

void DenoiserParams::unflatten(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw DimensionError("DenoiserParams::unflatten: wrong parameter count");
  }
  std::size_t offset = 0;
  for (auto& k : layers) {
    std::copy_n(values.begin() + offset, k.size(), k.taps.begin());
    offset += k.size();
  }
}

DenoiserParams DenoiserParams::zeros_like() const {
  DenoiserParams out;
  out.layers = layers;
  for (auto& k : out.layers) std::fill(k.taps.begin(), k.taps.end(), 0.0);
  out.sn_target = sn_target;
  out.sn_height = sn_height;
  out.sn_width = sn_width;
  return out;
}

bool DenoiserParams::same_layout(const DenoiserParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (!layers[l].same_layout(other.layers[l])) return false;
  return true;
}

DenoiserParams& DenoiserParams::axpy(double alpha, const DenoiserParams& other) {
  if (!same_layout(other)) throw DimensionError("DenoiserParams::axpy: layout mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (std::size_t i = 0; i < layers[l].size(); ++i)
      layers[l].taps[i] += alpha * other.layers[l].taps[i];
  return *this;
}

DenoiserParams& DenoiserParams::operator*=(double s) {
  for (auto& k : layers)
    for (double& v : k.taps) v *= s;
  return *this;
}

double dot(const DenoiserParams& a, const DenoiserParams& b) {
  if (!a.same_layout(b)) throw DimensionError("dot: layout mismatch");
  double s = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    for (std::size_t i = 0; i < a.layers[l].size(); ++i)
      s += a.layers[l].taps[i] * b.layers[l].taps[i];
  return s;
}

double norm(const DenoiserParams& a) { return std::sqrt(dot(a, a)); }

std::vector<int> dncnn_channels(int depth, int width) {
  if (depth < 1 || width < 1) throw DimensionError("dncnn_channels: bad depth/width");
  std::vector<int> ch(depth + 1, width);
  ch.front() = 1;
  ch.back() = 1;
  return ch;
}

DenoiserParams make_zero(std::span<const int> channels) {
  if (channels.size() < 2) throw DimensionError("make_zero: need at least one layer");
  DenoiserParams p;
  for (std::size_t l = 0; l + 1 < channels.size(); ++l)
    p.layers.emplace_back(3, 3, channels[l], channels[l + 1]);
  return p;
}

DenoiserParams he_init(std::span<const int> channels, std::uint64_t seed, double sn_target,
                       int sn_height, int sn_width, int power_iters) {
  DenoiserParams p = make_zero(channels);
  p.sn_target = sn_target;
  p.sn_height = sn_height;
  p.sn_width = sn_width;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& k : p.layers) {
    const double std_dev = std::sqrt(2.0 / (9.0 * k.in_channels));
    for (double& v : k.taps) v = std_dev * normal(rng);
  }
  normalize_spectral(p, power_iters);
  return p;
}

DenoiserParams identity_init(std::span<const int> channels, std::uint64_t seed,
                             double noise_scale, double sn_target, int sn_height,
                             int sn_width, int power_iters) {
  DenoiserParams p = make_zero(channels);
  p.sn_target = sn_target;
  p.sn_height = sn_height;
  p.sn_width = sn_width;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& k : p.layers) {
    const double std_dev = noise_scale * std::sqrt(2.0 / (9.0 * k.in_channels));
    for (double& v : k.taps) v = std_dev * normal(rng);
  }
  // Channel 0 of every layer copies channel 0 of its input at the centre tap,
  // so nonnegative inputs pass through every ReLU unchanged.
  for (auto& k : p.layers) k(0, 0, 1, 1) += 1.0;
  normalize_spectral(p, power_iters);
  return p;
}

std::pair<ImageTensor, DenoiserTape> forward(const DenoiserParams& params,
                                             const ImageTensor& x) {
  check_input(params, x);
  DenoiserTape tape;
  tape.inputs.reserve(params.layers.size());
  tape.masks.resize(params.layers.size() - 1);
  ImageTensor h = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    ImageTensor next = conv2d(h, params.layers[l]);
    tape.inputs.push_back(std::move(h));
    if (l + 1 < params.layers.size()) relu_inplace(next, tape.masks[l]);
    h = std::move(next);
  }
  return {std::move(h), std::move(tape)};
}

ImageTensor apply(const DenoiserParams& params, const ImageTensor& x) {
  check_input(params, x);
  ImageTensor h = x;
  std::vector<std::uint8_t> mask;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = conv2d(h, params.layers[l]);
    if (l + 1 < params.layers.size()) relu_inplace(h, mask);
  }
  return h;
}

Vjp vjp(const DenoiserParams& params, const DenoiserTape& tape, const ImageTensor& cotangent) {
  check_tape(params, tape, cotangent);
  Vjp out{ImageTensor(), params.zeros_like()};
  ImageTensor g = cotangent;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const ImageTensor& in = tape.inputs[l];
    out.params.layers[l] = conv2d_weight_grad(in, g, params.layers[l]);
    g = conv2d_adjoint(g, params.layers[l], in.height(), in.width());
    if (l > 0) apply_mask(g, tape.masks[l - 1]);
  }
  out.input = std::move(g);
  return out;
}

ImageTensor vjp_input(const DenoiserParams& params, const DenoiserTape& tape,
                      const ImageTensor& cotangent) {
  check_tape(params, tape, cotangent);
  ImageTensor g = cotangent;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const ImageTensor& in = tape.inputs[l];
    g = conv2d_adjoint(g, params.layers[l], in.height(), in.width());
    if (l > 0) apply_mask(g, tape.masks[l - 1]);
  }
  return g;
}

DenoiserParams vjp_params(const DenoiserParams& params, const DenoiserTape& tape,
                          const ImageTensor& cotangent) {
  return vjp(params, tape, cotangent).params;
}

ImageTensor jvp_input(const DenoiserParams& params, const DenoiserTape& tape,
                      const ImageTensor& direction) {
  check_tape(params, tape, direction);
  ImageTensor d = direction;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    d = conv2d(d, params.layers[l]);
    if (l + 1 < params.layers.size()) apply_mask(d, tape.masks[l]);
  }
  return d;
}

double layer_spectral_norm(const ConvKernel2D& kernel, ImageTensor& v, int iters) {
  // Lanczos on K^T K started from v. The Krylov space of dimension iters + 1
  // contains the iters-th power iterate, so the top Ritz value is never a worse
  // estimate than power iteration with the same start.
  const double vn = norm(v);
  if (vn == 0.0) return 0.0;
  const int m = std::max(1, iters) + 1;
  auto gram = [&](const ImageTensor& x) {
    return conv2d_adjoint(conv2d(x, kernel), kernel, x.height(), x.width());
  };
  std::vector<ImageTensor> basis;
  std::vector<double> alpha, beta;
  basis.push_back((1.0 / vn) * v);
  for (int j = 0; j < m; ++j) {
    ImageTensor r = gram(basis[j]);
    alpha.push_back(dot(basis[j], r));
    // Full reorthogonalization; m is small.
    for (int pass = 0; pass < 2; ++pass)
      for (const ImageTensor& q : basis) r.axpy(-dot(q, r), q);
    const double b = norm(r);
    if (j + 1 == m || b <= 1e-12 * std::max(alpha.front(), alpha.back())) break;
    beta.push_back(b);
    basis.push_back((1.0 / b) * r);
  }
  const int k = static_cast<int>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
  const Eigen::VectorXd y = eig.eigenvectors().col(k - 1);
  ImageTensor ritz(v.height(), v.width(), v.channels());
  for (int i = 0; i < k; ++i) ritz.axpy(y(i), basis[i]);
  const double rn = norm(ritz);
  if (rn == 0.0) return 0.0;
  v = (1.0 / rn) * ritz;
  return norm(conv2d(v, kernel));
}

double conv_norm_bound(const ConvKernel2D& kernel, int height, int width) {
  if (kernel.stride != 1) throw std::invalid_argument("conv_norm_bound: stride must be 1");
  if (height < 1 || width < 1) throw std::invalid_argument("conv_norm_bound: empty domain");
  const int mh = height + kernel.kernel_h - 1;
  const int mw = width + kernel.kernel_w - 1;
  const int co = kernel.out_channels, ci = kernel.in_channels;
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  Eigen::MatrixXcd khat(co, ci);
  double best = 0.0;
  // Frequencies f and -f give conjugate matrices, so half the grid suffices.
  for (int f1 = 0; f1 < mh; ++f1) {
    for (int f2 = 0; f2 <= mw / 2; ++f2) {
      khat.setZero();
      for (int a = 0; a < kernel.kernel_h; ++a) {
        for (int b = 0; b < kernel.kernel_w; ++b) {
          const double phase = -kTwoPi * (static_cast<double>(f1) * a / mh +
                                          static_cast<double>(f2) * b / mw);
          const std::complex<double> e(std::cos(phase), std::sin(phase));
          for (int o = 0; o < co; ++o)
            for (int i = 0; i < ci; ++i) khat(o, i) += kernel(o, i, a, b) * e;
        }
      }
      double s2;
      if (co == 1 || ci == 1) {
        s2 = khat.squaredNorm();
      } else {
        const Eigen::MatrixXcd gram =
            co <= ci ? Eigen::MatrixXcd(khat * khat.adjoint()) : Eigen::MatrixXcd(khat.adjoint() * khat);
        s2 = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(gram, Eigen::EigenvaluesOnly)
                 .eigenvalues()
                 .maxCoeff();
      }
      best = std::max(best, s2);
    }
  }
  return std::sqrt(best);
}

std::vector<double> normalize_spectral(DenoiserParams& params, int power_iters) {
  if (power_iters < 1) throw std::invalid_argument("normalize_spectral: power_iters >= 1");
  params.sn_vectors.resize(params.layers.size());
  std::vector<double> sigmas;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    ConvKernel2D& k = params.layers[l];
    ImageTensor& v = params.sn_vectors[l];
    if (v.height() != params.sn_height || v.width() != params.sn_width ||
        v.channels() != k.in_channels || norm(v) == 0.0) {
      std::mt19937_64 rng(kSnSeed + l);
      v = random_gaussian(params.sn_height, params.sn_width, k.in_channels, rng);
    }
    // The estimate alone is a lower bound and lags behind modes that a
    // weight update raises; the frequency-domain bound caps it from above.
    const double sigma = std::max(layer_spectral_norm(k, v, power_iters),
                                  conv_norm_bound(k, params.sn_height, params.sn_width));
    sigmas.push_back(sigma);
    if (sigma > params.sn_target) {
      const double s = params.sn_target / sigma;
      for (double& t : k.taps) t *= s;
    }
  }
  return sigmas;
}

double lipschitz_bound(const DenoiserParams& params, int power_iters) {
  double bound = 1.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const ConvKernel2D& k = params.layers[l];
    std::mt19937_64 rng(kSnSeed + 1000 + l);
    ImageTensor v = random_gaussian(params.sn_height, params.sn_width, k.in_channels, rng);
    bound *= layer_spectral_norm(k, v, power_iters);
  }
  return bound;
}

double estimate_lipschitz(const DenoiserParams& params, int trials, std::uint64_t seed,
                          int height, int width) {
  if (trials < 1) throw std::invalid_argument("estimate_lipschitz: trials >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double best = 0.0;
  for (int t = 0; t < trials; ++t) {
    ImageTensor x1(height, width), x2(height, width);
    for (double& v : x1.data()) v = uniform(rng);
    if (t % 2 == 0) {
      for (double& v : x2.data()) v = uniform(rng);
    } else {
      auto a = x1.data();
      auto b = x2.data();
      for (std::size_t i = 0; i < a.size(); ++i) b[i] = a[i] + 1e-2 * normal(rng);
    }
    const double dx = norm(x1 - x2);
    if (dx == 0.0) continue;
    best = std::max(best, norm(apply(params, x1) - apply(params, x2)) / dx);
  }
  return best;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.precision(17);
  const DenoiserParams& p = ckpt.params;
  out << "MCNET-CHECKPOINT 1\n";
  out << "layers " << p.layers.size() << "\n";
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& k = p.layers[l];
    out << "layer " << l << " " << k.kernel_h << " " << k.kernel_w << " " << k.in_channels
        << " " << k.out_channels << "\n";
  }
  out << "sn_target " << p.sn_target << "\n";
  out << "sn_shape " << p.sn_height << " " << p.sn_width << "\n";
  if (ckpt.beta) out << "beta " << *ckpt.beta << "\n";
  for (const auto& [key, value] : ckpt.metadata) {
    if (key.find_first_of(" \n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata must be single-line, key without spaces");
    }
    out << "meta " << key << " " << value << "\n";
  }
  out << "optimizer_step " << ckpt.optimizer_step << "\n";
  out << "optimizer_blocks " << ckpt.optimizer_blocks.size();
  for (const auto& b : ckpt.optimizer_blocks) out << " " << b.size();
  out << "\ndata\n";
  auto write_block = [&](std::span<const double> values) {
    std::vector<float> f(values.begin(), values.end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  };
  for (const auto& k : p.layers) write_block(k.taps);
  for (const auto& b : ckpt.optimizer_blocks) write_block(b);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  auto fail = [&](const std::string& why) -> std::runtime_error {
    return std::runtime_error("bad checkpoint " + path.string() + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != "MCNET-CHECKPOINT 1") throw fail("missing magic");
  Checkpoint ckpt;
  std::vector<std::size_t> block_sizes;
  std::size_t expected_layers = 0;
  while (std::getline(in, line)) {
    if (line == "data") break;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "layers") {
      is >> expected_layers;
    } else if (key == "layer") {
      std::size_t idx;
      int kh, kw, cin, cout;
      is >> idx >> kh >> kw >> cin >> cout;
      if (!is || idx != ckpt.params.layers.size()) throw fail("layer entries out of order");
      ckpt.params.layers.emplace_back(kh, kw, cin, cout);
    } else if (key == "sn_target") {
      is >> ckpt.params.sn_target;
    } else if (key == "sn_shape") {
      is >> ckpt.params.sn_height >> ckpt.params.sn_width;
    } else if (key == "beta") {
      double b;
      is >> b;
      ckpt.beta = b;
    } else if (key == "meta") {
      std::string k;
      is >> k;
      std::string value;
      std::getline(is >> std::ws, value);
      ckpt.metadata[k] = value;
    } else if (key == "optimizer_step") {
      is >> ckpt.optimizer_step;
    } else if (key == "optimizer_blocks") {
      std::size_t n;
      is >> n;
      block_sizes.resize(n);
      for (auto& s : block_sizes) is >> s;
    } else {
      throw fail("unknown header key '" + key + "'");
    }
    if (!is && !is.eof()) throw fail("malformed line '" + line + "'");
  }
  if (line != "data") throw fail("missing data section");
  if (ckpt.params.layers.size() != expected_layers) throw fail("layer count mismatch");
  auto read_block = [&](std::span<double> values) {
    std::vector<float> f(values.size());
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!in) throw fail("truncated data");
    std::copy(f.begin(), f.end(), values.begin());
  };
  for (auto& k : ckpt.params.layers) read_block(k.taps);
  for (std::size_t s : block_sizes) {
    ckpt.optimizer_blocks.emplace_back(s);
    read_block(ckpt.optimizer_blocks.back());
  }
  return ckpt;
}

}  // namespace mcnet::denoiser
