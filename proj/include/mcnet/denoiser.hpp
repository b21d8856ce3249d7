#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcnet/conv.hpp"
#include "mcnet/tensor.hpp"

namespace mcnet::denoiser {

constexpr double kDefaultSnTarget = 0.98;

/// Weights of a bias-free CNN: 3x3 zero-padded convolutions with ReLU
/// between them and a linear last layer. Also used, with the spectral state
/// left empty, as the container for parameter gradients.
struct DenoiserParams {
  std::vector<ConvKernel2D> layers;
  /// Persistent power-iteration vectors, one per layer, shaped like the layer
  /// input on an sn_height x sn_width patch.
  std::vector<ImageTensor> sn_vectors;
  double sn_target = kDefaultSnTarget;
  int sn_height = 48;
  int sn_width = 48;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> values);
  /// Same layer layout, all taps zero, no spectral state.
  DenoiserParams zeros_like() const;
  DenoiserParams& axpy(double alpha, const DenoiserParams& other);
  DenoiserParams& operator*=(double s);
  bool same_layout(const DenoiserParams& other) const;
};

double dot(const DenoiserParams& a, const DenoiserParams& b);
double norm(const DenoiserParams& a);

/// Channel progression 1 -> width x (depth-1) -> 1.
std::vector<int> dncnn_channels(int depth = 6, int width = 64);

DenoiserParams make_zero(std::span<const int> channels);

/// He-scaled Gaussian weights followed by one spectral normalization pass
/// with `power_iters` iterations.
DenoiserParams he_init(std::span<const int> channels, std::uint64_t seed,
                       double sn_target = kDefaultSnTarget, int sn_height = 48,
                       int sn_width = 48, int power_iters = 30);

/// Near-identity start: channel 0 of every layer copies channel 0 of the
/// previous one, so the network is the identity on nonnegative images. All
/// taps get He-scaled Gaussian noise multiplied by `noise_scale`, then one
/// spectral normalization pass runs.
DenoiserParams identity_init(std::span<const int> channels, std::uint64_t seed,
                             double noise_scale = 0.01, double sn_target = kDefaultSnTarget,
                             int sn_height = 48, int sn_width = 48, int power_iters = 30);

/// Activations retained by forward(): the input of every layer and the ReLU
/// masks (pre-activation > 0) of every hidden layer.
struct DenoiserTape {
  std::vector<ImageTensor> inputs;
  std::vector<std::vector<std::uint8_t>> masks;
};

ImageTensor apply(const DenoiserParams& params, const ImageTensor& x);
std::pair<ImageTensor, DenoiserTape> forward(const DenoiserParams& params,
                                             const ImageTensor& x);

ImageTensor vjp_input(const DenoiserParams& params, const DenoiserTape& tape,
                      const ImageTensor& cotangent);
DenoiserParams vjp_params(const DenoiserParams& params, const DenoiserTape& tape,
                          const ImageTensor& cotangent);

struct Vjp {
  ImageTensor input;
  DenoiserParams params;
};
/// Both products from one reverse sweep.
Vjp vjp(const DenoiserParams& params, const DenoiserTape& tape, const ImageTensor& cotangent);

/// Jacobian-vector product at the taped point.
ImageTensor jvp_input(const DenoiserParams& params, const DenoiserTape& tape,
                      const ImageTensor& direction);

/// Operator norm of one convolution on inputs of the vector's shape. Runs a
/// Krylov-accelerated power iteration (Lanczos on K^T K, iters + 1 operator
/// applications); `vector` is the start and is replaced by the top Ritz vector.
/// The result is a lower bound on the true norm.
double layer_spectral_norm(const ConvKernel2D& kernel, ImageTensor& vector, int iters);

/// Upper bound on the operator norm of a stride-1 zero-padded convolution on
/// height x width inputs. The operator is a compression of the circular
/// convolution on a (height + kh - 1) x (width + kw - 1) grid, whose singular
/// values are those of the per-frequency cout x cin transfer matrices.
double conv_norm_bound(const ConvKernel2D& kernel, int height, int width);

/// Rescales every layer by min(1, sn_target / sigma). sigma is the larger of
/// the warm-started power-iteration estimate (which advances the persistent
/// vectors) and conv_norm_bound on sn_height x sn_width, so every layer ends
/// at or below sn_target. Returns the per-layer sigmas before rescaling.
std::vector<double> normalize_spectral(DenoiserParams& params, int power_iters);

/// Product of per-layer operator-norm estimates (an upper bound on the
/// network Lipschitz constant up to power-iteration error).
double lipschitz_bound(const DenoiserParams& params, int power_iters = 30);

/// Max over random pairs of ||R(x1) - R(x2)|| / ||x1 - x2||. Half of the pairs
/// are independent uniform images, half are local perturbations.
double estimate_lipschitz(const DenoiserParams& params, int trials, std::uint64_t seed,
                          int height = 32, int width = 32);

// ---------------------------------------------------------------------------
// Checkpoints

/// Text header (one `key value...` per line, terminated by a line `data`)
/// followed by little-endian float32 blocks: every layer's taps in declaration
/// order, then any optimizer blocks in order.
struct Checkpoint {
  DenoiserParams params;
  std::optional<double> beta;
  std::map<std::string, std::string> metadata;
  std::int64_t optimizer_step = 0;
  std::vector<std::vector<double>> optimizer_blocks;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcnet::denoiser
