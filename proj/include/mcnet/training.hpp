#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcnet/denoiser.hpp"
#include "mcnet/implicit_layer.hpp"
#include "mcnet/measurement.hpp"

namespace mcnet::training {

using denoiser::DenoiserParams;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Loss { mse, l1 };
std::string to_string(Loss loss);
Loss parse_loss(const std::string& text);

/// Value and gradient (with respect to `x`) of the per-pixel mean loss.
double loss_value(Loss loss, const ImageTensor& x, const ImageTensor& target);
ImageTensor loss_gradient(Loss loss, const ImageTensor& x, const ImageTensor& target);

// ---------------------------------------------------------------------------
// Data

/// A full-size single-channel HR image, optionally paired with an externally
/// produced backbone output of the same size.
struct SourceImage {
  std::string name;
  ImageTensor hr;
  std::optional<ImageTensor> w;
};

/// Luma of a PNG/PGM image or of an .mcnt tensor file.
ImageTensor read_luma(const std::filesystem::path& path);

/// Reads every PNG/PGM in `hr_dir` (sorted by file name) and converts it to
/// luma. When `w_dir` is given, a file with the same stem must exist there.
/// Unreadable files are reported through `on_error` and skipped.
std::vector<SourceImage> load_image_dir(
    const std::filesystem::path& hr_dir,
    const std::optional<std::filesystem::path>& w_dir = std::nullopt,
    const std::function<void(const std::string&)>& on_error = {});

/// Crops the bottom/right border so both dimensions are multiples of `scale`.
ImageTensor modcrop(const ImageTensor& image, int scale);

/// One training or validation example. `b` is always A * hr computed when the
/// dataset is built; `w` has the HR shape.
struct Patch {
  ImageTensor hr;
  ImageTensor b;
  ImageTensor w;
  std::size_t source = 0;  // index into PatchDataset::sources()
  int y0 = 0, x0 = 0;
};

class PatchDataset {
 public:
  PatchDataset() = default;

  /// Sliding-window patches (patch_size x patch_size, step `stride`) from every
  /// source image. Without an external w the backbone is bicubic upsampling of
  /// each patch's own measurement.
  static PatchDataset extract(const std::vector<SourceImage>& images,
                              const measurement::OperatorSpec& spec, int patch_size,
                              int stride);

  /// One example per image, each cropped to a multiple of the scale.
  static PatchDataset whole_images(const std::vector<SourceImage>& images,
                                   const measurement::OperatorSpec& spec);

  std::size_t size() const noexcept { return patches_.size(); }
  bool empty() const noexcept { return patches_.empty(); }
  const Patch& operator[](std::size_t i) const { return patches_.at(i); }
  const std::vector<Patch>& patches() const noexcept { return patches_; }
  const std::vector<std::string>& sources() const noexcept { return sources_; }
  const measurement::OperatorSpec& spec() const noexcept { return spec_; }
  int scale() const noexcept { return spec_.scale; }
  /// 0 for whole-image datasets.
  int patch_size() const noexcept { return patch_size_; }

  /// Constraint set of example i.
  measurement::MeasurementModel model(std::size_t i) const;
  /// First `n` examples (all of them when n >= size()).
  PatchDataset head(std::size_t n) const;

  /// FNV-1a over the bit patterns of every hr, b and w sample and the offsets.
  std::uint64_t checksum() const;
  /// "source y0 x0" per example, preceded by a header line.
  std::string manifest() const;

 private:
  measurement::OperatorSpec spec_;
  int patch_size_ = 0;
  std::vector<std::string> sources_;
  std::vector<Patch> patches_;
};

// ---------------------------------------------------------------------------
// Optimizer

struct LrSchedule {
  double initial = 1e-4;
  double drop_factor = 0.1;
  int drop_epoch = 30;  // first epoch (0-based) run at the reduced rate

  double at(int epoch) const { return epoch >= drop_epoch ? initial * drop_factor : initial; }
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8);

  /// params -= lr * mhat / (sqrt(vhat) + eps)
  void step(std::span<double> params, std::span<const double> grad, double lr);

  std::size_t size() const noexcept { return m_.size(); }
  std::int64_t steps() const noexcept { return t_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }
  void restore(std::vector<double> m, std::vector<double> v, std::int64_t t);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Denoiser pretraining

enum class InitKind { identity, he };
std::string to_string(InitKind kind);
InitKind parse_init_kind(const std::string& text);

struct PretrainConfig {
  int depth = 6;
  int width = 64;
  InitKind init_kind = InitKind::identity;
  double init_noise = 0.01;  // identity init only
  int batch_size = 16;
  LrSchedule lr{.initial = 1e-5, .drop_factor = 0.1, .drop_epoch = 1 << 30};
  int sn_iters = 5;
  int sn_init_iters = 30;
  double sn_target = denoiser::kDefaultSnTarget;
  std::uint64_t seed = 0;
  /// Start from these weights instead of a fresh initialization.
  std::optional<DenoiserParams> init;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct PretrainResult {
  DenoiserParams params;
  std::vector<double> epoch_losses;
};

/// Minimizes mean ||R(y + eta) - y||^2 / n over the dataset's HR patches with
/// eta ~ N(0, sigma^2), spectrally normalizing after every Adam step. A
/// non-finite loss throws TrainingError. sigma == 0 is accepted (it trains
/// towards the identity).
PretrainResult pretrain_denoiser(double noise_sigma, const PatchDataset& dataset, int epochs,
                                 const PretrainConfig& cfg = {});

/// Default pretraining noise levels (on the [0,1] intensity scale).
std::vector<double> default_noise_grid();

// ---------------------------------------------------------------------------
// Model selection

struct SelectionResult {
  std::size_t index = 0;
  /// Mean validation PSNR per candidate; -inf when a solve diverged.
  std::vector<double> scores;
};

/// PnP-ADMM validation PSNR (shave = scale) of every candidate; the best mean
/// wins and ties go to the lower index. Throws TrainingError when every
/// candidate diverges.
SelectionResult select_denoiser(const std::vector<DenoiserParams>& candidates,
                                const PatchDataset& validation, double rho = 1.0,
                                const layer::SolverConfig& budget = {});

/// Index of the largest finite score, ties to the lowest index; nullopt when
/// no score is finite.
std::optional<std::size_t> best_index(std::span<const double> scores);

/// Grid value with the largest finite score, ties to the smaller value.
std::optional<double> best_beta(std::span<const double> grid, std::span<const double> scores);

struct GridResult {
  double beta = 0.0;
  std::vector<double> grid;
  std::vector<double> scores;
};

std::vector<double> default_beta_grid();

/// Validation PSNR of the implicit layer for every beta in `grid`; ties go to
/// the smaller beta and diverging values score -inf. Throws TrainingError
/// when every value diverges.
GridResult grid_search_beta(const DenoiserParams& params, const std::vector<double>& grid,
                            const PatchDataset& validation,
                            const layer::LayerConfig& base = {});

// ---------------------------------------------------------------------------
// End-to-end training

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;  // mean over the items that contributed gradients
  double val_psnr = 0.0;
  double val_consistency = 0.0;  // mean ||A x_hat - b||_2
  double lipschitz = 0.0;
  double beta = 0.0;
  int items = 0;
  int skipped_items = 0;
  int forward_failures = 0;   // forward solve not converged
  int backward_failures = 0;  // backward solve failed after a converged forward
  double forward_iterations = 0.0;  // mean over the attempted forward solves
  int batches = 0;
  int skipped_batches = 0;  // batches in which no item produced a gradient
  int val_failures = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  void write_csv(std::ostream& os) const;
};

struct TrainConfig {
  layer::LayerConfig layer;  // beta is taken from the beta0 argument
  int batch_size = 16;
  LrSchedule lr;
  Loss loss = Loss::mse;
  int sn_iters = 5;
  std::uint64_t seed = 0;
  bool shuffle = true;
  int lipschitz_trials = 20;
  /// Return the state after the epoch with the fewest validation failures and,
  /// among those, the highest validation PSNR, instead of the final state.
  bool select_best_epoch = true;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called after every optimizer step (after spectral normalization).
  std::function<void(int epoch, int batch, const DenoiserParams&, double beta)> on_step;
};

struct TrainResult {
  DenoiserParams params;
  double beta = 0.0;
  TrainReport report;
  AdamState optimizer;
  /// Epoch whose end state is returned; -1 when no epoch ran.
  int selected_epoch = -1;
};

/// Adam on (theta, log beta) with gradients from implicit differentiation.
/// Items whose forward or backward solve does not converge are dropped; an
/// epoch with more than half of its batches dropped throws TrainingError.
TrainResult train_mcnet(const DenoiserParams& init, double beta0, const PatchDataset& train,
                        const PatchDataset& val, int epochs, const TrainConfig& cfg = {});

/// Validation metrics of the implicit layer on a dataset. PSNR and
/// consistency are means over the converged solves (-inf and +inf when there
/// are none); `failures` counts the others.
struct Evaluation {
  double psnr = 0.0;
  double consistency = 0.0;
  int failures = 0;
};
Evaluation evaluate_layer(const DenoiserParams& params, const layer::LayerConfig& cfg,
                          const PatchDataset& dataset);

/// Mean PSNR of the backbone outputs w against hr.
double backbone_psnr(const PatchDataset& dataset);

}  // namespace mcnet::training
