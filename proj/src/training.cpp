#include "mcnet/training.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "mcnet/color.hpp"
#include "mcnet/image_io.hpp"
#include "mcnet/metrics.hpp"
#include "mcnet/resize.hpp"

namespace mcnet::training {
namespace {

namespace fs = std::filesystem;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_image_file(const fs::path& p) {
  const std::string ext = lower(p.extension().string());
  return ext == ".png" || ext == ".pgm" || ext == ".mcnt";
}


class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void value(std::uint64_t v) { bytes(&v, sizeof v); }
  void tensor(const ImageTensor& t) {
    value(static_cast<std::uint64_t>(t.height()));
    value(static_cast<std::uint64_t>(t.width()));
    for (double d : t.data()) value(std::bit_cast<std::uint64_t>(d));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

ImageTensor gaussian_like(const ImageTensor& shape, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ImageTensor out(shape.height(), shape.width(), shape.channels());
  for (double& v : out.data()) v = sigma * normal(rng);
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void require_finite(double loss, const std::string& where) {
  if (!std::isfinite(loss)) throw TrainingError(where + ": non-finite loss");
}

// Mean validation PSNR, or -inf if any item fails to solve.
double strict_score(const PatchDataset& data,
                    const std::function<layer::ForwardResult(std::size_t)>& solve) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      const auto r = solve(i);
      total += psnr(data[i].hr, r.x_hat, data.scale());
    } catch (const layer::LayerError&) {
      return kNegInf;
    } catch (const fixed_point::NumericError&) {
      return kNegInf;
    } catch (const SolverError&) {
      return kNegInf;
    }
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

std::string to_string(InitKind kind) { return kind == InitKind::identity ? "identity" : "he"; }

InitKind parse_init_kind(const std::string& text) {
  const std::string t = lower(text);
  if (t == "identity") return InitKind::identity;
  if (t == "he") return InitKind::he;
  throw std::invalid_argument("unknown init '" + text + "'");
}

std::string to_string(Loss loss) { return loss == Loss::mse ? "mse" : "l1"; }

Loss parse_loss(const std::string& text) {
  const std::string t = lower(text);
  if (t == "mse" || t == "l2") return Loss::mse;
  if (t == "l1") return Loss::l1;
  throw std::invalid_argument("unknown loss '" + text + "'");
}

double loss_value(Loss loss, const ImageTensor& x, const ImageTensor& target) {
  require_same_shape(x, target, "loss_value");
  double acc = 0.0;
  auto a = x.data();
  auto b = target.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += loss == Loss::mse ? d * d : std::abs(d);
  }
  return acc / static_cast<double>(a.size());
}

ImageTensor loss_gradient(Loss loss, const ImageTensor& x, const ImageTensor& target) {
  require_same_shape(x, target, "loss_gradient");
  ImageTensor g = x - target;
  const double inv = 1.0 / static_cast<double>(g.size());
  for (double& v : g.data()) {
    v = loss == Loss::mse ? 2.0 * v * inv : (v > 0 ? inv : (v < 0 ? -inv : 0.0));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Data

ImageTensor read_luma(const fs::path& path) {
  if (lower(path.extension().string()) == ".mcnt") return to_luma(load_tensor(path));
  return to_luma(read_image(path));
}

std::vector<SourceImage> load_image_dir(const fs::path& hr_dir,
                                        const std::optional<fs::path>& w_dir,
                                        const std::function<void(const std::string&)>& on_error) {
  if (!fs::is_directory(hr_dir)) throw ImageIoError("not a directory: " + hr_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(hr_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path()) &&
        lower(entry.path().extension().string()) != ".mcnt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  auto report = [&](const std::string& msg) {
    if (on_error) on_error(msg);
  };

  std::vector<SourceImage> out;
  for (const auto& file : files) {
    SourceImage img;
    img.name = file.stem().string();
    try {
      img.hr = read_luma(file);
    } catch (const std::exception& e) {
      report(file.string() + ": " + e.what());
      continue;
    }
    if (w_dir) {
      std::optional<fs::path> match;
      for (const char* ext : {".mcnt", ".png", ".pgm"}) {
        const fs::path cand = *w_dir / (img.name + ext);
        if (fs::exists(cand)) {
          match = cand;
          break;
        }
      }
      if (!match) {
        report(img.name + ": no backbone output in " + w_dir->string());
        continue;
      }
      try {
        img.w = read_luma(*match);
      } catch (const std::exception& e) {
        report(match->string() + ": " + e.what());
        continue;
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

ImageTensor modcrop(const ImageTensor& image, int scale) {
  if (scale < 1) throw std::invalid_argument("modcrop: scale must be >= 1");
  const int h = image.height() - image.height() % scale;
  const int w = image.width() - image.width() % scale;
  if (h == 0 || w == 0) throw DimensionError("modcrop: image smaller than the scale");
  return image.crop(0, 0, h, w);
}

PatchDataset PatchDataset::extract(const std::vector<SourceImage>& images,
                                   const measurement::OperatorSpec& spec, int patch_size,
                                   int stride) {
  if (patch_size <= 0 || stride <= 0) throw std::invalid_argument("extract: bad patch geometry");
  if (patch_size % spec.scale != 0) {
    throw std::invalid_argument("extract: patch size must be a multiple of the scale");
  }
  const auto op = spec.build();
  PatchDataset ds;
  ds.spec_ = spec;
  ds.patch_size_ = patch_size;
  for (std::size_t s = 0; s < images.size(); ++s) {
    const SourceImage& img = images[s];
    if (img.w && !img.w->same_shape(img.hr)) {
      throw DimensionError("extract: backbone output of " + img.name + " has the wrong shape");
    }
    ds.sources_.push_back(img.name);
    for (int y0 = 0; y0 + patch_size <= img.hr.height(); y0 += stride) {
      for (int x0 = 0; x0 + patch_size <= img.hr.width(); x0 += stride) {
        Patch p;
        p.hr = img.hr.crop(y0, x0, patch_size, patch_size);
        p.b = op.apply(p.hr);
        p.w = img.w ? img.w->crop(y0, x0, patch_size, patch_size)
                    : bicubic_upsample(p.b, spec.scale);
        p.source = s;
        p.y0 = y0;
        p.x0 = x0;
        ds.patches_.push_back(std::move(p));
      }
    }
  }
  return ds;
}

PatchDataset PatchDataset::whole_images(const std::vector<SourceImage>& images,
                                        const measurement::OperatorSpec& spec) {
  const auto op = spec.build();
  PatchDataset ds;
  ds.spec_ = spec;
  for (std::size_t s = 0; s < images.size(); ++s) {
    const SourceImage& img = images[s];
    if (img.w && !img.w->same_shape(img.hr)) {
      throw DimensionError("whole_images: backbone output of " + img.name +
                           " has the wrong shape");
    }
    ds.sources_.push_back(img.name);
    Patch p;
    p.hr = modcrop(img.hr, spec.scale);
    p.b = op.apply(p.hr);
    p.w = img.w ? modcrop(*img.w, spec.scale) : bicubic_upsample(p.b, spec.scale);
    p.source = s;
    ds.patches_.push_back(std::move(p));
  }
  return ds;
}

measurement::MeasurementModel PatchDataset::model(std::size_t i) const {
  const Patch& p = patches_.at(i);
  return measurement::MeasurementModel(spec_.build(), p.b, spec_.epsilon, p.hr.height(),
                                       p.hr.width());
}

PatchDataset PatchDataset::head(std::size_t n) const {
  PatchDataset out = *this;
  if (n < out.patches_.size()) out.patches_.resize(n);
  return out;
}

std::uint64_t PatchDataset::checksum() const {
  Fnv1a h;
  for (const Patch& p : patches_) {
    h.value(p.source);
    h.value(static_cast<std::uint64_t>(p.y0));
    h.value(static_cast<std::uint64_t>(p.x0));
    h.tensor(p.hr);
    h.tensor(p.b);
    h.tensor(p.w);
  }
  return h.digest();
}

std::string PatchDataset::manifest() const {
  std::ostringstream os;
  os << "# source y0 x0 (patch_size " << patch_size_ << ", scale " << spec_.scale << ")\n";
  for (const Patch& p : patches_) {
    os << sources_.at(p.source) << " " << p.y0 << " " << p.x0 << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Optimizer

AdamState::AdamState(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamState::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionError("AdamState::step: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void AdamState::restore(std::vector<double> m, std::vector<double> v, std::int64_t t) {
  if (m.size() != v.size()) throw DimensionError("AdamState::restore: size mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

// ---------------------------------------------------------------------------
// Pretraining

std::vector<double> default_noise_grid() {
  return {2.0 / 255.0, 5.0 / 255.0, 10.0 / 255.0, 15.0 / 255.0};
}

PretrainResult pretrain_denoiser(double noise_sigma, const PatchDataset& dataset, int epochs,
                                 const PretrainConfig& cfg) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("pretrain_denoiser: noise sigma must be >= 0");
  }
  if (dataset.empty()) throw std::invalid_argument("pretrain_denoiser: empty dataset");
  if (epochs < 0 || cfg.batch_size < 1) throw std::invalid_argument("pretrain_denoiser: bad budget");

  const int ph = dataset[0].hr.height(), pw = dataset[0].hr.width();
  PretrainResult out;
  if (cfg.init) {
    out.params = *cfg.init;
  } else {
    const auto channels = denoiser::dncnn_channels(cfg.depth, cfg.width);
    out.params = cfg.init_kind == InitKind::identity
                     ? denoiser::identity_init(channels, cfg.seed, cfg.init_noise,
                                               cfg.sn_target, ph, pw, cfg.sn_init_iters)
                     : denoiser::he_init(channels, cfg.seed, cfg.sn_target, ph, pw,
                                         cfg.sn_init_iters);
  }
  DenoiserParams& params = out.params;
  AdamState adam(params.parameter_count());
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = epoch_order(dataset.size(), true, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      DenoiserParams grad = params.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        const ImageTensor& clean = dataset[order[k]].hr;
        const ImageTensor noisy = clean + gaussian_like(clean, noise_sigma, rng);
        auto [pred, tape] = denoiser::forward(params, noisy);
        const double loss = loss_value(Loss::mse, pred, clean);
        require_finite(loss, "pretrain_denoiser (epoch " + std::to_string(epoch) + ")");
        loss_sum += loss;
        grad.axpy(1.0, denoiser::vjp_params(params, tape, loss_gradient(Loss::mse, pred, clean)));
      }
      grad *= 1.0 / static_cast<double>(end - start);
      std::vector<double> flat = params.flatten();
      adam.step(flat, grad.flatten(), cfg.lr.at(epoch));
      params.unflatten(flat);
      denoiser::normalize_spectral(params, cfg.sn_iters);
    }
    const double mean = loss_sum / static_cast<double>(dataset.size());
    out.epoch_losses.push_back(mean);
    if (cfg.on_epoch) cfg.on_epoch(epoch, mean);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selection

SelectionResult select_denoiser(const std::vector<DenoiserParams>& candidates,
                                const PatchDataset& validation, double rho,
                                const layer::SolverConfig& budget) {
  if (candidates.empty()) throw std::invalid_argument("select_denoiser: no candidates");
  if (validation.empty()) throw std::invalid_argument("select_denoiser: empty validation set");
  SelectionResult out;
  for (const DenoiserParams& candidate : candidates) {
    out.scores.push_back(strict_score(validation, [&](std::size_t i) {
      return layer::pnp_admm_solve(validation.model(i), candidate, rho, budget);
    }));
  }
  const auto best = best_index(out.scores);
  if (!best) throw TrainingError("select_denoiser: every candidate diverged");
  out.index = *best;
  return out;
}

std::optional<std::size_t> best_index(std::span<const double> scores) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (!best || scores[i] > scores[*best]) best = i;
  }
  return best;
}

std::optional<double> best_beta(std::span<const double> grid, std::span<const double> scores) {
  if (grid.size() != scores.size()) throw DimensionError("best_beta: size mismatch");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (!best || scores[i] > scores[*best] ||
        (scores[i] == scores[*best] && grid[i] < grid[*best])) {
      best = i;
    }
  }
  if (!best) return std::nullopt;
  return grid[*best];
}

std::vector<double> default_beta_grid() { return {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}; }

GridResult grid_search_beta(const DenoiserParams& params, const std::vector<double>& grid,
                            const PatchDataset& validation, const layer::LayerConfig& base) {
  if (grid.empty()) throw std::invalid_argument("grid_search_beta: empty grid");
  if (validation.empty()) throw std::invalid_argument("grid_search_beta: empty validation set");
  GridResult out;
  out.grid = grid;
  for (double beta : grid) {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
      throw std::invalid_argument("grid_search_beta: grid values must be positive");
    }
    layer::LayerConfig cfg = base;
    cfg.beta = beta;
    out.scores.push_back(strict_score(validation, [&](std::size_t i) {
      return layer::forward(validation.model(i), params, cfg, validation[i].w);
    }));
  }
  const auto best = best_beta(out.grid, out.scores);
  if (!best) throw TrainingError("grid_search_beta: every beta diverged");
  out.beta = *best;
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end training

Evaluation evaluate_layer(const DenoiserParams& params, const layer::LayerConfig& cfg,
                          const PatchDataset& dataset) {
  Evaluation ev;
  int ok = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto model = dataset.model(i);
    try {
      const auto r = layer::forward(model, params, cfg, dataset[i].w);
      if (r.report.status != fixed_point::Status::converged) {
        ++ev.failures;
        continue;
      }
      ev.psnr += psnr(dataset[i].hr, r.x_hat, dataset.scale());
      ev.consistency += model.residual_norm(r.x_hat);
      ++ok;
    } catch (const layer::LayerError&) {
      ++ev.failures;
    } catch (const fixed_point::NumericError&) {
      ++ev.failures;
    } catch (const SolverError&) {
      ++ev.failures;
    }
  }
  if (ok > 0) {
    ev.psnr /= ok;
    ev.consistency /= ok;
  } else {
    ev.psnr = kNegInf;
    ev.consistency = std::numeric_limits<double>::infinity();
  }
  return ev;
}

double backbone_psnr(const PatchDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("backbone_psnr: empty dataset");
  double total = 0.0;
  for (const Patch& p : dataset.patches()) total += psnr(p.hr, p.w, dataset.scale());
  return total / static_cast<double>(dataset.size());
}

void TrainReport::write_csv(std::ostream& os) const {
  os << "epoch,learning_rate,train_loss,val_psnr,val_consistency,lipschitz,beta,items,"
        "skipped_items,forward_failures,backward_failures,forward_iterations,batches,"
        "skipped_batches,val_failures\n";
  os.precision(17);
  for (const EpochRecord& r : epochs) {
    os << r.epoch << "," << r.learning_rate << "," << r.train_loss << "," << r.val_psnr << ","
       << r.val_consistency << "," << r.lipschitz << "," << r.beta << "," << r.items << ","
       << r.skipped_items << "," << r.forward_failures << "," << r.backward_failures << ","
       << r.forward_iterations << "," << r.batches << "," << r.skipped_batches << ","
       << r.val_failures << "\n";
  }
}

TrainResult train_mcnet(const DenoiserParams& init, double beta0, const PatchDataset& train,
                        const PatchDataset& val, int epochs, const TrainConfig& cfg) {
  if (train.empty() || val.empty()) throw std::invalid_argument("train_mcnet: empty dataset");
  if (!(beta0 > 0.0) || !std::isfinite(beta0)) {
    throw std::invalid_argument("train_mcnet: beta must be positive");
  }
  if (epochs < 0 || cfg.batch_size < 1) throw std::invalid_argument("train_mcnet: bad budget");

  // `out` holds the live state; `best` the selected snapshot.
  TrainResult out;
  out.params = init;
  out.beta = beta0;
  DenoiserParams& params = out.params;
  const std::size_t n_theta = params.parameter_count();
  out.optimizer = AdamState(n_theta + 1);
  std::mt19937_64 rng(cfg.seed);
  layer::LayerConfig lcfg = cfg.layer;
  TrainResult best;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = cfg.lr.at(epoch);
    double loss_sum = 0.0;
    int used_total = 0;
    double forward_iters = 0.0;
    int forward_solves = 0;
    const auto order = epoch_order(train.size(), cfg.shuffle, rng);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ++rec.batches;
      lcfg.beta = out.beta;
      DenoiserParams grad = params.zeros_like();
      double grad_log_beta = 0.0;
      int used = 0;
      for (std::size_t k = start; k < end; ++k) {
        const Patch& item = train[order[k]];
        const auto model = train.model(order[k]);
        ++rec.items;
        std::optional<layer::ForwardResult> fwd;
        try {
          fwd = layer::forward(model, params, lcfg, item.w);
          forward_iters += fwd->report.iterations;
          ++forward_solves;
        } catch (const layer::LayerError& e) {
          forward_iters += e.report().iterations;
          ++forward_solves;
        } catch (const fixed_point::NumericError&) {
        } catch (const SolverError&) {
        }
        if (!fwd || fwd->report.status != fixed_point::Status::converged) {
          ++rec.skipped_items;
          ++rec.forward_failures;
          continue;
        }
        try {
          const double loss = loss_value(cfg.loss, fwd->x_hat, item.hr);
          require_finite(loss, "train_mcnet (epoch " + std::to_string(epoch) + ")");
          const auto g = layer::backward(model, params, lcfg, item.w, fwd->z_inf,
                                         loss_gradient(cfg.loss, fwd->x_hat, item.hr));
          grad.axpy(1.0, g.d_theta);
          grad_log_beta += g.d_log_beta;
          loss_sum += loss;
          ++used;
        } catch (const layer::LayerError&) {
          ++rec.skipped_items;
          ++rec.backward_failures;
        } catch (const fixed_point::NumericError&) {
          ++rec.skipped_items;
          ++rec.backward_failures;
        } catch (const SolverError&) {
          ++rec.skipped_items;
          ++rec.backward_failures;
        }
      }
      if (used == 0) {
        ++rec.skipped_batches;
        continue;
      }
      used_total += used;
      std::vector<double> flat = params.flatten();
      flat.push_back(std::log(out.beta));
      std::vector<double> g = grad.flatten();
      g.push_back(grad_log_beta);
      for (double& v : g) v /= used;
      out.optimizer.step(flat, g, rec.learning_rate);
      out.beta = std::exp(flat.back());
      flat.pop_back();
      params.unflatten(flat);
      denoiser::normalize_spectral(params, cfg.sn_iters);
      if (cfg.on_step) cfg.on_step(epoch, rec.batches - 1, params, out.beta);
    }

    if (2 * rec.skipped_batches > rec.batches) {
      throw TrainingError("train_mcnet: epoch " + std::to_string(epoch) + " dropped " +
                          std::to_string(rec.skipped_batches) + " of " +
                          std::to_string(rec.batches) +
                          " batches (forward/backward solves did not converge)");
    }
    rec.train_loss = used_total > 0 ? loss_sum / used_total : 0.0;
    rec.forward_iterations = forward_solves > 0 ? forward_iters / forward_solves : 0.0;
    rec.beta = out.beta;
    lcfg.beta = out.beta;
    const Evaluation ev = evaluate_layer(params, lcfg, val);
    rec.val_psnr = ev.psnr;
    rec.val_consistency = ev.consistency;
    rec.val_failures = ev.failures;
    rec.lipschitz = cfg.lipschitz_trials > 0
                        ? denoiser::estimate_lipschitz(params, cfg.lipschitz_trials,
                                                       cfg.seed + 7919 * (epoch + 1))
                        : 0.0;
    out.report.epochs.push_back(rec);
    out.selected_epoch = epoch;
    const EpochRecord* prev =
        best.selected_epoch >= 0 ? &out.report.epochs[best.selected_epoch] : nullptr;
    if (cfg.select_best_epoch &&
        (!prev || rec.val_failures < prev->val_failures ||
         (rec.val_failures == prev->val_failures && rec.val_psnr > prev->val_psnr))) {
      best.params = params;
      best.beta = out.beta;
      best.optimizer = out.optimizer;
      best.selected_epoch = epoch;
    }
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }
  if (cfg.select_best_epoch && best.selected_epoch >= 0) {
    best.report = std::move(out.report);
    return best;
  }
  return out;
}

}  // namespace mcnet::training
