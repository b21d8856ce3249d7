#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mcnet/measurement.hpp"
#include "mcnet/tensor.hpp"

namespace mcnet::cli {

// ---------------------------------------------------------------------------
// Prepared datasets
//
// Layout written by `mcnet prepare`:
//   manifest.txt          operator description followed by one line per image
//   hr/<name>.mcnt        modcropped HR luma
//   lr/<name>.mcnt        b = A * hr
//   w/<name>.mcnt         bicubic upsampling of b
//   {hr,lr,w}/<name>.png  8-bit previews

struct PreparedImage {
  std::string name;
  ImageTensor hr, b, w;
};

struct PreparedSet {
  measurement::OperatorSpec spec;
  std::uint64_t seed = 0;
  std::vector<PreparedImage> images;
};

/// Reads manifest.txt and every tensor it lists. Throws std::runtime_error
/// on a malformed manifest or a missing file.
PreparedSet load_prepared(const std::filesystem::path& dir);

/// Manifest text for a prepared set (images in the given order).
std::string prepared_manifest(const PreparedSet& set);

/// Measurement model of a prepared image under `spec`.
measurement::MeasurementModel prepared_model(const measurement::OperatorSpec& spec,
                                             const PreparedImage& image);

// ---------------------------------------------------------------------------
// Tables

struct ImageScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double fidelity = 0.0;  // ||A x - b||_2
  int iterations = 0;     // 0 for methods without a solve
  bool converged = true;
};

struct EvalRow {
  std::string method;
  int scale = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double fidelity = 0.0;
  std::vector<ImageScore> images;
  bool converged = true;

  /// Row whose means are the arithmetic means of the per-image columns.
  static EvalRow from_scores(std::string method, int scale, std::vector<ImageScore> images);
};

/// Scores a reconstruction against the HR reference on the luma channel.
ImageScore score_image(const std::string& name, const ImageTensor& hr, const ImageTensor& x,
                       const measurement::MeasurementModel& model, int shave);

/// Fixed-width text table. PSNR and SSIM use 4 decimals, fidelity %.4e; the
/// CSV writers print exactly the same strings.
std::string format_table(const std::vector<EvalRow>& rows);
std::string format_csv(const std::vector<EvalRow>& rows);
/// One line per (method, image).
std::string format_image_csv(const std::vector<EvalRow>& rows);

std::string format_psnr(double v);
std::string format_ssim(double v);
std::string format_fidelity(double v);

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
/// must be written to per-index slots; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mcnet::cli
