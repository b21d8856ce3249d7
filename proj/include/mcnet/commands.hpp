#pragma once

#include <ostream>

#include "mcnet/config.hpp"

namespace mcnet::cli {

/// Output streams of a command: `out` for results, `log` for progress and
/// warnings.
struct Streams {
  std::ostream& out;
  std::ostream& log;
};

// Exit codes shared by the subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIncomplete = 1;  // some work skipped or not converged
inline constexpr int kExitDiverged = 2;    // a solve diverged (sr)
inline constexpr int kExitUsage = 64;      // bad configuration or inputs

/// Writes the prepared dataset (see eval.hpp) from the HR images in hr_dir.
/// Unreadable images are reported and skipped; the exit code is then 1.
int cmd_prepare(const RunConfig& cfg, Streams io);

/// Pretrains one denoiser per noise level, selects the best by PnP-ADMM
/// validation PSNR and saves it to <out>/<denoiser>.
int cmd_pretrain(const RunConfig& cfg, Streams io);

/// Grid-searches the initial beta (unless `beta` is set), trains the implicit
/// layer end to end and saves <out>/<model> plus train_report.csv.
int cmd_train(const RunConfig& cfg, Streams io);

/// Super-resolves one measurement with the trained model and reports its
/// measurement consistency.
int cmd_sr(const RunConfig& cfg, Streams io);

/// Evaluates the requested methods on the prepared dataset and writes
/// eval.txt, eval.csv and eval_images.csv to <out>.
int cmd_eval(const RunConfig& cfg, Streams io);

/// Residual histories of Anderson and Picard, Lipschitz and Jacobian norm
/// estimates for one input.
int cmd_diagnose(const RunConfig& cfg, Streams io);

/// Resolves an artifact key: absolute paths are kept, relative ones are
/// placed in the output directory.
std::filesystem::path artifact_path(const RunConfig& cfg, const std::string& key);

}  // namespace mcnet::cli
