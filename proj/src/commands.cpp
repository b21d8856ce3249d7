#include "mcnet/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mcnet/denoiser.hpp"
#include "mcnet/eval.hpp"
#include "mcnet/fixed_point.hpp"
#include "mcnet/image_io.hpp"
#include "mcnet/implicit_layer.hpp"
#include "mcnet/resize.hpp"
#include "mcnet/training.hpp"

namespace mcnet::cli {
namespace fs = std::filesystem;
using denoiser::Checkpoint;
using denoiser::DenoiserParams;
using fixed_point::SolveReport;
using fixed_point::Status;
using measurement::MeasurementModel;
using training::PatchDataset;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

fs::path output_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get_path("out");
  fs::create_directories(dir);
  return dir;
}

bool has_whitespace(const std::string& s) {
  return s.find_first_of(" \t\r\n") != std::string::npos;
}

std::vector<training::SourceImage> load_images(const RunConfig& cfg, const std::string& key,
                                               Streams io) {
  auto images = training::load_image_dir(cfg.get_path(key), std::nullopt,
                                         [&](const std::string& msg) {
                                           io.log << "warning: " << msg << '\n';
                                         });
  if (images.empty()) throw ConfigError("no readable images in " + key);
  return images;
}

struct TrainingData {
  PatchDataset train;
  PatchDataset val;
};

TrainingData training_data(const RunConfig& cfg, Streams io) {
  const measurement::OperatorSpec spec = cfg.operator_spec();
  TrainingData d;
  d.train = PatchDataset::extract(load_images(cfg, "train_dir", io), spec,
                                  cfg.get_int("patch_size"), cfg.get_int("stride"));
  if (const int cap = cfg.get_int("max_patches"); cap > 0) {
    d.train = d.train.head(static_cast<std::size_t>(cap));
  }
  d.val = PatchDataset::whole_images(load_images(cfg, "val_dir", io), spec);
  if (d.train.empty()) throw ConfigError("train_dir yields no patches of the configured size");
  io.log << "training patches: " << d.train.size() << ", validation images: " << d.val.size()
         << '\n';
  return d;
}

std::optional<Checkpoint> try_load_checkpoint(const fs::path& path, Streams io) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    return denoiser::load_checkpoint(path);
  } catch (const std::exception& e) {
    io.log << "warning: " << path.string() << ": " << e.what() << '\n';
    return std::nullopt;
  }
}

Checkpoint require_checkpoint(const RunConfig& cfg, const std::string& key) {
  const fs::path path = artifact_path(cfg, key);
  if (!fs::exists(path)) throw ConfigError(key + " checkpoint not found: " + path.string());
  return denoiser::load_checkpoint(path);
}

void warn_on_metadata_mismatch(const Checkpoint& ckpt, const RunConfig& cfg, Streams io) {
  const auto it = ckpt.metadata.find("scale");
  if (it != ckpt.metadata.end() && it->second != std::to_string(cfg.scale())) {
    io.log << "warning: checkpoint was trained at scale " << it->second
           << ", running at scale " << cfg.scale() << '\n';
  }
}

std::map<std::string, std::string> run_metadata(const RunConfig& cfg) {
  std::map<std::string, std::string> meta = cfg.operator_spec().to_config();
  meta["seed"] = std::to_string(cfg.seed());
  return meta;
}

// Outcome of one layer solve, including solves that diverged.
struct Solved {
  ImageTensor x;
  int iterations = 0;
  bool converged = false;
  SolveReport report;
};

Solved solve_layer(const MeasurementModel& model, const DenoiserParams& params,
                   const layer::LayerConfig& lcfg, const ImageTensor& w) {
  Solved s;
  try {
    layer::ForwardResult r = layer::forward(model, params, lcfg, w);
    s.x = std::move(r.x_hat);
    s.iterations = r.report.iterations;
    s.converged = r.report.status == Status::converged;
    s.report = std::move(r.report);
  } catch (const layer::LayerError& e) {
    s.report = e.report();
    s.iterations = s.report.iterations;
    s.x = s.report.image.size() == 2 * static_cast<Eigen::Index>(w.size())
              ? layer::unpack(s.report.image, w.height(), w.width()).x
              : measurement::project(model, w);
  } catch (const fixed_point::NumericError& e) {
    s.iterations = e.iteration();
    s.x = measurement::project(model, w);
  }
  return s;
}

// Runs a raw solver on the layer map and turns a numeric failure into a
// diverged report so the diagnostics can still be printed.
SolveReport diagnose_solve(bool anderson, const fixed_point::Problem& problem,
                           const fixed_point::Vector& z0, const fixed_point::SolverConfig& sc) {
  try {
    return anderson ? fixed_point::solve_anderson(problem, z0, sc)
                    : fixed_point::solve_picard(problem, z0, sc);
  } catch (const fixed_point::NumericError& e) {
    SolveReport r;
    r.status = Status::diverged;
    r.iterations = e.iteration();
    return r;
  }
}

std::string status_line(const char* label, const SolveReport& r) {
  std::ostringstream os;
  os << label << ": " << fixed_point::to_string(r.status) << ", " << r.iterations
     << " iterations, final residual " << fmt("%.4e", r.final_residual());
  return os.str();
}

}  // namespace

fs::path artifact_path(const RunConfig& cfg, const std::string& key) {
  const fs::path p(cfg.get(key));
  return p.is_absolute() ? p : cfg.get_path("out") / p;
}

// ---------------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg, Streams io) {
  const measurement::OperatorSpec spec = cfg.operator_spec();
  const fs::path dir = cfg.get_path("data_dir");
  int errors = 0;
  auto images = training::load_image_dir(cfg.get_path("hr_dir"), std::nullopt,
                                         [&](const std::string& msg) {
                                           io.log << "error: " << msg << '\n';
                                           ++errors;
                                         });
  const auto op = spec.build();
  PreparedSet set;
  set.spec = spec;
  set.seed = cfg.seed();
  for (auto& src : images) {
    if (has_whitespace(src.name)) {
      io.log << "error: " << src.name << ": file names with whitespace are not supported\n";
      ++errors;
      continue;
    }
    PreparedImage img;
    img.name = src.name;
    try {
      img.hr = training::modcrop(src.hr, spec.scale);
    } catch (const std::exception& e) {
      io.log << "error: " << src.name << ": " << e.what() << '\n';
      ++errors;
      continue;
    }
    if (!img.hr.same_shape(src.hr)) {
      io.log << "warning: " << src.name << ": cropped from " << src.hr.height() << "x"
             << src.hr.width() << " to " << img.hr.height() << "x" << img.hr.width() << '\n';
    }
    img.b = op.apply(img.hr);
    img.w = bicubic_upsample(img.b, spec.scale);
    set.images.push_back(std::move(img));
  }
  for (const char* sub : {"hr", "lr", "w"}) fs::create_directories(dir / sub);
  for (const PreparedImage& img : set.images) {
    const std::pair<const char*, const ImageTensor*> parts[] = {
        {"hr", &img.hr}, {"lr", &img.b}, {"w", &img.w}};
    for (const auto& [sub, t] : parts) {
      save_tensor(dir / sub / (img.name + ".mcnt"), *t);
      write_png(dir / sub / (img.name + ".png"), *t);
    }
  }
  write_text(dir / "manifest.txt", prepared_manifest(set));
  io.out << "prepared " << set.images.size() << " images at scale " << spec.scale << " in "
         << dir.string() << '\n';
  if (errors > 0) io.log << errors << " file(s) failed\n";
  return errors > 0 || set.images.empty() ? kExitIncomplete : kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const RunConfig& cfg, Streams io) {
  const TrainingData data = training_data(cfg, io);
  const int epochs = cfg.get_int("pretrain_epochs");
  std::vector<double> sigmas;
  for (double level : cfg.get_doubles("noise_grid")) sigmas.push_back(level / 255.0);

  std::ostringstream report;
  report << "sigma,epoch,loss\n";
  std::vector<DenoiserParams> candidates;
  for (double sigma : sigmas) {
    training::PretrainConfig pcfg = cfg.pretrain_config();
    pcfg.on_epoch = [&](int epoch, double loss) {
      io.log << "pretrain sigma " << fmt("%.1f", sigma * 255.0) << "/255 epoch " << epoch
             << " loss " << fmt("%.6e", loss) << '\n';
      report << fmt("%.17g", sigma) << ',' << epoch << ',' << fmt("%.17g", loss) << '\n';
    };
    candidates.push_back(training::pretrain_denoiser(sigma, data.train, epochs, pcfg).params);
  }

  const layer::LayerConfig lcfg = cfg.layer_config();
  const auto sel = training::select_denoiser(candidates, data.val, lcfg.rho, lcfg.forward_cfg);
  std::ostringstream selection;
  selection << "sigma,val_psnr\n";
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    selection << fmt("%.17g", sigmas[i]) << ',' << fmt("%.4f", sel.scores[i]) << '\n';
    io.out << "sigma " << fmt("%.1f", sigmas[i] * 255.0) << "/255: PnP validation PSNR "
           << fmt("%.4f", sel.scores[i]) << " dB\n";
  }

  const fs::path out = output_dir(cfg);
  Checkpoint ckpt;
  ckpt.params = candidates[sel.index];
  ckpt.metadata = run_metadata(cfg);
  ckpt.metadata["noise_sigma"] = fmt("%.17g", sigmas[sel.index]);
  ckpt.metadata["pretrain_epochs"] = std::to_string(epochs);
  const fs::path path = artifact_path(cfg, "denoiser");
  denoiser::save_checkpoint(path, ckpt);
  write_text(out / "pretrain_report.csv", report.str());
  write_text(out / "denoiser_selection.csv", selection.str());
  io.out << "selected sigma " << fmt("%.1f", sigmas[sel.index] * 255.0) << "/255, saved "
         << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, Streams io) {
  const Checkpoint init = require_checkpoint(cfg, "denoiser");
  const TrainingData data = training_data(cfg, io);
  const fs::path out = output_dir(cfg);
  training::TrainConfig tcfg = cfg.train_config();

  double beta0 = 0.0;
  if (cfg.has("beta")) {
    beta0 = cfg.get_double("beta");
  } else {
    const auto grid =
        training::grid_search_beta(init.params, cfg.get_doubles("beta_grid"), data.val, tcfg.layer);
    std::ostringstream csv;
    csv << "beta,val_psnr\n";
    for (std::size_t i = 0; i < grid.grid.size(); ++i) {
      csv << fmt("%.17g", grid.grid[i]) << ',' << fmt("%.4f", grid.scores[i]) << '\n';
      io.log << "beta " << fmt("%g", grid.grid[i]) << ": validation PSNR "
             << fmt("%.4f", grid.scores[i]) << " dB\n";
    }
    write_text(out / "beta_grid.csv", csv.str());
    beta0 = grid.beta;
  }
  io.out << "initial beta " << fmt("%g", beta0) << '\n';

  tcfg.on_epoch = [&](const training::EpochRecord& r) {
    io.log << "epoch " << r.epoch << " lr " << fmt("%.1e", r.learning_rate) << " loss "
           << fmt("%.6e", r.train_loss) << " val " << fmt("%.4f", r.val_psnr) << " dB"
           << " fidelity " << fmt("%.3e", r.val_consistency) << " lipschitz "
           << fmt("%.4f", r.lipschitz) << " beta " << fmt("%.4f", r.beta) << " iters "
           << fmt("%.1f", r.forward_iterations) << " skipped " << r.skipped_items << "/"
           << r.items << " (forward " << r.forward_failures << ", backward "
           << r.backward_failures << ")\n";
  };
  const int epochs = cfg.get_int("epochs");
  const auto result = training::train_mcnet(init.params, beta0, data.train, data.val, epochs, tcfg);

  Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.beta = result.beta;
  ckpt.metadata = run_metadata(cfg);
  ckpt.metadata["epochs"] = std::to_string(epochs);
  ckpt.metadata["initial_beta"] = fmt("%.17g", beta0);
  ckpt.metadata["selected_epoch"] = std::to_string(result.selected_epoch);
  ckpt.optimizer_step = result.optimizer.steps();
  ckpt.optimizer_blocks = {result.optimizer.first_moment(), result.optimizer.second_moment()};
  const fs::path path = artifact_path(cfg, "model");
  denoiser::save_checkpoint(path, ckpt);

  std::ofstream csv(out / "train_report.csv");
  result.report.write_csv(csv);
  const double backbone = training::backbone_psnr(data.val);
  io.out << "backbone validation PSNR " << fmt("%.4f", backbone) << " dB\n";
  if (result.selected_epoch >= 0) {
    const auto& sel = result.report.epochs[result.selected_epoch];
    io.out << "selected epoch " << sel.epoch << ": validation PSNR " << fmt("%.4f", sel.val_psnr)
           << " dB, fidelity " << fmt("%.4e", sel.val_consistency) << ", validation failures "
           << sel.val_failures << ", beta " << fmt("%.6g", result.beta) << '\n';
  }
  io.out << "saved " << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_sr(const RunConfig& cfg, Streams io) {
  const Checkpoint ckpt = require_checkpoint(cfg, "model");
  warn_on_metadata_mismatch(ckpt, cfg, io);
  layer::LayerConfig lcfg = cfg.layer_config();
  if (!cfg.has("beta")) {
    if (!ckpt.beta) throw ConfigError("model checkpoint has no beta; set beta");
    lcfg.beta = *ckpt.beta;
  }
  const fs::path input = cfg.get_path("input_b");
  const ImageTensor b = training::read_luma(input);
  const measurement::OperatorSpec spec = cfg.operator_spec();
  const int h = b.height() * spec.scale, wd = b.width() * spec.scale;
  const ImageTensor w = cfg.has("input_w") ? training::read_luma(cfg.get_path("input_w"))
                                           : bicubic_upsample(b, spec.scale);
  if (w.height() != h || w.width() != wd) {
    throw ConfigError("input_w must be " + std::to_string(h) + "x" + std::to_string(wd));
  }
  const MeasurementModel model(spec.build(), b, spec.epsilon, h, wd);

  const fs::path out = output_dir(cfg);
  const std::string stem = "sr_" + input.stem().string();
  const fs::path residuals = out / (stem + "_residuals.csv");
  const Solved s = solve_layer(model, ckpt.params, lcfg, w);
  {
    std::ofstream csv(residuals);
    fixed_point::write_residual_csv(csv, s.report);
  }
  if (s.report.status == Status::diverged || s.report.residual_history.empty()) {
    io.log << "error: forward solve diverged after " << s.iterations
           << " iterations; residual history in " << residuals.string() << '\n';
    return kExitDiverged;
  }
  save_tensor(out / (stem + ".mcnt"), s.x);
  write_png(out / (stem + ".png"), s.x);
  io.out << "output " << (out / (stem + ".png")).string() << '\n'
         << "fidelity " << fmt("%.4e", model.residual_norm(s.x)) << '\n'
         << "iterations " << s.iterations << '\n'
         << "residual " << fmt("%.4e", s.report.final_residual()) << '\n'
         << "status " << fixed_point::to_string(s.report.status) << '\n';
  return s.converged ? kExitOk : kExitIncomplete;
}

// ---------------------------------------------------------------------------

int cmd_eval(const RunConfig& cfg, Streams io) {
  const PreparedSet set = load_prepared(cfg.get_path("data_dir"));
  if (set.spec.scale != cfg.scale()) {
    throw ConfigError("prepared data is at scale " + std::to_string(set.spec.scale) +
                      ", config asks for " + std::to_string(cfg.scale()));
  }
  measurement::OperatorSpec spec = set.spec;
  spec.epsilon = cfg.epsilon();
  const int shave = cfg.has("shave") ? cfg.get_int("shave") : spec.scale;
  const std::size_t n = set.images.size();
  const layer::LayerConfig base = cfg.layer_config();

  std::vector<MeasurementModel> models;
  for (const PreparedImage& img : set.images) models.push_back(prepared_model(spec, img));

  // External backbone outputs, loaded on first use.
  std::optional<std::vector<ImageTensor>> external;
  bool external_tried = false;
  auto external_ws = [&]() -> const std::vector<ImageTensor>* {
    if (!external_tried) {
      external_tried = true;
      if (!cfg.has("w_dir")) {
        io.log << "warning: w_dir is not set\n";
        return nullptr;
      }
      std::vector<ImageTensor> ws;
      for (const PreparedImage& img : set.images) {
        std::optional<fs::path> file;
        for (const char* ext : {".mcnt", ".png", ".pgm"}) {
          const fs::path cand = cfg.get_path("w_dir") / (img.name + ext);
          if (fs::exists(cand)) {
            file = cand;
            break;
          }
        }
        if (!file) {
          io.log << "warning: no external output for " << img.name << '\n';
          return nullptr;
        }
        ImageTensor w = training::read_luma(*file);
        if (w.height() < img.hr.height() || w.width() < img.hr.width()) {
          io.log << "warning: external output for " << img.name << " is too small\n";
          return nullptr;
        }
        ws.push_back(w.crop(0, 0, img.hr.height(), img.hr.width()));
      }
      external = std::move(ws);
    }
    return external ? &*external : nullptr;
  };
  auto checkpoint = [&](const std::string& key) {
    return try_load_checkpoint(artifact_path(cfg, key), io);
  };

  std::vector<EvalRow> rows;
  bool complete = true;
  auto skip = [&](const std::string& method, const std::string& why) {
    io.log << "warning: skipping " << method << ": " << why << '\n';
    complete = false;
  };
  auto passthrough = [&](const std::string& method, const std::vector<ImageTensor>& xs) {
    std::vector<ImageScore> scores(n);
    parallel_for(n, [&](std::size_t i) {
      scores[i] = score_image(set.images[i].name, set.images[i].hr, xs[i], models[i], shave);
    });
    rows.push_back(EvalRow::from_scores(method, spec.scale, std::move(scores)));
  };
  auto layered = [&](const std::string& method, const DenoiserParams& params,
                     const layer::LayerConfig& lcfg,
                     const std::function<ImageTensor(std::size_t)>& w_of) {
    std::vector<ImageScore> scores(n);
    parallel_for(n, [&](std::size_t i) {
      const Solved s = solve_layer(models[i], params, lcfg, w_of(i));
      scores[i] = score_image(set.images[i].name, set.images[i].hr, s.x, models[i], shave);
      scores[i].iterations = s.iterations;
      scores[i].converged = s.converged;
    });
    rows.push_back(EvalRow::from_scores(method, spec.scale, std::move(scores)));
  };

  for (const std::string& method : cfg.get_list("methods")) {
    if (method == "bicubic") {
      std::vector<ImageTensor> ws;
      for (const PreparedImage& img : set.images) ws.push_back(img.w);
      passthrough(method, ws);
    } else if (method == "external") {
      if (const auto* ws = external_ws()) {
        passthrough(method, *ws);
      } else {
        skip(method, "external backbone outputs unavailable");
      }
    } else if (method == "pnp") {
      const auto ckpt = checkpoint("denoiser");
      if (!ckpt) {
        skip(method, "denoiser checkpoint unavailable");
        continue;
      }
      layer::LayerConfig lcfg = base;
      lcfg.beta = 0.0;
      layered(method, ckpt->params, lcfg, [&](std::size_t i) {
        return ImageTensor(set.images[i].hr.height(), set.images[i].hr.width());
      });
    } else if (method == "mcnet" || method == "mcnet+external") {
      const auto ckpt = checkpoint("model");
      if (!ckpt) {
        skip(method, "model checkpoint unavailable");
        continue;
      }
      if (!ckpt->beta && !cfg.has("beta")) {
        skip(method, "model checkpoint has no beta");
        continue;
      }
      warn_on_metadata_mismatch(*ckpt, cfg, io);
      layer::LayerConfig lcfg = base;
      if (!cfg.has("beta")) lcfg.beta = *ckpt->beta;
      if (method == "mcnet") {
        layered(method, ckpt->params, lcfg, [&](std::size_t i) { return set.images[i].w; });
      } else if (const auto* ws = external_ws()) {
        layered(method, ckpt->params, lcfg, [&](std::size_t i) { return (*ws)[i]; });
      } else {
        skip(method, "external backbone outputs unavailable");
      }
    } else {
      throw ConfigError("unknown method '" + method +
                        "' (expected bicubic, external, pnp, mcnet, mcnet+external)");
    }
  }

  const std::string table = format_table(rows);
  io.out << table;
  const fs::path out = output_dir(cfg);
  write_text(out / "eval.txt", table);
  write_text(out / "eval.csv", format_csv(rows));
  write_text(out / "eval_images.csv", format_image_csv(rows));
  for (const EvalRow& r : rows) complete = complete && r.converged;
  return complete ? kExitOk : kExitIncomplete;
}

// ---------------------------------------------------------------------------

int cmd_diagnose(const RunConfig& cfg, Streams io) {
  const Checkpoint ckpt = require_checkpoint(cfg, "model");
  layer::LayerConfig lcfg = cfg.layer_config();
  if (!cfg.has("beta")) lcfg.beta = ckpt.beta.value_or(0.0);

  std::string name;
  std::optional<MeasurementModel> model;
  ImageTensor w;
  if (cfg.has("input_b")) {
    const fs::path input = cfg.get_path("input_b");
    const ImageTensor b = training::read_luma(input);
    const measurement::OperatorSpec spec = cfg.operator_spec();
    const int h = b.height() * spec.scale, wd = b.width() * spec.scale;
    w = cfg.has("input_w") ? training::read_luma(cfg.get_path("input_w"))
                           : bicubic_upsample(b, spec.scale);
    if (w.height() != h || w.width() != wd) {
      throw ConfigError("input_w must be " + std::to_string(h) + "x" + std::to_string(wd));
    }
    model.emplace(spec.build(), b, spec.epsilon, h, wd);
    name = input.stem().string();
  } else {
    const PreparedSet set = load_prepared(cfg.get_path("data_dir"));
    if (set.images.empty()) throw ConfigError("prepared dataset is empty");
    measurement::OperatorSpec spec = set.spec;
    spec.epsilon = cfg.epsilon();
    model.emplace(prepared_model(spec, set.images[0]));
    w = set.images[0].w;
    name = set.images[0].name;
  }

  const int h = w.height(), wd = w.width();
  const fixed_point::Problem problem{
      [&](const fixed_point::Vector& z) {
        return layer::pack(
            layer::f_theta_step(layer::unpack(z, h, wd), lcfg, *model, ckpt.params, w));
      },
      2 * static_cast<Eigen::Index>(w.size())};
  const fixed_point::Vector z0 = layer::pack(layer::initial_state(*model, w));
  const SolveReport anderson = diagnose_solve(true, problem, z0, lcfg.forward_cfg);
  fixed_point::SolverConfig picard_cfg = lcfg.forward_cfg;
  picard_cfg.max_iters = cfg.get_int("picard_max_iters");
  picard_cfg.anderson_memory = 1;
  const SolveReport picard = diagnose_solve(false, problem, z0, picard_cfg);

  const double lipschitz = denoiser::estimate_lipschitz(ckpt.params, 100, cfg.seed());
  const double bound = denoiser::lipschitz_bound(ckpt.params);
  std::optional<double> jacobian;
  if (anderson.status != Status::diverged && anderson.solution.allFinite() &&
      anderson.solution.size() == problem.dim) {
    jacobian = layer::jacobian_spectral_norm(*model, ckpt.params, lcfg, w,
                                             layer::unpack(anderson.solution, h, wd), 30,
                                             cfg.seed());
  }

  const fs::path out = output_dir(cfg);
  {
    std::ostringstream csv;
    csv << "iteration,anderson,picard\n";
    const std::size_t rows =
        std::max(anderson.residual_history.size(), picard.residual_history.size());
    for (std::size_t k = 0; k < rows; ++k) {
      csv << k + 1 << ',';
      if (k < anderson.residual_history.size()) csv << fmt("%.17g", anderson.residual_history[k]);
      csv << ',';
      if (k < picard.residual_history.size()) csv << fmt("%.17g", picard.residual_history[k]);
      csv << '\n';
    }
    write_text(out / "diagnose_residuals.csv", csv.str());
  }
  const bool both = anderson.status == Status::converged && picard.status == Status::converged;
  std::ostringstream rep;
  rep << "input " << name << " (" << h << "x" << wd << "), beta " << fmt("%g", lcfg.beta)
      << ", tol " << fmt("%g", lcfg.forward_cfg.tol) << '\n'
      << status_line("anderson", anderson) << '\n'
      << status_line("picard", picard) << '\n'
      << "anderson fewer iterations than picard: "
      << (both ? (anderson.iterations < picard.iterations ? "yes" : "no") : "n/a") << '\n'
      << "denoiser lipschitz estimate " << fmt("%.6f", lipschitz) << '\n'
      << "layer norm product bound " << fmt("%.6f", bound) << '\n'
      << "jacobian spectral norm at fixed point "
      << (jacobian ? fmt("%.6f", *jacobian) : std::string("n/a")) << '\n'
      << "diverged " << (anderson.status == Status::diverged ? "yes" : "no") << '\n';
  io.out << rep.str();
  write_text(out / "diagnose.txt", rep.str());
  return kExitOk;
}

}  // namespace mcnet::cli
