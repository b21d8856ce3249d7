#include "mcnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mcnet::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : known_keys())
    if (name == k.name) return &k;
  return nullptr;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

}  // namespace

const std::vector<ConfigKey>& known_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "single source of randomness"},
      {"scale", "3", "super-resolution factor, one of 2, 3, 4"},
      {"epsilon", "0", "consistency radius of the constraint ||A x - b|| <= epsilon"},
      {"operator", "bicubic", "degradation operator: bicubic or box"},
      {"boundary", "circular", "blur boundary for the bicubic operator: circular or replicate"},
      {"shave", "", "border pixels excluded from PSNR/SSIM (default: scale)"},
      {"hr_dir", "", "HR images read by prepare"},
      {"data_dir", "prepared", "prepared dataset written by prepare and read by eval"},
      {"w_dir", "", "externally produced backbone outputs, matched by file stem"},
      {"train_dir", "", "HR training images for pretrain and train"},
      {"val_dir", "", "HR validation images for model selection and beta search"},
      {"patch_size", "48", "training patch size (HR pixels)"},
      {"stride", "24", "training patch stride"},
      {"max_patches", "0", "cap on training patches, 0 for all"},
      {"depth", "6", "denoiser convolution layers"},
      {"width", "64", "denoiser hidden channels"},
      {"sn_target", "0.98", "per-layer spectral norm target"},
      {"sn_iters", "5", "power iterations per optimizer step"},
      {"init", "identity", "denoiser initialization: identity or he"},
      {"init_noise", "0.01", "relative noise of the identity initialization"},
      {"noise_grid", "2,5,10,15", "pretraining noise levels in 8-bit units (sigma * 255)"},
      {"pretrain_epochs", "10", "epochs per pretraining noise level"},
      {"pretrain_lr", "1e-5", "Adam learning rate for pretraining"},
      {"pretrain_batch", "16", "pretraining batch size"},
      {"denoiser", "denoiser.ckpt", "selected pretrained denoiser"},
      {"beta_grid", "0.1,0.5,1,2,5,10", "initial beta candidates"},
      {"beta", "", "initial beta; skips the grid search when set"},
      {"epochs", "40", "MCNet training epochs"},
      {"batch_size", "16", "MCNet training batch size"},
      {"lr", "1e-4", "initial Adam learning rate"},
      {"lr_drop", "0.1", "learning-rate factor applied at lr_drop_epoch"},
      {"lr_drop_epoch", "30", "first epoch at the reduced learning rate"},
      {"loss", "mse", "training loss: mse or l1"},
      {"lipschitz_trials", "20", "sample pairs for the per-epoch Lipschitz estimate"},
      {"model_selection", "best",
       "saved state: best (fewest validation failures, then highest validation PSNR) or last"},
      {"model", "mcnet.ckpt", "trained MCNet checkpoint (weights and beta)"},
      {"rho", "1", "augmented-Lagrangian weight"},
      {"forward_max_iters", "200", "forward solve budget"},
      {"forward_tol", "1e-6", "forward relative-residual tolerance"},
      {"backward_max_iters", "80", "backward solve budget"},
      {"backward_tol", "1e-6", "backward relative-residual tolerance"},
      {"anderson_memory", "5", "Anderson window"},
      {"anderson_ridge", "1e-4", "Anderson relative ridge"},
      {"stagnation_window", "30", "iterations without progress before declaring divergence"},
      {"methods", "bicubic,pnp,mcnet", "eval rows: bicubic, pnp, mcnet, external"},
      {"mcnet_backbone", "bicubic", "w used by the mcnet row: bicubic or external"},
      {"input_b", "", "sr/diagnose: LR measurement (.mcnt, .png or .pgm)"},
      {"input_w", "", "sr/diagnose: backbone output (default: bicubic upsampling)"},
      {"picard_max_iters", "2000", "diagnose: budget of the Picard comparison run"},
      {"out", "out", "output directory for artifacts, reports and sr images"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const ConfigKey& k : known_keys())
    if (*k.default_value != '\0') values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!find_key(key)) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  RunConfig cfg = parse(in, file.string());
  cfg.base_dir_ = file.has_parent_path() ? file.parent_path() : std::filesystem::path(".");
  return cfg;
}

void RunConfig::apply_env(const EnvLookup& lookup) {
  for (const ConfigKey& k : known_keys()) {
    if (auto v = lookup("MCNET_" + upper(k.name))) values_[k.name] = *v;
  }
}

void RunConfig::apply_process_env() {
  apply_env([](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  });
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  const auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) {
    throw ConfigError("config key '" + key + "' is not set");
  }
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = upper(get(key));
  if (v == "1" || v == "TRUE" || v == "YES" || v == "ON") return true;
  if (v == "0" || v == "FALSE" || v == "NO" || v == "OFF") return false;
  throw ConfigError("config key '" + key + "': expected a boolean");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : get_list(key)) out.push_back(parse_number<double>(key, s));
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

std::filesystem::path RunConfig::get_path(const std::string& key) const {
  const std::filesystem::path p(get(key));
  return p.is_absolute() ? p : base_dir_ / p;
}

std::optional<std::filesystem::path> RunConfig::find_path(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_path(key);
}

int RunConfig::scale() const {
  const int s = get_int("scale");
  if (s < 2 || s > 4) throw ConfigError("scale must be 2, 3 or 4 (got " + std::to_string(s) + ")");
  return s;
}

double RunConfig::epsilon() const {
  const double e = get_double("epsilon");
  if (!(e >= 0.0)) throw ConfigError("epsilon must be >= 0");
  return e;
}

std::uint64_t RunConfig::seed() const { return get_u64("seed"); }

measurement::OperatorSpec RunConfig::operator_spec() const {
  measurement::OperatorSpec spec;
  const std::string op = get("operator");
  if (op == "bicubic") {
    spec.kind = measurement::OperatorKind::blur_downsample;
  } else if (op == "box") {
    spec.kind = measurement::OperatorKind::box_downsample;
  } else {
    throw ConfigError("operator must be bicubic or box (got '" + op + "')");
  }
  spec.scale = scale();
  spec.boundary = measurement::parse_boundary(get("boundary"));
  spec.epsilon = epsilon();
  return spec;
}

layer::LayerConfig RunConfig::layer_config() const {
  layer::LayerConfig cfg;
  cfg.rho = get_double("rho");
  cfg.forward_cfg.max_iters = get_int("forward_max_iters");
  cfg.forward_cfg.tol = get_double("forward_tol");
  cfg.backward_cfg.max_iters = get_int("backward_max_iters");
  cfg.backward_cfg.tol = get_double("backward_tol");
  for (auto* s : {&cfg.forward_cfg, &cfg.backward_cfg}) {
    s->anderson_memory = get_int("anderson_memory");
    s->anderson_ridge = get_double("anderson_ridge");
    s->stagnation_window = get_int("stagnation_window");
  }
  if (has("beta")) cfg.beta = get_double("beta");
  return cfg;
}

training::PretrainConfig RunConfig::pretrain_config() const {
  training::PretrainConfig cfg;
  cfg.depth = get_int("depth");
  cfg.width = get_int("width");
  cfg.init_kind = training::parse_init_kind(get("init"));
  cfg.init_noise = get_double("init_noise");
  cfg.batch_size = get_int("pretrain_batch");
  cfg.lr.initial = get_double("pretrain_lr");
  cfg.sn_iters = get_int("sn_iters");
  cfg.sn_target = get_double("sn_target");
  cfg.seed = seed();
  return cfg;
}

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig cfg;
  cfg.layer = layer_config();
  cfg.batch_size = get_int("batch_size");
  cfg.lr.initial = get_double("lr");
  cfg.lr.drop_factor = get_double("lr_drop");
  cfg.lr.drop_epoch = get_int("lr_drop_epoch");
  cfg.loss = training::parse_loss(get("loss"));
  cfg.sn_iters = get_int("sn_iters");
  cfg.seed = seed();
  cfg.lipschitz_trials = get_int("lipschitz_trials");
  const std::string selection = get("model_selection");
  if (selection != "best" && selection != "last") {
    throw ConfigError("model_selection must be best or last, got '" + selection + "'");
  }
  cfg.select_best_epoch = selection == "best";
  return cfg;
}

void RunConfig::validate() const {
  scale();
  epsilon();
  seed();
  operator_spec();
  layer_config().validate();
  pretrain_config();
  train_config();
  get_doubles("noise_grid");
  get_doubles("beta_grid");
  if (has("shave") && get_int("shave") < 0) throw ConfigError("shave must be >= 0");
  for (const char* k : {"patch_size", "stride", "epochs", "pretrain_epochs", "max_patches",
                        "picard_max_iters"}) {
    if (get_int(k) < 0) throw ConfigError(std::string(k) + " must be >= 0");
  }
}

}  // namespace mcnet::cli
