#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "mcnet/commands.hpp"
#include "mcnet/config.hpp"

namespace {

std::string describe_keys() {
  std::string text = "Configuration keys (file `key = value`, environment MCNET_<KEY>):\n";
  for (const auto& k : mcnet::cli::known_keys()) {
    text += "  " + std::string(k.name);
    if (*k.default_value) text += " [" + std::string(k.default_value) + "]";
    text += "\n      " + std::string(k.help) + "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mcnet::cli;
  CLI::App app{"Measurement-consistent super-resolution with an implicit ADMM layer"};
  app.require_subcommand(1);
  app.footer(describe_keys());

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> scale;
  std::optional<double> epsilon;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "Run configuration file")->required();
  app.add_option("--seed", seed, "Override the seed");
  app.add_option("--scale", scale, "Override the scale (2, 3 or 4)");
  app.add_option("--epsilon", epsilon, "Override the consistency radius");
  app.add_option("--out", out, "Override the output directory");

  using Command = int (*)(const RunConfig&, Streams);
  const std::pair<const char*, Command> commands[] = {
      {"prepare", cmd_prepare}, {"pretrain", cmd_pretrain}, {"train", cmd_train},
      {"sr", cmd_sr},           {"eval", cmd_eval},         {"diagnose", cmd_diagnose},
  };
  const char* help[] = {
      "Degrade HR images into LR measurements and bicubic backbone outputs",
      "Pretrain denoisers at several noise levels and select one",
      "Train the implicit layer end to end",
      "Super-resolve one LR measurement",
      "Evaluate methods on a prepared dataset",
      "Report solver convergence and contraction estimates",
  };
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    app.add_subcommand(commands[i].first, help[i])->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = RunConfig::load(config_path);
    cfg.apply_process_env();
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (scale) cfg.set("scale", std::to_string(*scale));
    if (epsilon) {
      std::ostringstream os;
      os.precision(17);
      os << *epsilon;
      cfg.set("epsilon", os.str());
    }
    if (out) {
      // Flags are relative to the working directory, not to the config file.
      cfg.set("out", std::filesystem::absolute(*out).string());
    }
    cfg.validate();
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) return fn(cfg, Streams{std::cout, std::cerr});
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIncomplete;
  }
  return kExitUsage;
}
