// cnce: runs one experiment and writes its outputs under
// <out>/<command>/<config-hash>/.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cnce/config.hpp"
#include "cnce/experiments.hpp"

namespace fs = std::filesystem;

namespace {

// One JSON object on stderr so callers can parse failures.
int fail(const std::string& kind, const std::string& message, const std::string& key = "") {
  nlohmann::json e{{"error", kind}, {"message", message}};
  if (!key.empty()) e["key"] = key;
  std::cerr << e.dump() << "\n";
  return kind == "usage" || kind == "config" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional noise-contrastive estimation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_root = "out";
  std::size_t parallel = 1;
  app.add_option("--config", config_path, "key = value config file (defaults when omitted)");
  app.add_option("--seed", seed, "base seed; overrides run.seed");
  app.add_option("--out", out_root, "output root directory")->capture_default_str();
  app.add_option("--parallel", parallel, "worker threads for independent seeds")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));

  for (const char* name : {"toy-mi", "bias-var", "counterexample", "instdisc", "phase-study"})
    app.add_subcommand(name, std::string("run the ") + name + " experiment")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto config = config_path.empty() ? cnce::ExperimentConfig::defaults() : cnce::ExperimentConfig::load(config_path);
    if (seed) config.set("run.seed", std::to_string(*seed));

    const auto files = cnce::run_command(command, config, parallel);
    const fs::path dir = fs::path(out_root) / command / config.hash();
    fs::create_directories(dir);
    for (const auto& [name, content] : files) {
      std::ofstream f(dir / name, std::ios::binary);
      f << content;
      if (!f) return fail("io", "cannot write " + (dir / name).string());
    }
    std::cout << dir.string() << "\n";
    return 0;
  } catch (const cnce::ConfigError& e) {
    return fail("config", e.what(), e.key());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}
