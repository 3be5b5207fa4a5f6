#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ctmdp/ctmdp.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Discounted continuous-time MDP toolkit"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tol;
  app.add_option("--config", config_path, "run configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the master seed");
  app.add_option("--out", out, "override the output directory");
  app.add_option("--tol", tol, "override the solver tolerance")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = ctmdp::parse_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (tol) cfg.tol = *tol;
    const auto result = ctmdp::run(cfg);
    for (const auto& c : result.checks)
      if (!c.passed) std::cerr << "check failed: " << c.name << " (value " << ctmdp::format_number(c.value) << ")\n";
    std::cout << ctmdp::to_string(cfg.command) << ": " << result.checks.size() << " checks, "
              << (result.all_passed() ? "all passed" : "some failed") << "; artifacts in " << cfg.out << '\n';
    return result.exit_status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
