// stackgrad: command-line front end for seeded leader runs, gradient checks,
// the three-strategy separation table and budget sweeps.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "stackgrad/harness/commands.hpp"

using namespace stackgrad;
using namespace stackgrad::harness;

namespace {

/// --out wins; otherwise $STACKGRAD_OUT when set; otherwise no files.
std::optional<fs::path> optional_out(const std::string& flag) {
  if (!flag.empty()) return resolve_output_dir(flag);
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root);
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stackelberg leader optimization through sampled follower equilibria"};
  app.require_subcommand(1);
  app.footer(std::string("Relative output directories are placed under $") + kOutputRootEnv +
             " when it is set.\nExit codes: 0 ok, 1 usage or config error, 2 run failure, "
             "3 finite-difference branch jump, 4 check failed.");

  std::string config_path, out_flag;
  int workers = -1;

  auto* solve = app.add_subcommand("solve", "Run the leader optimizer for every configured seed");
  solve->add_option("--config", config_path, "Config file (sectioned key = value)")
      ->required()
      ->check(CLI::ExistingFile);
  solve->add_option("--out", out_flag, "Output directory, overrides [output] dir");
  solve->add_option("--workers", workers, "Worker threads, overrides [output] workers")
      ->check(CLI::NonNegativeNumber);

  auto* sweep = app.add_subcommand("sweep", "Run every seed at every budget in [sweep] budgets");
  sweep->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_flag, "Output directory, overrides [output] dir");
  sweep->add_option("--workers", workers, "Worker threads")->check(CLI::NonNegativeNumber);

  GradcheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "Check KKT and analytic derivatives against FD");
  grad->add_option("--domain", gc.kind, "nfg, ssg, cyber, quadratic or two_basin")->required();
  grad->add_option("--seed", gc.seed, "Instance seed (>= 1)")->required();
  grad->add_option("--scale", gc.scale, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  grad->add_option("--out", out_flag, "Directory for the CSV report");

  double C = 9.0, eps = 0.1;
  auto* thm1 = app.add_subcommand("thm1", "Payoff table for the three-strategy separation example");
  thm1->add_option("--C", C, "Leader payoff scale")->capture_default_str();
  thm1->add_option("--eps", eps, "Small payoff offset")->capture_default_str();
  thm1->add_option("--out", out_flag, "Directory for thm1.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*solve || *sweep) {
      RunConfig cfg;
      try {
        cfg = load_config(config_path);
        if (workers >= 0) cfg.workers = workers;
        cfg.validate();
      } catch (const ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << '\n';
        return kExitUsage;
      }
      const fs::path dir = resolve_output_dir(out_flag.empty() ? cfg.dir : out_flag);
      return *solve ? cmd_solve(cfg, dir, std::cout, std::cerr)
                    : cmd_sweep(cfg, dir, std::cout, std::cerr);
    }
    if (*grad) {
      try {
        games::check_kind(gc.kind);
      } catch (const UnknownKind& e) {
        std::cerr << e.what() << '\n';
        return kExitUsage;
      }
      if (gc.seed < 1) {
        std::cerr << "seeds start at 1\n";
        return kExitUsage;
      }
      return cmd_gradcheck(gc, optional_out(out_flag), std::cout, std::cerr);
    }
    return cmd_thm1(C, eps, optional_out(out_flag), std::cout, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
}
