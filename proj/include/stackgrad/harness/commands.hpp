#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "stackgrad/flow.hpp"
#include "stackgrad/games/generate.hpp"
#include "stackgrad/games/serialize.hpp"
#include "stackgrad/gradcheck.hpp"
#include "stackgrad/harness/config.hpp"
#include "stackgrad/harness/output.hpp"
#include "stackgrad/kkt.hpp"
#include "stackgrad/leader.hpp"

namespace stackgrad::harness {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitRunFailure = 2,
  kExitBranchJump = 3,
  kExitCheckFailed = 4,
};

/// Runs task(0..n-1) on `workers` threads (0: hardware concurrency). Tasks
/// must not throw.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task) {
  std::size_t w = workers > 0 ? static_cast<std::size_t>(workers)
                              : std::max(1u, std::thread::hardware_concurrency());
  w = std::min(w, n);
  if (w <= 1) {
    for (std::size_t k = 0; k < n; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) task(k);
    });
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t warnings = 0;
  double final_objective = kNaN;
  double final_violation = kNaN;
  double seconds = 0.0;
};

/// One leader run on the instance drawn with `seed`, starting from π = 0.
/// The final objective and violation are those of the last iteration.
inline SeedOutcome run_seed(const RunConfig& cfg, std::uint64_t seed, RunTrajectory* traj_out,
                            std::string* instance_out) {
  SeedOutcome o;
  o.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto inst = games::generate_instance(cfg.kind, cfg.instance_options(), seed);
    if (instance_out) *instance_out = games::serialize_instance(inst);
    const GameInstance& game = inst.game;
    const VectorXd pi0 = game.leader.clamp(VectorXd::Zero(game.param_dim()));
    LeaderResult r = augmented_lagrangian_solve(game, pi0, cfg.leader(seed));
    if (!r.trajectory.records.empty()) {
      o.final_objective = r.trajectory.records.back().objective;
      o.final_violation = r.trajectory.records.back().violation;
    }
    o.warnings = r.trajectory.warnings.size();
    if (traj_out) *traj_out = std::move(r.trajectory);
    o.ok = true;
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return o;
}

namespace detail {

inline void report_outcomes(const std::vector<SeedOutcome>& outs, std::ostream& log,
                            const std::string& prefix = "") {
  for (const auto& o : outs) {
    if (!o.ok)
      log << prefix << "seed " << o.seed << ": FAILED: " << o.error << '\n';
    else if (o.warnings > 0)
      log << prefix << "seed " << o.seed << ": " << o.warnings << " oracle warnings\n";
  }
}

}  // namespace detail

/// Writes per-seed trajectories, serialized instances, the replay config
/// and summary.csv under the output directory.
inline int cmd_solve(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out,
                     std::ostream& err) {
  cfg.validate();
  const auto seeds = cfg.effective_seeds();
  std::vector<SeedOutcome> outcomes(seeds.size());
  std::mutex io;
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "config.txt", print_config(cfg));
  parallel_for(seeds.size(), cfg.workers, [&](std::size_t k) {
    RunTrajectory traj;
    std::string instance;
    outcomes[k] = run_seed(cfg, seeds[k], &traj, &instance);
    const std::string tag = "seed" + std::to_string(seeds[k]);
    try {
      if (!instance.empty()) write_file_atomic(out_dir / ("instance_" + tag + ".txt"), instance);
      if (outcomes[k].ok)
        write_file_atomic(out_dir / ("trajectory_" + tag + ".csv"),
                          trajectory_csv(traj, cfg.timing));
    } catch (const std::exception& e) {
      outcomes[k].ok = false;
      outcomes[k].error = e.what();
    }
    std::lock_guard lock(io);
    out << "seed " << seeds[k] << (outcomes[k].ok ? " done" : " failed") << '\n';
  });

  CsvWriter summary({"seed", "final_objective", "final_violation", "total_seconds"});
  bool failed = false;
  for (const auto& o : outcomes) {
    failed = failed || !o.ok;
    if (!o.ok) continue;
    summary.cell(o.seed).cell(o.final_objective).cell(o.final_violation).cell(
        cfg.timing ? o.seconds : 0.0);
    summary.end_row();
  }
  write_file_atomic(out_dir / "summary.csv", summary.str());
  detail::report_outcomes(outcomes, err);
  return failed ? kExitRunFailure : kExitOk;
}

/// One row per (budget, seed) followed by a mean row per budget, in
/// sweep.csv.
inline int cmd_sweep(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out,
                     std::ostream& err) {
  cfg.validate();
  if (!cfg.budgets || cfg.budgets->size() < 2)
    throw ConfigError(0, "sweep needs [sweep] budgets with at least two values");
  const auto seeds = cfg.effective_seeds();
  const auto& budgets = *cfg.budgets;
  std::vector<SeedOutcome> outcomes(budgets.size() * seeds.size());
  std::mutex io;
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "config.txt", print_config(cfg));
  parallel_for(outcomes.size(), cfg.workers, [&](std::size_t k) {
    RunConfig c = cfg;
    c.budget = budgets[k / seeds.size()];
    outcomes[k] = run_seed(c, seeds[k % seeds.size()], nullptr, nullptr);
    std::lock_guard lock(io);
    out << "budget " << format_double(c.budget) << " seed " << outcomes[k].seed
        << (outcomes[k].ok ? " done" : " failed") << '\n';
  });

  CsvWriter csv({"budget", "seed", "final_objective", "final_violation", "total_seconds"});
  bool failed = false;
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    double obj = 0.0, viol = 0.0, secs = 0.0;
    int used = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const SeedOutcome& o = outcomes[b * seeds.size() + s];
      failed = failed || !o.ok;
      if (!o.ok) continue;
      const double t = cfg.timing ? o.seconds : 0.0;
      csv.cell(budgets[b]).cell(o.seed).cell(o.final_objective).cell(o.final_violation).cell(t);
      csv.end_row();
      obj += o.final_objective;
      viol += o.final_violation;
      secs += t;
      ++used;
    }
    const double inv = used > 0 ? 1.0 / used : kNaN;
    csv.cell(budgets[b]).cell(std::string("mean")).cell(obj * inv).cell(viol * inv).cell(
        secs * inv);
    csv.end_row();
  }
  write_file_atomic(out_dir / "sweep.csv", csv.str());
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    std::vector<SeedOutcome> slice(outcomes.begin() + static_cast<std::ptrdiff_t>(b * seeds.size()),
                                   outcomes.begin() +
                                       static_cast<std::ptrdiff_t>((b + 1) * seeds.size()));
    detail::report_outcomes(slice, err, "budget " + format_double(budgets[b]) + " ");
  }
  return failed ? kExitRunFailure : kExitOk;
}

struct GradcheckOptions {
  std::string kind = "nfg";
  std::uint64_t seed = 1;
  std::string scale = "desk";
  double h = 1e-5;
  double tol = 1e-4;
};

/// KKT-vs-FD Jacobian plus every analytic derivative oracle, on the
/// instance drawn with `seed`. The leader parameter is zero for nfg and a
/// seeded point in the leader box elsewhere.
inline int cmd_gradcheck(const GradcheckOptions& opt, const std::optional<fs::path>& out_dir,
                         std::ostream& out, std::ostream& err) {
  games::check_kind(opt.kind);
  if (opt.scale != "desk" && opt.scale != "paper")
    throw InvalidArgument("scale must be 'desk' or 'paper'");
  if (opt.seed < 1) throw InvalidArgument("seeds start at 1");
  const auto options =
      opt.scale == "desk" ? games::desk_options(opt.kind) : games::InstanceOptions{};
  const auto inst = games::generate_instance(opt.kind, options, opt.seed);
  const GameInstance& game = inst.game;
  Rng rng(opt.seed);
  const VectorXd pi = opt.kind == "nfg" ? VectorXd(VectorXd::Zero(game.param_dim()))
                                        : random_parameter(game, rng);
  const OracleConfig oracle = OracleConfig::precise();

  out << "gradcheck " << opt.kind << " seed " << opt.seed << " (" << opt.scale << ")\n";
  const EquilibriumPoint eq = sample_equilibrium(game, pi, opt.seed, oracle);
  out << "equilibrium: " << to_string(eq.status) << ", ni_residual "
      << format_double_short(eq.ni_residual, 3) << ", kkt_residual "
      << format_double_short(eq.kkt_residual, 3) << '\n';
  if (eq.status == EquilibriumStatus::kDualRecoveryFailed) {
    err << "dual recovery failed; the KKT Jacobian is undefined\n";
    return kExitRunFailure;
  }
  const EquilibriumJacobian jac = solve_equilibrium_jacobian(assemble_kkt(game, eq, pi));
  MatrixXd fd;
  try {
    fd = finite_difference_jacobian_at(game, pi, eq.x, opt.h, oracle);
  } catch (const BranchJump& e) {
    out << "finite differences left the sampled branch: " << e.what() << '\n';
    out << "BRANCH JUMP (finite-difference oracle invalid, not a KKT failure)\n";
    return kExitBranchJump;
  }
  CsvWriter csv({"check", "error"});
  bool pass = true;
  auto record = [&](const std::string& name, double e) {
    const bool ok = e <= opt.tol;
    pass = pass && ok;
    out << "  " << name << ": " << format_double_short(e, 3) << (ok ? "" : "  FAIL") << '\n';
    csv.cell(name).cell(e);
    csv.end_row();
  };
  out << "jacobian (KKT vs central FD, h=" << format_double(opt.h) << ")"
      << (jac.regularized ? ", regularized" : "") << '\n';
  record("jacobian max relative error", max_relative_error(jac.dx_dpi, fd));
  out << "derivative oracles (normwise relative error)\n";
  const JointStrategy probe = interior_probe_point(game, rng);
  for (const auto& c : check_derivative_oracles(game, probe, pi)) record(c.name, c.error);
  out << (pass ? "PASS" : "FAIL") << '\n';
  if (out_dir)
    write_file_atomic(*out_dir / ("gradcheck_" + opt.kind + "_seed" + std::to_string(opt.seed) +
                                  ".csv"),
                      csv.str());
  return pass ? kExitOk : kExitCheckFailed;
}

/// Prints the strategy × rule table and checks the argmax pattern.
inline int cmd_thm1(double C, double eps, const std::optional<fs::path>& out_dir,
                    std::ostream& out, std::ostream& err) {
  if (!(eps > 0.0) || !(C > 3.0 * eps) || !std::isfinite(C)) {
    err << "thm1 needs eps > 0 and C > 3*eps (got C=" << format_double(C)
        << ", eps=" << format_double(eps) << ")\n";
    return kExitUsage;
  }
  const SeparationTable t = separation_table(C, eps);
  out << format_separation_table(t);
  const Index expected[3] = {2, 0, 1};
  for (std::size_t r = 0; r < 3; ++r) {
    const bool ok = t.argmax[r] == expected[r];
    out << to_string(SeparationTable::rules[r]) << " picks strategy " << t.argmax[r] + 1
        << " (expected " << expected[r] + 1 << ")" << (ok ? "" : "  MISMATCH") << '\n';
  }
  if (out_dir) write_file_atomic(*out_dir / "thm1.csv", separation_csv(t));
  return t.matches_expected_pattern() ? kExitOk : kExitCheckFailed;
}

}  // namespace stackgrad::harness
