#include "bpo/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "bpo/config.hpp"
#include "bpo/csv.hpp"
#include "bpo/driver.hpp"
#include "bpo/errors.hpp"

namespace bpo {
namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  int threads = 1;
};

int effective_threads(int flag) {
  if (const char* env = std::getenv("BPO_THREADS"); env && *env) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(env, &used);
      if (used == std::string(env).size() && n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("BPO_THREADS must be a positive integer, got '") + env + "'");
  }
  if (flag < 1) throw ConfigError("--threads must be >= 1");
  return flag;
}

RunConfig load(const Flags& f, std::ostream& err) {
  if (f.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_config(f.config);
  for (const auto& w : cfg.warnings) err << "warning: " << w << '\n';
  if (f.seed) cfg.algo.seed = cfg.gap.seed = *f.seed;
  if (f.reps) cfg.gap.reps = *f.reps;
  cfg.algo.threads = cfg.gap.threads = effective_threads(f.threads);
  return cfg;
}

// Writes to --out when given, else to `out`.
template <typename Fn>
void emit(const Flags& f, std::ostream& out, Fn&& write) {
  if (f.out.empty()) {
    write(out);
    return;
  }
  std::ofstream file(f.out, std::ios::binary);
  if (!file) throw ConfigError("cannot write '" + f.out + "'");
  write(file);
  if (!file) throw std::runtime_error("failed writing '" + f.out + "'");
}

int report(std::ostream& out, const std::vector<oracle::CheckResult>& checks) {
  print_checks(out, checks);
  for (const auto& c : checks)
    if (!c.passed) return kExitFailure;
  return kExitOk;
}

}  // namespace

void print_checks(std::ostream& out, const std::vector<oracle::CheckResult>& checks) {
  std::size_t passed = 0;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS  " : "FAIL  ") << c.name << "  [worst " << std::setprecision(3)
        << c.worst << "]";
    if (!c.detail.empty()) out << "  " << c.detail;
    out << '\n';
    passed += c.passed ? 1 : 0;
  }
  out << passed << "/" << checks.size() << " checks passed\n";
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Behavioral policy optimization toolkit", "bpo"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "run configuration file");
  app.add_option("--out", f.out, "output CSV path (default: stdout)");
  app.add_option("--seed", f.seed, "root random seed");
  app.add_option("--reps", f.reps, "repetitions per variance-gap grid point");
  app.add_option("--threads", f.threads, "worker threads (BPO_THREADS overrides)");
  auto* oracle_cmd = app.add_subcommand("oracle-check", "run the exact identity suite");
  auto* gap_cmd = app.add_subcommand("variance-gap", "variance-gap sweep to CSV");
  auto* learn_cmd = app.add_subcommand("learn", "learning run to CSV");
  auto* self_cmd = app.add_subcommand("selftest", "fast invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (oracle_cmd->parsed()) {
      const int threads = effective_threads(f.threads);
      return report(out, oracle::run_identity_suite(f.seed.value_or(0), 100, true, threads));
    }
    if (self_cmd->parsed())
      return report(out, run_selftest(f.seed.value_or(0), effective_threads(f.threads)));
    if (learn_cmd->parsed()) {
      const RunConfig cfg = load(f, err);
      const RunResult res = run(cfg.algo);
      emit(f, out, [&](std::ostream& os) { write_learning_csv(os, res.records); });
      return kExitOk;
    }
    if (gap_cmd->parsed()) {
      const RunConfig cfg = load(f, err);
      const auto rows =
          variance_gap_experiment(cfg.algo.env, cfg.algo.initial, cfg.sweep, cfg.gap);
      emit(f, out, [&](std::ostream& os) { write_variance_gap_csv(os, rows, cfg.sweep.param); });
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace bpo
