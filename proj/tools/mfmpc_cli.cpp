// Experiment driver: mfmpc <alpha-surface|cost-compare|evolve|verify-bound> [flags]

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mfmpc/experiments.hpp"

#ifndef MFMPC_VERSION
#define MFMPC_VERSION "unknown"
#endif

namespace ex = mfmpc::experiments;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::vector<std::string> overrides;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key = value config file, or a manifest.json from an earlier run");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--seed", flags.seed, "master seed (u64)");
  cmd->add_option("--threads", flags.threads, "worker threads for the (nu, N) grid");
  cmd->add_option("--set", flags.overrides, "extra key=value overrides, applied after the config file");
}

ex::ExperimentConfig build_config(ex::Experiment kind, const CommonFlags& flags) {
  auto cfg = ex::ExperimentConfig::preset(kind);
  if (!flags.config_path.empty())
    ex::load_config_file(cfg, flags.config_path);
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw mfmpc::InvalidInput("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.experiment = kind;
  if (!flags.out.empty())
    cfg.output_directory = flags.out;
  if (flags.seed)
    cfg.seed = *flags.seed;
  if (flags.threads)
    cfg.threads = *flags.threads;
  cfg.validate();
  return cfg;
}

int report_error(const std::string& type, const std::string& message) {
  const nlohmann::json err{{"error", {{"type", type}, {"message", message}}}};
  std::cerr << err.dump() << '\n';
  return type == "usage" ? 2 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field MPC experiments and performance bounds"};
  app.set_version_flag("--version", std::string(MFMPC_VERSION));
  app.require_subcommand(1);

  struct Sub {
    ex::Experiment kind;
    CLI::App* cmd;
    CommonFlags flags;
  };
  std::vector<Sub> subs;
  subs.reserve(4);
  subs.push_back({ex::Experiment::AlphaSurface,
                  app.add_subcommand("alpha-surface", "alpha_N by closed form and LP over a (nu, N) grid"), {}});
  subs.push_back({ex::Experiment::CostCompare,
                  app.add_subcommand("cost-compare", "closed-loop MPC cost against the horizon-T optimum"), {}});
  subs.push_back({ex::Experiment::ParticleEvolution,
                  app.add_subcommand("evolve", "particle ensembles under MPC: histograms and moment series"), {}});
  subs.push_back({ex::Experiment::VerifyBound,
                  app.add_subcommand("verify-bound", "check the inequality system along an optimal trajectory"), {}});
  for (auto& s : subs)
    add_common_flags(s.cmd, s.flags);

  std::string command_line;
  for (int i = 0; i < argc; ++i)
    command_line += (i ? " " : "") + std::string(argv[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    for (auto& s : subs) {
      if (!s.cmd->parsed())
        continue;
      const auto cfg = build_config(s.kind, s.flags);
      const auto summary = ex::run(cfg, {MFMPC_VERSION, command_line});
      std::cout << summary.dump(2) << '\n';
    }
  } catch (const mfmpc::InvalidInput& e) {
    return report_error("invalid_input", e.what());
  } catch (const mfmpc::SolverError& e) {
    return report_error("solver_error", e.what());
  } catch (const std::exception& e) {
    return report_error("runtime_error", e.what());
  }
  return 0;
}
