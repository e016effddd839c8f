#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "xq/qlearning.hpp"

namespace xq::app {

enum ExitCode : int { kOk = 0, kUsageError = 1, kRuntimeError = 2 };

struct RunConfig {
  TrainConfig train;
  PolicyKind opponent = PolicyKind::Random;
  std::optional<std::filesystem::path> expert_file;
  std::filesystem::path run_dir = "run";
  std::int64_t checkpoint_every = 2000;  // 0: only the final checkpoint

  // Throws ConfigError.
  void validate() const;
  // Snapshot readable by `xqlearn --config <file> train`.
  std::string to_toml() const;
};

// Runs one training job into cfg.run_dir: config.toml, metrics.csv,
// evals.csv, {role}_{iter}.xqnn checkpoints and model.xqnn (final Q_A).
TrainResult train_run(const RunConfig& cfg, std::ostream& log);

// Entry point behind the xqlearn binary; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xq::app
