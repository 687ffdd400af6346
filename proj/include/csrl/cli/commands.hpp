#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace csrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad config / missing files / bad flags
inline constexpr int kExitNumerical = 3;  // training diverged

struct VerifyOverrides {
  std::optional<std::string> mode;  // "union", "ts", or "both"
  std::optional<int> k_max;
  std::optional<double> alpha, delta;
  std::optional<int> n_cal, n_opt, n_ver, n_rho;
};

// Train one seed (or every seed in the config when none is given); writes
// out/train_seed<S>.csv and out/ckpt_seed<S>.{json,bin}. Resuming continues
// the epoch numbering and appends to the existing log.
int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out_dir, std::optional<std::string> resume_prefix);

// Calibrate and certify a checkpointed agent; writes verify_seed<S>.csv/.json/.svg.
int cmd_verify(const std::string& checkpoint_prefix, std::optional<std::string> config_path,
               std::optional<std::string> out_dir, const VerifyOverrides& overrides);

// Monte-Carlo policy statistics on the true environment; one CSV row per
// evaluation seed plus an aggregate row.
int cmd_eval(const std::string& checkpoint_prefix, int episodes, int horizon,
             std::vector<std::uint64_t> seeds, std::optional<std::string> out_dir);

// Merge CSVs with identical headers (e.g. per-seed training logs) into a
// mean/std table grouped by the non-numeric key columns and the first column.
int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_path);

}  // namespace csrl::cli
