#include <CLI11.hpp>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csrl/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"conformal safe-RL toolkit: train, certify, and evaluate policies"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, mode, report_out = "report.csv";
  std::uint64_t seed = 0;
  std::string resume;
  int k_max = 0, episodes = 100, horizon = 500;
  double alpha = 0.0, delta = 0.0;
  int n_cal = 0, n_opt = 0, n_ver = 0, n_rho = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> csvs;

  CLI::App* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", config_path, "experiment config (TOML)")->required();
  CLI::Option* train_seed = train->add_option("--seed", seed, "override the seed list");
  train->add_option("--out", out_dir, "output directory override");
  train->add_option("--resume", resume, "checkpoint prefix to continue from");

  CLI::App* verify = app.add_subcommand("verify", "certify a checkpoint");
  verify->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
  verify->add_option("--config", config_path, "experiment config for verification settings");
  verify->add_option("--out", out_dir, "output directory");
  CLI::Option* o_mode =
      verify->add_option("--mode", mode, "union, ts, or both")
          ->check(CLI::IsMember({"union", "ts", "both"}));
  CLI::Option* o_kmax = verify->add_option("--k-max", k_max, "maximal horizon");
  CLI::Option* o_alpha = verify->add_option("--alpha", alpha, "miscoverage level");
  CLI::Option* o_delta = verify->add_option("--delta", delta, "confidence level");
  CLI::Option* o_ncal = verify->add_option("--n-cal", n_cal, "calibration trajectories");
  CLI::Option* o_nopt = verify->add_option("--n-opt", n_opt, "weight-optimization split");
  CLI::Option* o_nver = verify->add_option("--n-ver", n_ver, "verification rollouts");
  CLI::Option* o_nrho = verify->add_option("--n-rho", n_rho, "score-scale trajectories");

  CLI::App* eval = app.add_subcommand("eval", "Monte-Carlo policy statistics");
  eval->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
  eval->add_option("--episodes", episodes, "episodes per seed");
  eval->add_option("--horizon", horizon, "maximal episode length");
  eval->add_option("--seeds", seeds, "evaluation seeds");
  eval->add_option("--out", out_dir, "output directory");

  CLI::App* report = app.add_subcommand("report", "merge CSVs into mean/std tables");
  report->add_option("csvs", csvs, "input CSV files")->required();
  report->add_option("--out", report_out, "merged output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : csrl::cli::kExitUsage;
  }

  auto opt_str = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::string>(s);
  };

  if (train->parsed()) {
    std::optional<std::uint64_t> s;
    if (train_seed->count()) s = seed;
    return csrl::cli::cmd_train(config_path, s, opt_str(out_dir), opt_str(resume));
  }
  if (verify->parsed()) {
    csrl::cli::VerifyOverrides ov;
    if (o_mode->count()) ov.mode = mode;
    if (o_kmax->count()) ov.k_max = k_max;
    if (o_alpha->count()) ov.alpha = alpha;
    if (o_delta->count()) ov.delta = delta;
    if (o_ncal->count()) ov.n_cal = n_cal;
    if (o_nopt->count()) ov.n_opt = n_opt;
    if (o_nver->count()) ov.n_ver = n_ver;
    if (o_nrho->count()) ov.n_rho = n_rho;
    return csrl::cli::cmd_verify(checkpoint, opt_str(config_path), opt_str(out_dir), ov);
  }
  if (eval->parsed())
    return csrl::cli::cmd_eval(checkpoint, episodes, horizon, seeds, opt_str(out_dir));
  if (report->parsed()) return csrl::cli::cmd_report(csvs, report_out);
  return csrl::cli::kExitUsage;
}
