#include "csrl/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "csrl/cli/checkpoint.hpp"
#include "csrl/cli/config.hpp"
#include "csrl/verify/verify.hpp"

namespace csrl::cli {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

bool parses_as_double(const std::string& s) {
  if (s.empty()) return false;
  try {
    std::size_t pos = 0;
    std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

int train_one_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                   const std::optional<std::string>& resume_prefix) {
  train::TrainConfig tc = cfg.train;
  tc.seed = seed;
  std::unique_ptr<train::Trainer> trainer;
  bool resuming = false;
  if (resume_prefix) {
    Checkpoint ck = Checkpoint::load(*resume_prefix);  // caller maps failures to usage
    trainer = std::make_unique<train::Trainer>(ck.make_trainer());
    seed = ck.config.seed;
    resuming = true;
  } else {
    trainer = std::make_unique<train::Trainer>(tc);
  }

  const std::string log_path = cfg.out_dir + "/train_seed" + std::to_string(seed) + ".csv";
  const bool append = resuming && std::filesystem::exists(log_path);
  std::ofstream csv(log_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) {
    std::cerr << "cannot write " << log_path << "\n";
    return kExitUsage;
  }
  try {
    trainer->run(&csv, !append);
  } catch (const std::exception& e) {
    std::cerr << "training failed (seed " << seed << "): " << e.what() << "\n";
    return kExitNumerical;
  }
  make_checkpoint(*trainer).save(cfg.out_dir + "/ckpt_seed" + std::to_string(seed));
  return kExitOk;
}

}  // namespace

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out_dir, std::optional<std::string> resume_prefix) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    if (out_dir) cfg.out_dir = *out_dir;
    std::filesystem::create_directories(cfg.out_dir);
    if (resume_prefix) Checkpoint::load(*resume_prefix);  // fail fast with exit 2
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  std::vector<std::uint64_t> seeds = seed ? std::vector<std::uint64_t>{*seed} : cfg.seeds;
  if (resume_prefix) seeds.resize(1);  // a checkpoint pins the seed
  for (std::uint64_t s : seeds) {
    int rc = train_one_seed(cfg, s, resume_prefix);
    if (rc != kExitOk) return rc;
  }
  return kExitOk;
}

int cmd_verify(const std::string& checkpoint_prefix, std::optional<std::string> config_path,
               std::optional<std::string> out_dir, const VerifyOverrides& ov) {
  Checkpoint ck;
  verify::VerifyConfig vc;
  std::string dir = "out";
  try {
    ck = Checkpoint::load(checkpoint_prefix);
    if (config_path) {
      ExperimentConfig cfg = load_config(*config_path);
      vc = cfg.ver;
      dir = cfg.out_dir;
    } else {
      vc.alpha = ck.config.alpha;
    }
    if (out_dir) dir = *out_dir;
    if (ov.mode) {
      if (*ov.mode == "both")
        vc.modes = {conformal::Mode::Union, conformal::Mode::TimeSeries};
      else
        vc.modes = {conformal::mode_from_name(*ov.mode)};
    }
    if (ov.k_max) vc.k_max = *ov.k_max;
    if (ov.alpha) vc.alpha = *ov.alpha;
    if (ov.delta) vc.delta = *ov.delta;
    if (ov.n_cal) vc.n_cal = *ov.n_cal;
    if (ov.n_opt) vc.n_opt = *ov.n_opt;
    if (ov.n_ver) vc.n_ver = *ov.n_ver;
    if (ov.n_rho) vc.n_rho = *ov.n_rho;
    vc.seed = ck.config.seed;
    vc.checkpoint_id = ck.config_hash;
    std::filesystem::create_directories(dir);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    env::Env env = env::Env::make(ck.config.env_name);
    verify::VerificationReport rep =
        verify::verify(ck.bundle.policy, ck.bundle.model, env, vc);
    const std::string stem =
        dir + "/verify_seed" + std::to_string(ck.config.seed);
    std::ofstream(stem + ".csv") << rep.to_csv();
    std::ofstream(stem + ".json") << rep.to_json().dump(2) << "\n";
    std::ofstream(stem + ".svg") << rep.to_svg();
  } catch (const std::exception& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_prefix, int episodes, int horizon,
             std::vector<std::uint64_t> seeds, std::optional<std::string> out_dir) {
  Checkpoint ck;
  try {
    ck = Checkpoint::load(checkpoint_prefix);
    if (episodes < 1 || horizon < 1) throw std::runtime_error("eval: bad episodes/horizon");
    if (seeds.empty()) seeds.push_back(ck.config.seed);
    std::filesystem::create_directories(out_dir.value_or("out"));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    env::Env env = env::Env::make(ck.config.env_name);
    std::string csv =
        "seed,episodes,horizon,mean_reward,reward_stderr,mean_cost_rate,"
        "violation_free_fraction,violation_free_stderr\n";
    std::vector<verify::EvalStats> all;
    for (std::uint64_t s : seeds) {
      Rng rng = Rng(s).derive("eval");
      verify::EvalStats st =
          verify::empirical_eval(ck.bundle.policy, env, episodes, horizon, rng);
      double p = st.violation_free_fraction;
      double vf_se = episodes > 1 ? std::sqrt(p * (1.0 - p) / episodes) : 0.0;
      csv += std::to_string(s) + "," + std::to_string(episodes) + "," +
             std::to_string(horizon) + "," + fmt(st.mean_reward) + "," +
             fmt(st.reward_stderr()) + "," + fmt(st.mean_cost_rate) + "," + fmt(p) + "," +
             fmt(vf_se) + "\n";
      all.push_back(std::move(st));
    }
    if (all.size() > 1) {
      double mr = 0, mc = 0, mv = 0;
      for (const auto& st : all) {
        mr += st.mean_reward;
        mc += st.mean_cost_rate;
        mv += st.violation_free_fraction;
      }
      const double n = static_cast<double>(all.size());
      mr /= n;
      mc /= n;
      mv /= n;
      double vr = 0, vv = 0;
      for (const auto& st : all) {
        vr += (st.mean_reward - mr) * (st.mean_reward - mr);
        vv += (st.violation_free_fraction - mv) * (st.violation_free_fraction - mv);
      }
      vr = std::sqrt(vr / (n - 1) / n);
      vv = std::sqrt(vv / (n - 1) / n);
      csv += "aggregate," + std::to_string(episodes) + "," + std::to_string(horizon) + "," +
             fmt(mr) + "," + fmt(vr) + "," + fmt(mc) + "," + fmt(mv) + "," + fmt(vv) + "\n";
    }
    const std::string path = out_dir.value_or("out") + "/eval_" +
                             std::filesystem::path(checkpoint_prefix).filename().string() +
                             ".csv";
    std::ofstream(path) << csv;
    std::cout << csv;
  } catch (const std::exception& e) {
    std::cerr << "evaluation failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_path) {
  try {
    if (csv_paths.empty()) throw std::runtime_error("report: no input CSVs");
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    for (const std::string& path : csv_paths) {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("report: cannot open " + path);
      std::string line;
      if (!std::getline(in, line)) throw std::runtime_error("report: empty file " + path);
      std::vector<std::string> h = split_csv_line(line);
      if (header.empty())
        header = h;
      else if (h != header)
        throw std::runtime_error("report: header mismatch in " + path);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> r = split_csv_line(line);
        if (r.size() != header.size())
          throw std::runtime_error("report: ragged row in " + path);
        rows.push_back(std::move(r));
      }
    }
    if (rows.empty()) throw std::runtime_error("report: no data rows");

    const std::size_t ncol = header.size();
    std::vector<bool> numeric(ncol, true);
    for (const auto& r : rows)
      for (std::size_t c = 0; c < ncol; ++c)
        if (!parses_as_double(r[c])) numeric[c] = false;

    // group key: first column plus every non-numeric column
    std::vector<std::size_t> key_cols{0};
    for (std::size_t c = 1; c < ncol; ++c)
      if (!numeric[c]) key_cols.push_back(c);

    std::vector<std::string> group_order;
    std::map<std::string, std::vector<std::vector<double>>> groups;  // key -> per-col samples
    std::map<std::string, std::vector<std::string>> group_keys;
    for (const auto& r : rows) {
      std::string key;
      std::vector<std::string> kvals;
      for (std::size_t c : key_cols) {
        key += r[c] + "\x1f";
        kvals.push_back(r[c]);
      }
      if (!groups.count(key)) {
        groups[key].resize(ncol);
        group_keys[key] = kvals;
        group_order.push_back(key);
      }
      for (std::size_t c = 0; c < ncol; ++c)
        if (numeric[c] && c != 0) groups[key][c].push_back(std::stod(r[c]));
    }

    std::string out;
    for (std::size_t i = 0; i < key_cols.size(); ++i)
      out += (i ? "," : "") + header[key_cols[i]];
    for (std::size_t c = 1; c < ncol; ++c)
      if (numeric[c]) out += "," + header[c] + "_mean," + header[c] + "_std";
    out += "\n";
    for (const std::string& key : group_order) {
      const auto& kvals = group_keys[key];
      for (std::size_t i = 0; i < kvals.size(); ++i) out += (i ? "," : "") + kvals[i];
      for (std::size_t c = 1; c < ncol; ++c) {
        if (!numeric[c]) continue;
        const auto& xs = groups[key][c];
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0;
        for (double x : xs) var += (x - mean) * (x - mean);
        double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
        out += "," + fmt(mean) + "," + fmt(sd);
      }
      out += "\n";
    }
    std::ofstream of(out_path);
    if (!of) throw std::runtime_error("report: cannot write " + out_path);
    of << out;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace csrl::cli
