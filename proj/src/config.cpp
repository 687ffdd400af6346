#include "csrl/cli/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csrl::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// strips a # comment that is not inside a quoted string
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

nlohmann::json parse_scalar(const std::string& tok, int lineno) {
  if (tok.empty()) throw std::runtime_error("config line " + std::to_string(lineno) +
                                            ": empty value");
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"')
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": unterminated string");
    return tok.substr(1, tok.size() - 2);
  }
  if (tok == "true") return true;
  if (tok == "false") return false;
  try {
    std::size_t pos = 0;
    long long v = std::stoll(tok, &pos);
    if (pos == tok.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t pos = 0;
    double d = std::stod(tok, &pos);
    if (pos == tok.size()) return d;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("config line " + std::to_string(lineno) + ": bad value '" + tok +
                           "'");
}

nlohmann::json parse_value(const std::string& tok, int lineno) {
  if (!tok.empty() && tok.front() == '[') {
    if (tok.back() != ']')
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": arrays must close on the same line");
    nlohmann::json arr = nlohmann::json::array();
    std::string inner = tok.substr(1, tok.size() - 2);
    std::string item;
    bool quoted = false;
    for (char c : inner) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        if (!trim(item).empty()) arr.push_back(parse_scalar(trim(item), lineno));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!trim(item).empty()) arr.push_back(parse_scalar(trim(item), lineno));
    return arr;
  }
  return parse_scalar(tok, lineno);
}

std::string value_to_toml(const nlohmann::json& v) {
  if (v.is_string()) return "\"" + v.get<std::string>() + "\"";
  if (v.is_array()) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += value_to_toml(v[i]);
    }
    return s + "]";
  }
  return v.dump();
}

}  // namespace

nlohmann::json parse_toml(const std::string& text) {
  nlohmann::json out = nlohmann::json::object();
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw std::runtime_error("config line " + std::to_string(lineno) + ": empty section");
      if (!out.contains(section)) out[section] = nlohmann::json::object();
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": key outside any [section]");
    out[section][key] = parse_value(val, lineno);
  }
  return out;
}

nlohmann::json parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

std::string to_toml(const nlohmann::json& sections) {
  std::string s;
  for (auto it = sections.begin(); it != sections.end(); ++it) {
    s += "[" + it.key() + "]\n";
    for (auto kv = it.value().begin(); kv != it.value().end(); ++kv)
      s += kv.key() + " = " + value_to_toml(kv.value()) + "\n";
    s += "\n";
  }
  return s;
}

namespace {

template <typename T>
void get_if(const nlohmann::json& sec, const char* key, T& out) {
  if (sec.contains(key)) out = sec.at(key).get<T>();
}

void check_keys(const nlohmann::json& sec, const std::string& name,
                std::initializer_list<const char*> allowed) {
  for (auto it = sec.begin(); it != sec.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok |= (it.key() == k);
    if (!ok)
      throw std::runtime_error("config: unknown key '" + it.key() + "' in section [" + name +
                               "]");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_sections(const nlohmann::json& sections) {
  for (auto it = sections.begin(); it != sections.end(); ++it) {
    const std::string& s = it.key();
    if (s != "env" && s != "training" && s != "conformal" && s != "verification" &&
        s != "output" && s != "experiment")
      throw std::runtime_error("config: unknown section [" + s + "]");
  }

  std::string env_name = "cartpole";
  if (sections.contains("env")) {
    check_keys(sections["env"], "env", {"name"});
    get_if(sections["env"], "name", env_name);
  }

  ExperimentConfig cfg;
  cfg.train = train::default_train_config(env_name);

  if (sections.contains("training")) {
    const auto& t = sections["training"];
    check_keys(t, "training",
               {"total_interactions", "pretrain_transitions", "pretrain_epochs",
                "steps_per_epoch", "k0", "e_force", "n0", "w1", "w2", "w3", "w_max",
                "w_improve", "improve_as_described", "gamma", "gae_lambda", "clip",
                "ppo_epochs", "minibatch", "dyn_passes", "entropy_coef_start",
                "entropy_coef_end", "log_std_start", "log_std_end", "lambda_init",
                "radius_scale_factor", "hidden"});
    get_if(t, "total_interactions", cfg.train.total_interactions);
    get_if(t, "pretrain_transitions", cfg.train.pretrain_transitions);
    get_if(t, "pretrain_epochs", cfg.train.pretrain_epochs);
    get_if(t, "steps_per_epoch", cfg.train.steps_per_epoch);
    get_if(t, "k0", cfg.train.k0);
    get_if(t, "e_force", cfg.train.e_force);
    get_if(t, "n0", cfg.train.n0);
    get_if(t, "w1", cfg.train.w1);
    get_if(t, "w2", cfg.train.w2);
    get_if(t, "w3", cfg.train.w3);
    get_if(t, "w_max", cfg.train.safety.w_max);
    get_if(t, "w_improve", cfg.train.safety.w_improve);
    get_if(t, "improve_as_described", cfg.train.safety.improve_as_described);
    get_if(t, "gamma", cfg.train.gamma);
    get_if(t, "gae_lambda", cfg.train.gae_lambda);
    get_if(t, "clip", cfg.train.clip);
    get_if(t, "ppo_epochs", cfg.train.ppo_epochs);
    get_if(t, "minibatch", cfg.train.minibatch);
    get_if(t, "dyn_passes", cfg.train.dyn_passes);
    get_if(t, "entropy_coef_start", cfg.train.entropy_coef_start);
    get_if(t, "entropy_coef_end", cfg.train.entropy_coef_end);
    get_if(t, "log_std_start", cfg.train.log_std_start);
    get_if(t, "log_std_end", cfg.train.log_std_end);
    get_if(t, "lambda_init", cfg.train.lambda_init);
    get_if(t, "radius_scale_factor", cfg.train.radius_scale_factor);
    get_if(t, "hidden", cfg.train.hidden);
  }

  if (sections.contains("conformal")) {
    const auto& c = sections["conformal"];
    check_keys(c, "conformal", {"alpha", "c", "temp", "lambda_step", "modes"});
    get_if(c, "alpha", cfg.train.alpha);
    get_if(c, "c", cfg.train.conf_c);
    get_if(c, "temp", cfg.train.conf_temp);
    get_if(c, "lambda_step", cfg.train.lambda_step);
    if (c.contains("modes")) {
      cfg.ver.modes.clear();
      for (const auto& m : c["modes"])
        cfg.ver.modes.push_back(conformal::mode_from_name(m.get<std::string>()));
    }
  }

  if (sections.contains("verification")) {
    const auto& v = sections["verification"];
    check_keys(v, "verification", {"delta", "n_cal", "n_opt", "n_ver", "n_rho", "k_max"});
    get_if(v, "delta", cfg.ver.delta);
    get_if(v, "n_cal", cfg.ver.n_cal);
    get_if(v, "n_opt", cfg.ver.n_opt);
    get_if(v, "n_ver", cfg.ver.n_ver);
    get_if(v, "n_rho", cfg.ver.n_rho);
    get_if(v, "k_max", cfg.ver.k_max);
  }
  cfg.ver.alpha = cfg.train.alpha;

  if (sections.contains("output")) {
    check_keys(sections["output"], "output", {"dir"});
    get_if(sections["output"], "dir", cfg.out_dir);
  }
  if (sections.contains("experiment")) {
    check_keys(sections["experiment"], "experiment", {"seeds"});
    get_if(sections["experiment"], "seeds", cfg.seeds);
  }
  cfg.validate();
  return cfg;
}

nlohmann::json ExperimentConfig::to_sections() const {
  nlohmann::json j;
  j["env"]["name"] = train.env_name;
  auto& t = j["training"];
  t["total_interactions"] = train.total_interactions;
  t["pretrain_transitions"] = train.pretrain_transitions;
  t["pretrain_epochs"] = train.pretrain_epochs;
  t["steps_per_epoch"] = train.steps_per_epoch;
  t["k0"] = train.k0;
  t["e_force"] = train.e_force;
  t["n0"] = train.n0;
  t["w1"] = train.w1;
  t["w2"] = train.w2;
  t["w3"] = train.w3;
  t["w_max"] = train.safety.w_max;
  t["w_improve"] = train.safety.w_improve;
  t["improve_as_described"] = train.safety.improve_as_described;
  t["gamma"] = train.gamma;
  t["gae_lambda"] = train.gae_lambda;
  t["clip"] = train.clip;
  t["ppo_epochs"] = train.ppo_epochs;
  t["minibatch"] = train.minibatch;
  t["dyn_passes"] = train.dyn_passes;
  t["entropy_coef_start"] = train.entropy_coef_start;
  t["entropy_coef_end"] = train.entropy_coef_end;
  t["log_std_start"] = train.log_std_start;
  t["log_std_end"] = train.log_std_end;
  t["lambda_init"] = train.lambda_init;
  t["radius_scale_factor"] = train.radius_scale_factor;
  t["hidden"] = train.hidden;
  auto& c = j["conformal"];
  c["alpha"] = train.alpha;
  c["c"] = train.conf_c;
  c["temp"] = train.conf_temp;
  c["lambda_step"] = train.lambda_step;
  c["modes"] = nlohmann::json::array();
  for (conformal::Mode m : ver.modes) c["modes"].push_back(conformal::mode_name(m));
  auto& v = j["verification"];
  v["delta"] = ver.delta;
  v["n_cal"] = ver.n_cal;
  v["n_opt"] = ver.n_opt;
  v["n_ver"] = ver.n_ver;
  v["n_rho"] = ver.n_rho;
  v["k_max"] = ver.k_max;
  j["output"]["dir"] = out_dir;
  j["experiment"]["seeds"] = seeds;
  return j;
}

void ExperimentConfig::validate() const {
  train.validate();
  if (seeds.empty()) throw std::runtime_error("config: seeds list must be non-empty");
  if (out_dir.empty()) throw std::runtime_error("config: output dir must be non-empty");
  if (ver.modes.empty()) throw std::runtime_error("config: modes list must be non-empty");
  if (ver.alpha <= 0 || ver.alpha >= 1 || ver.delta <= 0 || ver.delta >= 1)
    throw std::runtime_error("config: alpha and delta must lie in (0,1)");
}

ExperimentConfig load_config(const std::string& path) {
  return ExperimentConfig::from_sections(parse_toml_file(path));
}

nlohmann::json train_config_to_json(const train::TrainConfig& cfg) {
  nlohmann::json j;
  j["env_name"] = cfg.env_name;
  j["seed"] = cfg.seed;
  j["total_interactions"] = cfg.total_interactions;
  j["pretrain_transitions"] = cfg.pretrain_transitions;
  j["pretrain_epochs"] = cfg.pretrain_epochs;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["k0"] = cfg.k0;
  j["e_force"] = cfg.e_force;
  j["n0"] = cfg.n0;
  j["w1"] = cfg.w1;
  j["w2"] = cfg.w2;
  j["w3"] = cfg.w3;
  j["w_max"] = cfg.safety.w_max;
  j["w_improve"] = cfg.safety.w_improve;
  j["improve_as_described"] = cfg.safety.improve_as_described;
  j["divergence_sentinel"] = cfg.safety.divergence_sentinel;
  j["alpha"] = cfg.alpha;
  j["gamma"] = cfg.gamma;
  j["gae_lambda"] = cfg.gae_lambda;
  j["clip"] = cfg.clip;
  j["ppo_epochs"] = cfg.ppo_epochs;
  j["minibatch"] = cfg.minibatch;
  j["dyn_passes"] = cfg.dyn_passes;
  j["entropy_coef_start"] = cfg.entropy_coef_start;
  j["entropy_coef_end"] = cfg.entropy_coef_end;
  j["log_std_start"] = cfg.log_std_start;
  j["log_std_end"] = cfg.log_std_end;
  j["lambda_init"] = cfg.lambda_init;
  j["lambda_step"] = cfg.lambda_step;
  j["conf_c"] = cfg.conf_c;
  j["conf_temp"] = cfg.conf_temp;
  j["radius_scale_factor"] = cfg.radius_scale_factor;
  j["hidden"] = cfg.hidden;
  auto sched = [](const nn::LrSchedule& s) {
    return nlohmann::json{{"kind", static_cast<int>(s.kind)},
                          {"lr_start", s.lr_start},
                          {"lr_end", s.lr_end},
                          {"total_steps", s.total_steps}};
  };
  j["lr_actor"] = sched(cfg.lr_actor);
  j["lr_critic"] = sched(cfg.lr_critic);
  j["lr_dyn"] = sched(cfg.lr_dyn);
  j["lr_unc"] = sched(cfg.lr_unc);
  return j;
}

train::TrainConfig train_config_from_json(const nlohmann::json& j) {
  train::TrainConfig c;
  c.env_name = j.at("env_name").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.total_interactions = j.at("total_interactions").get<long>();
  c.pretrain_transitions = j.at("pretrain_transitions").get<long>();
  c.pretrain_epochs = j.at("pretrain_epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  c.k0 = j.at("k0").get<int>();
  c.e_force = j.at("e_force").get<int>();
  c.n0 = j.at("n0").get<int>();
  c.w1 = j.at("w1").get<double>();
  c.w2 = j.at("w2").get<double>();
  c.w3 = j.at("w3").get<double>();
  c.safety.w_max = j.at("w_max").get<double>();
  c.safety.w_improve = j.at("w_improve").get<double>();
  c.safety.improve_as_described = j.at("improve_as_described").get<bool>();
  c.safety.divergence_sentinel = j.at("divergence_sentinel").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.gae_lambda = j.at("gae_lambda").get<double>();
  c.clip = j.at("clip").get<double>();
  c.ppo_epochs = j.at("ppo_epochs").get<int>();
  c.minibatch = j.at("minibatch").get<int>();
  c.dyn_passes = j.at("dyn_passes").get<int>();
  c.entropy_coef_start = j.at("entropy_coef_start").get<double>();
  c.entropy_coef_end = j.at("entropy_coef_end").get<double>();
  c.log_std_start = j.at("log_std_start").get<double>();
  c.log_std_end = j.at("log_std_end").get<double>();
  c.lambda_init = j.at("lambda_init").get<double>();
  c.lambda_step = j.at("lambda_step").get<double>();
  c.conf_c = j.at("conf_c").get<double>();
  c.conf_temp = j.at("conf_temp").get<double>();
  c.radius_scale_factor = j.at("radius_scale_factor").get<double>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  auto sched = [](const nlohmann::json& s) {
    nn::LrSchedule out;
    out.kind = static_cast<nn::ScheduleKind>(s.at("kind").get<int>());
    out.lr_start = s.at("lr_start").get<double>();
    out.lr_end = s.at("lr_end").get<double>();
    out.total_steps = s.at("total_steps").get<long>();
    return out;
  };
  c.lr_actor = sched(j.at("lr_actor"));
  c.lr_critic = sched(j.at("lr_critic"));
  c.lr_dyn = sched(j.at("lr_dyn"));
  c.lr_unc = sched(j.at("lr_unc"));
  return c;
}

std::string config_hash(const train::TrainConfig& cfg) {
  const std::string dump = train_config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : dump) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace csrl::cli
