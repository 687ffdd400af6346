#include "csrl/cli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "csrl/cli/config.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float64");

namespace csrl::cli {

namespace {

struct BlobWriter {
  std::vector<double> data;
  nlohmann::json manifest_arrays = nlohmann::json::array();

  void add(const std::string& name, const Eigen::VectorXd& v) {
    manifest_arrays.push_back(
        {{"name", name}, {"offset", static_cast<long>(data.size())}, {"count", v.size()}});
    data.insert(data.end(), v.data(), v.data() + v.size());
  }
};

struct BlobReader {
  std::vector<double> data;
  nlohmann::json arrays;

  Eigen::VectorXd get(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.at("name") != name) continue;
      long off = a.at("offset").get<long>();
      long cnt = a.at("count").get<long>();
      if (off < 0 || cnt < 0 || off + cnt > static_cast<long>(data.size()))
        throw std::runtime_error("checkpoint: array '" + name + "' outside blob");
      Eigen::VectorXd v(cnt);
      std::memcpy(v.data(), data.data() + off, cnt * sizeof(double));
      return v;
    }
    throw std::runtime_error("checkpoint: missing array '" + name + "'");
  }
};

void add_adam(BlobWriter& w, const std::string& name, const nn::AdamState& s) {
  w.add(name + "_m", s.m);
  w.add(name + "_v", s.v);
}

void read_adam(const BlobReader& r, const std::string& name, nn::AdamState& s, long step) {
  s.m = r.get(name + "_m");
  s.v = r.get(name + "_v");
  s.step = step;
}

}  // namespace

void Checkpoint::save(const std::string& prefix) const {
  BlobWriter w;
  w.add("policy_mean", bundle.policy.mean_net.params());
  w.add("log_std", bundle.policy.log_std);
  w.add("critic", bundle.critic.params());
  w.add("model_net", bundle.model.net().params());
  w.add("model_std_mean", bundle.model.standardizer().mean);
  w.add("model_std_std", bundle.model.standardizer().std);
  w.add("unc_net", bundle.unc.net.params());
  w.add("unc_radius_scale", bundle.unc.radius_scale);
  w.add("unc_std_mean", bundle.unc.input_std.mean);
  w.add("unc_std_std", bundle.unc.input_std.std);
  w.add("rho_one_step", bundle.rho_one_step);
  add_adam(w, "adam_actor", bundle.opt_actor);
  add_adam(w, "adam_log_std", bundle.opt_log_std);
  add_adam(w, "adam_critic", bundle.opt_critic);
  add_adam(w, "adam_dyn", bundle.opt_dyn);
  add_adam(w, "adam_unc", bundle.opt_unc);
  for (std::size_t i = 0; i < bundle.d0.size(); ++i)
    w.add("d0_" + std::to_string(i), bundle.d0[i]);

  nlohmann::json m;
  m["version"] = version;
  m["config_hash"] = config_hash;
  m["config"] = train_config_to_json(config);
  m["blob_doubles"] = static_cast<long>(w.data.size());
  m["arrays"] = w.manifest_arrays;
  auto& s = m["scalars"];
  s["lambda"] = bundle.lambda;
  s["k_e"] = bundle.k_e;
  s["epoch"] = bundle.epoch;
  s["interactions"] = bundle.interactions;
  s["rng_state"] = bundle.rng.raw_state();
  s["actor_updates"] = bundle.actor_updates;
  s["critic_updates"] = bundle.critic_updates;
  s["dyn_updates"] = bundle.dyn_updates;
  s["unc_updates"] = bundle.unc_updates;
  s["adam_actor_step"] = bundle.opt_actor.step;
  s["adam_log_std_step"] = bundle.opt_log_std.step;
  s["adam_critic_step"] = bundle.opt_critic.step;
  s["adam_dyn_step"] = bundle.opt_dyn.step;
  s["adam_unc_step"] = bundle.opt_unc.step;
  s["d0_count"] = bundle.d0.size();

  std::ofstream jf(prefix + ".json", std::ios::binary);
  if (!jf) throw std::runtime_error("checkpoint: cannot write " + prefix + ".json");
  jf << m.dump(2) << "\n";

  std::ofstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("checkpoint: cannot write " + prefix + ".bin");
  bf.write(reinterpret_cast<const char*>(w.data.data()),
           static_cast<std::streamsize>(w.data.size() * sizeof(double)));
}

Checkpoint Checkpoint::load(const std::string& prefix) {
  std::ifstream jf(prefix + ".json", std::ios::binary);
  if (!jf) throw std::runtime_error("checkpoint: cannot open " + prefix + ".json");
  nlohmann::json m = nlohmann::json::parse(jf);

  Checkpoint ck;
  ck.version = m.at("version").get<int>();
  if (ck.version != 1) throw std::runtime_error("checkpoint: unsupported version");
  ck.config_hash = m.at("config_hash").get<std::string>();
  ck.config = train_config_from_json(m.at("config"));
  if (cli::config_hash(ck.config) != ck.config_hash)
    throw std::runtime_error("checkpoint: config hash mismatch");

  BlobReader r;
  r.arrays = m.at("arrays");
  const long n = m.at("blob_doubles").get<long>();
  r.data.resize(n);
  std::ifstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("checkpoint: cannot open " + prefix + ".bin");
  bf.read(reinterpret_cast<char*>(r.data.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (bf.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
    throw std::runtime_error("checkpoint: blob truncated");

  const env::Env env = env::Env::make(ck.config.env_name);
  train::AgentBundle& b = ck.bundle;
  b.policy = rl::PolicyNet(env.obs_dim(), env.action_dim(), ck.config.hidden);
  std::vector<int> critic_sizes;
  critic_sizes.push_back(env.obs_dim());
  critic_sizes.insert(critic_sizes.end(), ck.config.hidden.begin(), ck.config.hidden.end());
  critic_sizes.push_back(1);
  b.critic = nn::Mlp(critic_sizes, nn::Act::Linear);
  b.model = dyn::DynModel(env.state_dim(), env.action_dim(), ck.config.hidden);
  b.unc = conformal::UncertaintyNet(env.state_dim(), env.action_dim(), ck.config.hidden);

  b.policy.mean_net.params() = r.get("policy_mean");
  b.policy.log_std = r.get("log_std");
  b.policy.log_std_grad = Eigen::VectorXd::Zero(b.policy.log_std.size());
  b.critic.params() = r.get("critic");
  b.model.net().params() = r.get("model_net");
  b.model.standardizer().mean = r.get("model_std_mean");
  b.model.standardizer().std = r.get("model_std_std");
  b.unc.net.params() = r.get("unc_net");
  b.unc.radius_scale = r.get("unc_radius_scale");
  b.unc.input_std.mean = r.get("unc_std_mean");
  b.unc.input_std.std = r.get("unc_std_std");
  b.rho_one_step = r.get("rho_one_step");

  const auto& s = m.at("scalars");
  read_adam(r, "adam_actor", b.opt_actor, s.at("adam_actor_step").get<long>());
  read_adam(r, "adam_log_std", b.opt_log_std, s.at("adam_log_std_step").get<long>());
  read_adam(r, "adam_critic", b.opt_critic, s.at("adam_critic_step").get<long>());
  read_adam(r, "adam_dyn", b.opt_dyn, s.at("adam_dyn_step").get<long>());
  read_adam(r, "adam_unc", b.opt_unc, s.at("adam_unc_step").get<long>());

  b.lambda = s.at("lambda").get<double>();
  b.k_e = s.at("k_e").get<int>();
  b.epoch = s.at("epoch").get<int>();
  b.interactions = s.at("interactions").get<long>();
  b.rng.set_raw_state(s.at("rng_state").get<std::uint64_t>());
  b.actor_updates = s.at("actor_updates").get<long>();
  b.critic_updates = s.at("critic_updates").get<long>();
  b.dyn_updates = s.at("dyn_updates").get<long>();
  b.unc_updates = s.at("unc_updates").get<long>();

  const long d0_count = s.at("d0_count").get<long>();
  b.d0.clear();
  for (long i = 0; i < d0_count; ++i) b.d0.push_back(r.get("d0_" + std::to_string(i)));
  return ck;
}

train::Trainer Checkpoint::make_trainer() const {
  train::Trainer tr(config);
  tr.restore(bundle);
  return tr;
}

Checkpoint make_checkpoint(const train::Trainer& trainer) {
  Checkpoint ck;
  ck.config = trainer.config();
  ck.config_hash = config_hash(ck.config);
  ck.bundle = trainer.bundle();
  return ck;
}

}  // namespace csrl::cli
