#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "csrl/nn/tape.hpp"
#include "csrl/rng.hpp"

namespace csrl::nn {

enum class Act { Tanh, Linear, Sigmoid };

Act act_from_string(const std::string& s);
std::string act_to_string(Act a);

// Fully-connected network over a single flat parameter vector. Layer l maps
// sizes[l] -> sizes[l+1] with weights stored column-major followed by biases.
class Mlp {
public:
  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, Act output_act, Act hidden_act = Act::Tanh);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int param_count() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Act output_activation() const { return out_act_; }
  Act hidden_activation() const { return hidden_act_; }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
  void init_uniform(Rng& rng);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  // Autodiff path; backward() accumulates into grads().
  Var apply(Tape& t, Var x) const;

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& grads() const { return grads_; }
  void zero_grad() const { grads_.setZero(); }

private:
  Eigen::VectorXd layer_out(int layer, const Eigen::VectorXd& x) const;
  void activation_inplace(int layer, Eigen::VectorXd& v) const;

  std::vector<int> sizes_;
  std::vector<int> offsets_;  // per-layer start into params_
  Act hidden_act_ = Act::Tanh;
  Act out_act_ = Act::Linear;
  Eigen::VectorXd params_;
  mutable Eigen::VectorXd grads_;
};

// Standard Adam with bias correction.
struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit AdamState(int n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr);

enum class ScheduleKind { LinearDecay, CosineDecay, Constant };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double lr_start = 1e-3;
  double lr_end = 0.0;
  long total_steps = 1;

  double lr(long t) const;
};

}  // namespace csrl::nn
