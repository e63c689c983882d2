#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bpo/policy.hpp"

namespace bpo {

// One episode. Row t of `states`/`actions` is (s_t, a_t); `actions` stores the
// sampled action, before any environment clipping, so that policy densities
// evaluated on it are exact.
struct Trajectory {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  PolicyTag policy_tag = 0;

  int length() const { return static_cast<int>(rewards.size()); }
  Eigen::VectorXd state(int t) const { return states.row(t).transpose(); }
  Eigen::VectorXd action(int t) const { return actions.row(t).transpose(); }
};

// Finite trajectory space with probabilities affine in a scalar parameter,
//   p_theta(tau) = intercept(tau) + theta * slope(tau).
// Gradients are either declared per trajectory (kDeclared) or the
// score-function form g(tau) = (slope(tau) / p_theta(tau)) * ret(tau), which
// is the exact REINFORCE estimator of this family (d = 1).
struct DiscreteInstance {
  enum class GradModel { kDeclared, kScoreFunction };

  std::vector<std::string> ids;
  Eigen::VectorXd prob_intercept;
  Eigen::VectorXd prob_slope;
  GradModel grad_model = GradModel::kDeclared;
  Eigen::MatrixXd grads;    // kDeclared: one row per trajectory
  Eigen::VectorXd returns;  // kScoreFunction (and DiscreteToy rewards)

  std::size_t size() const { return ids.size(); }
  int grad_dim() const;
  Eigen::VectorXd probs(double theta) const;
  Eigen::VectorXd scores(double theta) const;  // d log p / d theta
  // Throws InstanceError unless probs(theta) is a distribution within 1e-12.
  void check_admissible(double theta) const;
};

struct EnumeratedInstance {
  Eigen::VectorXd probs;
  Eigen::MatrixXd grads;  // row i belongs to ids[i]
};

EnumeratedInstance enumerate_instance(const DiscreteInstance& inst, double theta);

// Two-trajectory example: p(tau_1) = theta, p(tau_2) = 1 - theta,
// g(tau_1) = sign, g(tau_2) = 0.
DiscreteInstance two_trajectory_instance(double sign = 1.0);

enum class EnvKind { kLq, kCartpole, kDiscreteToy };

// Linear-quadratic system s' = A s + B a_c + noise with reward
// -(s^T Q s + a_c^T Rc a_c), where a_c is the action clipped to the action box
// and states are clipped to the state box after every transition.
struct LqParams {
  Eigen::MatrixXd a;       // state_dim x state_dim
  Eigen::MatrixXd b;       // state_dim x action_dim
  Eigen::VectorXd q_diag;  // state cost weights
  Eigen::VectorXd r_diag;  // action cost weights
  double noise_std = 0.0;
  double init_range = 1.0;  // s_0 ~ U[-init_range, init_range]^dim
  double state_box = 10.0;
  double action_box = 10.0;
};

// Continuous-action cart-pole. The applied force is force_mag * clip(a, -1, 1).
// Reward is +1 per step until failure; afterwards the state freezes and the
// reward is 0 until the horizon.
struct CartpoleParams {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double tau = 0.02;
  double x_threshold = 2.4;
  double theta_threshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  double init_range = 0.05;
};

struct EnvSpec {
  EnvKind kind = EnvKind::kLq;
  int state_dim = 1;
  int action_dim = 1;
  int horizon = 1;
  double discount = 1.0;
  double r_max = 1.0;
  LqParams lq;
  CartpoleParams cartpole;
  std::shared_ptr<const DiscreteInstance> toy;

  // Throws ConfigError on invalid settings; returns non-fatal warnings.
  std::vector<std::string> validate() const;
};

EnvSpec make_lq(int dim, int horizon, double discount);
// Largest |reward| an LQ episode can produce under the configured boxes.
double lq_reward_bound(const LqParams& lq);
EnvSpec make_cartpole(int horizon, double discount);
// One-step abstract environment: the state encodes the sampled atom index,
// the action is the (irrelevant) policy draw, the reward is returns(atom).
// The policy's theta(0, 0) is the table parameter.
EnvSpec make_discrete_toy(std::shared_ptr<const DiscreteInstance> inst);

// Samples n trajectories. Trajectory i uses its own stream
// stream_seed(seed, {first_index + i}), so output is independent of `threads`.
std::vector<Trajectory> simulate(const EnvSpec& env, const PolicyParams& policy,
                                 std::size_t n, std::uint64_t seed, int threads = 1,
                                 std::size_t first_index = 0);

Trajectory simulate_one(const EnvSpec& env, const PolicyParams& policy, Rng& rng);

double discounted_return(const Trajectory& tau, double gamma);

}  // namespace bpo
