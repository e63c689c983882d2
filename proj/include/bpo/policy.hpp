#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "bpo/rng.hpp"

namespace bpo {

struct Trajectory;

// Fingerprint of the parameters that generated a trajectory.
using PolicyTag = std::uint64_t;

// Gaussian policy with linear mean and fixed diagonal covariance:
//   a ~ N(theta^T s, diag(exp(log_std))^2).
// theta is state_dim x action_dim. Gradients w.r.t. theta are flattened
// row-major (state-major): index i * action_dim + k holds d/d theta(i, k).
class PolicyParams {
 public:
  PolicyParams(Eigen::MatrixXd theta, Eigen::VectorXd log_std);

  static PolicyParams zeros(int state_dim, int action_dim, double log_std = 0.0);
  // Same log_std, new mean matrix.
  PolicyParams with_theta(Eigen::MatrixXd theta) const;
  PolicyParams with_flat_theta(const Eigen::VectorXd& flat) const;

  const Eigen::MatrixXd& theta() const { return theta_; }
  const Eigen::VectorXd& log_std() const { return log_std_; }
  const Eigen::VectorXd& stddev() const { return stddev_; }
  int state_dim() const { return static_cast<int>(theta_.rows()); }
  int action_dim() const { return static_cast<int>(theta_.cols()); }
  int param_dim() const { return state_dim() * action_dim(); }

  Eigen::VectorXd flat_theta() const;
  Eigen::VectorXd mean(const Eigen::VectorXd& state) const;
  PolicyTag tag() const { return tag_; }

  bool operator==(const PolicyParams& other) const;

 private:
  Eigen::MatrixXd theta_;
  Eigen::VectorXd log_std_;
  Eigen::VectorXd stddev_;
  PolicyTag tag_ = 0;
};

Eigen::VectorXd sample_action(const PolicyParams& p, const Eigen::VectorXd& state,
                              Rng& rng);

double log_prob(const PolicyParams& p, const Eigen::VectorXd& state,
                const Eigen::VectorXd& action);

// Gradient of log_prob w.r.t. theta, flattened row-major.
Eigen::VectorXd score(const PolicyParams& p, const Eigen::VectorXd& state,
                      const Eigen::VectorXd& action);

// Sum of per-step policy log-densities. Environment terms are omitted; they
// cancel in every ratio this library forms.
double trajectory_log_prob(const PolicyParams& p, const Trajectory& tau);

// log prod_t pi_target(a_t|s_t) / pi_behav(a_t|s_t).
double trajectory_log_ratio(const PolicyParams& target, const PolicyParams& behav,
                            const Trajectory& tau);

}  // namespace bpo
