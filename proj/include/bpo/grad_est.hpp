#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bpo/mdp.hpp"
#include "bpo/policy.hpp"

namespace bpo {

enum class Estimator { kReinforce, kGpomdp };
enum class BaselineKind { kNone, kOptimal };

// Per-component return baselines. For G(PO)MDP row t is the baseline subtracted
// from gamma^t r_t; for REINFORCE only row 0 is used and is subtracted from the
// discounted return.
struct BaselineSpec {
  BaselineKind kind = BaselineKind::kNone;
  Eigen::MatrixXd values;

  static BaselineSpec none() { return {}; }
};

struct WeightStats {
  std::size_t n_used = 0;
  double weight_mean = 1.0;
  double weight_max = 1.0;
  double ess = 0.0;  // (sum w)^2 / sum w^2
};

struct GradientEstimate {
  Eigen::VectorXd vector;
  WeightStats diagnostics;
};

// (sum_t score_t) * (R(tau) - b)
Eigen::VectorXd reinforce_grad(const Trajectory& tau, const PolicyParams& p, double gamma,
                               const BaselineSpec& baseline);

// sum_t (gamma^t r_t - b_t) * sum_{l<=t} score_l
Eigen::VectorXd gpomdp_grad(const Trajectory& tau, const PolicyParams& p, double gamma,
                            const BaselineSpec& baseline);

Eigen::VectorXd single_grad(Estimator estimator, const Trajectory& tau,
                            const PolicyParams& p, double gamma,
                            const BaselineSpec& baseline);

// Component-wise variance-minimizing baseline estimated from a batch:
//   b = sum_i v_i c_i^2 y_i / sum_i v_i c_i^2   (0/0 -> 0)
// where c is the relevant score sum and y the matching return term. The
// moment weights v default to 1 (on-policy); off-policy callers pass squared
// importance weights so that b minimizes the variance of the weighted
// estimator.
BaselineSpec fit_optimal_baseline(std::span<const Trajectory> taus, const PolicyParams& p,
                                  double gamma, Estimator estimator,
                                  std::span<const double> moment_weights = {});

// One row per trajectory.
Eigen::MatrixXd trajectory_grads(std::span<const Trajectory> taus, const PolicyParams& p,
                                 double gamma, Estimator estimator,
                                 const BaselineSpec& baseline);

// Arithmetic mean of single-trajectory estimates; the optimal baseline, when
// requested, is fitted on the same batch.
GradientEstimate batch_grad(std::span<const Trajectory> taus, const PolicyParams& p,
                            double gamma, Estimator estimator, BaselineKind baseline);

WeightStats weight_stats(std::span<const double> weights);

}  // namespace bpo
