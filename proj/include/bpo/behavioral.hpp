#pragma once

#include <optional>
#include <span>

#include <Eigen/Dense>

#include "bpo/grad_est.hpp"
#include "bpo/is_core.hpp"
#include "bpo/mdp.hpp"
#include "bpo/policy.hpp"

namespace bpo {

struct BpoFit {
  PolicyParams behav_params;
  double objective_value = 0.0;  // weighted negative log-likelihood at the fit
  double kl_estimate = 0.0;      // >= 0
  double normalizer_Z = 0.0;     // mean of (IS weight * ||g||)
};

struct FitOptions {
  Estimator estimator = Estimator::kGpomdp;
  BaselineKind baseline = BaselineKind::kOptimal;
  // Unset: 1e-8 * trace(normal matrix) / state_dim.
  std::optional<double> ridge;
};

// Per-trajectory fitting weights IS weight * ||g(tau)||, with g the
// single-trajectory estimator under `opts`. Without a mixture the samples are
// taken to come from the target.
Eigen::VectorXd fit_weights(std::span<const Trajectory> taus,
                            const std::optional<MixtureSpec>& mix,
                            const PolicyParams& target, double gamma,
                            const FitOptions& opts);

// L(theta_b) = -(1/n) sum_i w_i sum_t log pi_{theta_b}(a_t | s_t).
double weighted_nll(std::span<const Trajectory> taus, const Eigen::VectorXd& weights,
                    const PolicyParams& candidate);

// Weighted maximum likelihood over the mean matrix, log_std fixed:
//   theta = (sum_i w_i sum_t s s^T + ridge I)^-1 sum_i w_i sum_t s a^T.
PolicyParams weighted_least_squares(std::span<const Trajectory> taus,
                                    const Eigen::VectorXd& weights,
                                    const PolicyParams& target,
                                    std::optional<double> ridge);

// kl_estimate is a two-fold cross-fitted loss gap (fit on one half, score on
// the other, both directions averaged), divided by Z; 0 for fewer than four
// trajectories.
BpoFit fit_behavioral(std::span<const Trajectory> taus, const std::optional<MixtureSpec>& mix,
                      const PolicyParams& target, double gamma, const FitOptions& opts = {});

// max(0, (L(candidate) - L(fitted)) / Z) on the given data.
double estimate_kl(std::span<const Trajectory> taus, const std::optional<MixtureSpec>& mix,
                   const PolicyParams& target, const PolicyParams& candidate, double gamma,
                   const FitOptions& opts = {});

// sqrt(eps / (2 - eps)), eps clamped to at most 1.
double defensive_beta(double eps_kl);

// p*(tau) proportional to p_theta(tau) ||g(tau)||.
Eigen::VectorXd optimal_density(const DiscreteInstance& inst, double theta);

}  // namespace bpo
