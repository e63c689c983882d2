#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bpo/grad_est.hpp"
#include "bpo/mdp.hpp"
#include "bpo/policy.hpp"

namespace bpo {

struct MixtureComponent {
  PolicyParams params;
  std::size_t count = 0;
};

// Phi_m = sum_j (n_j / n) p_{theta_j}. Components may repeat the same
// parameters; trajectories are matched to components through their tag.
struct MixtureSpec {
  std::vector<MixtureComponent> components;

  std::size_t total() const;
  // Throws UsageError unless non-empty with every count >= 1.
  void validate() const;
};

MixtureSpec on_policy_mixture(const PolicyParams& target, std::size_t n);

// exp(trajectory_log_ratio); throws WeightOverflowError when not finite.
double simple_weight(const PolicyParams& target, const PolicyParams& behav,
                     const Trajectory& tau);

// log p(tau) - log sum_j f_j exp(log p_j(tau)), evaluated with log-sum-exp.
// `fractions` are the mixing proportions n_j / n.
double balance_log_weight(double target_log_density,
                          std::span<const double> component_log_densities,
                          std::span<const double> fractions);

double balance_log_weight(const MixtureSpec& mix, const PolicyParams& target,
                          const Trajectory& tau);
double balance_weight(const MixtureSpec& mix, const PolicyParams& target,
                      const Trajectory& tau);

// beta_j(tau) = n_j p_j(tau) / sum_k n_k p_k(tau), one entry per component.
Eigen::VectorXd balance_coefficients(const MixtureSpec& mix, const Trajectory& tau);

// Counts (round(beta n) on target, rest on behav), rounded half away from zero
// and clamped so both sides keep a trajectory when 0 < beta < 1.
MixtureSpec defensive_mixture(const PolicyParams& target, const PolicyParams& behav,
                              double beta, std::size_t n);

// Number of trajectories the defensive split assigns to the target.
std::size_t defensive_target_count(double beta, std::size_t n);

// Throws UsageError unless, for every distinct tag in the mixture, the number
// of trajectories carrying it equals the summed component counts.
void check_mixture_batch(std::span<const Trajectory> taus, const MixtureSpec& mix);

struct OffPolicyContributions {
  Eigen::MatrixXd rows;         // w_i * g(tau_i), one row per trajectory
  std::vector<double> weights;  // w_i
  BaselineSpec baseline;
};

// Baselines are fitted with squared-weight moments so that they minimize the
// variance of the weighted estimator; with all weights 1 this is the
// on-policy fit.
OffPolicyContributions offpolicy_contributions(std::span<const Trajectory> taus,
                                               const MixtureSpec& mix,
                                               const PolicyParams& target, double gamma,
                                               Estimator estimator,
                                               BaselineKind baseline);

GradientEstimate offpolicy_batch_grad(std::span<const Trajectory> taus,
                                      const MixtureSpec& mix, const PolicyParams& target,
                                      double gamma, Estimator estimator,
                                      BaselineKind baseline);

// Unbiased trace of the sample covariance of the rows.
double empirical_variance(const Eigen::MatrixXd& rows);
double empirical_variance(std::span<const Eigen::VectorXd> grads);

}  // namespace bpo
