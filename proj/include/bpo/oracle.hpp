#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bpo/mdp.hpp"
#include "bpo/rng.hpp"

// Exact enumeration over DiscreteInstance universes. Sums are accumulated in
// long double with compensation.
namespace bpo::oracle {

class Accumulator {
 public:
  void add(long double x);
  long double value() const { return sum_ + comp_; }

 private:
  long double sum_ = 0.0L;
  long double comp_ = 0.0L;
};

Eigen::VectorXd exact_gradient(const DiscreteInstance& inst, double theta);

// sum_tau p^2 ||g||^2 / q - ||grad J||^2. Throws AbsoluteContinuityError when
// q vanishes where p ||g|| does not.
double exact_estimator_variance(const DiscreteInstance& inst, double theta,
                                const Eigen::VectorXd& q);
double on_policy_variance(const DiscreteInstance& inst, double theta);
// Z^2 - ||grad J||^2
double optimal_variance(const DiscreteInstance& inst, double theta);
// Z = E_p ||g||
double normalizer(const DiscreteInstance& inst, double theta);
// Var_p ||g||
double grad_norm_variance(const DiscreteInstance& inst, double theta);
// max ||g|| over the support of p
double max_grad_norm(const DiscreteInstance& inst, double theta);

struct Divergences {
  double chi2 = 0.0;
  double kl = 0.0;
};
Divergences exact_divergences(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// Weighted cross-entropy loss -sum_tau p(tau) ||g(tau)|| log q(tau).
double exact_loss(const DiscreteInstance& inst, double theta, const Eigen::VectorXd& q);

struct SimplexResult {
  Eigen::VectorXd q_best;
  double var_best = 0.0;
  std::uint64_t points = 0;
};
// Largest grid simplex_min_variance accepts.
inline constexpr double kMaxSimplexPoints = 2.5e8;
std::uint64_t simplex_grid_size(std::size_t atoms, double grid_step);
SimplexResult simplex_min_variance(const DiscreteInstance& inst, double theta,
                                   double grid_step, int threads = 1);

// Components of a discrete mixture: distributions q_j with sample counts n_j.
struct DiscreteMixture {
  std::vector<Eigen::VectorXd> components;
  std::vector<std::size_t> counts;
};

// E over the stratified mixture of the balance-heuristic estimator, using the
// collapsed weight p / Phi.
Eigen::VectorXd mis_expectation(const DiscreteInstance& inst, double theta,
                                const DiscreteMixture& mix);
// The same expectation through the explicit partition of unity
//   sum_j sum_tau q_j(tau) beta_j(tau) p(tau) / q_j(tau) g(tau).
Eigen::VectorXd mis_expectation_partition(const DiscreteInstance& inst, double theta,
                                          const DiscreteMixture& mix);
// Largest |1 - sum_j beta_j(tau)| over tau with Phi(tau) > 0.
double partition_of_unity_error(const DiscreteMixture& mix);
Eigen::VectorXd mixture_density(const DiscreteMixture& mix);

// Random instance: 2 to 6 trajectories, Dirichlet(1) probabilities, gradients
// uniform on [-1, 1]^d with 1 <= d <= 4. The table is constant in theta.
DiscreteInstance random_instance(Rng& rng);
Eigen::VectorXd random_distribution(std::size_t size, Rng& rng);

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest observed error, or smallest observed slack
  std::string detail;
};

// Runs every identity over `instances` seeded instances.
std::vector<CheckResult> run_identity_suite(std::uint64_t seed, std::size_t instances = 100,
                                            bool include_simplex = true, int threads = 1);

}  // namespace bpo::oracle
