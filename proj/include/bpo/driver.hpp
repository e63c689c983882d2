#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bpo/grad_est.hpp"
#include "bpo/mdp.hpp"
#include "bpo/policy.hpp"

namespace bpo {

enum class Variant { kTheoreticalBpo, kPracticalBpo, kOnPolicy, kStormPg };

struct AlgoConfig {
  Variant variant = Variant::kTheoreticalBpo;
  std::size_t n_bpo = 50;
  std::size_t n_pg = 50;
  std::optional<double> beta = 0.0;  // nullopt: defensive_beta(kl_estimate)
  double step_size = 0.01;
  std::size_t iterations = 100;
  Estimator estimator = Estimator::kGpomdp;
  BaselineKind baseline = BaselineKind::kOptimal;
  std::uint64_t seed = 0;
  EnvSpec env;
  PolicyParams initial = PolicyParams::zeros(1, 1);
  // PracticalBPO: fit on the previous gradient batch instead of fresh samples.
  bool offline_kl = true;
  // PracticalBPO: reuse the fitting batch as extra mixture components.
  bool biased = true;
  double storm_momentum = 0.9;
  // When > 0, avg_return comes from this many extra episodes at theta_k that
  // are not charged to the budget; otherwise it is a self-normalized IS
  // estimate over the gradient batch.
  std::size_t eval_episodes = 0;
  std::optional<double> ridge;
  int threads = 1;

  void validate() const;
};

struct IterationRecord {
  std::size_t k = 0;
  double avg_return = 0.0;
  double return_ci95 = 0.0;
  double grad_norm = 0.0;
  double est_variance = 0.0;  // trace covariance of the estimate (per-trajectory / n)
  double kl_estimate = 0.0;
  double beta_used = 0.0;
  std::size_t cum_trajectories = 0;
  bool fallback = false;  // on-policy step: practical cold start or degenerate fit
};

struct RunResult {
  std::vector<IterationRecord> records;
  std::vector<PolicyParams> iterates;  // theta_0 .. theta_K
  std::size_t selected_index = 0;      // L, uniform on 1..K (0 when K = 0)
  std::size_t total_trajectories = 0;

  const PolicyParams& selected() const { return iterates.at(selected_index); }
  const PolicyParams& final_params() const { return iterates.back(); }
};

RunResult run_bpo_theoretical(const AlgoConfig& cfg);
RunResult run_bpo_practical(const AlgoConfig& cfg);
RunResult run_on_policy(const AlgoConfig& cfg);
RunResult run_storm_pg(const AlgoConfig& cfg);
RunResult run(const AlgoConfig& cfg);

// Mean discounted return of n fresh episodes and its 95% half-width.
struct ReturnSummary {
  double mean = 0.0;
  double ci95 = 0.0;
};
ReturnSummary evaluate_policy(const EnvSpec& env, const PolicyParams& p, std::size_t n,
                              std::uint64_t seed, int threads = 1);

enum class SweptParam { kTheta, kLogStd, kHorizon, kStateDim };
std::string swept_param_name(SweptParam p);

struct SweepSpec {
  std::vector<bool> biased{true};
  std::vector<double> betas{0.0};
  std::vector<std::pair<std::size_t, std::size_t>> sizes{{50, 50}};  // (N_BPO, N_PG)
  SweptParam param = SweptParam::kTheta;
  std::vector<double> values{0.0};
};

struct VarianceGapOptions {
  std::size_t reps = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  Estimator estimator = Estimator::kGpomdp;
  BaselineKind baseline = BaselineKind::kOptimal;
  std::optional<double> ridge;
  // Use the target itself as behavioral policy.
  bool force_target_behavioral = false;
  // Replace the off-policy arm by an independent on-policy batch of the same size.
  bool on_policy_control = false;
};

struct VarianceGapRow {
  double dvar = 0.0;
  double dvar_minus = 0.0;
  double dvar_plus = 0.0;
  bool biased = false;
  double beta = 0.0;
  std::size_t n_bpo = 0;
  std::size_t n_pg = 0;
  double param = 0.0;
  std::size_t failed_reps = 0;
};

// Applies one swept value to the base environment/target.
void apply_swept_value(SweptParam param, double value, EnvSpec& env, PolicyParams& target);

// One repetition of the protocol: returns V_on - V_off.
double variance_gap_rep(const EnvSpec& env, const PolicyParams& target, bool biased,
                        double beta, std::size_t n_bpo, std::size_t n_pg,
                        std::uint64_t rep_seed, const VarianceGapOptions& opts);

// Rows in grid order: biased, beta, sizes, values (last varies fastest).
std::vector<VarianceGapRow> variance_gap_experiment(const EnvSpec& env,
                                                    const PolicyParams& target,
                                                    const SweepSpec& grid,
                                                    const VarianceGapOptions& opts);

}  // namespace bpo
