#include "bpo/behavioral.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bpo/errors.hpp"

namespace bpo {
namespace {

struct NormalEquations {
  Eigen::MatrixXd ss;  // sum_i w_i sum_t s s^T
  Eigen::MatrixXd sa;  // sum_i w_i sum_t s a^T
};

NormalEquations accumulate(std::span<const Trajectory> taus, const Eigen::VectorXd& w,
                           int ds, int da) {
  NormalEquations ne{Eigen::MatrixXd::Zero(ds, ds), Eigen::MatrixXd::Zero(ds, da)};
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double wi = w(static_cast<Eigen::Index>(i));
    if (wi == 0.0) continue;
    const Trajectory& tau = taus[i];
    ne.ss.noalias() += wi * tau.states.transpose() * tau.states;
    ne.sa.noalias() += wi * tau.states.transpose() * tau.actions;
  }
  return ne;
}

template <typename Pred>
std::vector<Trajectory> pick(std::span<const Trajectory> taus, Pred keep) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < taus.size(); ++i)
    if (keep(i)) out.push_back(taus[i]);
  return out;
}

Eigen::VectorXd pick(const Eigen::VectorXd& v, std::size_t parity) {
  std::vector<double> out;
  for (Eigen::Index i = static_cast<Eigen::Index>(parity); i < v.size(); i += 2)
    out.push_back(v(i));
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace

Eigen::VectorXd fit_weights(std::span<const Trajectory> taus,
                            const std::optional<MixtureSpec>& mix,
                            const PolicyParams& target, double gamma,
                            const FitOptions& opts) {
  if (taus.empty()) throw UsageError("behavioral fit needs at least one trajectory");
  const BaselineKind baseline = taus.size() >= 2 ? opts.baseline : BaselineKind::kNone;
  const MixtureSpec m = mix ? *mix : on_policy_mixture(target, taus.size());
  const OffPolicyContributions c =
      offpolicy_contributions(taus, m, target, gamma, opts.estimator, baseline);
  // rows already carry the IS weight, which is positive.
  Eigen::VectorXd w(c.rows.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = c.rows.row(i).norm();
  return w;
}

double weighted_nll(std::span<const Trajectory> taus, const Eigen::VectorXd& weights,
                    const PolicyParams& candidate) {
  if (taus.empty() || static_cast<std::size_t>(weights.size()) != taus.size())
    throw UsageError("weights do not match the batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double wi = weights(static_cast<Eigen::Index>(i));
    if (wi != 0.0) acc += wi * trajectory_log_prob(candidate, taus[i]);
  }
  return -acc / static_cast<double>(taus.size());
}

PolicyParams weighted_least_squares(std::span<const Trajectory> taus,
                                    const Eigen::VectorXd& weights,
                                    const PolicyParams& target,
                                    std::optional<double> ridge) {
  if ((weights.array() < 0.0).any() || !weights.allFinite())
    throw UsageError("fitting weights must be finite and nonnegative");
  if (!(weights.array() > 0.0).any())
    throw DegenerateObjectiveError("all fitting weights are zero; every behavioral policy is optimal");
  const int ds = target.state_dim();
  NormalEquations ne = accumulate(taus, weights, ds, target.action_dim());
  const double lambda = ridge ? *ridge : 1e-8 * ne.ss.trace() / ds;
  if (lambda < 0.0) throw UsageError("ridge must be nonnegative");
  ne.ss.diagonal().array() += lambda;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ne.ss);
  if (!lu.isInvertible())
    throw SolverError("normal matrix is singular; use a positive ridge");
  Eigen::MatrixXd theta = lu.solve(ne.sa);
  if (!theta.allFinite()) throw SolverError("weighted least squares produced non-finite values");
  return target.with_theta(std::move(theta));
}

BpoFit fit_behavioral(std::span<const Trajectory> taus, const std::optional<MixtureSpec>& mix,
                      const PolicyParams& target, double gamma, const FitOptions& opts) {
  const Eigen::VectorXd w = fit_weights(taus, mix, target, gamma, opts);
  BpoFit fit{weighted_least_squares(taus, w, target, opts.ridge), 0.0, 0.0, 0.0};
  fit.objective_value = weighted_nll(taus, w, fit.behav_params);
  fit.normalizer_Z = w.mean();
  if (taus.size() >= 4) {
    const auto even = pick(taus, [](std::size_t i) { return i % 2 == 0; });
    const auto odd = pick(taus, [](std::size_t i) { return i % 2 == 1; });
    const Eigen::VectorXd w_even = pick(w, 0), w_odd = pick(w, 1);
    try {
      const PolicyParams fit_even = weighted_least_squares(even, w_even, target, opts.ridge);
      const PolicyParams fit_odd = weighted_least_squares(odd, w_odd, target, opts.ridge);
      const double gap_odd = weighted_nll(odd, w_odd, fit_even) - weighted_nll(odd, w_odd, fit_odd);
      const double gap_even =
          weighted_nll(even, w_even, fit_odd) - weighted_nll(even, w_even, fit_even);
      fit.kl_estimate = std::max(0.0, 0.5 * (gap_odd + gap_even) / fit.normalizer_Z);
    } catch (const DegenerateObjectiveError&) {
      // One half carries no weight: nothing to cross-check against.
      fit.kl_estimate = 0.0;
    }
  }
  return fit;
}

double estimate_kl(std::span<const Trajectory> taus, const std::optional<MixtureSpec>& mix,
                   const PolicyParams& target, const PolicyParams& candidate, double gamma,
                   const FitOptions& opts) {
  if (taus.size() < 2) throw UsageError("KL estimation needs at least two trajectories");
  const Eigen::VectorXd w = fit_weights(taus, mix, target, gamma, opts);
  const PolicyParams fitted = weighted_least_squares(taus, w, target, opts.ridge);
  if (candidate == fitted) return 0.0;
  const double gap = weighted_nll(taus, w, candidate) - weighted_nll(taus, w, fitted);
  return std::max(0.0, gap / w.mean());
}

double defensive_beta(double eps_kl) {
  if (std::isnan(eps_kl) || eps_kl < 0.0) throw UsageError("KL estimate must be nonnegative");
  const double eps = std::min(eps_kl, 1.0);
  return std::sqrt(eps / (2.0 - eps));
}

Eigen::VectorXd optimal_density(const DiscreteInstance& inst, double theta) {
  const EnumeratedInstance e = enumerate_instance(inst, theta);
  Eigen::VectorXd mass = e.probs.cwiseProduct(e.grads.rowwise().norm());
  const double z = mass.sum();
  if (!(z > 0.0))
    throw DegenerateObjectiveError("every gradient norm vanishes on the support");
  return mass / z;
}

}  // namespace bpo
