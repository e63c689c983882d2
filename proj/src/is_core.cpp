#include "bpo/is_core.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "bpo/errors.hpp"

namespace bpo {
namespace {

double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

double checked_exp(double log_w) {
  const double w = std::exp(log_w);
  if (!std::isfinite(w) || std::isnan(log_w)) throw WeightOverflowError(log_w);
  return w;
}

}  // namespace

std::size_t MixtureSpec::total() const {
  std::size_t n = 0;
  for (const auto& c : components) n += c.count;
  return n;
}

void MixtureSpec::validate() const {
  if (components.empty()) throw UsageError("mixture has no components");
  for (const auto& c : components)
    if (c.count == 0) throw UsageError("mixture component with zero trajectories");
}

MixtureSpec on_policy_mixture(const PolicyParams& target, std::size_t n) {
  return MixtureSpec{{MixtureComponent{target, n}}};
}

double simple_weight(const PolicyParams& target, const PolicyParams& behav,
                     const Trajectory& tau) {
  return checked_exp(trajectory_log_ratio(target, behav, tau));
}

double balance_log_weight(double target_log_density,
                          std::span<const double> component_log_densities,
                          std::span<const double> fractions) {
  if (component_log_densities.size() != fractions.size() || fractions.empty())
    throw UsageError("mixture densities and fractions differ in length");
  std::vector<double> terms(fractions.size());
  for (std::size_t j = 0; j < fractions.size(); ++j)
    terms[j] = std::log(fractions[j]) + component_log_densities[j];
  return target_log_density - log_sum_exp(terms);
}

double balance_log_weight(const MixtureSpec& mix, const PolicyParams& target,
                          const Trajectory& tau) {
  mix.validate();
  const double n = static_cast<double>(mix.total());
  std::vector<double> logs, fractions;
  logs.reserve(mix.components.size());
  fractions.reserve(mix.components.size());
  // Single-component mixtures reduce to the simple ratio, which is exactly 0
  // in log space when the component is the target.
  if (mix.components.size() == 1)
    return trajectory_log_ratio(target, mix.components.front().params, tau);
  const double target_logp = trajectory_log_prob(target, tau);
  for (const auto& c : mix.components) {
    logs.push_back(c.params == target ? target_logp : trajectory_log_prob(c.params, tau));
    fractions.push_back(static_cast<double>(c.count) / n);
  }
  return balance_log_weight(target_logp, logs, fractions);
}

double balance_weight(const MixtureSpec& mix, const PolicyParams& target,
                      const Trajectory& tau) {
  return checked_exp(balance_log_weight(mix, target, tau));
}

Eigen::VectorXd balance_coefficients(const MixtureSpec& mix, const Trajectory& tau) {
  mix.validate();
  const std::size_t m = mix.components.size();
  std::vector<double> terms(m);
  for (std::size_t j = 0; j < m; ++j)
    terms[j] = std::log(static_cast<double>(mix.components[j].count)) +
               trajectory_log_prob(mix.components[j].params, tau);
  const double norm = log_sum_exp(terms);
  Eigen::VectorXd beta(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j)
    beta(static_cast<Eigen::Index>(j)) = std::exp(terms[j] - norm);
  return beta;
}

std::size_t defensive_target_count(double beta, std::size_t n) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("defensive beta must lie in [0, 1]");
  if (n == 0) throw UsageError("defensive mixture needs n >= 1");
  if (beta == 0.0) return 0;
  if (beta == 1.0) return n;
  auto k = static_cast<std::size_t>(std::round(beta * static_cast<double>(n)));
  if (n >= 2) k = std::clamp<std::size_t>(k, 1, n - 1);
  return k;
}

MixtureSpec defensive_mixture(const PolicyParams& target, const PolicyParams& behav,
                              double beta, std::size_t n) {
  const std::size_t k = defensive_target_count(beta, n);
  MixtureSpec mix;
  if (k > 0) mix.components.push_back({target, k});
  if (k < n) mix.components.push_back({behav, n - k});
  return mix;
}

void check_mixture_batch(std::span<const Trajectory> taus, const MixtureSpec& mix) {
  mix.validate();
  std::map<PolicyTag, long long> balance;
  for (const auto& c : mix.components) balance[c.params.tag()] += static_cast<long long>(c.count);
  for (const auto& tau : taus) {
    auto it = balance.find(tau.policy_tag);
    if (it == balance.end())
      throw UsageError("trajectory tag does not match any mixture component");
    --it->second;
  }
  for (const auto& [tag, left] : balance)
    if (left != 0)
      throw UsageError("trajectory counts do not match mixture counts (off by " +
                       std::to_string(-left) + ")");
}

OffPolicyContributions offpolicy_contributions(std::span<const Trajectory> taus,
                                               const MixtureSpec& mix,
                                               const PolicyParams& target, double gamma,
                                               Estimator estimator,
                                               BaselineKind baseline) {
  if (taus.empty()) throw UsageError("off-policy estimate needs trajectories");
  check_mixture_batch(taus, mix);
  OffPolicyContributions out;
  out.weights.resize(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i)
    out.weights[i] = balance_weight(mix, target, taus[i]);
  if (baseline == BaselineKind::kOptimal) {
    if (taus.size() < 2) throw UsageError("an optimal baseline needs at least two trajectories");
    std::vector<double> sq(out.weights.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = out.weights[i] * out.weights[i];
    out.baseline = fit_optimal_baseline(taus, target, gamma, estimator, sq);
  }
  out.rows = trajectory_grads(taus, target, gamma, estimator, out.baseline);
  for (std::size_t i = 0; i < taus.size(); ++i)
    out.rows.row(static_cast<Eigen::Index>(i)) *= out.weights[i];
  return out;
}

GradientEstimate offpolicy_batch_grad(std::span<const Trajectory> taus,
                                      const MixtureSpec& mix, const PolicyParams& target,
                                      double gamma, Estimator estimator,
                                      BaselineKind baseline) {
  const OffPolicyContributions c =
      offpolicy_contributions(taus, mix, target, gamma, estimator, baseline);
  GradientEstimate est;
  est.vector = c.rows.colwise().mean().transpose();
  est.diagnostics = weight_stats(c.weights);
  return est;
}

double empirical_variance(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw UsageError("empirical variance needs at least two vectors");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  return (rows.rowwise() - mean).squaredNorm() / static_cast<double>(rows.rows() - 1);
}

double empirical_variance(std::span<const Eigen::VectorXd> grads) {
  if (grads.size() < 2) throw UsageError("empirical variance needs at least two vectors");
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(grads.size()), grads.front().size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != rows.cols()) throw UsageError("vectors differ in dimension");
    rows.row(static_cast<Eigen::Index>(i)) = grads[i].transpose();
  }
  return empirical_variance(rows);
}

}  // namespace bpo
