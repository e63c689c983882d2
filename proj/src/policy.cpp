#include "bpo/policy.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "bpo/errors.hpp"
#include "bpo/mdp.hpp"

namespace bpo {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

PolicyTag fingerprint(const Eigen::MatrixXd& theta, const Eigen::VectorXd& log_std) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(theta.rows()) << 32 |
                               static_cast<std::uint64_t>(theta.cols()));
  for (Eigen::Index i = 0; i < theta.rows(); ++i)
    for (Eigen::Index k = 0; k < theta.cols(); ++k)
      h = splitmix64(h ^ std::bit_cast<std::uint64_t>(theta(i, k) + 0.0));
  for (Eigen::Index k = 0; k < log_std.size(); ++k)
    h = splitmix64(h ^ std::bit_cast<std::uint64_t>(log_std(k) + 0.0));
  return h;
}

void check_dims(const PolicyParams& p, const Eigen::VectorXd& state,
                const Eigen::VectorXd& action) {
  if (state.size() != p.state_dim() || action.size() != p.action_dim())
    throw UsageError("state/action dimensions do not match policy");
}

}  // namespace

PolicyParams::PolicyParams(Eigen::MatrixXd theta, Eigen::VectorXd log_std)
    : theta_(std::move(theta)), log_std_(std::move(log_std)) {
  if (theta_.rows() < 1 || theta_.cols() < 1)
    throw ConfigError("policy theta must be non-empty");
  if (log_std_.size() != theta_.cols())
    throw ConfigError("log_std length " + std::to_string(log_std_.size()) +
                      " does not match action_dim " + std::to_string(theta_.cols()));
  if (!theta_.allFinite() || !log_std_.allFinite())
    throw ConfigError("policy parameters must be finite");
  stddev_ = log_std_.array().exp();
  if ((stddev_.array() <= 0.0).any())
    throw ConfigError("policy standard deviation underflows to zero");
  tag_ = fingerprint(theta_, log_std_);
}

PolicyParams PolicyParams::zeros(int state_dim, int action_dim, double log_std) {
  return PolicyParams(Eigen::MatrixXd::Zero(state_dim, action_dim),
                      Eigen::VectorXd::Constant(action_dim, log_std));
}

PolicyParams PolicyParams::with_theta(Eigen::MatrixXd theta) const {
  return PolicyParams(std::move(theta), log_std_);
}

PolicyParams PolicyParams::with_flat_theta(const Eigen::VectorXd& flat) const {
  if (flat.size() != param_dim()) throw UsageError("flat theta has wrong length");
  Eigen::MatrixXd m(state_dim(), action_dim());
  for (int i = 0; i < state_dim(); ++i)
    for (int k = 0; k < action_dim(); ++k) m(i, k) = flat(i * action_dim() + k);
  return with_theta(std::move(m));
}

Eigen::VectorXd PolicyParams::flat_theta() const {
  Eigen::VectorXd flat(param_dim());
  for (int i = 0; i < state_dim(); ++i)
    for (int k = 0; k < action_dim(); ++k) flat(i * action_dim() + k) = theta_(i, k);
  return flat;
}

Eigen::VectorXd PolicyParams::mean(const Eigen::VectorXd& state) const {
  return theta_.transpose() * state;
}

bool PolicyParams::operator==(const PolicyParams& other) const {
  return theta_.rows() == other.theta_.rows() && theta_.cols() == other.theta_.cols() &&
         theta_ == other.theta_ && log_std_ == other.log_std_;
}

Eigen::VectorXd sample_action(const PolicyParams& p, const Eigen::VectorXd& state,
                              Rng& rng) {
  if (state.size() != p.state_dim()) throw UsageError("state dimension mismatch");
  Eigen::VectorXd a = p.mean(state);
  for (int k = 0; k < p.action_dim(); ++k) a(k) += p.stddev()(k) * rng.normal();
  return a;
}

double log_prob(const PolicyParams& p, const Eigen::VectorXd& state,
                const Eigen::VectorXd& action) {
  check_dims(p, state, action);
  const Eigen::VectorXd mu = p.mean(state);
  double lp = 0.0;
  for (int k = 0; k < p.action_dim(); ++k) {
    const double z = (action(k) - mu(k)) / p.stddev()(k);
    lp += -0.5 * z * z - p.log_std()(k) - kHalfLog2Pi;
  }
  return lp;
}

Eigen::VectorXd score(const PolicyParams& p, const Eigen::VectorXd& state,
                      const Eigen::VectorXd& action) {
  check_dims(p, state, action);
  const Eigen::VectorXd mu = p.mean(state);
  const int ad = p.action_dim();
  Eigen::VectorXd resid(ad);
  for (int k = 0; k < ad; ++k) {
    const double sd = p.stddev()(k);
    resid(k) = (action(k) - mu(k)) / (sd * sd);
  }
  Eigen::VectorXd g(p.param_dim());
  for (int i = 0; i < p.state_dim(); ++i)
    for (int k = 0; k < ad; ++k) g(i * ad + k) = state(i) * resid(k);
  return g;
}

double trajectory_log_prob(const PolicyParams& p, const Trajectory& tau) {
  double lp = 0.0;
  for (int t = 0; t < tau.length(); ++t)
    lp += log_prob(p, tau.states.row(t).transpose(), tau.actions.row(t).transpose());
  return lp;
}

double trajectory_log_ratio(const PolicyParams& target, const PolicyParams& behav,
                            const Trajectory& tau) {
  if (target.state_dim() != behav.state_dim() ||
      target.action_dim() != behav.action_dim())
    throw UsageError("target and behavioral policies differ in shape");
  if (target == behav) return 0.0;
  double lr = 0.0;
  for (int t = 0; t < tau.length(); ++t) {
    const Eigen::VectorXd s = tau.states.row(t).transpose();
    const Eigen::VectorXd a = tau.actions.row(t).transpose();
    lr += log_prob(target, s, a) - log_prob(behav, s, a);
  }
  return lr;
}

}  // namespace bpo
