#include "bpo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bpo/errors.hpp"
#include "bpo/parallel.hpp"

namespace bpo {
namespace {

double clip(double x, double box) { return std::clamp(x, -box, box); }

Trajectory allocate(const EnvSpec& env, const PolicyParams& policy) {
  Trajectory tau;
  tau.states.resize(env.horizon, env.state_dim);
  tau.actions.resize(env.horizon, env.action_dim);
  tau.rewards.resize(env.horizon);
  tau.policy_tag = policy.tag();
  return tau;
}

void require_finite(const Eigen::VectorXd& s, int t) {
  if (!s.allFinite()) throw SimulationError("non-finite state encountered", t);
}

Trajectory simulate_lq(const EnvSpec& env, const PolicyParams& policy, Rng& rng) {
  const LqParams& lq = env.lq;
  Trajectory tau = allocate(env, policy);
  Eigen::VectorXd s(env.state_dim);
  for (int i = 0; i < env.state_dim; ++i) s(i) = rng.uniform(-lq.init_range, lq.init_range);
  for (int t = 0; t < env.horizon; ++t) {
    require_finite(s, t);
    const Eigen::VectorXd a = sample_action(policy, s, rng);
    Eigen::VectorXd a_c = a;
    for (int k = 0; k < env.action_dim; ++k) a_c(k) = clip(a(k), lq.action_box);
    tau.states.row(t) = s.transpose();
    tau.actions.row(t) = a.transpose();
    tau.rewards(t) = -(s.array().square() * lq.q_diag.array()).sum() -
                     (a_c.array().square() * lq.r_diag.array()).sum();
    Eigen::VectorXd next = lq.a * s + lq.b * a_c;
    if (lq.noise_std > 0.0)
      for (int i = 0; i < env.state_dim; ++i) next(i) += lq.noise_std * rng.normal();
    for (int i = 0; i < env.state_dim; ++i) next(i) = clip(next(i), lq.state_box);
    s = std::move(next);
  }
  return tau;
}

Trajectory simulate_cartpole(const EnvSpec& env, const PolicyParams& policy, Rng& rng) {
  const CartpoleParams& cp = env.cartpole;
  Trajectory tau = allocate(env, policy);
  Eigen::VectorXd s(4);
  for (int i = 0; i < 4; ++i) s(i) = rng.uniform(-cp.init_range, cp.init_range);
  const double total_mass = cp.mass_cart + cp.mass_pole;
  const double polemass_length = cp.mass_pole * cp.half_length;
  bool failed = false;
  for (int t = 0; t < env.horizon; ++t) {
    require_finite(s, t);
    const Eigen::VectorXd a = sample_action(policy, s, rng);
    tau.states.row(t) = s.transpose();
    tau.actions.row(t) = a.transpose();
    if (failed) {
      tau.rewards(t) = 0.0;
      continue;
    }
    tau.rewards(t) = 1.0;
    const double force = cp.force_mag * std::clamp(a(0), -1.0, 1.0);
    const double x_dot = s(1), th = s(2), th_dot = s(3);
    const double cos_th = std::cos(th), sin_th = std::sin(th);
    const double temp = (force + polemass_length * th_dot * th_dot * sin_th) / total_mass;
    const double th_acc =
        (cp.gravity * sin_th - cos_th * temp) /
        (cp.half_length * (4.0 / 3.0 - cp.mass_pole * cos_th * cos_th / total_mass));
    const double x_acc = temp - polemass_length * th_acc * cos_th / total_mass;
    s(0) += cp.tau * x_dot;
    s(1) += cp.tau * x_acc;
    s(2) += cp.tau * th_dot;
    s(3) += cp.tau * th_acc;
    failed = std::abs(s(0)) > cp.x_threshold || std::abs(s(2)) > cp.theta_threshold;
  }
  return tau;
}

Trajectory simulate_toy(const EnvSpec& env, const PolicyParams& policy, Rng& rng) {
  const DiscreteInstance& inst = *env.toy;
  const Eigen::VectorXd p = inst.probs(policy.theta()(0, 0));
  const double u = rng.uniform();
  std::size_t atom = 0;
  double acc = p(0);
  while (u >= acc && atom + 1 < inst.size()) acc += p(++atom);
  Trajectory tau = allocate(env, policy);
  tau.states(0, 0) = static_cast<double>(atom);
  tau.actions.row(0) = sample_action(policy, tau.state(0), rng).transpose();
  tau.rewards(0) = inst.returns.size() > 0 ? inst.returns(atom) : 0.0;
  return tau;
}

}  // namespace

int DiscreteInstance::grad_dim() const {
  return grad_model == GradModel::kScoreFunction ? 1 : static_cast<int>(grads.cols());
}

Eigen::VectorXd DiscreteInstance::probs(double theta) const {
  if (prob_slope.size() == 0) return prob_intercept;
  return prob_intercept + theta * prob_slope;
}

Eigen::VectorXd DiscreteInstance::scores(double theta) const {
  const Eigen::VectorXd p = probs(theta);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p.size());
  if (prob_slope.size() == 0) return s;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) s(i) = prob_slope(i) / p(i);
  return s;
}

void DiscreteInstance::check_admissible(double theta) const {
  if (ids.empty() || static_cast<std::size_t>(prob_intercept.size()) != ids.size())
    throw InstanceError("instance probability table does not match trajectory ids");
  if (prob_slope.size() != 0 && prob_slope.size() != prob_intercept.size())
    throw InstanceError("instance slope table has the wrong length");
  const Eigen::VectorXd p = probs(theta);
  if (!p.allFinite() || (p.array() < 0.0).any())
    throw InstanceError("negative or non-finite probability at theta=" +
                        std::to_string(theta));
  if (std::abs(p.sum() - 1.0) > 1e-12)
    throw InstanceError("probabilities sum to " + std::to_string(p.sum()) +
                        " at theta=" + std::to_string(theta));
  if (grad_model == GradModel::kDeclared &&
      static_cast<std::size_t>(grads.rows()) != ids.size())
    throw InstanceError("gradient table does not match trajectory ids");
  if (grad_model == GradModel::kScoreFunction &&
      static_cast<std::size_t>(returns.size()) != ids.size())
    throw InstanceError("return table does not match trajectory ids");
}

EnumeratedInstance enumerate_instance(const DiscreteInstance& inst, double theta) {
  inst.check_admissible(theta);
  EnumeratedInstance out;
  out.probs = inst.probs(theta);
  if (inst.grad_model == DiscreteInstance::GradModel::kDeclared) {
    out.grads = inst.grads;
  } else {
    out.grads = (inst.scores(theta).array() * inst.returns.array()).matrix();
  }
  return out;
}

DiscreteInstance two_trajectory_instance(double sign) {
  DiscreteInstance inst;
  inst.ids = {"tau_1", "tau_2"};
  inst.prob_intercept = Eigen::Vector2d(0.0, 1.0);
  inst.prob_slope = Eigen::Vector2d(1.0, -1.0);
  inst.grads = Eigen::MatrixXd(2, 1);
  inst.grads << sign, 0.0;
  return inst;
}

std::vector<std::string> EnvSpec::validate() const {
  if (state_dim < 1 || action_dim < 1) throw ConfigError("dimensions must be positive");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(discount >= 0.0 && discount <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
  if (!(r_max > 0.0)) throw ConfigError("r_max must be positive");
  switch (kind) {
    case EnvKind::kLq:
      if (lq.a.rows() != state_dim || lq.a.cols() != state_dim ||
          lq.b.rows() != state_dim || lq.b.cols() != action_dim ||
          lq.q_diag.size() != state_dim || lq.r_diag.size() != action_dim)
        throw ConfigError("LQ matrices do not match the declared dimensions");
      if ((lq.q_diag.array() < 0.0).any() || (lq.r_diag.array() < 0.0).any())
        throw ConfigError("LQ cost weights must be positive semidefinite");
      if (!(lq.state_box > 0.0 && lq.action_box > 0.0 && lq.init_range >= 0.0 &&
            lq.noise_std >= 0.0))
        throw ConfigError("LQ boxes must be positive and noise/init ranges nonnegative");
      break;
    case EnvKind::kCartpole:
      if (state_dim != 4 || action_dim != 1)
        throw ConfigError("cartpole has state_dim 4 and action_dim 1");
      break;
    case EnvKind::kDiscreteToy:
      if (!toy) throw ConfigError("discrete toy environment has no instance");
      if (state_dim != 1 || action_dim != 1 || horizon != 1)
        throw ConfigError("discrete toy environment is one-step with unit dimensions");
      break;
  }
  std::vector<std::string> warnings;
  if (discount < 1.0) {
    const double effective = 1.0 / (1.0 - discount);
    if (horizon < 0.5 * effective || horizon > 2.0 * effective)
      warnings.push_back("horizon " + std::to_string(horizon) +
                         " is far from the effective horizon 1/(1-discount) = " +
                         std::to_string(effective));
  }
  return warnings;
}

EnvSpec make_lq(int dim, int horizon, double discount) {
  EnvSpec env;
  env.kind = EnvKind::kLq;
  env.state_dim = dim;
  env.action_dim = dim;
  env.horizon = horizon;
  env.discount = discount;
  env.lq.a = Eigen::MatrixXd::Identity(dim, dim);
  env.lq.b = Eigen::MatrixXd::Identity(dim, dim);
  env.lq.q_diag = Eigen::VectorXd::Ones(dim);
  env.lq.r_diag = Eigen::VectorXd::Ones(dim);
  env.r_max = lq_reward_bound(env.lq);
  return env;
}

double lq_reward_bound(const LqParams& lq) {
  const double s = std::max(lq.state_box, lq.init_range);
  return lq.q_diag.sum() * s * s + lq.r_diag.sum() * lq.action_box * lq.action_box;
}

EnvSpec make_cartpole(int horizon, double discount) {
  EnvSpec env;
  env.kind = EnvKind::kCartpole;
  env.state_dim = 4;
  env.action_dim = 1;
  env.horizon = horizon;
  env.discount = discount;
  env.r_max = 1.0;
  return env;
}

EnvSpec make_discrete_toy(std::shared_ptr<const DiscreteInstance> inst) {
  EnvSpec env;
  env.kind = EnvKind::kDiscreteToy;
  env.state_dim = 1;
  env.action_dim = 1;
  env.horizon = 1;
  env.discount = 1.0;
  env.r_max = 1.0;
  if (inst && inst->returns.size() > 0)
    env.r_max = std::max(1.0, inst->returns.cwiseAbs().maxCoeff());
  env.toy = std::move(inst);
  return env;
}

Trajectory simulate_one(const EnvSpec& env, const PolicyParams& policy, Rng& rng) {
  switch (env.kind) {
    case EnvKind::kLq: return simulate_lq(env, policy, rng);
    case EnvKind::kCartpole: return simulate_cartpole(env, policy, rng);
    case EnvKind::kDiscreteToy: return simulate_toy(env, policy, rng);
  }
  throw ConfigError("unknown environment kind");
}

std::vector<Trajectory> simulate(const EnvSpec& env, const PolicyParams& policy,
                                 std::size_t n, std::uint64_t seed, int threads,
                                 std::size_t first_index) {
  if (n == 0) throw ConfigError("simulate requires n >= 1");
  if (policy.state_dim() != env.state_dim || policy.action_dim() != env.action_dim)
    throw ConfigError("policy dimensions (" + std::to_string(policy.state_dim()) + "x" +
                      std::to_string(policy.action_dim()) +
                      ") do not match environment (" + std::to_string(env.state_dim) +
                      "x" + std::to_string(env.action_dim) + ")");
  env.validate();
  if (env.kind == EnvKind::kDiscreteToy) env.toy->check_admissible(policy.theta()(0, 0));
  std::vector<Trajectory> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(stream_seed(seed, {first_index + i}));
    out[i] = simulate_one(env, policy, rng);
  });
  return out;
}

double discounted_return(const Trajectory& tau, double gamma) {
  double ret = 0.0;
  double disc = 1.0;
  for (int t = 0; t < tau.length(); ++t) {
    ret += disc * tau.rewards(t);
    disc *= gamma;
  }
  return ret;
}

}  // namespace bpo
