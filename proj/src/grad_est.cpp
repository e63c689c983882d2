#include "bpo/grad_est.hpp"

#include <algorithm>

#include "bpo/errors.hpp"

namespace bpo {
namespace {

// Cumulative score sums C (T x d, row t = sum_{l<=t} score_l) and discounted
// rewards gamma^t r_t.
struct ScoreTrace {
  Eigen::MatrixXd cum_scores;
  Eigen::VectorXd disc_rewards;
};

ScoreTrace score_trace(const Trajectory& tau, const PolicyParams& p, double gamma) {
  const int horizon = tau.length();
  ScoreTrace tr;
  tr.cum_scores.resize(horizon, p.param_dim());
  tr.disc_rewards.resize(horizon);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(p.param_dim());
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    acc += score(p, tau.state(t), tau.action(t));
    tr.cum_scores.row(t) = acc.transpose();
    tr.disc_rewards(t) = disc * tau.rewards(t);
    disc *= gamma;
  }
  return tr;
}

Eigen::RowVectorXd baseline_row(const BaselineSpec& b, int t, int d) {
  if (b.kind == BaselineKind::kNone || b.values.size() == 0)
    return Eigen::RowVectorXd::Zero(d);
  if (t >= b.values.rows() || b.values.cols() != d)
    throw UsageError("baseline shape does not match trajectory/gradient");
  return b.values.row(t);
}

Eigen::VectorXd reinforce_from_trace(const ScoreTrace& tr, const BaselineSpec& b) {
  const int d = static_cast<int>(tr.cum_scores.cols());
  const double ret = tr.disc_rewards.sum();
  const Eigen::RowVectorXd total = tr.cum_scores.row(tr.cum_scores.rows() - 1);
  const Eigen::RowVectorXd centred =
      (Eigen::RowVectorXd::Constant(d, ret) - baseline_row(b, 0, d));
  return total.cwiseProduct(centred).transpose();
}

Eigen::VectorXd gpomdp_from_trace(const ScoreTrace& tr, const BaselineSpec& b) {
  const int d = static_cast<int>(tr.cum_scores.cols());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  for (Eigen::Index t = 0; t < tr.cum_scores.rows(); ++t) {
    const Eigen::RowVectorXd centred =
        Eigen::RowVectorXd::Constant(d, tr.disc_rewards(t)) -
        baseline_row(b, static_cast<int>(t), d);
    g += tr.cum_scores.row(t).cwiseProduct(centred).transpose();
  }
  return g;
}

}  // namespace

Eigen::VectorXd reinforce_grad(const Trajectory& tau, const PolicyParams& p, double gamma,
                               const BaselineSpec& baseline) {
  return reinforce_from_trace(score_trace(tau, p, gamma), baseline);
}

Eigen::VectorXd gpomdp_grad(const Trajectory& tau, const PolicyParams& p, double gamma,
                            const BaselineSpec& baseline) {
  return gpomdp_from_trace(score_trace(tau, p, gamma), baseline);
}

Eigen::VectorXd single_grad(Estimator estimator, const Trajectory& tau,
                            const PolicyParams& p, double gamma,
                            const BaselineSpec& baseline) {
  return estimator == Estimator::kReinforce ? reinforce_grad(tau, p, gamma, baseline)
                                            : gpomdp_grad(tau, p, gamma, baseline);
}

BaselineSpec fit_optimal_baseline(std::span<const Trajectory> taus, const PolicyParams& p,
                                  double gamma, Estimator estimator,
                                  std::span<const double> moment_weights) {
  if (taus.empty()) throw UsageError("baseline fit needs a non-empty batch");
  if (!moment_weights.empty() && moment_weights.size() != taus.size())
    throw UsageError("baseline moment weights do not match batch size");
  const int d = p.param_dim();
  const int rows = estimator == Estimator::kReinforce ? 1 : taus.front().length();
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(rows, d);
  Eigen::MatrixXd den = Eigen::MatrixXd::Zero(rows, d);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double v = moment_weights.empty() ? 1.0 : moment_weights[i];
    const ScoreTrace tr = score_trace(taus[i], p, gamma);
    if (estimator == Estimator::kReinforce) {
      const Eigen::RowVectorXd c2 =
          tr.cum_scores.row(tr.cum_scores.rows() - 1).array().square();
      num.row(0) += v * tr.disc_rewards.sum() * c2;
      den.row(0) += v * c2;
    } else {
      if (tr.cum_scores.rows() != rows)
        throw UsageError("trajectories in a batch must share one horizon");
      for (int t = 0; t < rows; ++t) {
        const Eigen::RowVectorXd c2 = tr.cum_scores.row(t).array().square();
        num.row(t) += v * tr.disc_rewards(t) * c2;
        den.row(t) += v * c2;
      }
    }
  }
  BaselineSpec b;
  b.kind = BaselineKind::kOptimal;
  b.values = Eigen::MatrixXd::Zero(rows, d);
  for (int t = 0; t < rows; ++t)
    for (int k = 0; k < d; ++k)
      if (den(t, k) > 0.0) b.values(t, k) = num(t, k) / den(t, k);
  return b;
}

Eigen::MatrixXd trajectory_grads(std::span<const Trajectory> taus, const PolicyParams& p,
                                 double gamma, Estimator estimator,
                                 const BaselineSpec& baseline) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(taus.size()), p.param_dim());
  for (std::size_t i = 0; i < taus.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        single_grad(estimator, taus[i], p, gamma, baseline).transpose();
  return out;
}

GradientEstimate batch_grad(std::span<const Trajectory> taus, const PolicyParams& p,
                            double gamma, Estimator estimator, BaselineKind baseline) {
  if (taus.empty()) throw UsageError("batch_grad needs at least one trajectory");
  if (baseline == BaselineKind::kOptimal && taus.size() < 2)
    throw UsageError("an optimal baseline needs at least two trajectories");
  const BaselineSpec b = baseline == BaselineKind::kOptimal
                             ? fit_optimal_baseline(taus, p, gamma, estimator)
                             : BaselineSpec::none();
  const Eigen::MatrixXd rows = trajectory_grads(taus, p, gamma, estimator, b);
  GradientEstimate est;
  est.vector = rows.colwise().mean().transpose();
  const std::vector<double> ones(taus.size(), 1.0);
  est.diagnostics = weight_stats(ones);
  return est;
}

WeightStats weight_stats(std::span<const double> weights) {
  WeightStats s;
  s.n_used = weights.size();
  if (weights.empty()) return s;
  double sum = 0.0, sum_sq = 0.0, max = 0.0;
  for (double w : weights) {
    sum += w;
    sum_sq += w * w;
    max = std::max(max, w);
  }
  s.weight_mean = sum / static_cast<double>(weights.size());
  s.weight_max = max;
  s.ess = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
  return s;
}

}  // namespace bpo
