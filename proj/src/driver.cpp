#include "bpo/driver.hpp"

#include <cmath>
#include <limits>

#include "bpo/behavioral.hpp"
#include "bpo/errors.hpp"
#include "bpo/is_core.hpp"
#include "bpo/parallel.hpp"
#include "bpo/rng.hpp"

namespace bpo {
namespace {

std::uint64_t iteration_seed(const AlgoConfig& cfg, StreamPurpose purpose, std::size_t k) {
  return stream_seed(cfg.seed, {key(purpose), k});
}

// Trajectory i of the concatenated batch uses stream (seed, i) whichever
// component generates it.
std::vector<Trajectory> sample_mixture(const EnvSpec& env, const MixtureSpec& mix,
                                       std::uint64_t seed, int threads) {
  std::vector<Trajectory> out;
  out.reserve(mix.total());
  for (const auto& c : mix.components) {
    auto part = simulate(env, c.params, c.count, seed, threads, out.size());
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

void append(std::vector<Trajectory>& batch, MixtureSpec& mix,
            const std::vector<Trajectory>& extra, const MixtureSpec& extra_mix) {
  batch.insert(batch.end(), extra.begin(), extra.end());
  mix.components.insert(mix.components.end(), extra_mix.components.begin(),
                        extra_mix.components.end());
}

double variance_of_mean(const Eigen::MatrixXd& rows) {
  return rows.rows() >= 2 ? empirical_variance(rows) / static_cast<double>(rows.rows()) : 0.0;
}

// Self-normalized IS estimate of the discounted return and its delta-method
// 95% half-width.
ReturnSummary weighted_return(const std::vector<Trajectory>& batch,
                              const std::vector<double>& w, double gamma) {
  double sw = 0.0, swr = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sw += w[i];
    swr += w[i] * discounted_return(batch[i], gamma);
  }
  ReturnSummary s;
  s.mean = swr / sw;
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double d = w[i] * (discounted_return(batch[i], gamma) - s.mean);
    acc += d * d;
  }
  s.ci95 = 1.96 * std::sqrt(acc) / sw;
  return s;
}

class Runner {
 public:
  explicit Runner(const AlgoConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    cfg_.env.validate();
    result_.iterates.push_back(cfg_.initial);
  }

  const PolicyParams& theta() const { return result_.iterates.back(); }

  FitOptions fit_options() const { return {cfg_.estimator, cfg_.baseline, cfg_.ridge}; }

  double choose_beta(double kl) const { return cfg_.beta ? *cfg_.beta : defensive_beta(kl); }

  // A batch with no gradient signal (e.g. every episode hits the horizon with equal
  // returns) leaves the behavioral fit undetermined; sample from the target then.
  BpoFit fit(const std::vector<Trajectory>& taus, const std::optional<MixtureSpec>& mix,
             bool& degenerate) const {
    degenerate = false;
    try {
      return fit_behavioral(taus, mix, theta(), cfg_.env.discount, fit_options());
    } catch (const DegenerateObjectiveError&) {
      degenerate = true;
      return BpoFit{theta(), 0.0, 0.0, 0.0};
    }
  }

  void charge(std::size_t n) { result_.total_trajectories += n; }

  // Records iteration k and applies theta_{k+1} = theta_k + alpha v.
  void step(std::size_t k, const Eigen::VectorXd& v, double est_variance, double kl,
            double beta, const std::vector<Trajectory>& batch,
            const std::vector<double>& weights, bool fallback = false) {
    IterationRecord rec;
    rec.k = k;
    const ReturnSummary ret =
        cfg_.eval_episodes > 0
            ? evaluate_policy(cfg_.env, theta(), cfg_.eval_episodes,
                              iteration_seed(cfg_, StreamPurpose::kEvaluation, k), cfg_.threads)
            : weighted_return(batch, weights, cfg_.env.discount);
    rec.avg_return = ret.mean;
    rec.return_ci95 = ret.ci95;
    rec.grad_norm = v.norm();
    rec.est_variance = est_variance;
    rec.kl_estimate = kl;
    rec.beta_used = beta;
    rec.cum_trajectories = result_.total_trajectories;
    rec.fallback = fallback;
    result_.records.push_back(rec);

    const Eigen::VectorXd next = theta().flat_theta() + cfg_.step_size * v;
    if (!next.allFinite()) throw DivergenceError("non-finite policy parameters", k);
    result_.iterates.push_back(theta().with_flat_theta(next));
  }

  // Update from an (off-)policy batch under `mix`.
  void mixture_step(std::size_t k, const std::vector<Trajectory>& batch,
                    const MixtureSpec& mix, double kl, double beta, bool fallback = false) {
    const OffPolicyContributions c = offpolicy_contributions(
        batch, mix, theta(), cfg_.env.discount, cfg_.estimator, cfg_.baseline);
    const Eigen::VectorXd v = c.rows.colwise().mean().transpose();
    step(k, v, variance_of_mean(c.rows), kl, beta, batch, c.weights, fallback);
  }

  RunResult finish() {
    const std::size_t k_total = result_.records.size();
    if (k_total > 0) {
      Rng rng(stream_seed(cfg_.seed, {key(StreamPurpose::kSelection)}));
      result_.selected_index = 1 + static_cast<std::size_t>(rng.next_u64() % k_total);
    }
    return std::move(result_);
  }

  const AlgoConfig& cfg() const { return cfg_; }

 private:
  AlgoConfig cfg_;
  RunResult result_;
};

}  // namespace

void AlgoConfig::validate() const {
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw ConfigError("step size must be finite and nonnegative");
  if (beta && !(*beta >= 0.0 && *beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (n_pg < 1) throw ConfigError("n_pg must be >= 1");
  if (variant == Variant::kTheoreticalBpo && n_bpo < 1)
    throw ConfigError("the theoretical variant needs n_bpo >= 1");
  if (variant == Variant::kPracticalBpo && !offline_kl && n_bpo < 1)
    throw ConfigError("practical variant without offline KL needs n_bpo >= 1");
  if (!(storm_momentum >= 0.0 && storm_momentum <= 1.0))
    throw ConfigError("STORM momentum must lie in [0, 1]");
  if (initial.state_dim() != env.state_dim || initial.action_dim() != env.action_dim)
    throw ConfigError("initial policy dimensions do not match the environment");
  if (baseline == BaselineKind::kOptimal && n_pg < 2)
    throw ConfigError("optimal baselines need n_pg >= 2");
}

ReturnSummary evaluate_policy(const EnvSpec& env, const PolicyParams& p, std::size_t n,
                              std::uint64_t seed, int threads) {
  const auto batch = simulate(env, p, n, seed, threads);
  double sum = 0.0;
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) sum += r[i] = discounted_return(batch[i], env.discount);
  ReturnSummary s;
  s.mean = sum / static_cast<double>(n);
  if (n >= 2) {
    double ss = 0.0;
    for (double x : r) ss += (x - s.mean) * (x - s.mean);
    s.ci95 = 1.96 * std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return s;
}

RunResult run_bpo_theoretical(const AlgoConfig& cfg) {
  Runner r(cfg);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const auto bpo = simulate(cfg.env, r.theta(), cfg.n_bpo,
                              iteration_seed(cfg, StreamPurpose::kBpo, k), cfg.threads);
    bool degenerate;
    const BpoFit fit = r.fit(bpo, std::nullopt, degenerate);
    const double beta = r.choose_beta(fit.kl_estimate);
    const MixtureSpec mix = defensive_mixture(r.theta(), fit.behav_params, beta, cfg.n_pg);
    const auto batch =
        sample_mixture(cfg.env, mix, iteration_seed(cfg, StreamPurpose::kPg, k), cfg.threads);
    r.charge(cfg.n_bpo + cfg.n_pg);
    r.mixture_step(k, batch, mix, fit.kl_estimate, beta, degenerate);
  }
  return r.finish();
}

RunResult run_bpo_practical(const AlgoConfig& cfg) {
  Runner r(cfg);
  std::vector<Trajectory> prev_batch;
  MixtureSpec prev_mix;
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const std::uint64_t pg_seed = iteration_seed(cfg, StreamPurpose::kPg, k);
    if (cfg.offline_kl && k == 0) {
      // Nothing to reuse yet: plain on-policy batch.
      auto batch = simulate(cfg.env, r.theta(), cfg.n_pg, pg_seed, cfg.threads);
      const MixtureSpec mix = on_policy_mixture(r.theta(), cfg.n_pg);
      r.charge(cfg.n_pg);
      r.mixture_step(k, batch, mix, 0.0, r.choose_beta(0.0), true);
      prev_batch = std::move(batch);
      prev_mix = mix;
      continue;
    }
    std::vector<Trajectory> fit_batch;
    MixtureSpec fit_mix;
    if (cfg.offline_kl) {
      fit_batch = prev_batch;
      fit_mix = prev_mix;
    } else {
      fit_batch = simulate(cfg.env, r.theta(), cfg.n_bpo,
                           iteration_seed(cfg, StreamPurpose::kBpo, k), cfg.threads);
      fit_mix = on_policy_mixture(r.theta(), cfg.n_bpo);
      r.charge(cfg.n_bpo);
    }
    bool degenerate;
    const BpoFit fit = r.fit(fit_batch, fit_mix, degenerate);
    const double beta = r.choose_beta(fit.kl_estimate);
    const MixtureSpec fresh_mix = defensive_mixture(r.theta(), fit.behav_params, beta, cfg.n_pg);
    const auto fresh = sample_mixture(cfg.env, fresh_mix, pg_seed, cfg.threads);
    r.charge(cfg.n_pg);
    std::vector<Trajectory> batch = fresh;
    MixtureSpec mix = fresh_mix;
    if (cfg.biased && !cfg.offline_kl) append(batch, mix, fit_batch, fit_mix);
    r.mixture_step(k, batch, mix, fit.kl_estimate, beta, degenerate);
    prev_batch = fresh;
    prev_mix = fresh_mix;
  }
  return r.finish();
}

RunResult run_on_policy(const AlgoConfig& cfg) {
  Runner r(cfg);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const auto batch = simulate(cfg.env, r.theta(), cfg.n_pg,
                                iteration_seed(cfg, StreamPurpose::kPg, k), cfg.threads);
    r.charge(cfg.n_pg);
    r.mixture_step(k, batch, on_policy_mixture(r.theta(), cfg.n_pg), 0.0, 1.0);
  }
  return r.finish();
}

RunResult run_storm_pg(const AlgoConfig& cfg) {
  Runner r(cfg);
  const double gamma = cfg.env.discount;
  const double a = cfg.storm_momentum;
  const std::size_t n_init = 10 * cfg.n_pg;
  const auto init = simulate(cfg.env, r.theta(), n_init,
                             stream_seed(cfg.seed, {key(StreamPurpose::kInitial)}), cfg.threads);
  r.charge(n_init);
  Eigen::VectorXd d = batch_grad(init, r.theta(), gamma, cfg.estimator, cfg.baseline).vector;
  PolicyParams prev = r.theta();
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const auto batch = simulate(cfg.env, r.theta(), cfg.n_pg,
                                iteration_seed(cfg, StreamPurpose::kPg, k), cfg.threads);
    r.charge(cfg.n_pg);
    const MixtureSpec mix = on_policy_mixture(r.theta(), cfg.n_pg);
    const OffPolicyContributions cur =
        offpolicy_contributions(batch, mix, r.theta(), gamma, cfg.estimator, cfg.baseline);
    Eigen::MatrixXd rows = cur.rows;
    if (a < 1.0) {
      // Previous iterate's gradient on the same batch, importance-corrected
      // by p_prev / p_current.
      const OffPolicyContributions old =
          offpolicy_contributions(batch, mix, prev, gamma, cfg.estimator, cfg.baseline);
      const Eigen::RowVectorXd shift = (1.0 - a) * d.transpose();
      rows = (cur.rows - (1.0 - a) * old.rows).rowwise() + shift;
    }
    d = rows.colwise().mean().transpose();
    prev = r.theta();
    r.step(k, d, variance_of_mean(rows), 0.0, 1.0, batch, cur.weights);
  }
  return r.finish();
}

RunResult run(const AlgoConfig& cfg) {
  switch (cfg.variant) {
    case Variant::kTheoreticalBpo: return run_bpo_theoretical(cfg);
    case Variant::kPracticalBpo: return run_bpo_practical(cfg);
    case Variant::kOnPolicy: return run_on_policy(cfg);
    case Variant::kStormPg: return run_storm_pg(cfg);
  }
  throw ConfigError("unknown variant");
}

std::string swept_param_name(SweptParam p) {
  switch (p) {
    case SweptParam::kTheta: return "theta";
    case SweptParam::kLogStd: return "log_std";
    case SweptParam::kHorizon: return "horizon";
    case SweptParam::kStateDim: return "state_dim";
  }
  return "param";
}

void apply_swept_value(SweptParam param, double value, EnvSpec& env, PolicyParams& target) {
  switch (param) {
    case SweptParam::kTheta: {
      Eigen::MatrixXd th = Eigen::MatrixXd::Zero(target.state_dim(), target.action_dim());
      th.diagonal().setConstant(value);
      target = target.with_theta(th);
      break;
    }
    case SweptParam::kLogStd:
      target = PolicyParams(target.theta(),
                            Eigen::VectorXd::Constant(target.action_dim(), value));
      break;
    case SweptParam::kHorizon:
      if (value < 1.0 || value != std::floor(value))
        throw ConfigError("swept horizon must be a positive integer");
      env.horizon = static_cast<int>(value);
      break;
    case SweptParam::kStateDim: {
      if (env.kind != EnvKind::kLq) throw ConfigError("state_dim sweeps need the LQ environment");
      if (value < 1.0 || value != std::floor(value))
        throw ConfigError("swept state_dim must be a positive integer");
      const int dim = static_cast<int>(value);
      EnvSpec next = make_lq(dim, env.horizon, env.discount);
      next.lq.a *= env.lq.a(0, 0);
      next.lq.b *= env.lq.b(0, 0);
      next.lq.q_diag *= env.lq.q_diag(0);
      next.lq.r_diag *= env.lq.r_diag(0);
      next.lq.noise_std = env.lq.noise_std;
      next.lq.init_range = env.lq.init_range;
      next.lq.state_box = env.lq.state_box;
      next.lq.action_box = env.lq.action_box;
      next.r_max = lq_reward_bound(next.lq);
      Eigen::MatrixXd th = Eigen::MatrixXd::Zero(dim, dim);
      th.diagonal().setConstant(target.theta()(0, 0));
      target = PolicyParams(th, Eigen::VectorXd::Constant(dim, target.log_std()(0)));
      env = std::move(next);
      break;
    }
  }
}

double variance_gap_rep(const EnvSpec& env, const PolicyParams& target, bool biased,
                        double beta, std::size_t n_bpo, std::size_t n_pg,
                        std::uint64_t rep_seed, const VarianceGapOptions& opts) {
  const double gamma = env.discount;
  auto seed_for = [&](StreamPurpose p) { return stream_seed(rep_seed, {key(p)}); };
  auto variance = [&](const std::vector<Trajectory>& batch, const MixtureSpec& mix) {
    return variance_of_mean(
        offpolicy_contributions(batch, mix, target, gamma, opts.estimator, opts.baseline).rows);
  };
  const std::size_t n_on = n_bpo + n_pg;
  const std::uint64_t pg_seed = seed_for(StreamPurpose::kPg);
  const auto bpo = simulate(env, target, n_bpo, seed_for(StreamPurpose::kBpo));

  // On-policy arm: the fitting batch plus n_pg fresh target trajectories on
  // the streams of the off-policy batch, so both arms share initial states and
  // noise draws trajectory by trajectory.
  std::vector<Trajectory> on = bpo;
  const auto fresh = simulate(env, target, n_pg, pg_seed);
  on.insert(on.end(), fresh.begin(), fresh.end());
  const double v_on = variance(on, on_policy_mixture(target, n_on));

  double v_off = 0.0;
  if (opts.on_policy_control) {
    const auto ctrl = simulate(env, target, n_on, seed_for(StreamPurpose::kOnPolicy));
    v_off = variance(ctrl, on_policy_mixture(target, n_on));
  } else {
    PolicyParams behav = target;
    if (!opts.force_target_behavioral)
      behav = fit_behavioral(bpo, std::nullopt, target, gamma,
                             {opts.estimator, opts.baseline, opts.ridge})
                  .behav_params;
    MixtureSpec mix = defensive_mixture(target, behav, beta, n_pg);
    auto batch = sample_mixture(env, mix, pg_seed, 1);
    if (biased) append(batch, mix, bpo, on_policy_mixture(target, n_bpo));
    v_off = variance(batch, mix);
  }
  return v_on - v_off;
}

std::vector<VarianceGapRow> variance_gap_experiment(const EnvSpec& env,
                                                    const PolicyParams& target,
                                                    const SweepSpec& grid,
                                                    const VarianceGapOptions& opts) {
  if (opts.reps < 2) throw ConfigError("variance-gap experiment needs reps >= 2");
  struct Point {
    VarianceGapRow row;
    EnvSpec env;
    PolicyParams target;
  };
  std::vector<Point> points;
  for (bool biased : grid.biased)
    for (double beta : grid.betas)
      for (const auto& [n_bpo, n_pg] : grid.sizes)
        for (double value : grid.values) {
          if (n_bpo < 1 || n_pg < 2) throw ConfigError("sweep sizes need n_bpo >= 1, n_pg >= 2");
          if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("sweep beta must lie in [0, 1]");
          Point p{{}, env, target};
          apply_swept_value(grid.param, value, p.env, p.target);
          p.env.validate();
          p.row.biased = biased;
          p.row.beta = beta;
          p.row.n_bpo = n_bpo;
          p.row.n_pg = n_pg;
          p.row.param = value;
          points.push_back(std::move(p));
        }

  const std::size_t reps = opts.reps;
  std::vector<double> gaps(points.size() * reps, std::numeric_limits<double>::quiet_NaN());
  parallel_for(gaps.size(), opts.threads, [&](std::size_t task) {
    const std::size_t g = task / reps, rep = task % reps;
    const Point& p = points[g];
    try {
      gaps[task] = variance_gap_rep(p.env, p.target, p.row.biased, p.row.beta, p.row.n_bpo,
                                    p.row.n_pg, stream_seed(opts.seed, {g, rep}), opts);
    } catch (const SimulationError&) {
    } catch (const WeightOverflowError&) {
    } catch (const SolverError&) {
    } catch (const DegenerateObjectiveError&) {
    }
  });

  std::vector<VarianceGapRow> rows;
  for (std::size_t g = 0; g < points.size(); ++g) {
    VarianceGapRow row = points[g].row;
    std::vector<double> ok;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const double x = gaps[g * reps + rep];
      if (std::isfinite(x)) ok.push_back(x);
    }
    row.failed_reps = reps - ok.size();
    if (ok.size() < 2) {
      row.dvar = row.dvar_minus = row.dvar_plus = std::numeric_limits<double>::quiet_NaN();
    } else {
      double mean = 0.0;
      for (double x : ok) mean += x;
      mean /= static_cast<double>(ok.size());
      double ss = 0.0;
      for (double x : ok) ss += (x - mean) * (x - mean);
      const double half =
          1.96 * std::sqrt(ss / static_cast<double>(ok.size() - 1) / static_cast<double>(ok.size()));
      row.dvar = mean;
      row.dvar_minus = mean - half;
      row.dvar_plus = mean + half;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bpo
