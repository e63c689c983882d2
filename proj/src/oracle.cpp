#include "bpo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bpo/behavioral.hpp"
#include "bpo/errors.hpp"
#include "bpo/is_core.hpp"
#include "bpo/parallel.hpp"

namespace bpo::oracle {
namespace {

using Real = long double;

struct Table {
  Eigen::VectorXd p;
  Eigen::MatrixXd g;
  std::vector<Real> norm;  // ||g(tau)||
};

Table table(const DiscreteInstance& inst, double theta) {
  EnumeratedInstance e = enumerate_instance(inst, theta);
  Table t{std::move(e.probs), std::move(e.grads), {}};
  t.norm.resize(static_cast<std::size_t>(t.p.size()));
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    Accumulator acc;
    for (Eigen::Index k = 0; k < t.g.cols(); ++k)
      acc.add(static_cast<Real>(t.g(i, k)) * t.g(i, k));
    t.norm[static_cast<std::size_t>(i)] = std::sqrt(acc.value());
  }
  return t;
}

std::vector<Real> gradient(const Table& t) {
  std::vector<Real> out(static_cast<std::size_t>(t.g.cols()));
  for (Eigen::Index k = 0; k < t.g.cols(); ++k) {
    Accumulator acc;
    for (Eigen::Index i = 0; i < t.p.size(); ++i)
      acc.add(static_cast<Real>(t.p(i)) * t.g(i, k));
    out[static_cast<std::size_t>(k)] = acc.value();
  }
  return out;
}

Real squared_norm(const std::vector<Real>& v) {
  Accumulator acc;
  for (Real x : v) acc.add(x * x);
  return acc.value();
}

Real second_moment(const Table& t, const Eigen::VectorXd& q) {
  if (q.size() != t.p.size()) throw UsageError("behavioral distribution has the wrong length");
  Accumulator acc;
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    const Real a = static_cast<Real>(t.p(i)) * t.norm[static_cast<std::size_t>(i)];
    if (a == 0.0L) continue;
    if (!(q(i) > 0.0))
      throw AbsoluteContinuityError("behavioral distribution has no mass on a trajectory "
                                    "carrying gradient");
    acc.add(a * a / q(i));
  }
  return acc.value();
}

Real z_of(const Table& t) {
  Accumulator acc;
  for (Eigen::Index i = 0; i < t.p.size(); ++i)
    acc.add(static_cast<Real>(t.p(i)) * t.norm[static_cast<std::size_t>(i)]);
  return acc.value();
}

Eigen::VectorXd to_vector(const std::vector<Real>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = static_cast<double>(v[i]);
  return out;
}

void check_mixture(const DiscreteMixture& mix, Eigen::Index size) {
  if (mix.components.empty() || mix.components.size() != mix.counts.size())
    throw UsageError("mixture components and counts differ");
  for (std::size_t j = 0; j < mix.components.size(); ++j) {
    if (mix.components[j].size() != size) throw UsageError("mixture component has wrong length");
    if (mix.counts[j] == 0) throw UsageError("mixture component with zero count");
  }
}

double log_or_ninf(double x) {
  return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

}  // namespace

void Accumulator::add(long double x) {
  const long double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x))
    comp_ += (sum_ - t) + x;
  else
    comp_ += (x - t) + sum_;
  sum_ = t;
}

Eigen::VectorXd exact_gradient(const DiscreteInstance& inst, double theta) {
  return to_vector(gradient(table(inst, theta)));
}

double exact_estimator_variance(const DiscreteInstance& inst, double theta,
                                const Eigen::VectorXd& q) {
  const Table t = table(inst, theta);
  return static_cast<double>(second_moment(t, q) - squared_norm(gradient(t)));
}

double on_policy_variance(const DiscreteInstance& inst, double theta) {
  const Table t = table(inst, theta);
  Accumulator acc;
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    const Real n = t.norm[static_cast<std::size_t>(i)];
    acc.add(static_cast<Real>(t.p(i)) * n * n);
  }
  return static_cast<double>(acc.value() - squared_norm(gradient(t)));
}

double optimal_variance(const DiscreteInstance& inst, double theta) {
  const Table t = table(inst, theta);
  const Real z = z_of(t);
  return static_cast<double>(z * z - squared_norm(gradient(t)));
}

double normalizer(const DiscreteInstance& inst, double theta) {
  return static_cast<double>(z_of(table(inst, theta)));
}

double grad_norm_variance(const DiscreteInstance& inst, double theta) {
  const Table t = table(inst, theta);
  const Real z = z_of(t);
  Accumulator acc;
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    const Real d = t.norm[static_cast<std::size_t>(i)] - z;
    acc.add(static_cast<Real>(t.p(i)) * d * d);
  }
  return static_cast<double>(acc.value());
}

double max_grad_norm(const DiscreteInstance& inst, double theta) {
  const Table t = table(inst, theta);
  Real g = 0.0L;
  for (Eigen::Index i = 0; i < t.p.size(); ++i)
    if (t.p(i) > 0.0) g = std::max(g, t.norm[static_cast<std::size_t>(i)]);
  return static_cast<double>(g);
}

Divergences exact_divergences(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw UsageError("distributions differ in length");
  Accumulator chi2, kl;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0 && !(q(i) > 0.0))
      throw AbsoluteContinuityError("q vanishes where p has mass");
    if (q(i) > 0.0) {
      const Real d = static_cast<Real>(p(i)) - q(i);
      chi2.add(d * d / q(i));
    }
    if (p(i) > 0.0) kl.add(static_cast<Real>(p(i)) * std::log(static_cast<Real>(p(i)) / q(i)));
  }
  return {static_cast<double>(chi2.value()), static_cast<double>(kl.value())};
}

double exact_loss(const DiscreteInstance& inst, double theta, const Eigen::VectorXd& q) {
  const Table t = table(inst, theta);
  if (q.size() != t.p.size()) throw UsageError("distribution has the wrong length");
  Accumulator acc;
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    const Real a = static_cast<Real>(t.p(i)) * t.norm[static_cast<std::size_t>(i)];
    if (a == 0.0L) continue;
    if (!(q(i) > 0.0)) throw AbsoluteContinuityError("loss is infinite: q vanishes on p*");
    acc.add(-a * std::log(static_cast<Real>(q(i))));
  }
  return static_cast<double>(acc.value());
}

std::uint64_t simplex_grid_size(std::size_t atoms, double grid_step) {
  if (atoms < 1) throw UsageError("simplex needs at least one atom");
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw UsageError("grid step must lie in (0, 1]");
  const double k_real = 1.0 / grid_step;
  const auto k = static_cast<std::uint64_t>(std::llround(k_real));
  if (std::abs(k_real - static_cast<double>(k)) > 1e-9 * k_real)
    throw UsageError("grid step must divide 1");
  // C(k + atoms - 1, atoms - 1), saturating.
  long double c = 1.0L;
  for (std::size_t j = 1; j < atoms; ++j) {
    c = c * static_cast<long double>(k + j) / static_cast<long double>(j);
    if (c > 1e19L) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(std::llround(c));
}

SimplexResult simplex_min_variance(const DiscreteInstance& inst, double theta,
                                   double grid_step, int threads) {
  const Table t = table(inst, theta);
  const std::size_t m = static_cast<std::size_t>(t.p.size());
  const std::uint64_t points = simplex_grid_size(m, grid_step);
  if (static_cast<double>(points) > kMaxSimplexPoints)
    throw RefusalError("simplex grid has " + std::to_string(points) +
                       " points, above the limit");
  const int k_total = static_cast<int>(std::llround(1.0 / grid_step));
  // recip[i][k] = p_i^2 ||g_i||^2 / (k / K); infinite when k = 0 and the
  // atom carries gradient (support violation).
  std::vector<std::vector<double>> recip(m, std::vector<double>(k_total + 1));
  for (std::size_t i = 0; i < m; ++i) {
    const double a = static_cast<double>(static_cast<Real>(t.p(static_cast<Eigen::Index>(i))) *
                                         t.norm[i]);
    const double a2 = a * a;
    recip[i][0] = a2 > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    for (int k = 1; k <= k_total; ++k) recip[i][k] = a2 * k_total / k;
  }

  struct Best {
    double value = std::numeric_limits<double>::infinity();
    std::vector<int> idx;
  };
  std::vector<Best> per_first(static_cast<std::size_t>(k_total) + 1);
  auto search = [&](std::size_t first) {
    Best& best = per_first[first];
    std::vector<int> idx(m, 0);
    idx[0] = static_cast<int>(first);
    if (m == 1) {
      if (first == static_cast<std::size_t>(k_total)) best = {recip[0][k_total], idx};
      return;
    }
    // Depth-first over coordinates 1..m-2, last coordinate implied.
    auto rec = [&](auto&& self, std::size_t depth, int left, double partial) -> void {
      if (depth == m - 1) {
        idx[depth] = left;
        const double v = partial + recip[depth][left];
        if (v < best.value) best = {v, idx};
        return;
      }
      if (depth == m - 2) {
        // Innermost pair of coordinates, unrolled.
        const double* lo = recip[depth].data();
        const double* hi = recip[depth + 1].data();
        double v_best = best.value;
        int k_best = -1;
        for (int k = 0; k <= left; ++k) {
          const double v = partial + lo[k] + hi[left - k];
          if (v < v_best) v_best = v, k_best = k;
        }
        if (k_best >= 0) {
          idx[depth] = k_best;
          idx[depth + 1] = left - k_best;
          best = {v_best, idx};
        }
        return;
      }
      for (int k = 0; k <= left; ++k) {
        idx[depth] = k;
        self(self, depth + 1, left - k, partial + recip[depth][k]);
      }
    };
    rec(rec, 1, k_total - static_cast<int>(first), recip[0][first]);
  };
  parallel_for(per_first.size(), threads, search);

  const Best* winner = nullptr;
  for (const Best& b : per_first)
    if (!b.idx.empty() && (!winner || b.value < winner->value)) winner = &b;
  if (!winner || !std::isfinite(winner->value))
    throw AbsoluteContinuityError("no grid distribution covers the gradient support");
  SimplexResult out;
  out.points = points;
  out.q_best.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i)
    out.q_best(static_cast<Eigen::Index>(i)) = static_cast<double>(winner->idx[i]) / k_total;
  out.var_best = static_cast<double>(second_moment(t, out.q_best) - squared_norm(gradient(t)));
  return out;
}

Eigen::VectorXd mixture_density(const DiscreteMixture& mix) {
  check_mixture(mix, mix.components.empty() ? 0 : mix.components.front().size());
  std::size_t n = 0;
  for (std::size_t c : mix.counts) n += c;
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(mix.components.front().size());
  for (std::size_t j = 0; j < mix.components.size(); ++j)
    phi += (static_cast<double>(mix.counts[j]) / static_cast<double>(n)) * mix.components[j];
  return phi;
}

Eigen::VectorXd mis_expectation(const DiscreteInstance& inst, double theta,
                                const DiscreteMixture& mix) {
  const Table t = table(inst, theta);
  check_mixture(mix, t.p.size());
  std::size_t n = 0;
  for (std::size_t c : mix.counts) n += c;
  std::vector<double> fractions;
  for (std::size_t c : mix.counts) fractions.push_back(static_cast<double>(c) / n);
  const Eigen::VectorXd phi = mixture_density(mix);
  std::vector<Accumulator> acc(static_cast<std::size_t>(t.g.cols()));
  std::vector<double> logs(mix.components.size());
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    if (!(phi(i) > 0.0)) continue;  // never sampled
    for (std::size_t j = 0; j < logs.size(); ++j) logs[j] = log_or_ninf(mix.components[j](i));
    const Real w = std::exp(static_cast<Real>(balance_log_weight(log_or_ninf(t.p(i)), logs, fractions)));
    for (Eigen::Index k = 0; k < t.g.cols(); ++k)
      acc[static_cast<std::size_t>(k)].add(static_cast<Real>(phi(i)) * w * t.g(i, k));
  }
  std::vector<Real> out;
  for (const auto& a : acc) out.push_back(a.value());
  return to_vector(out);
}

Eigen::VectorXd mis_expectation_partition(const DiscreteInstance& inst, double theta,
                                          const DiscreteMixture& mix) {
  const Table t = table(inst, theta);
  check_mixture(mix, t.p.size());
  std::vector<Accumulator> acc(static_cast<std::size_t>(t.g.cols()));
  for (Eigen::Index i = 0; i < t.p.size(); ++i) {
    Accumulator denom;
    for (std::size_t j = 0; j < mix.components.size(); ++j)
      denom.add(static_cast<Real>(mix.counts[j]) * mix.components[j](i));
    if (!(denom.value() > 0.0L)) continue;
    for (std::size_t j = 0; j < mix.components.size(); ++j) {
      const Real qj = mix.components[j](i);
      if (!(qj > 0.0L)) continue;
      const Real beta = static_cast<Real>(mix.counts[j]) * qj / denom.value();
      // (1/n_j) * n_j draws * E_{q_j}[beta_j p / q_j g]
      for (Eigen::Index k = 0; k < t.g.cols(); ++k)
        acc[static_cast<std::size_t>(k)].add(qj * beta * static_cast<Real>(t.p(i)) / qj * t.g(i, k));
    }
  }
  std::vector<Real> out;
  for (const auto& a : acc) out.push_back(a.value());
  return to_vector(out);
}

double partition_of_unity_error(const DiscreteMixture& mix) {
  check_mixture(mix, mix.components.empty() ? 0 : mix.components.front().size());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < mix.components.front().size(); ++i) {
    Accumulator denom;
    for (std::size_t j = 0; j < mix.components.size(); ++j)
      denom.add(static_cast<Real>(mix.counts[j]) * mix.components[j](i));
    if (!(denom.value() > 0.0L)) continue;
    double sum = 0.0;
    for (std::size_t j = 0; j < mix.components.size(); ++j)
      sum += static_cast<double>(static_cast<Real>(mix.counts[j]) * mix.components[j](i) /
                                 denom.value());
    worst = std::max(worst, std::abs(1.0 - sum));
  }
  return worst;
}

Eigen::VectorXd random_distribution(std::size_t size, Rng& rng) {
  Eigen::VectorXd q(static_cast<Eigen::Index>(size));
  for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = rng.exponential();
  return q / q.sum();
}

DiscreteInstance random_instance(Rng& rng) {
  const std::size_t m = 2 + static_cast<std::size_t>(rng.next_u64() % 5);
  const int d = 1 + static_cast<int>(rng.next_u64() % 4);
  DiscreteInstance inst;
  for (std::size_t i = 0; i < m; ++i) inst.ids.push_back("tau_" + std::to_string(i + 1));
  inst.prob_intercept = random_distribution(m, rng);
  inst.grads.resize(static_cast<Eigen::Index>(m), d);
  for (Eigen::Index i = 0; i < inst.grads.rows(); ++i)
    for (int k = 0; k < d; ++k) inst.grads(i, k) = rng.uniform(-1.0, 1.0);
  return inst;
}

namespace {

struct Tracker {
  CheckResult r;
  double tol;
  bool track_max = true;  // worst = max error; otherwise min slack
  Tracker(std::string name, double tolerance, bool max_error = true)
      : r{std::move(name), true, max_error ? 0.0 : std::numeric_limits<double>::infinity(), {}},
        tol(tolerance),
        track_max(max_error) {}
  void error(double e, std::size_t at) {
    if (e > r.worst) r.worst = e;
    if (!(e <= tol) && r.passed) {
      r.passed = false;
      r.detail = "instance " + std::to_string(at);
    }
  }
  void slack(double s, std::size_t at) {
    r.worst = std::min(r.worst, s);
    if (!(s >= -tol) && r.passed) {
      r.passed = false;
      r.detail = "instance " + std::to_string(at);
    }
  }
};

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

DiscreteMixture random_mixture(std::size_t size, Rng& rng) {
  DiscreteMixture mix;
  const std::size_t m = 1 + rng.next_u64() % 3;
  for (std::size_t j = 0; j < m; ++j) {
    mix.components.push_back(random_distribution(size, rng));
    mix.counts.push_back(1 + rng.next_u64() % 20);
  }
  return mix;
}

}  // namespace

std::vector<CheckResult> run_identity_suite(std::uint64_t seed, std::size_t instances,
                                            bool include_simplex, int threads) {
  Tracker closed_form("optimal density attains Z^2 - |grad J|^2", 1e-12);
  Tracker beats_random("optimal density beats random behavioral distributions", 0.0, false);
  Tracker simplex("simplex grid search finds nothing better than p* (step 1e-3)", 1e-3, false);
  Tracker jensen("optimal variance <= on-policy variance", 0.0, false);
  Tracker jensen_strict("strict gap (> 1e-9) when ||g|| varies on the support", 0.0, false);
  Tracker chi2("Var_on - Var_q = Var||g|| - Z^2 chi2(p*||q)", 1e-10);
  Tracker unbiased_simple("single IS is unbiased", 1e-12);
  Tracker unbiased_mis("multiple IS is unbiased", 1e-12);
  Tracker unbiased_def("defensive IS is unbiased", 1e-12);
  Tracker partition("balance coefficients sum to one", 1e-12);
  Tracker loss_gap("loss gap / Z equals KL(p*||q)", 1e-10);
  Tracker var_kl("variance reduction bound with beta = sqrt(eps/(2-eps))", 0.0, false);
  Tracker two_traj("two-trajectory example: Var_on = 0.16, Var_opt = 0", 1e-12);
  std::size_t simplex_count = 0, var_kl_count = 0;

  for (std::size_t at = 0; at < instances; ++at) {
    Rng rng(stream_seed(seed, {at}));
    const DiscreteInstance inst = random_instance(rng);
    const double theta = 0.0;
    const std::size_t m = inst.size();
    const Eigen::VectorXd p = inst.probs(theta);
    const Eigen::VectorXd grad = exact_gradient(inst, theta);
    const Eigen::VectorXd p_star = optimal_density(inst, theta);
    const double var_opt = optimal_variance(inst, theta);
    const double var_on = on_policy_variance(inst, theta);
    const double var_star = exact_estimator_variance(inst, theta, p_star);
    const double z = normalizer(inst, theta);
    closed_form.error(std::abs(var_star - var_opt), at);

    Rng qrng(stream_seed(seed, {at, 1}));
    for (int r = 0; r < 1000; ++r) {
      const Eigen::VectorXd q = random_distribution(m, qrng);
      beats_random.slack(exact_estimator_variance(inst, theta, q) - var_star, at);
    }

    if (include_simplex && m <= 4) {
      const SimplexResult s = simplex_min_variance(inst, theta, 1e-3, threads);
      simplex.slack(s.var_best - var_opt, at);
      ++simplex_count;
    }

    jensen.slack(var_on - var_opt, at);
    const Eigen::VectorXd norms = enumerate_instance(inst, theta).grads.rowwise().norm();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < norms.size(); ++i)
      if (p(i) > 0.0) lo = std::min(lo, norms(i)), hi = std::max(hi, norms(i));
    if (hi - lo > 1e-12) jensen_strict.slack(var_on - var_opt - 1e-9, at);

    const Eigen::VectorXd q = random_distribution(m, qrng);
    const double lhs = var_on - exact_estimator_variance(inst, theta, q);
    const double rhs = grad_norm_variance(inst, theta) - z * z * exact_divergences(p_star, q).chi2;
    chi2.error(std::abs(lhs - rhs), at);

    DiscreteMixture single{{q}, {1}};
    unbiased_simple.error(max_abs_diff(mis_expectation(inst, theta, single), grad), at);
    const DiscreteMixture mix = random_mixture(m, qrng);
    unbiased_mis.error(max_abs_diff(mis_expectation(inst, theta, mix), grad), at);
    unbiased_mis.error(max_abs_diff(mis_expectation_partition(inst, theta, mix), grad), at);
    partition.error(partition_of_unity_error(mix), at);
    const double beta = qrng.uniform();
    const std::size_t n = 2 + qrng.next_u64() % 99;
    const std::size_t k = defensive_target_count(beta, n);
    DiscreteMixture def;
    if (k > 0) def.components.push_back(p), def.counts.push_back(k);
    if (k < n) def.components.push_back(q), def.counts.push_back(n - k);
    unbiased_def.error(max_abs_diff(mis_expectation(inst, theta, def), grad), at);
    unbiased_def.error(max_abs_diff(mis_expectation_partition(inst, theta, def), grad), at);

    const double gap = (exact_loss(inst, theta, q) - exact_loss(inst, theta, p_star)) / z;
    loss_gap.error(std::abs(gap - exact_divergences(p_star, q).kl), at);

    // Candidate: p* perturbed multiplicatively and mixed with uniform, kept
    // only when its divergence from p* is at most 1.
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double scale = 2.0 * qrng.uniform();
      const double mix_uniform = 0.01 + 0.49 * qrng.uniform();
      Eigen::VectorXd cand(static_cast<Eigen::Index>(m));
      for (Eigen::Index i = 0; i < cand.size(); ++i)
        cand(i) = p_star(i) * std::exp(scale * qrng.normal());
      cand = (1.0 - mix_uniform) * cand / cand.sum() +
             Eigen::VectorXd::Constant(cand.size(), mix_uniform / static_cast<double>(m));
      const double eps = exact_divergences(p_star, cand).kl;
      if (eps > 1.0) continue;
      const double b = defensive_beta(eps);
      const Eigen::VectorXd phi = b * p + (1.0 - b) * cand;
      const double reduction = var_on - exact_estimator_variance(inst, theta, phi);
      const double g_max = max_grad_norm(inst, theta);
      const double bound = grad_norm_variance(inst, theta) - 8.0 * z * z -
                           4.0 * z * (z + 2.0 * g_max) * std::sqrt(eps);
      var_kl.slack(reduction - bound, at);
      ++var_kl_count;
      break;
    }
  }

  const DiscreteInstance r1 = two_trajectory_instance();
  two_traj.error(std::abs(on_policy_variance(r1, 0.2) - 0.16), 0);
  two_traj.error(std::abs(exact_estimator_variance(r1, 0.2, optimal_density(r1, 0.2))), 0);
  two_traj.error(std::abs(optimal_variance(r1, 0.2)), 0);

  simplex.r.detail += (simplex.r.detail.empty() ? "" : "; ") + std::to_string(simplex_count) +
                      " instances searched";
  var_kl.r.detail += (var_kl.r.detail.empty() ? "" : "; ") + std::to_string(var_kl_count) +
                     " candidates";
  if (var_kl_count < instances) var_kl.r.passed = false;

  std::vector<CheckResult> out{closed_form.r, beats_random.r,    jensen.r,
                               jensen_strict.r, chi2.r,          unbiased_simple.r,
                               unbiased_mis.r, unbiased_def.r,   partition.r,
                               loss_gap.r,    var_kl.r,          two_traj.r};
  if (include_simplex) out.insert(out.begin() + 2, simplex.r);
  return out;
}

}  // namespace bpo::oracle
