#include <cmath>

#include "doctest.h"

#include "bpo/errors.hpp"
#include "bpo/grad_est.hpp"
#include "bpo/is_core.hpp"
#include "bpo/oracle.hpp"
#include "helpers.hpp"

using namespace bpo;
using testutil::make_traj;
using testutil::scalar_policy;

namespace {

// Score of the scalar Gaussian policy written out by hand.
double sc(double theta, double sigma, double s, double a) {
  return s * (a - theta * s) / (sigma * sigma);
}

}  // namespace

TEST_CASE("two-step trajectory: hand expansion of both estimators") {
  const double th = 0.4, sigma = std::exp(-0.3), g = 0.7;
  const PolicyParams p = scalar_policy(th, -0.3);
  const Trajectory tau = make_traj({0.8, -0.5}, {0.1, 0.9}, {-1.3, -0.6});
  const double c0 = sc(th, sigma, 0.8, 0.1), c1 = sc(th, sigma, -0.5, 0.9);
  const double r0 = -1.3, r1 = -0.6;

  // REINFORCE: (c0 + c1)(r0 + g r1) = c0 r0 + c0 g r1 + c1 r0 + c1 g r1
  const double reinforce = c0 * r0 + c0 * g * r1 + c1 * r0 + c1 * g * r1;
  CHECK(reinforce_grad(tau, p, g, BaselineSpec::none())(0) ==
        doctest::Approx(reinforce).epsilon(1e-14));
  // G(PO)MDP: c0 r0 + (c0 + c1) g r1
  const double gpomdp = c0 * r0 + c0 * g * r1 + c1 * g * r1;
  CHECK(gpomdp_grad(tau, p, g, BaselineSpec::none())(0) ==
        doctest::Approx(gpomdp).epsilon(1e-14));

  BaselineSpec b;
  b.kind = BaselineKind::kOptimal;
  b.values = Eigen::MatrixXd(2, 1);
  b.values << 0.25, -0.5;
  CHECK(gpomdp_grad(tau, p, g, b)(0) ==
        doctest::Approx(c0 * (r0 - 0.25) + (c0 + c1) * (g * r1 + 0.5)).epsilon(1e-14));
  CHECK(reinforce_grad(tau, p, g, b)(0) ==
        doctest::Approx((c0 + c1) * (r0 + g * r1 - 0.25)).epsilon(1e-14));
}

TEST_CASE("multi-dimensional gradients use the row-major layout") {
  Eigen::MatrixXd th(2, 3);
  th << 0.1, -0.2, 0.3, 0.4, 0.0, -0.6;
  Eigen::VectorXd ls(3);
  ls << 0.0, -0.5, 0.2;
  const PolicyParams p(th, ls);
  const EnvSpec env = [] {
    EnvSpec e = make_lq(2, 3, 0.9);
    e.action_dim = 3;
    e.lq.b = Eigen::MatrixXd::Ones(2, 3) * 0.3;
    e.lq.r_diag = Eigen::VectorXd::Ones(3);
    return e;
  }();
  const Trajectory tau = simulate(env, p, 1, 5)[0];
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(6);
  const double ret = discounted_return(tau, 0.9);
  for (int t = 0; t < 3; ++t) {
    const Eigen::VectorXd s = tau.state(t), a = tau.action(t);
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 3; ++k) {
        const double sig = std::exp(ls(k));
        expect(i * 3 + k) += s(i) * (a(k) - th.col(k).dot(s)) / (sig * sig) * ret;
      }
  }
  CHECK((reinforce_grad(tau, p, 0.9, BaselineSpec::none()) - expect).norm() < 1e-12);
}

TEST_CASE("degenerate inputs") {
  const PolicyParams p = scalar_policy(0.3);
  const Trajectory zero = make_traj({1.0, 2.0, -1.0}, {0.5, 0.1, 2.0}, {0.0, 0.0, 0.0});
  CHECK(reinforce_grad(zero, p, 0.9, BaselineSpec::none()).norm() == 0.0);
  CHECK(gpomdp_grad(zero, p, 0.9, BaselineSpec::none()).norm() == 0.0);

  // One step: both estimators coincide.
  const Trajectory one = make_traj({1.3}, {-0.4}, {-2.0});
  CHECK(reinforce_grad(one, p, 0.9, BaselineSpec::none())(0) ==
        gpomdp_grad(one, p, 0.9, BaselineSpec::none())(0));
  const auto batch = simulate(make_lq(1, 1, 0.0), p, 40, 3);
  const auto r = batch_grad(batch, p, 0.0, Estimator::kReinforce, BaselineKind::kOptimal);
  const auto g = batch_grad(batch, p, 0.0, Estimator::kGpomdp, BaselineKind::kOptimal);
  CHECK(std::abs(r.vector(0) - g.vector(0)) < 1e-12);

  CHECK_THROWS_AS(batch_grad(std::vector<Trajectory>{}, p, 0.9, Estimator::kGpomdp,
                             BaselineKind::kNone),
                  UsageError);
  CHECK_THROWS_AS(batch_grad(std::vector<Trajectory>{one}, p, 0.9, Estimator::kGpomdp,
                             BaselineKind::kOptimal),
                  UsageError);
}

TEST_CASE("batch of identical trajectories returns the single estimate") {
  const PolicyParams p = scalar_policy(-0.2);
  const Trajectory tau = make_traj({0.5, 1.5}, {0.2, -0.3}, {-1.0, -2.5});
  const std::vector<Trajectory> batch(7, tau);
  for (Estimator e : {Estimator::kReinforce, Estimator::kGpomdp}) {
    const GradientEstimate est = batch_grad(batch, p, 0.8, e, BaselineKind::kNone);
    CHECK(est.vector(0) == doctest::Approx(single_grad(e, tau, p, 0.8, BaselineSpec::none())(0)));
    CHECK(est.diagnostics.n_used == 7);
    CHECK(est.diagnostics.ess == doctest::Approx(7.0));
  }
}

TEST_CASE("optimal baseline matches the hand-evaluated ratio") {
  const PolicyParams p = scalar_policy(0.0);
  const std::vector<Trajectory> batch = {make_traj({1.0}, {0.5}, {2.0}),
                                         make_traj({2.0}, {-1.0}, {-1.0}),
                                         make_traj({-1.0}, {1.0}, {4.0})};
  // scores: 0.5, -2, -1; returns 2, -1, 4
  const double expect = (0.25 * 2.0 + 4.0 * -1.0 + 1.0 * 4.0) / (0.25 + 4.0 + 1.0);
  const BaselineSpec b = fit_optimal_baseline(batch, p, 1.0, Estimator::kReinforce);
  CHECK(b.values(0, 0) == doctest::Approx(expect).epsilon(1e-14));
  const BaselineSpec bg = fit_optimal_baseline(batch, p, 1.0, Estimator::kGpomdp);
  CHECK(bg.values(0, 0) == doctest::Approx(expect).epsilon(1e-14));

  // Moment weights enter both sums.
  const std::vector<double> v = {2.0, 1.0, 0.5};
  const double wexpect =
      (2 * 0.25 * 2.0 + 1 * 4.0 * -1.0 + 0.5 * 1.0 * 4.0) / (2 * 0.25 + 1 * 4.0 + 0.5 * 1.0);
  CHECK(fit_optimal_baseline(batch, p, 1.0, Estimator::kReinforce, v).values(0, 0) ==
        doctest::Approx(wexpect).epsilon(1e-14));

  // Zero scores: 0/0 gives 0.
  const std::vector<Trajectory> flat = {make_traj({1.0}, {0.0}, {3.0}),
                                        make_traj({2.0}, {0.0}, {5.0})};
  CHECK(fit_optimal_baseline(flat, p, 1.0, Estimator::kGpomdp).values(0, 0) == 0.0);
}

TEST_CASE("baselines leave the exact expectation unchanged") {
  // Score-function instances: g = (dp/dtheta / p) * (R - b); sum of slopes is 0.
  Rng rng(404);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = 2 + rng.next_u64() % 5;
    DiscreteInstance inst;
    const Eigen::VectorXd p = oracle::random_distribution(m, rng);
    Eigen::VectorXd slope(m);
    for (std::size_t i = 0; i < m; ++i) slope(i) = rng.uniform(-1, 1);
    slope.array() -= slope.mean();
    inst.prob_intercept = p;
    inst.prob_slope = slope;
    for (std::size_t i = 0; i < m; ++i) inst.ids.push_back("t" + std::to_string(i));
    inst.grad_model = DiscreteInstance::GradModel::kScoreFunction;
    inst.returns = Eigen::VectorXd(m);
    for (std::size_t i = 0; i < m; ++i) inst.returns(i) = rng.uniform(-3, 3);
    const double base = oracle::exact_gradient(inst, 0.0)(0);
    // Independent evaluation of sum_tau slope * R.
    CHECK(std::abs(base - slope.dot(inst.returns)) < 1e-12);
    for (double b : {-2.0, 0.5, 7.0}) {
      DiscreteInstance shifted = inst;
      shifted.returns.array() -= b;
      CHECK(std::abs(oracle::exact_gradient(shifted, 0.0)(0) - base) < 1e-12);
    }
  }
}

TEST_CASE("two-trajectory example: expected estimate is theta times the sign") {
  for (double sign : {1.0, -1.0})
    for (double th : {0.2, 0.5, 0.9}) {
      const DiscreteInstance inst = two_trajectory_instance(sign);
      const EnumeratedInstance e = enumerate_instance(inst, th);
      CHECK(e.grads(0, 0) == sign);
      CHECK(e.grads(1, 0) == 0.0);
      CHECK(oracle::exact_gradient(inst, th)(0) == doctest::Approx(th * sign).epsilon(1e-15));
    }
}

TEST_CASE("REINFORCE and G(PO)MDP agree in mean on LQ") {
  const EnvSpec env = make_lq(1, 3, 0.7);
  const PolicyParams p = scalar_policy(-0.3);
  const auto batch = simulate(env, p, 100000, 2024);
  const auto rs = testutil::column_stats(
      trajectory_grads(batch, p, 0.7, Estimator::kReinforce, BaselineSpec::none()));
  const auto gs = testutil::column_stats(
      trajectory_grads(batch, p, 0.7, Estimator::kGpomdp, BaselineSpec::none()));
  CHECK(std::abs(rs[0].mean - gs[0].mean) < 3 * std::hypot(rs[0].se, gs[0].se));
}

TEST_CASE("batch gradient matches central differences at theta = 0") {
  const EnvSpec env = make_lq(1, 2, 0.5);
  const PolicyParams p = scalar_policy(0.0);
  const auto batch = simulate(env, p, 100000, 11);
  const Eigen::MatrixXd rows = trajectory_grads(
      batch, p, 0.5, Estimator::kGpomdp,
      fit_optimal_baseline(batch, p, 0.5, Estimator::kGpomdp));
  const auto est = testutil::column_stats(rows);
  const testutil::MeanSe fd = testutil::fd_gradient(env, 0.0, 0.0, 0.01, 100000, 12);
  CHECK(std::abs(est[0].mean - fd.mean) < 3 * std::hypot(est[0].se, fd.se));
  CHECK(batch_grad(batch, p, 0.5, Estimator::kGpomdp, BaselineKind::kOptimal).vector(0) ==
        doctest::Approx(est[0].mean).epsilon(1e-12));
}

TEST_CASE("optimal baselines and G(PO)MDP reduce variance on LQ") {
  const EnvSpec env = make_lq(1, 4, 0.75);
  const PolicyParams p = scalar_policy(0.3);
  double none = 0.0, opt = 0.0, reinforce = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto batch = simulate(env, p, 5000, stream_seed(77, {seed}));
    none += empirical_variance(
        trajectory_grads(batch, p, 0.75, Estimator::kGpomdp, BaselineSpec::none()));
    opt += empirical_variance(trajectory_grads(
        batch, p, 0.75, Estimator::kGpomdp,
        fit_optimal_baseline(batch, p, 0.75, Estimator::kGpomdp)));
    reinforce += empirical_variance(
        trajectory_grads(batch, p, 0.75, Estimator::kReinforce, BaselineSpec::none()));
  }
  CHECK(opt <= none);
  CHECK(none <= reinforce);
}

TEST_CASE("weight_stats") {
  const std::vector<double> w = {1.0, 3.0, 0.0, 2.0};
  const WeightStats s = weight_stats(w);
  CHECK(s.n_used == 4);
  CHECK(s.weight_mean == doctest::Approx(1.5));
  CHECK(s.weight_max == 3.0);
  CHECK(s.ess == doctest::Approx(36.0 / 14.0));
  CHECK(s.ess > 0.0);
  CHECK(s.ess <= 4.0);
}
