#include <cmath>

#include "doctest.h"

#include "bpo/behavioral.hpp"
#include "bpo/errors.hpp"
#include "bpo/is_core.hpp"
#include "bpo/oracle.hpp"
#include "helpers.hpp"

using namespace bpo;
using testutil::make_traj;
using testutil::scalar_policy;

TEST_CASE("fit weights are IS weight times the estimator norm") {
  const EnvSpec env = make_lq(1, 2, 0.5);
  const PolicyParams t = scalar_policy(0.4), b = scalar_policy(-0.1, 0.2);
  const auto on = simulate(env, t, 30, 2);
  const FitOptions opts{Estimator::kGpomdp, BaselineKind::kNone, std::nullopt};
  const Eigen::VectorXd w = fit_weights(on, std::nullopt, t, 0.5, opts);
  for (std::size_t i = 0; i < on.size(); ++i)
    CHECK(w(i) == doctest::Approx(std::abs(gpomdp_grad(on[i], t, 0.5, BaselineSpec::none())(0))));

  const auto off = simulate(env, b, 30, 3);
  const MixtureSpec mix = on_policy_mixture(b, 30);
  const Eigen::VectorXd wo = fit_weights(off, mix, t, 0.5, opts);
  for (std::size_t i = 0; i < off.size(); ++i)
    CHECK(wo(i) == doctest::Approx(simple_weight(t, b, off[i]) *
                                   std::abs(gpomdp_grad(off[i], t, 0.5, BaselineSpec::none())(0))));
}

TEST_CASE("weighted least squares") {
  const PolicyParams target = scalar_policy(0.0, -0.7);

  SUBCASE("one-point interpolation") {
    const std::vector<Trajectory> one = {make_traj({1.0}, {0.5}, {0.0})};
    const PolicyParams fit = weighted_least_squares(one, testutil::vec1(3.0), target, 0.0);
    CHECK(fit.theta()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(fit.log_std()(0) == -0.7);
  }

  SUBCASE("three weighted points in two state dimensions") {
    // Points (s, a) with weights: ((1, 0), 1) w=2, ((0, 1), 2) w=1, ((1, 1), 4) w=3.
    std::vector<Trajectory> taus;
    auto add = [&](double s0, double s1, double a) {
      Trajectory tau;
      tau.states = Eigen::MatrixXd(1, 2);
      tau.states << s0, s1;
      tau.actions = Eigen::MatrixXd::Constant(1, 1, a);
      tau.rewards = Eigen::VectorXd::Zero(1);
      taus.push_back(tau);
    };
    add(1, 0, 1);
    add(0, 1, 2);
    add(1, 1, 4);
    const Eigen::Vector3d w(2, 1, 3);
    // S = [[2+3, 3], [3, 1+3]] = [[5, 3], [3, 4]], r = [2*1 + 3*4, 1*2 + 3*4] = [14, 14]
    // det = 11; theta = (4*14 - 3*14, 5*14 - 3*14) / 11 = (14/11, 28/11)
    const PolicyParams fit =
        weighted_least_squares(taus, w, PolicyParams::zeros(2, 1), 0.0);
    CHECK(fit.theta()(0, 0) == doctest::Approx(14.0 / 11.0).epsilon(1e-12));
    CHECK(fit.theta()(1, 0) == doctest::Approx(28.0 / 11.0).epsilon(1e-12));
    // With ridge 1: [[6, 3], [3, 5]], det 21 -> (5*14 - 3*14, 6*14 - 3*14) / 21
    const PolicyParams ridged = weighted_least_squares(taus, w, PolicyParams::zeros(2, 1), 1.0);
    CHECK(ridged.theta()(0, 0) == doctest::Approx(28.0 / 21.0).epsilon(1e-12));
    CHECK(ridged.theta()(1, 0) == doctest::Approx(42.0 / 21.0).epsilon(1e-12));
  }

  SUBCASE("noiseless data from the target is recovered") {
    Eigen::MatrixXd th(3, 2);
    th << 0.5, -1.0, 0.2, 0.3, -0.8, 0.1;
    const PolicyParams sharp(th, Eigen::VectorXd::Constant(2, -20.0));
    EnvSpec env = make_lq(3, 4, 0.8);
    env.action_dim = 2;
    env.lq.b = Eigen::MatrixXd::Ones(3, 2) * 0.2;
    env.lq.r_diag = Eigen::VectorXd::Ones(2);
    const auto taus = simulate(env, sharp, 20, 8);
    const PolicyParams fit =
        weighted_least_squares(taus, Eigen::VectorXd::Ones(20), sharp, std::nullopt);
    CHECK((fit.theta() - th).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("failures") {
    const std::vector<Trajectory> zero_states = {make_traj({0.0}, {1.0}, {0.0}),
                                                 make_traj({0.0}, {-1.0}, {0.0})};
    CHECK_THROWS_AS(weighted_least_squares(zero_states, Eigen::Vector2d(1, 1), target, 0.0),
                    SolverError);
    CHECK_THROWS_AS(weighted_least_squares(zero_states, Eigen::Vector2d(0, 0), target, 0.0),
                    DegenerateObjectiveError);
    CHECK_THROWS_AS(weighted_least_squares(zero_states, Eigen::Vector2d(-1, 1), target, 0.0),
                    UsageError);
  }
}

TEST_CASE("fit_behavioral objective and normalizer") {
  const EnvSpec env = make_lq(1, 2, 0.5);
  const PolicyParams t = scalar_policy(0.6, -0.4);
  const auto taus = simulate(env, t, 40, 21);
  const BpoFit fit = fit_behavioral(taus, std::nullopt, t, 0.5);
  const Eigen::VectorXd w = fit_weights(taus, std::nullopt, t, 0.5, FitOptions{});
  CHECK(fit.normalizer_Z == doctest::Approx(w.mean()));
  CHECK(fit.normalizer_Z > 0.0);
  CHECK(fit.kl_estimate >= 0.0);
  CHECK(fit.behav_params.log_std() == t.log_std());
  // Weighted negative log-likelihood written out directly.
  const double th = fit.behav_params.theta()(0, 0), sig = std::exp(-0.4);
  double nll = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i)
    for (int s = 0; s < 2; ++s)
      nll -= w(i) * testutil::gauss_logpdf(taus[i].actions(s, 0), th * taus[i].states(s, 0), sig);
  CHECK(fit.objective_value == doctest::Approx(nll / 40.0).epsilon(1e-12));
  // The fit minimizes the objective.
  for (double d : {-1e-3, 1e-3})
    CHECK(weighted_nll(taus, w, fit.behav_params.with_theta(testutil::mat1(th + d))) >
          fit.objective_value);
  CHECK(fit_behavioral(std::vector<Trajectory>(taus.begin(), taus.begin() + 3), std::nullopt, t,
                       0.5)
            .kl_estimate == 0.0);
}

TEST_CASE("fit_behavioral with a mixture uses balance weights") {
  const EnvSpec env = make_lq(1, 2, 0.5);
  const PolicyParams t = scalar_policy(0.3), b = scalar_policy(-0.2, 0.3);
  const MixtureSpec mix = defensive_mixture(t, b, 0.4, 20);
  auto taus = simulate(env, t, 8, 1);
  const auto rest = simulate(env, b, 12, 2);
  taus.insert(taus.end(), rest.begin(), rest.end());
  const FitOptions opts{Estimator::kGpomdp, BaselineKind::kNone, 0.0};
  const BpoFit fit = fit_behavioral(taus, mix, t, 0.5, opts);
  Eigen::VectorXd w(20);
  for (int i = 0; i < 20; ++i)
    w(i) = balance_weight(mix, t, taus[i]) *
           std::abs(gpomdp_grad(taus[i], t, 0.5, BaselineSpec::none())(0));
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 20; ++i)
    for (int s = 0; s < 2; ++s) {
      num += w(i) * taus[i].states(s, 0) * taus[i].actions(s, 0);
      den += w(i) * taus[i].states(s, 0) * taus[i].states(s, 0);
    }
  CHECK(fit.behav_params.theta()(0, 0) == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("estimate_kl") {
  const EnvSpec env = make_lq(1, 2, 0.5);
  const PolicyParams t = scalar_policy(-0.3, 0.1);
  const auto taus = simulate(env, t, 200, 4);
  const BpoFit fit = fit_behavioral(taus, std::nullopt, t, 0.5);
  CHECK(estimate_kl(taus, std::nullopt, t, fit.behav_params, 0.5) == 0.0);

  // Fixed variance: the loss gap is a quadratic form in the mean offset.
  const Eigen::VectorXd w = fit_weights(taus, std::nullopt, t, 0.5, FitOptions{});
  const double th = fit.behav_params.theta()(0, 0), sig2 = std::exp(0.2);
  for (double delta : {0.05, -0.4, 1.5}) {
    double gap = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i)
      for (int s = 0; s < 2; ++s) {
        const double st = taus[i].states(s, 0), a = taus[i].actions(s, 0);
        gap += w(i) * ((a - (th + delta) * st) * (a - (th + delta) * st) -
                       (a - th * st) * (a - th * st)) / (2 * sig2);
      }
    gap /= static_cast<double>(taus.size());
    const double kl = estimate_kl(taus, std::nullopt, t, fit.behav_params.with_theta(testutil::mat1(th + delta)), 0.5);
    CHECK(kl > 0.0);
    CHECK(kl == doctest::Approx(gap / w.mean()).epsilon(1e-9));
  }
  CHECK_THROWS_AS(estimate_kl(std::vector<Trajectory>(taus.begin(), taus.begin() + 1),
                              std::nullopt, t, t, 0.5),
                  UsageError);
}

TEST_CASE("discrete analogue: loss gap over Z is the exact KL") {
  Rng rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const DiscreteInstance inst = oracle::random_instance(rng);
    const Eigen::VectorXd q = oracle::random_distribution(inst.size(), rng);
    const Eigen::VectorXd pstar = optimal_density(inst, 0.0);
    const double z = oracle::normalizer(inst, 0.0);
    const double gap = (oracle::exact_loss(inst, 0.0, q) - oracle::exact_loss(inst, 0.0, pstar)) / z;
    double kl = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i)
      if (pstar(i) > 0.0) kl += pstar(i) * std::log(pstar(i) / q(i));
    CHECK(std::abs(gap - kl) <= 1e-10);
    CHECK(std::abs(oracle::exact_divergences(pstar, q).kl - kl) <= 1e-12);
  }
}

TEST_CASE("defensive_beta") {
  CHECK(defensive_beta(0.0) == 0.0);
  CHECK(defensive_beta(1.0) == 1.0);
  CHECK(defensive_beta(0.5) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-15));
  CHECK(defensive_beta(7.0) == 1.0);
  CHECK_THROWS_AS(defensive_beta(-0.1), UsageError);
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double b = defensive_beta(i / 1000.0);
    CHECK(b > prev);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    prev = b;
  }
}

TEST_CASE("optimal_density") {
  SUBCASE("constant gradient norm leaves the target unchanged") {
    DiscreteInstance inst;
    inst.ids = {"a", "b", "c"};
    inst.prob_intercept = Eigen::Vector3d(0.2, 0.5, 0.3);
    inst.grads = Eigen::MatrixXd(3, 2);
    inst.grads << 1, 0, 0, -1, 0.6, 0.8;
    CHECK((optimal_density(inst, 0.0) - inst.prob_intercept).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("two-trajectory example") {
    const Eigen::VectorXd p = optimal_density(two_trajectory_instance(), 0.2);
    CHECK(p(0) == 1.0);
    CHECK(p(1) == 0.0);
  }
  SUBCASE("vanishing gradients") {
    DiscreteInstance inst = two_trajectory_instance(0.0);
    CHECK_THROWS_AS(optimal_density(inst, 0.3), DegenerateObjectiveError);
  }
  SUBCASE("agrees with a brute-force simplex search") {
    Rng rng(55);
    int five = 0;
    while (five < 3) {
      const DiscreteInstance inst = oracle::random_instance(rng);
      if (inst.size() != 5) continue;
      ++five;
      // Step 1e-3 on five atoms is ~4e10 points; 0.02 keeps it small.
      const oracle::SimplexResult r = oracle::simplex_min_variance(inst, 0.0, 0.02);
      const double at_opt =
          oracle::exact_estimator_variance(inst, 0.0, optimal_density(inst, 0.0));
      CHECK(at_opt <= r.var_best + 1e-12);
    }
    int small = 0;
    while (small < 3) {
      const DiscreteInstance inst = oracle::random_instance(rng);
      if (inst.size() > 3) continue;
      ++small;
      const oracle::SimplexResult r = oracle::simplex_min_variance(inst, 0.0, 1e-3);
      const Eigen::VectorXd pstar = optimal_density(inst, 0.0);
      CHECK((r.q_best - pstar).cwiseAbs().maxCoeff() < 0.01);
      CHECK(oracle::exact_estimator_variance(inst, 0.0, pstar) <= r.var_best + 1e-12);
    }
  }
}
