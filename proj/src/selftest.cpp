#include <cmath>

#include "bpo/behavioral.hpp"
#include "bpo/cli.hpp"
#include "bpo/grad_est.hpp"
#include "bpo/is_core.hpp"
#include "bpo/mdp.hpp"

namespace bpo {
namespace {

oracle::CheckResult check(std::string name, double worst, bool passed) {
  return {std::move(name), passed, worst, {}};
}

}  // namespace

std::vector<oracle::CheckResult> run_selftest(std::uint64_t seed, int threads) {
  auto out = oracle::run_identity_suite(seed, 20, false, threads);

  const EnvSpec env = make_lq(1, 3, 2.0 / 3.0);
  const PolicyParams target(Eigen::MatrixXd::Constant(1, 1, -0.3), Eigen::VectorXd::Zero(1));
  const auto a = simulate(env, target, 64, seed, 1);
  const auto b = simulate(env, target, 64, seed, std::max(threads, 2));
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    same = same && a[i].states == b[i].states && a[i].actions == b[i].actions &&
           a[i].rewards == b[i].rewards;
  out.push_back(check("simulation is independent of thread count", 0.0, same));

  const EnvSpec one = make_lq(1, 1, 0.0);
  const auto taus = simulate(one, target, 16, seed + 1);
  double diff = 0.0;
  for (const auto& tau : taus)
    diff = std::max(diff, (reinforce_grad(tau, target, 0.0, BaselineSpec::none()) -
                           gpomdp_grad(tau, target, 0.0, BaselineSpec::none()))
                              .cwiseAbs()
                              .maxCoeff());
  out.push_back(check("REINFORCE and G(PO)MDP coincide for T = 1", diff, diff <= 1e-12));

  const BpoFit fit = fit_behavioral(a, std::nullopt, target, env.discount);
  const MixtureSpec mix = defensive_mixture(target, fit.behav_params, 0.4, 50);
  const auto batch = simulate(env, fit.behav_params, 30, seed + 2);
  double worst = 0.0;
  for (const auto& tau : batch) worst = std::max(worst, balance_weight(mix, target, tau));
  const double bound = 50.0 / 20.0;
  out.push_back(check("defensive weights are bounded by n / round(beta n)", worst,
                      worst <= bound * (1.0 + 1e-12)));

  double prev = -1.0;
  bool monotone = true;
  for (int i = 0; i <= 100; ++i) {
    const double v = defensive_beta(i / 100.0);
    monotone = monotone && v > prev && v >= 0.0 && v <= 1.0;
    prev = v;
  }
  out.push_back(check("defensive beta is increasing on [0, 1]", 0.0, monotone));
  return out;
}

}  // namespace bpo
