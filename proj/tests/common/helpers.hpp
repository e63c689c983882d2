#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bpo/mdp.hpp"
#include "bpo/policy.hpp"
#include "bpo/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd mat1(double x) { return Eigen::MatrixXd::Constant(1, 1, x); }
inline Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

inline bpo::PolicyParams scalar_policy(double theta, double log_std = 0.0) {
  return bpo::PolicyParams(mat1(theta), vec1(log_std));
}

// 1-dim trajectory from explicit (s, a, r) triples.
inline bpo::Trajectory make_traj(const std::vector<double>& s, const std::vector<double>& a,
                                 const std::vector<double>& r, bpo::PolicyTag tag = 0) {
  bpo::Trajectory tau;
  const int n = static_cast<int>(r.size());
  tau.states.resize(n, 1);
  tau.actions.resize(n, 1);
  tau.rewards.resize(n);
  for (int t = 0; t < n; ++t) {
    tau.states(t, 0) = s[t];
    tau.actions(t, 0) = a[t];
    tau.rewards(t) = r[t];
  }
  tau.policy_tag = tag;
  return tau;
}

// Gaussian log-density written out from scratch.
inline double gauss_logpdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
}

inline double sample_mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_var(const std::vector<double>& x) {
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Central-difference estimate of dJ/dtheta for a scalar policy. Both sides
// reuse the same trajectory streams, so the per-trajectory differences are
// smooth in theta and their spread gives the standard error.
inline MeanSe fd_gradient(const bpo::EnvSpec& env, double theta, double log_std, double h,
                          std::size_t n, std::uint64_t seed, int threads = 1) {
  const auto up = bpo::simulate(env, scalar_policy(theta + h, log_std), n, seed, threads);
  const auto dn = bpo::simulate(env, scalar_policy(theta - h, log_std), n, seed, threads);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i)
    d[i] = (bpo::discounted_return(up[i], env.discount) -
            bpo::discounted_return(dn[i], env.discount)) / (2.0 * h);
  return {sample_mean(d), std::sqrt(sample_var(d) / static_cast<double>(n))};
}

// Mean and standard error of each column.
inline std::vector<MeanSe> column_stats(const Eigen::MatrixXd& rows) {
  std::vector<MeanSe> out;
  const double n = static_cast<double>(rows.rows());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double m = rows.col(j).mean();
    const double v = (rows.col(j).array() - m).square().sum() / (n - 1.0);
    out.push_back({m, std::sqrt(v / n)});
  }
  return out;
}

}  // namespace testutil
