#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bpo/driver.hpp"

namespace bpo {

// INI-style run description with sections [env], [policy], [algo], [sweep].
// Comments start with ';'. Unknown sections or keys are errors.
//
// [env]    kind = lq | cartpole, horizon, discount,
//          LQ: state_dim, a, b, q, r (diagonal scalars), noise_std,
//              init_range, state_box, action_box
//          cartpole: force_mag, init_range
// [policy] theta = v (v on the diagonal) or a row-major list, log_std = v or list
// [algo]   variant = theoretical | practical | on_policy | storm_pg, n_bpo, n_pg,
//          beta = x | auto, step_size, iterations, estimator = gpomdp | reinforce,
//          baseline = optimal | none, seed, offline_kl, biased, momentum,
//          eval_episodes, ridge
// [sweep]  param = theta | log_std | horizon | state_dim, values = list,
//          betas = list, sizes = nbpo:npg list, biased = list of bools, reps,
//          force_target_behavioral, on_policy_control
struct RunConfig {
  AlgoConfig algo;
  SweepSpec sweep;
  VarianceGapOptions gap;
  std::vector<std::string> warnings;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

// Diagonal matrix with v on the diagonal, or a row-major list.
Eigen::MatrixXd parse_theta(const std::string& text, int rows, int cols);

}  // namespace bpo
