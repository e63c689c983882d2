#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bpo {

// Invalid environment, policy, or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition of an operation was violated by the caller.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// Probability table does not define a distribution.
class InstanceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every gradient norm (or fitting weight) is zero, so any behavioral
// distribution is optimal.
class DegenerateObjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A behavioral distribution has no mass where the target integrand does.
class AbsoluteContinuityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WeightOverflowError : public std::overflow_error {
 public:
  explicit WeightOverflowError(double log_weight)
      : std::overflow_error("importance weight overflows (log-weight " +
                            std::to_string(log_weight) + ")"),
        log_weight_(log_weight) {}
  double log_weight() const { return log_weight_; }

 private:
  double log_weight_;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// Requested brute-force search is too large to run.
class RefusalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bpo
