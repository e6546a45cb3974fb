#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradnoise/problem.hpp"

namespace gradnoise {

struct InstabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RegimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VarianceEstimate {
  double variance = 0.0;
  double standard_error = 0.0;
  long samples_used = 0;
  long burn_in_updates = 0;
};

struct SweepPoint {
  double g = 0.0;
  double eps = 0.0;
  long batch_size = 0;
  double momentum = 0.0;
  double variance = 0.0;
  double standard_error = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // sorted by g
  double fit_slope = 0.0;
  double fit_intercept = 0.0;
  double r_squared = 0.0;
};

// Stationary spread ||w - mean||^2 of minibatch SGD (optionally with
// momentum) around the quadratic's minimum. Standard errors come from 50
// batch means to absorb autocorrelation. Throws InstabilityError when
// eps*lambda >= 2(1-m) * 0.9 or when the loss diverges during sampling.
VarianceEstimate stationary_variance(const NoisyQuadratic& problem, double eps,
                                     long batch_size, double momentum,
                                     long burn_in, long n_samples,
                                     std::uint64_t seed);

struct SweepSetting {
  double eps = 0.0;
  long batch_size = 0;
  double momentum = 0.0;
};

// Measures stationary variance at each setting and fits variance against
// the exact noise scale by least squares. Needs >= 2 distinct g values.
SweepResult noise_scale_sweep(const NoisyQuadratic& problem,
                              const std::vector<SweepSetting>& settings,
                              long burn_in, long n_samples,
                              std::uint64_t seed);

std::string sweep_to_delimited(const SweepResult& result);

// Iterates A' = mA + G from A = 0; returns A after each of n_steps updates.
std::vector<double> accumulation_growth_sim(double gradient, double momentum,
                                            long n_steps);

// Measures the start-of-training epoch deficit of a momentum run relative
// to the steady-state-accumulation velocity, in the constant-gradient
// regime (start far from the minimum). Integrates the continuous-time
// update pair (the step uses the pre-update accumulation), for which the
// deficit converges to B/(N(1-m)) epochs. Throws RegimeError when the
// gradient drifts by more than 10% over the measurement window.
double lost_epochs_empirical(const NoisyQuadratic& problem, double eps,
                             long batch_size, double momentum,
                             std::uint64_t seed);

}  // namespace gradnoise
