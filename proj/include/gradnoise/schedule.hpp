#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gradnoise {

// One constant-hyperparameter stretch of training. Boundaries are epoch
// aligned; hyperparameters change only when a phase ends.
struct Phase {
  double start_epoch = 0.0;
  double end_epoch = 0.0;
  double lr = 0.0;
  long batch_size = 0;
  double momentum = 0.0;

  double epochs() const { return end_epoch - start_epoch; }
};

struct Schedule {
  std::vector<Phase> phases;
  double total_epochs = 0.0;
  long dataset_size = 0;

  // Throws std::invalid_argument on any violated invariant: positive lr,
  // 1 <= B <= N, 0 <= m < 1, contiguous integer-aligned phases covering
  // [0, total_epochs].
  void validate() const;

  // Phase containing the given epoch (the final phase owns its right edge).
  const Phase& phase_at(double epoch) const;

  std::string to_json() const;
  // Rejects unknown fields; field names are fixed:
  // {dataset_size, total_epochs, phases: [{start_epoch, end_epoch, lr,
  //  batch_size, momentum}]}
  static Schedule from_json(const std::string& text);
};

// Exact noise scale g = eps/(1-m) * (N/B - 1).
double noise_scale(double eps, long n, long b, double momentum);

// Large-N approximation g ~= eps*N/(B*(1-m)). This is the form the
// conversion and scaling rules preserve exactly.
double noise_scale_approx(double eps, long n, long b, double momentum);

// eps/(1-m).
double effective_learning_rate(double eps, double momentum);

// Replaces learning-rate decay with batch-size growth: the learning rate is
// held at the first phase's value and each phase's batch size is chosen so
// the approximate noise scale matches the input phase exactly. Once the
// batch size would exceed b_max it is pinned there and the learning rate
// absorbs the remaining decay. Rounded batch sizes are compensated through
// the learning rate so the noise scale is preserved to machine precision.
Schedule convert_to_batch_increase(const Schedule& s,
                                   std::optional<long> b_max = std::nullopt);

// Multiplies every phase's lr and batch size by the factor (batch sizes
// rounded to nearest). Preserves the approximate noise scale up to rounding.
Schedule apply_linear_scaling(const Schedule& s, double factor);

// Replaces every phase's momentum and rescales B by (1-m_old)/(1-m_new).
Schedule apply_momentum_scaling(const Schedule& s, double momentum_new);

// Expected number of parameter updates, sum over phases of epochs * N/B,
// as an exact rational evaluated in double.
double update_count_exact(const Schedule& s);

// Updates the runtime actually executes: per epoch ceil(N/B), with the
// final partial batch run at its true size.
long update_count_integer(const Schedule& s);

enum class Extrapolation {
  hold_final,  // beyond total_epochs the last phase's settings persist
  harmonic,    // lr_i = lr_first / i for update i = 1.., B and m held fixed
};

struct RobbinsMonroDiagnostic {
  double sum_lr = 0.0;
  double sum_lr_sq = 0.0;
  // (1-based update index where the value took effect, exact g there)
  std::vector<std::pair<long, double>> g_trajectory;
};

// Partial sums of lr and lr^2 over the first horizon_updates updates plus
// the noise-scale trajectory, with the schedule extended per `mode`.
RobbinsMonroDiagnostic robbins_monro_diagnostic(
    const Schedule& s, long horizon_updates,
    Extrapolation mode = Extrapolation::hold_final);

// Closed-form description of how the momentum accumulation grows in from
// zero under a constant mean gradient G.
struct AccumulationForecast {
  double gradient = 0.0;
  double momentum = 0.0;
  long dataset_size = 0;
  long batch_size = 0;
  double steady_state = 0.0;  // G/(1-m)
  double lost_epochs = 0.0;   // B/(N(1-m))

  // Exact solution of the discrete recursion A' = mA + G.
  double discrete_at(double updates) const;
  // Solution of the continuous-time equation dA/ds = -(1-m)A + G.
  double continuous_at_updates(double updates) const;
  // Continuous form with updates = (N/B) * epochs.
  double continuous_at_epochs(double epochs) const;
};

AccumulationForecast accumulation_forecast(double gradient, double momentum,
                                           long n, long b);

}  // namespace gradnoise
