#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gradnoise {

enum class OptimizerKind { sgd, momentum, nesterov, adam };

OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double momentum = 0.0;  // default m for momentum/nesterov steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_stability = 1e-8;
  bool bias_correction = true;
};

// Sequential first-order optimizer over a flat parameter vector. Gradients
// are the mean gradient per training example, never the batch sum. All
// state is double precision.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::size_t dimension);

  // Applies one update in place. `momentum` overrides the configured
  // coefficient for momentum/nesterov (schedules may change m per phase);
  // pass a negative value to use the configured one. Adam ignores it.
  void step(std::vector<double>& params, const std::vector<double>& grad,
            double lr, double momentum = -1.0);

  const OptimizerConfig& config() const { return config_; }
  const std::vector<double>& accumulation() const { return accumulation_; }
  long step_count() const { return step_count_; }
  void reset();

 private:
  OptimizerConfig config_;
  std::size_t dimension_;
  std::vector<double> accumulation_;    // momentum / nesterov
  std::vector<double> first_moment_;    // adam
  std::vector<double> second_moment_;   // adam
  long step_count_ = 0;
};

// Single-step forms used directly by tests and the dynamics lab.

// w' = w - lr * grad
void sgd_step(std::vector<double>& params, const std::vector<double>& grad,
              double lr);

// A' = mA + grad, then w' = w - lr * A'.
void momentum_step(std::vector<double>& accumulation,
                   std::vector<double>& params,
                   const std::vector<double>& grad, double lr,
                   double momentum);

// A' = mA + grad, then w' = w - lr * (m * A' + grad).
void nesterov_step(std::vector<double>& accumulation,
                   std::vector<double>& params,
                   const std::vector<double>& grad, double lr,
                   double momentum);

}  // namespace gradnoise
