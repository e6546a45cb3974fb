#include "gradnoise/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace gradnoise {

namespace {

void check_gradient(const std::vector<double>& grad,
                    const std::vector<double>& params) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("gradient dimension mismatch");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw std::runtime_error("non-finite gradient entry at index " +
                               std::to_string(i));
    }
  }
}

void check_momentum(double m) {
  if (!(m >= 0.0 && m < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
}

}  // namespace

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "nesterov") return OptimizerKind::nesterov;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::nesterov: return "nesterov";
    case OptimizerKind::adam: return "adam";
  }
  return "unknown";
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grad,
              double lr) {
  check_gradient(grad, params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * grad[i];
  }
}

void momentum_step(std::vector<double>& accumulation,
                   std::vector<double>& params,
                   const std::vector<double>& grad, double lr,
                   double momentum) {
  check_gradient(grad, params);
  check_momentum(momentum);
  // The accumulation is updated first; the step uses the new value. Under
  // this ordering m = 0 is bit-identical to sgd_step and the constant
  // gradient closed form A_s = G(1-m^s)/(1-m) holds exactly.
  for (std::size_t i = 0; i < params.size(); ++i) {
    accumulation[i] = momentum * accumulation[i] + grad[i];
    params[i] -= lr * accumulation[i];
  }
}

void nesterov_step(std::vector<double>& accumulation,
                   std::vector<double>& params,
                   const std::vector<double>& grad, double lr,
                   double momentum) {
  check_gradient(grad, params);
  check_momentum(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    accumulation[i] = momentum * accumulation[i] + grad[i];
    params[i] -= lr * (momentum * accumulation[i] + grad[i]);
  }
}

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t dimension)
    : config_(config), dimension_(dimension) {
  if (config.kind == OptimizerKind::adam) {
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
        !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
      throw std::invalid_argument("adam betas must lie in [0, 1)");
    }
    if (!(config.epsilon_stability > 0.0)) {
      throw std::invalid_argument("epsilon_stability must be positive");
    }
    first_moment_.assign(dimension, 0.0);
    second_moment_.assign(dimension, 0.0);
  } else if (config.kind != OptimizerKind::sgd) {
    check_momentum(config.momentum);
    accumulation_.assign(dimension, 0.0);
  }
}

void Optimizer::reset() {
  accumulation_.assign(accumulation_.size(), 0.0);
  first_moment_.assign(first_moment_.size(), 0.0);
  second_moment_.assign(second_moment_.size(), 0.0);
  step_count_ = 0;
}

void Optimizer::step(std::vector<double>& params,
                     const std::vector<double>& grad, double lr,
                     double momentum) {
  if (params.size() != dimension_) {
    throw std::invalid_argument("parameter dimension mismatch");
  }
  const double m = momentum < 0.0 ? config_.momentum : momentum;
  switch (config_.kind) {
    case OptimizerKind::sgd:
      sgd_step(params, grad, lr);
      break;
    case OptimizerKind::momentum:
      momentum_step(accumulation_, params, grad, lr, m);
      break;
    case OptimizerKind::nesterov:
      nesterov_step(accumulation_, params, grad, lr, m);
      break;
    case OptimizerKind::adam: {
      check_gradient(grad, params);
      ++step_count_;
      const double b1 = config_.beta1;
      const double b2 = config_.beta2;
      double c1 = 1.0;
      double c2 = 1.0;
      if (config_.bias_correction) {
        c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
        c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        first_moment_[i] = b1 * first_moment_[i] + (1.0 - b1) * grad[i];
        second_moment_[i] = b2 * second_moment_[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = first_moment_[i] / c1;
        const double vhat = second_moment_[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon_stability);
      }
      break;
    }
  }
  if (config_.kind != OptimizerKind::adam) ++step_count_;
}

}  // namespace gradnoise
