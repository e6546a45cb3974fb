#include "gradnoise/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace gradnoise {

namespace {

bool is_epoch_aligned(double x) {
  return std::abs(x - std::round(x)) <= 1e-9;
}

void check_momentum(double m) {
  if (!(m >= 0.0 && m < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1), got " +
                                std::to_string(m));
  }
}

void check_batch(long b, long n) {
  if (b < 1 || b > n) {
    throw std::invalid_argument("batch size must lie in [1, N], got B=" +
                                std::to_string(b) + " with N=" +
                                std::to_string(n));
  }
}

}  // namespace

void Schedule::validate() const {
  if (dataset_size < 1) {
    throw std::invalid_argument("dataset_size must be >= 1");
  }
  if (phases.empty()) {
    if (total_epochs != 0.0) {
      throw std::invalid_argument("schedule without phases must have total_epochs = 0");
    }
    return;
  }
  if (phases.front().start_epoch != 0.0) {
    throw std::invalid_argument("first phase must start at epoch 0");
  }
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const Phase& p = phases[i];
    if (!(p.end_epoch > p.start_epoch)) {
      throw std::invalid_argument("phase end_epoch must exceed start_epoch");
    }
    if (!is_epoch_aligned(p.start_epoch) || !is_epoch_aligned(p.end_epoch)) {
      throw std::invalid_argument(
          "phase boundaries must be epoch-aligned (integers)");
    }
    if (!(p.lr > 0.0) || !std::isfinite(p.lr)) {
      throw std::invalid_argument("learning rate must be positive and finite");
    }
    check_batch(p.batch_size, dataset_size);
    check_momentum(p.momentum);
    if (i > 0 && phases[i - 1].end_epoch != p.start_epoch) {
      throw std::invalid_argument("phases must be contiguous");
    }
  }
  if (phases.back().end_epoch != total_epochs) {
    throw std::invalid_argument("phases must cover [0, total_epochs]");
  }
}

const Phase& Schedule::phase_at(double epoch) const {
  if (phases.empty()) {
    throw std::invalid_argument("schedule has no phases");
  }
  for (const Phase& p : phases) {
    if (epoch >= p.start_epoch && epoch < p.end_epoch) return p;
  }
  if (epoch == total_epochs) return phases.back();
  throw std::invalid_argument("epoch outside schedule range");
}

std::string Schedule::to_json() const {
  nlohmann::json j;
  j["dataset_size"] = dataset_size;
  j["total_epochs"] = total_epochs;
  j["phases"] = nlohmann::json::array();
  for (const Phase& p : phases) {
    j["phases"].push_back({{"start_epoch", p.start_epoch},
                           {"end_epoch", p.end_epoch},
                           {"lr", p.lr},
                           {"batch_size", p.batch_size},
                           {"momentum", p.momentum}});
  }
  return j.dump(2);
}

namespace {

void reject_unknown(const nlohmann::json& j,
                    std::initializer_list<const char*> allowed,
                    const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument(std::string("unknown field '") + item.key() +
                                  "' in " + where);
    }
  }
}

}  // namespace

Schedule Schedule::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  reject_unknown(j, {"dataset_size", "total_epochs", "phases"}, "schedule");
  Schedule s;
  s.dataset_size = j.at("dataset_size").get<long>();
  s.total_epochs = j.at("total_epochs").get<double>();
  for (const auto& jp : j.at("phases")) {
    reject_unknown(jp, {"start_epoch", "end_epoch", "lr", "batch_size", "momentum"},
                   "phase");
    Phase p;
    p.start_epoch = jp.at("start_epoch").get<double>();
    p.end_epoch = jp.at("end_epoch").get<double>();
    p.lr = jp.at("lr").get<double>();
    p.batch_size = jp.at("batch_size").get<long>();
    p.momentum = jp.at("momentum").get<double>();
    s.phases.push_back(p);
  }
  s.validate();
  return s;
}

double noise_scale(double eps, long n, long b, double momentum) {
  if (!(eps > 0.0)) throw std::invalid_argument("learning rate must be positive");
  check_momentum(momentum);
  check_batch(b, n);
  return eps / (1.0 - momentum) *
         (static_cast<double>(n) / static_cast<double>(b) - 1.0);
}

double noise_scale_approx(double eps, long n, long b, double momentum) {
  if (!(eps > 0.0)) throw std::invalid_argument("learning rate must be positive");
  check_momentum(momentum);
  check_batch(b, n);
  return eps * static_cast<double>(n) /
         (static_cast<double>(b) * (1.0 - momentum));
}

double effective_learning_rate(double eps, double momentum) {
  if (!(eps > 0.0)) throw std::invalid_argument("learning rate must be positive");
  check_momentum(momentum);
  return eps / (1.0 - momentum);
}

Schedule convert_to_batch_increase(const Schedule& s, std::optional<long> b_max) {
  s.validate();
  if (s.phases.empty()) return s;
  const double lr0 = s.phases.front().lr;
  const long b0 = s.phases.front().batch_size;
  if (b_max && *b_max < b0) {
    throw std::invalid_argument("B_max below initial batch size");
  }
  const double n = static_cast<double>(s.dataset_size);
  Schedule out = s;
  for (Phase& p : out.phases) {
    // Per-phase approximate noise scale the output must reproduce.
    const double g = noise_scale_approx(p.lr, s.dataset_size, p.batch_size,
                                        p.momentum);
    double target = static_cast<double>(p.batch_size) * lr0 / p.lr;
    long cap = s.dataset_size;
    if (b_max) cap = std::min(cap, *b_max);
    long b_new = std::llround(target);
    b_new = std::clamp(b_new, 1L, cap);
    // Whatever the batch size could not express goes into the learning
    // rate, so g is preserved bit-for-bit up to a multiply/divide pair.
    p.batch_size = b_new;
    p.lr = g * (1.0 - p.momentum) * static_cast<double>(b_new) / n;
  }
  out.validate();
  return out;
}

Schedule apply_linear_scaling(const Schedule& s, double factor) {
  s.validate();
  if (!(factor > 0.0)) throw std::invalid_argument("scaling factor must be positive");
  Schedule out = s;
  for (Phase& p : out.phases) {
    long b_new = std::llround(static_cast<double>(p.batch_size) * factor);
    if (b_new < 1) throw std::invalid_argument("scaled batch size below 1");
    if (b_new > s.dataset_size) {
      throw std::invalid_argument("scaled batch size exceeds dataset size");
    }
    p.batch_size = b_new;
    p.lr *= factor;
  }
  out.validate();
  return out;
}

Schedule apply_momentum_scaling(const Schedule& s, double momentum_new) {
  s.validate();
  check_momentum(momentum_new);
  Schedule out = s;
  for (Phase& p : out.phases) {
    const double ratio = (1.0 - p.momentum) / (1.0 - momentum_new);
    long b_new = std::llround(static_cast<double>(p.batch_size) * ratio);
    if (b_new < 1) throw std::invalid_argument("scaled batch size below 1");
    if (b_new > s.dataset_size) {
      throw std::invalid_argument("scaled batch size exceeds dataset size");
    }
    p.batch_size = b_new;
    p.momentum = momentum_new;
  }
  out.validate();
  return out;
}

double update_count_exact(const Schedule& s) {
  s.validate();
  double total = 0.0;
  for (const Phase& p : s.phases) {
    total += p.epochs() * static_cast<double>(s.dataset_size) /
             static_cast<double>(p.batch_size);
  }
  return total;
}

long update_count_integer(const Schedule& s) {
  s.validate();
  long total = 0;
  for (const Phase& p : s.phases) {
    const long epochs = std::llround(p.epochs());
    const long per_epoch =
        (s.dataset_size + p.batch_size - 1) / p.batch_size;  // ceil(N/B)
    total += epochs * per_epoch;
  }
  return total;
}

RobbinsMonroDiagnostic robbins_monro_diagnostic(const Schedule& s,
                                                long horizon_updates,
                                                Extrapolation mode) {
  s.validate();
  if (horizon_updates < 1) throw std::invalid_argument("horizon must be >= 1");
  if (s.phases.empty()) {
    throw std::invalid_argument("diagnostic needs at least one phase");
  }
  RobbinsMonroDiagnostic d;
  const long n = s.dataset_size;

  if (mode == Extrapolation::harmonic) {
    const Phase& p0 = s.phases.front();
    const long per_epoch = (n + p0.batch_size - 1) / p0.batch_size;
    for (long i = 1; i <= horizon_updates; ++i) {
      const double lr = p0.lr / static_cast<double>(i);
      d.sum_lr += lr;
      d.sum_lr_sq += lr * lr;
      if ((i - 1) % per_epoch == 0) {
        d.g_trajectory.emplace_back(
            i, noise_scale(lr, n, p0.batch_size, p0.momentum));
      }
    }
    return d;
  }

  long done = 0;
  double epoch = 0.0;
  const Phase* prev = nullptr;
  while (done < horizon_updates) {
    const Phase& p = (epoch < s.total_epochs) ? s.phase_at(epoch)
                                              : s.phases.back();
    const long per_epoch = (n + p.batch_size - 1) / p.batch_size;
    const long take = std::min(per_epoch, horizon_updates - done);
    if (&p != prev) {
      d.g_trajectory.emplace_back(
          done + 1, noise_scale(p.lr, n, p.batch_size, p.momentum));
      prev = &p;
    }
    d.sum_lr += static_cast<double>(take) * p.lr;
    d.sum_lr_sq += static_cast<double>(take) * p.lr * p.lr;
    done += take;
    epoch += 1.0;
  }
  return d;
}

double AccumulationForecast::discrete_at(double updates) const {
  if (momentum == 0.0) return updates >= 1.0 ? gradient : 0.0;
  return gradient * (1.0 - std::pow(momentum, updates)) / (1.0 - momentum);
}

double AccumulationForecast::continuous_at_updates(double updates) const {
  return steady_state * (1.0 - std::exp(-(1.0 - momentum) * updates));
}

double AccumulationForecast::continuous_at_epochs(double epochs) const {
  const double s = static_cast<double>(dataset_size) /
                   static_cast<double>(batch_size) * epochs;
  return continuous_at_updates(s);
}

AccumulationForecast accumulation_forecast(double gradient, double momentum,
                                           long n, long b) {
  check_momentum(momentum);
  check_batch(b, n);
  AccumulationForecast f;
  f.gradient = gradient;
  f.momentum = momentum;
  f.dataset_size = n;
  f.batch_size = b;
  f.steady_state = gradient / (1.0 - momentum);
  f.lost_epochs = static_cast<double>(b) /
                  (static_cast<double>(n) * (1.0 - momentum));
  return f;
}

}  // namespace gradnoise
