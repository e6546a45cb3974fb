#include "gradnoise/problem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gradnoise/rng.hpp"

namespace gradnoise {

Dataset load_delimited(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  Dataset ds;
  std::string line;
  bool first = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (first && has_header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      fields.push_back(std::stod(cell));
    }
    if (fields.size() < 2) {
      throw std::runtime_error("dataset line needs at least one feature and a target");
    }
    if (width == 0) {
      width = fields.size();
    } else if (fields.size() != width) {
      throw std::runtime_error("inconsistent column count in dataset file");
    }
    ds.targets.push_back(fields.back());
    fields.pop_back();
    for (double f : fields) {
      if (!std::isfinite(f)) throw std::runtime_error("non-finite feature in dataset");
    }
    ds.features.push_back(std::move(fields));
  }
  if (ds.size() == 0) throw std::runtime_error("empty dataset file: " + path);
  return ds;
}

void Problem::batch_grad(const std::vector<double>& params,
                         const std::vector<std::size_t>& batch,
                         std::vector<double>& out) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  out.assign(dimension(), 0.0);
  std::vector<double> g(dimension());
  for (std::size_t idx : batch) {
    example_grad(params, idx, g);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : out) v *= inv;
}

double Problem::full_loss(const std::vector<double>& params) const {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset_size(); ++i) {
    total += example_loss(params, i);
  }
  return total / static_cast<double>(dataset_size());
}

std::vector<double> Problem::initial_params(std::uint64_t) const {
  return std::vector<double>(dimension(), 0.0);
}

NoisyQuadratic::NoisyQuadratic(double lambda, double sigma, std::size_t n,
                               std::size_t dim, std::uint64_t seed)
    : lambda_(lambda), dim_(dim) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (sigma < 0.0) throw std::invalid_argument("sigma must be non-negative");
  if (n < 1 || dim < 1) throw std::invalid_argument("n and dim must be >= 1");
  Rng rng(derive_seed(seed, 0x51));
  examples_.assign(n, std::vector<double>(dim));
  mean_.assign(dim, 0.0);
  for (auto& x : examples_) {
    for (std::size_t j = 0; j < dim; ++j) {
      x[j] = sigma * rng.normal();
      mean_[j] += x[j];
    }
  }
  for (double& m : mean_) m /= static_cast<double>(n);
}

double NoisyQuadratic::example_loss(const std::vector<double>& params,
                                    std::size_t index) const {
  const auto& x = examples_[index];
  double sq = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) {
    const double d = params[j] - x[j];
    sq += d * d;
  }
  return 0.5 * lambda_ * sq;
}

void NoisyQuadratic::example_grad(const std::vector<double>& params,
                                  std::size_t index,
                                  std::vector<double>& out) const {
  const auto& x = examples_[index];
  out.resize(dim_);
  for (std::size_t j = 0; j < dim_; ++j) {
    out[j] = lambda_ * (params[j] - x[j]);
  }
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Numerically stable binary cross-entropy from the logit.
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

LogisticSynthetic::LogisticSynthetic(std::size_t n, std::size_t dim,
                                     double class_separation,
                                     std::uint64_t seed)
    : dim_(dim) {
  if (n < 4 || n % 2 != 0) throw std::invalid_argument("n must be even and >= 4");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (class_separation < 0.0) {
    throw std::invalid_argument("class_separation must be non-negative");
  }
  Rng rng(derive_seed(seed, 0x10));
  const double shift = 0.5 * class_separation / std::sqrt(static_cast<double>(dim));
  auto draw = [&](Dataset& ds, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const double label = (i % 2 == 0) ? 0.0 : 1.0;
      const double sign = label == 0.0 ? -1.0 : 1.0;
      std::vector<double> x(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        x[j] = sign * shift + rng.normal();
      }
      ds.features.push_back(std::move(x));
      ds.targets.push_back(label);
    }
  };
  draw(train_, n);
  draw(held_out_, std::max<std::size_t>(n / 4, 2));
}

double LogisticSynthetic::example_loss(const std::vector<double>& params,
                                       std::size_t index) const {
  const auto& x = train_.features[index];
  double z = params[dim_];
  for (std::size_t j = 0; j < dim_; ++j) z += params[j] * x[j];
  return bce_from_logit(z, train_.targets[index]);
}

void LogisticSynthetic::example_grad(const std::vector<double>& params,
                                     std::size_t index,
                                     std::vector<double>& out) const {
  const auto& x = train_.features[index];
  double z = params[dim_];
  for (std::size_t j = 0; j < dim_; ++j) z += params[j] * x[j];
  const double residual = sigmoid(z) - train_.targets[index];
  out.resize(dim_ + 1);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = residual * x[j];
  out[dim_] = residual;
}

double LogisticSynthetic::eval_metric(const std::vector<double>& params) const {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < held_out_.size(); ++i) {
    const auto& x = held_out_.features[i];
    double z = params[dim_];
    for (std::size_t j = 0; j < dim_; ++j) z += params[j] * x[j];
    const double predicted = z > 0.0 ? 1.0 : 0.0;
    if (predicted == held_out_.targets[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(held_out_.size());
}

TinyMlp::TinyMlp(std::size_t n, std::size_t dim, std::size_t hidden_units,
                 std::uint64_t seed)
    : input_dim_(dim), hidden_(hidden_units) {
  if (dim < 2) throw std::invalid_argument("tiny mlp needs dim >= 2");
  if (hidden_units < 1) throw std::invalid_argument("hidden_units must be >= 1");
  if (n < kClasses) throw std::invalid_argument("n must be >= number of classes");
  Rng rng(derive_seed(seed, 0x3b));
  auto draw = [&](Dataset& ds, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t label = i % kClasses;
      const double t = rng.uniform();
      const double radius = 0.2 + 0.8 * t;
      const double angle = 3.0 * t +
                           2.0 * 3.14159265358979323846 *
                               static_cast<double>(label) / kClasses +
                           0.15 * rng.normal();
      std::vector<double> x(dim, 0.0);
      x[0] = radius * std::cos(angle);
      x[1] = radius * std::sin(angle);
      for (std::size_t j = 2; j < dim; ++j) x[j] = 0.1 * rng.normal();
      ds.features.push_back(std::move(x));
      ds.targets.push_back(static_cast<double>(label));
    }
  };
  draw(train_, n);
  draw(held_out_, std::max<std::size_t>(n / 4, kClasses));
}

std::size_t TinyMlp::dimension() const {
  return hidden_ * input_dim_ + hidden_ + kClasses * hidden_ + kClasses;
}

// Parameter layout: W1 (hidden x input), b1 (hidden), W2 (classes x hidden),
// b2 (classes).
double TinyMlp::forward_backward(const std::vector<double>& params,
                                 const std::vector<double>& x,
                                 std::size_t label,
                                 std::vector<double>* grad) const {
  const std::size_t w1 = 0;
  const std::size_t b1 = hidden_ * input_dim_;
  const std::size_t w2 = b1 + hidden_;
  const std::size_t b2 = w2 + kClasses * hidden_;

  std::vector<double> h(hidden_);
  for (std::size_t u = 0; u < hidden_; ++u) {
    double z = params[b1 + u];
    for (std::size_t j = 0; j < input_dim_; ++j) {
      z += params[w1 + u * input_dim_ + j] * x[j];
    }
    h[u] = std::tanh(z);
  }

  std::vector<double> logits(kClasses);
  double max_logit = -1e300;
  for (std::size_t k = 0; k < kClasses; ++k) {
    double z = params[b2 + k];
    for (std::size_t u = 0; u < hidden_; ++u) {
      z += params[w2 + k * hidden_ + u] * h[u];
    }
    logits[k] = z;
    max_logit = std::max(max_logit, z);
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < kClasses; ++k) {
    denom += std::exp(logits[k] - max_logit);
  }
  const double loss = -(logits[label] - max_logit) + std::log(denom);

  if (grad != nullptr) {
    grad->assign(dimension(), 0.0);
    std::vector<double> delta(kClasses);
    for (std::size_t k = 0; k < kClasses; ++k) {
      delta[k] = std::exp(logits[k] - max_logit) / denom -
                 (k == label ? 1.0 : 0.0);
    }
    std::vector<double> dh(hidden_, 0.0);
    for (std::size_t k = 0; k < kClasses; ++k) {
      (*grad)[b2 + k] = delta[k];
      for (std::size_t u = 0; u < hidden_; ++u) {
        (*grad)[w2 + k * hidden_ + u] = delta[k] * h[u];
        dh[u] += delta[k] * params[w2 + k * hidden_ + u];
      }
    }
    for (std::size_t u = 0; u < hidden_; ++u) {
      const double dz = dh[u] * (1.0 - h[u] * h[u]);
      (*grad)[b1 + u] = dz;
      for (std::size_t j = 0; j < input_dim_; ++j) {
        (*grad)[w1 + u * input_dim_ + j] = dz * x[j];
      }
    }
  }
  return loss;
}

double TinyMlp::example_loss(const std::vector<double>& params,
                             std::size_t index) const {
  return forward_backward(params, train_.features[index],
                          static_cast<std::size_t>(train_.targets[index]),
                          nullptr);
}

void TinyMlp::example_grad(const std::vector<double>& params,
                           std::size_t index, std::vector<double>& out) const {
  forward_backward(params, train_.features[index],
                   static_cast<std::size_t>(train_.targets[index]), &out);
}

std::size_t TinyMlp::predict(const std::vector<double>& params,
                             const std::vector<double>& x) const {
  const std::size_t b1 = hidden_ * input_dim_;
  const std::size_t w2 = b1 + hidden_;
  const std::size_t b2 = w2 + kClasses * hidden_;
  std::vector<double> h(hidden_);
  for (std::size_t u = 0; u < hidden_; ++u) {
    double z = params[b1 + u];
    for (std::size_t j = 0; j < input_dim_; ++j) {
      z += params[u * input_dim_ + j] * x[j];
    }
    h[u] = std::tanh(z);
  }
  std::size_t best = 0;
  double best_z = -1e300;
  for (std::size_t k = 0; k < kClasses; ++k) {
    double z = params[b2 + k];
    for (std::size_t u = 0; u < hidden_; ++u) {
      z += params[w2 + k * hidden_ + u] * h[u];
    }
    if (z > best_z) {
      best_z = z;
      best = k;
    }
  }
  return best;
}

double TinyMlp::eval_metric(const std::vector<double>& params) const {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < held_out_.size(); ++i) {
    if (predict(params, held_out_.features[i]) ==
        static_cast<std::size_t>(held_out_.targets[i])) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(held_out_.size());
}

std::vector<double> TinyMlp::initial_params(std::uint64_t seed) const {
  // Gaussian with variance 1/fan_in per layer; biases start at zero.
  Rng rng(derive_seed(seed, 0x77));
  std::vector<double> params(dimension(), 0.0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  std::size_t pos = 0;
  for (std::size_t i = 0; i < hidden_ * input_dim_; ++i) {
    params[pos++] = s1 * rng.normal();
  }
  pos += hidden_;  // b1
  for (std::size_t i = 0; i < kClasses * hidden_; ++i) {
    params[pos++] = s2 * rng.normal();
  }
  return params;
}

CsvLogistic::CsvLogistic(Dataset data) : data_(std::move(data)) {
  dim_ = data_.features.front().size();
  for (double t : data_.targets) {
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("csv logistic targets must be 0 or 1");
    }
  }
}

double CsvLogistic::example_loss(const std::vector<double>& params,
                                 std::size_t index) const {
  const auto& x = data_.features[index];
  double z = params[dim_];
  for (std::size_t j = 0; j < dim_; ++j) z += params[j] * x[j];
  return bce_from_logit(z, data_.targets[index]);
}

void CsvLogistic::example_grad(const std::vector<double>& params,
                               std::size_t index,
                               std::vector<double>& out) const {
  const auto& x = data_.features[index];
  double z = params[dim_];
  for (std::size_t j = 0; j < dim_; ++j) z += params[j] * x[j];
  const double residual = sigmoid(z) - data_.targets[index];
  out.resize(dim_ + 1);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = residual * x[j];
  out[dim_] = residual;
}

double CsvLogistic::eval_metric(const std::vector<double>& params) const {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto& x = data_.features[i];
    double z = params[dim_];
    for (std::size_t j = 0; j < dim_; ++j) z += params[j] * x[j];
    if ((z > 0.0 ? 1.0 : 0.0) == data_.targets[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data_.size());
}

std::unique_ptr<Problem> make_noisy_quadratic(double lambda, double sigma,
                                              std::size_t n, std::size_t dim,
                                              std::uint64_t seed) {
  return std::make_unique<NoisyQuadratic>(lambda, sigma, n, dim, seed);
}

std::unique_ptr<Problem> make_logistic_synthetic(std::size_t n, std::size_t dim,
                                                 double class_separation,
                                                 std::uint64_t seed) {
  return std::make_unique<LogisticSynthetic>(n, dim, class_separation, seed);
}

std::unique_ptr<Problem> make_tiny_mlp(std::size_t n, std::size_t dim,
                                       std::size_t hidden_units,
                                       std::uint64_t seed) {
  return std::make_unique<TinyMlp>(n, dim, hidden_units, seed);
}

double gradient_check(const Problem& problem, const std::vector<double>& params,
                      std::size_t index, double fd_step) {
  if (!(fd_step > 0.0)) throw std::invalid_argument("fd_step must be positive");
  std::vector<double> analytic;
  problem.example_grad(params, index, analytic);
  std::vector<double> w = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + fd_step;
    const double up = problem.example_loss(w, index);
    w[i] = saved - fd_step;
    const double down = problem.example_loss(w, index);
    w[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("non-finite loss during gradient check");
    }
    const double numeric = (up - down) / (2.0 * fd_step);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace gradnoise
