#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gradnoise {

struct Dataset {
  std::vector<std::vector<double>> features;
  std::vector<double> targets;

  std::size_t size() const { return features.size(); }
};

// Reads one example per line, comma separated, features then target.
Dataset load_delimited(const std::string& path, bool has_header = false);

// A differentiable objective over a finite dataset exposing per-example
// losses and gradients. Losses and gradients are per-example means, so the
// mean batch gradient is independent of batch size.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::size_t dataset_size() const = 0;

  virtual double example_loss(const std::vector<double>& params,
                              std::size_t index) const = 0;
  virtual void example_grad(const std::vector<double>& params,
                            std::size_t index,
                            std::vector<double>& out) const = 0;

  // Mean per-example gradient over the given batch.
  void batch_grad(const std::vector<double>& params,
                  const std::vector<std::size_t>& batch,
                  std::vector<double>& out) const;

  // (1/N) sum of per-example losses over the whole training set.
  double full_loss(const std::vector<double>& params) const;

  // Held-out metric; defaults to training loss for problems without a
  // held-out set.
  virtual double eval_metric(const std::vector<double>& params) const {
    return full_loss(params);
  }

  virtual std::vector<double> initial_params(std::uint64_t seed) const;
};

// Per-example loss (lambda/2)||w - x_i||^2 with x_i ~ N(0, sigma^2 I),
// drawn once at construction. The full-batch minimum is the sample mean.
class NoisyQuadratic : public Problem {
 public:
  NoisyQuadratic(double lambda, double sigma, std::size_t n, std::size_t dim,
                 std::uint64_t seed);

  std::size_t dimension() const override { return dim_; }
  std::size_t dataset_size() const override { return examples_.size(); }
  double example_loss(const std::vector<double>& params,
                      std::size_t index) const override;
  void example_grad(const std::vector<double>& params, std::size_t index,
                    std::vector<double>& out) const override;

  double curvature() const { return lambda_; }
  const std::vector<double>& sample_mean() const { return mean_; }
  const std::vector<std::vector<double>>& examples() const { return examples_; }

 private:
  double lambda_;
  std::size_t dim_;
  std::vector<std::vector<double>> examples_;
  std::vector<double> mean_;
};

// Binary classification on two Gaussian blobs with cross-entropy loss.
// Parameters are [weights..., bias]. A held-out set of N/4 points backs the
// accuracy metric.
class LogisticSynthetic : public Problem {
 public:
  LogisticSynthetic(std::size_t n, std::size_t dim, double class_separation,
                    std::uint64_t seed);

  std::size_t dimension() const override { return dim_ + 1; }
  std::size_t dataset_size() const override { return train_.size(); }
  double example_loss(const std::vector<double>& params,
                      std::size_t index) const override;
  void example_grad(const std::vector<double>& params, std::size_t index,
                    std::vector<double>& out) const override;
  double eval_metric(const std::vector<double>& params) const override;

 private:
  std::size_t dim_;
  Dataset train_;
  Dataset held_out_;
};

// One hidden layer with tanh units and softmax cross-entropy output, with a
// hand-written backward pass. Data is three interleaved spirals in the
// first two feature dimensions.
class TinyMlp : public Problem {
 public:
  TinyMlp(std::size_t n, std::size_t dim, std::size_t hidden_units,
          std::uint64_t seed);

  std::size_t dimension() const override;
  std::size_t dataset_size() const override { return train_.size(); }
  double example_loss(const std::vector<double>& params,
                      std::size_t index) const override;
  void example_grad(const std::vector<double>& params, std::size_t index,
                    std::vector<double>& out) const override;
  double eval_metric(const std::vector<double>& params) const override;
  std::vector<double> initial_params(std::uint64_t seed) const override;

  std::size_t hidden_units() const { return hidden_; }
  static constexpr std::size_t kClasses = 3;

 private:
  double forward_backward(const std::vector<double>& params,
                          const std::vector<double>& x, std::size_t label,
                          std::vector<double>* grad) const;
  std::size_t predict(const std::vector<double>& params,
                      const std::vector<double>& x) const;

  std::size_t input_dim_;
  std::size_t hidden_;
  Dataset train_;
  Dataset held_out_;
};

// Logistic regression over an ingested dataset (targets must be 0 or 1).
// Lets external corpora replace the synthetic generators; the eval metric
// is training-set accuracy since no held-out split is given.
class CsvLogistic : public Problem {
 public:
  explicit CsvLogistic(Dataset data);

  std::size_t dimension() const override { return dim_ + 1; }
  std::size_t dataset_size() const override { return data_.size(); }
  double example_loss(const std::vector<double>& params,
                      std::size_t index) const override;
  void example_grad(const std::vector<double>& params, std::size_t index,
                    std::vector<double>& out) const override;
  double eval_metric(const std::vector<double>& params) const override;

 private:
  std::size_t dim_;
  Dataset data_;
};

// Factory helpers mirroring the library's construction conventions.
std::unique_ptr<Problem> make_noisy_quadratic(double lambda, double sigma,
                                              std::size_t n, std::size_t dim,
                                              std::uint64_t seed);
std::unique_ptr<Problem> make_logistic_synthetic(std::size_t n, std::size_t dim,
                                                 double class_separation,
                                                 std::uint64_t seed);
std::unique_ptr<Problem> make_tiny_mlp(std::size_t n, std::size_t dim,
                                       std::size_t hidden_units,
                                       std::uint64_t seed);

// Max over coordinates of the relative error between the analytic gradient
// and a central finite difference, denominator max(|a|, |n|, 1e-12).
double gradient_check(const Problem& problem, const std::vector<double>& params,
                      std::size_t index, double fd_step);

}  // namespace gradnoise
