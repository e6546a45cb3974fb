#include "gradnoise/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gradnoise/optimizer.hpp"
#include "gradnoise/rng.hpp"
#include "gradnoise/sampler.hpp"
#include "gradnoise/schedule.hpp"

namespace gradnoise {

namespace {

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return sq;
}

void check_stability(double eps, double lambda, double momentum) {
  const double bound = 2.0 * (1.0 - momentum) * 0.9;
  if (eps * lambda >= bound) {
    std::ostringstream msg;
    msg << "unstable setting: eps*lambda = " << eps * lambda
        << " violates eps*lambda < 2(1-m)*0.9 = " << bound;
    throw InstabilityError(msg.str());
  }
}

}  // namespace

VarianceEstimate stationary_variance(const NoisyQuadratic& problem, double eps,
                                     long batch_size, double momentum,
                                     long burn_in, long n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 100) {
    throw std::invalid_argument("need at least 100 samples");
  }
  check_stability(eps, problem.curvature(), momentum);

  const std::size_t n = problem.dataset_size();
  BatchPlan plan(n, derive_seed(seed, 1));
  std::vector<double> w = problem.sample_mean();
  std::vector<double> accumulation(problem.dimension(), 0.0);
  std::vector<double> grad;
  std::vector<std::size_t> batch;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));

  const double initial_loss = problem.full_loss(w);
  const double divergence_limit = 1e6 * std::max(initial_loss, 1e-300);

  long updates = 0;
  std::size_t epoch = 0;
  while (updates < burn_in + n_samples) {
    plan.begin_epoch(epoch, static_cast<std::size_t>(batch_size));
    while (plan.next_batch(batch) && updates < burn_in + n_samples) {
      problem.batch_grad(w, batch, grad);
      if (momentum > 0.0) {
        momentum_step(accumulation, w, grad, eps, momentum);
      } else {
        sgd_step(w, grad, eps);
      }
      ++updates;
      if (updates > burn_in) {
        samples.push_back(squared_distance(w, problem.sample_mean()));
      }
    }
    ++epoch;
    const double loss = problem.full_loss(w);
    if (!std::isfinite(loss) || loss > divergence_limit) {
      std::ostringstream msg;
      msg << "dynamics diverged (loss " << loss << " vs initial "
          << initial_loss << "); stability bound is eps*lambda < "
          << 2.0 * (1.0 - momentum) * 0.9;
      throw InstabilityError(msg.str());
    }
  }

  VarianceEstimate est;
  est.samples_used = static_cast<long>(samples.size());
  est.burn_in_updates = burn_in;
  est.variance = std::accumulate(samples.begin(), samples.end(), 0.0) /
                 static_cast<double>(samples.size());

  // Batch means over 50 contiguous blocks; consecutive iterates are
  // autocorrelated and naive errors would understate the uncertainty.
  const std::size_t n_blocks = 50;
  const std::size_t block = samples.size() / n_blocks;
  std::vector<double> means(n_blocks, 0.0);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    for (std::size_t i = 0; i < block; ++i) {
      means[b] += samples[b * block + i];
    }
    means[b] /= static_cast<double>(block);
  }
  const double grand =
      std::accumulate(means.begin(), means.end(), 0.0) / n_blocks;
  double var_of_means = 0.0;
  for (double m : means) var_of_means += (m - grand) * (m - grand);
  var_of_means /= static_cast<double>(n_blocks - 1);
  est.standard_error = std::sqrt(var_of_means / n_blocks);
  return est;
}

SweepResult noise_scale_sweep(const NoisyQuadratic& problem,
                              const std::vector<SweepSetting>& settings,
                              long burn_in, long n_samples,
                              std::uint64_t seed) {
  SweepResult result;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const SweepSetting& s = settings[i];
    const VarianceEstimate est =
        stationary_variance(problem, s.eps, s.batch_size, s.momentum, burn_in,
                            n_samples, derive_seed(seed, i));
    SweepPoint p;
    p.g = noise_scale(s.eps, static_cast<long>(problem.dataset_size()),
                      s.batch_size, s.momentum);
    p.eps = s.eps;
    p.batch_size = s.batch_size;
    p.momentum = s.momentum;
    p.variance = est.variance;
    p.standard_error = est.standard_error;
    result.points.push_back(p);
  }
  std::sort(result.points.begin(), result.points.end(),
            [](const SweepPoint& a, const SweepPoint& b) { return a.g < b.g; });

  const std::size_t n = result.points.size();
  double mean_g = 0.0, mean_v = 0.0;
  for (const SweepPoint& p : result.points) {
    mean_g += p.g;
    mean_v += p.variance;
  }
  mean_g /= static_cast<double>(n);
  mean_v /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const SweepPoint& p : result.points) {
    sxx += (p.g - mean_g) * (p.g - mean_g);
    sxy += (p.g - mean_g) * (p.variance - mean_v);
    syy += (p.variance - mean_v) * (p.variance - mean_v);
  }
  if (n < 2 || sxx == 0.0) {
    throw FitError("sweep fit needs at least two distinct noise scales");
  }
  result.fit_slope = sxy / sxx;
  result.fit_intercept = mean_v - result.fit_slope * mean_g;
  if (syy == 0.0) {
    result.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (const SweepPoint& p : result.points) {
      const double fit = result.fit_intercept + result.fit_slope * p.g;
      ss_res += (p.variance - fit) * (p.variance - fit);
    }
    result.r_squared = 1.0 - ss_res / syy;
  }
  return result;
}

std::string sweep_to_delimited(const SweepResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "g,epsilon,batch_size,momentum,variance,stderr\n";
  for (const SweepPoint& p : result.points) {
    out << p.g << ',' << p.eps << ',' << p.batch_size << ',' << p.momentum
        << ',' << p.variance << ',' << p.standard_error << '\n';
  }
  return out.str();
}

std::vector<double> accumulation_growth_sim(double gradient, double momentum,
                                            long n_steps) {
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  std::vector<double> trajectory;
  trajectory.reserve(static_cast<std::size_t>(n_steps));
  double a = 0.0;
  for (long s = 0; s < n_steps; ++s) {
    a = momentum * a + gradient;
    trajectory.push_back(a);
  }
  return trajectory;
}

double lost_epochs_empirical(const NoisyQuadratic& problem, double eps,
                             long batch_size, double momentum,
                             std::uint64_t seed) {
  check_stability(eps, problem.curvature(), momentum);
  const std::size_t n = problem.dataset_size();
  const std::size_t dim = problem.dimension();
  const long s_max = static_cast<long>(std::ceil(15.0 / (1.0 - momentum)));

  // Start far from the minimum so the gradient is approximately constant.
  std::vector<double> start = problem.sample_mean();
  start[0] += 1e5;

  std::vector<double> g0(dim);
  {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    problem.batch_grad(start, all, g0);
  }
  double g0_norm = 0.0;
  for (double v : g0) g0_norm += v * v;
  g0_norm = std::sqrt(g0_norm);
  std::vector<double> direction(dim);
  for (std::size_t i = 0; i < dim; ++i) direction[i] = g0[i] / g0_norm;

  // Twin trajectories on identical batch sequences: one with the
  // accumulation grown in from zero, one started at its steady state. The
  // gap between them isolates the start-of-training deficit, and the shared
  // batches cancel the sampling noise. The parameter step uses the
  // pre-update accumulation (forward Euler on the continuous-time pair),
  // the reading under which the lost-epochs integral is exact.
  auto displacement = [&](double a0_scale) {
    std::vector<double> w = start;
    std::vector<double> a(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      a[i] = a0_scale * g0[i] / (1.0 - momentum);
    }
    BatchPlan plan(n, derive_seed(seed, 7));
    std::vector<double> grad;
    std::vector<std::size_t> batch;
    long updates = 0;
    std::size_t epoch = 0;
    while (updates < s_max) {
      plan.begin_epoch(epoch, static_cast<std::size_t>(batch_size));
      while (updates < s_max && plan.next_batch(batch)) {
        problem.batch_grad(w, batch, grad);
        for (std::size_t i = 0; i < dim; ++i) {
          w[i] -= eps * a[i];
          a[i] = momentum * a[i] + grad[i];
        }
        ++updates;
      }
      ++epoch;
    }
    double proj = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      proj += (start[i] - w[i]) * direction[i];
    }
    // Regime check on the trailing gradient.
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    problem.batch_grad(w, all, grad);
    double g_norm = 0.0;
    for (double v : grad) g_norm += v * v;
    g_norm = std::sqrt(g_norm);
    if (std::abs(g_norm - g0_norm) > 0.1 * g0_norm) {
      std::ostringstream msg;
      msg << "constant-gradient regime violated: gradient norm moved from "
          << g0_norm << " to " << g_norm;
      throw RegimeError(msg.str());
    }
    return proj;
  };

  const double d_reference = displacement(1.0);
  const double d_cold = displacement(0.0);
  const double steady_velocity = eps * g0_norm / (1.0 - momentum);
  const double deficit_updates = (d_reference - d_cold) / steady_velocity;
  return deficit_updates * static_cast<double>(batch_size) /
         static_cast<double>(n);
}

}  // namespace gradnoise
