#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "gradnoise/optimizer.hpp"
#include "gradnoise/problem.hpp"
#include "gradnoise/rng.hpp"
#include "gradnoise/sampler.hpp"

using namespace gradnoise;

TEST_CASE("quadratic gradients and minimum") {
  NoisyQuadratic q(2.0, 1.0, 500, 3, 7);

  // Full-batch gradient vanishes at the sample mean.
  std::vector<std::size_t> all(q.dataset_size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> g;
  q.batch_grad(q.sample_mean(), all, g);
  for (double v : g) CHECK(std::abs(v) < 1e-12);

  // sigma = 0 collapses every example onto the mean: zero gradient noise.
  NoisyQuadratic flat(2.0, 0.0, 100, 3, 7);
  std::vector<double> w{0.3, -0.2, 0.9};
  std::vector<double> g1, g2;
  flat.example_grad(w, 0, g1);
  flat.example_grad(w, 57, g2);
  for (int j = 0; j < 3; ++j) CHECK(g1[j] == g2[j]);
}

TEST_CASE("quadratic per-example gradient covariance equals lambda^2 cov(x)") {
  const double lambda = 1.7;
  NoisyQuadratic q(lambda, 2.0, 400, 2, 11);
  const std::size_t n = q.dataset_size();
  std::vector<double> w{0.5, -1.0};

  // Sample covariance of the stored gradients vs lambda^2 * cov(x),
  // entry by entry.
  std::vector<std::vector<double>> grads(n);
  std::vector<double> mean_g(2, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    q.example_grad(w, i, grads[i]);
    for (int j = 0; j < 2; ++j) mean_g[j] += grads[i][j];
  }
  for (double& v : mean_g) v /= static_cast<double>(n);

  std::vector<double> mean_x(2, 0.0);
  for (const auto& x : q.examples())
    for (int j = 0; j < 2; ++j) mean_x[j] += x[j];
  for (double& v : mean_x) v /= static_cast<double>(n);

  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double cov_g = 0.0, cov_x = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cov_g += (grads[i][a] - mean_g[a]) * (grads[i][b] - mean_g[b]);
        cov_x += (q.examples()[i][a] - mean_x[a]) * (q.examples()[i][b] - mean_x[b]);
      }
      CHECK(std::abs(cov_g - lambda * lambda * cov_x) / static_cast<double>(n) <=
            1e-12);
    }
  }
}

TEST_CASE("logistic synthetic separable case trains to high accuracy") {
  LogisticSynthetic p(400, 4, 6.0, 3);
  std::vector<double> w = p.initial_params(1);
  std::vector<std::size_t> all(p.dataset_size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> g;
  for (int s = 0; s < 2000; ++s) {
    p.batch_grad(w, all, g);
    sgd_step(w, g, 0.5);
  }
  CHECK(p.eval_metric(w) >= 0.99);
}

TEST_CASE("logistic with zero separation stays near chance accuracy") {
  LogisticSynthetic p(2000, 4, 0.0, 5);
  std::vector<double> w = p.initial_params(1);
  std::vector<std::size_t> all(p.dataset_size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> g;
  for (int s = 0; s < 500; ++s) {
    p.batch_grad(w, all, g);
    sgd_step(w, g, 0.5);
  }
  // Held-out set of 500: binomial 99% interval around 0.5 is ~0.5 +/- 0.058.
  CHECK(std::abs(p.eval_metric(w) - 0.5) < 0.06);
}

TEST_CASE("logistic gradient at zero weights matches finite differences") {
  LogisticSynthetic p(64, 3, 2.0, 9);
  std::vector<double> w(p.dimension(), 0.0);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(gradient_check(p, w, i, 1e-6) <= 1e-7);
  }
}

TEST_CASE("tiny mlp gradient check at random points") {
  TinyMlp p(90, 2, 6, 21);
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(p.dimension());
    for (double& v : w) v = 0.5 * rng.normal();
    const std::size_t idx = rng.below(p.dataset_size());
    CHECK(gradient_check(p, w, idx, 1e-6) <= 1e-5);
  }
}

TEST_CASE("tiny mlp zero weights give identical per-unit gradients") {
  TinyMlp p(30, 2, 5, 2);
  std::vector<double> w(p.dimension(), 0.0);
  std::vector<double> g;
  p.example_grad(w, 0, g);
  // All hidden units are interchangeable at zero weights.
  const std::size_t in = 2, h = 5;
  for (std::size_t u = 1; u < h; ++u) {
    for (std::size_t j = 0; j < in; ++j) {
      CHECK(g[u * in + j] == g[j]);
    }
    CHECK(g[h * in + u] == g[h * in]);  // b1
  }
}

TEST_CASE("tiny mlp trains below its initial loss") {
  TinyMlp p(150, 2, 12, 4);
  std::vector<double> w = p.initial_params(8);
  const double initial = p.full_loss(w);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::momentum;
  cfg.momentum = 0.9;
  Optimizer opt(cfg, p.dimension());
  BatchPlan plan(p.dataset_size(), 8);
  std::vector<std::size_t> batch;
  std::vector<double> g;
  for (std::size_t e = 0; e < 40; ++e) {
    plan.begin_epoch(e, 16);
    while (plan.next_batch(batch)) {
      p.batch_grad(w, batch, g);
      opt.step(w, g, 0.2);
    }
  }
  CHECK(p.full_loss(w) < initial);
}

TEST_CASE("gradient check is near-exact on the quadratic") {
  NoisyQuadratic q(1.0, 1.0, 50, 4, 13);
  std::vector<double> w{0.1, -0.5, 2.0, 0.0};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(gradient_check(q, w, i, 1e-4) <= 1e-9);
  }
}

TEST_CASE("batch mean gradient equals mean of per-example gradients") {
  TinyMlp p(60, 2, 4, 6);
  Rng rng(40);
  std::vector<double> w(p.dimension());
  for (double& v : w) v = rng.normal();
  std::vector<std::size_t> batch{3, 7, 11, 20, 21, 40};
  std::vector<double> g_batch;
  p.batch_grad(w, batch, g_batch);
  std::vector<double> sum(p.dimension(), 0.0), g;
  for (std::size_t idx : batch) {
    p.example_grad(w, idx, g);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
  }
  for (std::size_t j = 0; j < sum.size(); ++j) {
    CHECK(std::abs(g_batch[j] - sum[j] / 6.0) <= 1e-12);
  }
}

TEST_CASE("epoch-weighted batch gradients reproduce the full gradient") {
  LogisticSynthetic p(100, 3, 2.0, 15);
  std::vector<double> w(p.dimension(), 0.1);
  BatchPlan plan(p.dataset_size(), 77);
  plan.begin_epoch(0, 32);
  std::vector<double> weighted(p.dimension(), 0.0), g;
  std::vector<std::size_t> batch;
  while (plan.next_batch(batch)) {
    p.batch_grad(w, batch, g);
    for (std::size_t j = 0; j < g.size(); ++j) {
      weighted[j] += g[j] * static_cast<double>(batch.size());
    }
  }
  std::vector<std::size_t> all(p.dataset_size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> full;
  p.batch_grad(w, all, full);
  for (std::size_t j = 0; j < full.size(); ++j) {
    CHECK(std::abs(weighted[j] / 100.0 - full[j]) <= 1e-12);
  }
}

TEST_CASE("datasets are seed deterministic") {
  NoisyQuadratic a(1.0, 1.0, 64, 3, 123), b(1.0, 1.0, 64, 3, 123);
  NoisyQuadratic c(1.0, 1.0, 64, 3, 124);
  CHECK(a.examples() == b.examples());
  CHECK(a.examples() != c.examples());

  TinyMlp m1(48, 2, 4, 9), m2(48, 2, 4, 9);
  CHECK(m1.initial_params(5) == m2.initial_params(5));
  CHECK(m1.initial_params(5) != m1.initial_params(6));
}

TEST_CASE("delimited dataset ingestion") {
  const auto path = std::filesystem::temp_directory_path() / "gn_test_data.csv";
  {
    std::ofstream out(path);
    out << "f1,f2,target\n1.0,2.0,0\n-0.5,0.25,1\n3.0,1.0,1\n0.0,0.0,0\n";
  }
  const Dataset ds = load_delimited(path.string(), true);
  CHECK(ds.size() == 4);
  CHECK(ds.features[1][0] == -0.5);
  CHECK(ds.targets[2] == 1.0);

  CsvLogistic p(ds);
  CHECK(p.dimension() == 3);
  std::vector<double> w(3, 0.0);
  CHECK(gradient_check(p, w, 1, 1e-6) <= 1e-7);
  std::filesystem::remove(path);
}
