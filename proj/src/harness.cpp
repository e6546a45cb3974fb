#include "gradnoise/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gradnoise/rng.hpp"
#include "gradnoise/sampler.hpp"

namespace gradnoise {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

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

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::unique_ptr<Problem> ProblemSpec::build() const {
  if (type == "quadratic") {
    return make_noisy_quadratic(lambda, sigma, static_cast<std::size_t>(n),
                                static_cast<std::size_t>(dim), seed);
  }
  if (type == "logistic") {
    return make_logistic_synthetic(static_cast<std::size_t>(n),
                                   static_cast<std::size_t>(dim),
                                   class_separation, seed);
  }
  if (type == "mlp") {
    return make_tiny_mlp(static_cast<std::size_t>(n),
                         static_cast<std::size_t>(dim),
                         static_cast<std::size_t>(hidden_units), seed);
  }
  if (type == "csv") {
    return std::make_unique<CsvLogistic>(load_delimited(path, has_header));
  }
  throw std::invalid_argument("unknown problem type '" + type + "'");
}

Schedule ExperimentConfig::effective_schedule() const {
  if (mode == "decay") return schedule;
  if (mode == "increase") return convert_to_batch_increase(schedule, b_max);
  if (mode == "hybrid") {
    if (schedule.phases.size() < 2) return schedule;
    const Phase& p0 = schedule.phases[0];
    const Phase& p1 = schedule.phases[1];
    long cap = std::llround(static_cast<double>(p0.batch_size) * p0.lr / p1.lr);
    cap = std::max(cap, p0.batch_size);
    if (b_max) cap = std::min(cap, *b_max);
    return convert_to_batch_increase(schedule, cap);
  }
  throw std::invalid_argument("unknown schedule mode '" + mode + "'");
}

void ExperimentConfig::validate() const {
  schedule.validate();
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (mode != "decay" && mode != "hybrid" && mode != "increase") {
    throw std::invalid_argument("mode must be decay, hybrid or increase");
  }
  if (problem.n != schedule.dataset_size) {
    throw std::invalid_argument("schedule dataset_size must match problem n");
  }
  effective_schedule().validate();
}

std::string ExperimentConfig::to_json() const {
  nlohmann::json j;
  nlohmann::json jp;
  jp["type"] = problem.type;
  jp["n"] = problem.n;
  jp["dim"] = problem.dim;
  jp["seed"] = problem.seed;
  if (problem.type == "quadratic") {
    jp["lambda"] = problem.lambda;
    jp["sigma"] = problem.sigma;
  } else if (problem.type == "logistic") {
    jp["class_separation"] = problem.class_separation;
  } else if (problem.type == "mlp") {
    jp["hidden_units"] = problem.hidden_units;
  } else if (problem.type == "csv") {
    jp["path"] = problem.path;
    jp["has_header"] = problem.has_header;
  }
  j["problem"] = jp;
  j["optimizer"] = {{"optimizer", to_string(optimizer.kind)},
                    {"momentum", optimizer.momentum},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"epsilon_stability", optimizer.epsilon_stability},
                    {"bias_correction", optimizer.bias_correction}};
  j["schedule"] = nlohmann::json::parse(schedule.to_json());
  j["mode"] = mode;
  if (b_max) j["b_max"] = *b_max;
  j["seeds"] = seeds;
  j["eval_every"] = eval_every;
  j["output_dir"] = output_dir;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  reject_unknown(j,
                 {"problem", "optimizer", "schedule", "mode", "b_max", "seeds",
                  "eval_every", "output_dir"},
                 "experiment config");
  ExperimentConfig c;

  const auto& jp = j.at("problem");
  reject_unknown(jp,
                 {"type", "n", "dim", "seed", "lambda", "sigma",
                  "class_separation", "hidden_units", "path", "has_header"},
                 "problem spec");
  c.problem.type = jp.at("type").get<std::string>();
  c.problem.n = jp.at("n").get<long>();
  c.problem.dim = jp.at("dim").get<long>();
  c.problem.seed = jp.value("seed", std::uint64_t{0});
  c.problem.lambda = jp.value("lambda", 1.0);
  c.problem.sigma = jp.value("sigma", 1.0);
  c.problem.class_separation = jp.value("class_separation", 4.0);
  c.problem.hidden_units = jp.value("hidden_units", 8L);
  c.problem.path = jp.value("path", std::string());
  c.problem.has_header = jp.value("has_header", false);

  const auto& jo = j.at("optimizer");
  reject_unknown(jo,
                 {"optimizer", "momentum", "beta1", "beta2",
                  "epsilon_stability", "bias_correction"},
                 "optimizer config");
  c.optimizer.kind = optimizer_kind_from_string(jo.at("optimizer").get<std::string>());
  c.optimizer.momentum = jo.value("momentum", 0.0);
  c.optimizer.beta1 = jo.value("beta1", 0.9);
  c.optimizer.beta2 = jo.value("beta2", 0.999);
  c.optimizer.epsilon_stability = jo.value("epsilon_stability", 1e-8);
  c.optimizer.bias_correction = jo.value("bias_correction", true);

  c.schedule = Schedule::from_json(j.at("schedule").dump());
  c.mode = j.value("mode", std::string("decay"));
  if (j.contains("b_max")) c.b_max = j.at("b_max").get<long>();
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.eval_every = j.value("eval_every", 1L);
  c.output_dir = j.value("output_dir", std::string());
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string RunRecord::to_csv() const {
  std::ostringstream out;
  out << "epoch,updates,train_loss,eval_metric,lr,batch_size,noise_scale\n";
  for (const RunRow& r : rows) {
    out << fmt(r.epoch) << ',' << r.updates << ',' << fmt(r.train_loss) << ','
        << fmt(r.eval_metric) << ',' << fmt(r.lr) << ',' << r.batch_size << ','
        << fmt(r.noise_scale_g) << '\n';
  }
  return out.str();
}

RunRecord RunRecord::from_csv(std::uint64_t seed, const std::string& text) {
  RunRecord rec;
  rec.seed = seed;
  std::stringstream ss(text);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;  // header
    }
    RunRow r;
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("malformed run CSV row");
    r.epoch = std::stod(cells[0]);
    r.updates = std::stol(cells[1]);
    r.train_loss = std::stod(cells[2]);
    r.eval_metric = std::stod(cells[3]);
    r.lr = std::stod(cells[4]);
    r.batch_size = std::stol(cells[5]);
    r.noise_scale_g = std::stod(cells[6]);
    rec.rows.push_back(r);
  }
  if (!rec.rows.empty()) {
    rec.final_train_loss = rec.rows.back().train_loss;
    rec.final_eval_metric = rec.rows.back().eval_metric;
    rec.total_updates = rec.rows.back().updates;
  }
  return rec;
}

namespace {

RunRecord run_single(const ExperimentConfig& config, const Problem& problem,
                     const Schedule& schedule, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.seed = seed;

  const long n = schedule.dataset_size;
  std::vector<double> params = problem.initial_params(derive_seed(seed, 0));
  BatchPlan plan(static_cast<std::size_t>(n), derive_seed(seed, 1));
  Optimizer optimizer(config.optimizer, problem.dimension());

  auto make_row = [&](double epoch, long updates) {
    RunRow row;
    row.epoch = epoch;
    row.updates = updates;
    row.train_loss = problem.full_loss(params);
    row.eval_metric = problem.eval_metric(params);
    if (!schedule.phases.empty()) {
      const Phase& p = schedule.phase_at(std::min(epoch, schedule.total_epochs));
      row.lr = p.lr;
      row.batch_size = p.batch_size;
      row.noise_scale_g = noise_scale(p.lr, n, p.batch_size, p.momentum);
    }
    return row;
  };

  rec.rows.push_back(make_row(0.0, 0));
  const double initial_loss = rec.rows.front().train_loss;
  const double divergence_limit = 1e6 * std::max(std::abs(initial_loss), 1.0);

  const long total_epochs = std::llround(schedule.total_epochs);
  long updates = 0;
  std::vector<double> grad;
  std::vector<std::size_t> batch;
  for (long e = 0; e < total_epochs && !rec.failed; ++e) {
    const Phase& phase = schedule.phase_at(static_cast<double>(e) + 0.5);
    plan.begin_epoch(static_cast<std::size_t>(e),
                     static_cast<std::size_t>(phase.batch_size));
    try {
      while (plan.next_batch(batch)) {
        problem.batch_grad(params, batch, grad);
        optimizer.step(params, grad, phase.lr, phase.momentum);
        ++updates;
      }
    } catch (const std::runtime_error&) {
      rec.failed = true;  // non-finite gradients: record and stop
      break;
    }
    if ((e + 1) % config.eval_every == 0 || e + 1 == total_epochs) {
      RunRow row = make_row(static_cast<double>(e + 1), updates);
      if (!std::isfinite(row.train_loss) || row.train_loss > divergence_limit) {
        rec.failed = true;  // keep the last finite row
        break;
      }
      rec.rows.push_back(row);
    }
  }

  rec.final_train_loss = rec.rows.back().train_loss;
  rec.final_eval_metric = rec.rows.back().eval_metric;
  rec.total_updates = rec.rows.back().updates;
  rec.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rec;
}

}  // namespace

std::vector<RunRecord> run(const ExperimentConfig& config) {
  config.validate();
  if (!config.output_dir.empty()) ensure_writable_dir(config.output_dir);
  const Schedule schedule = config.effective_schedule();
  const std::unique_ptr<Problem> problem = config.problem.build();
  if (static_cast<long>(problem->dataset_size()) != schedule.dataset_size) {
    throw std::invalid_argument("problem dataset size does not match schedule");
  }
  std::vector<RunRecord> records;
  for (std::uint64_t seed : config.seeds) {
    records.push_back(run_single(config, *problem, schedule, seed));
  }
  if (!config.output_dir.empty()) {
    persist_experiment(config, records, config.output_dir);
  }
  return records;
}

void ensure_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = fs::path(dir) / ".write_probe";
  std::ofstream out(probe);
  if (!out) {
    throw std::runtime_error("output directory is not writable: " + dir);
  }
  out.close();
  fs::remove(probe, ec);
}

void persist_experiment(const ExperimentConfig& config,
                        const std::vector<RunRecord>& records,
                        const std::string& dir) {
  ensure_writable_dir(dir);
  fs::create_directories(fs::path(dir) / "runs");
  {
    std::ofstream out(fs::path(dir) / "config.json");
    out << config.to_json() << '\n';
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const RunRecord& rec : records) {
    std::ofstream out(fs::path(dir) / "runs" /
                      (std::to_string(rec.seed) + ".csv"));
    out << rec.to_csv();
    summary.push_back({{"seed", rec.seed},
                       {"failed", rec.failed},
                       {"final_train_loss", rec.final_train_loss},
                       {"final_eval_metric", rec.final_eval_metric},
                       {"total_updates", rec.total_updates},
                       {"wall_time_seconds", rec.wall_time_seconds}});
  }
  // Summary last and via rename, so a complete summary implies complete runs.
  const fs::path tmp = fs::path(dir) / "summary.json.tmp";
  {
    std::ofstream out(tmp);
    out << summary.dump(2) << '\n';
  }
  fs::rename(tmp, fs::path(dir) / "summary.json");
}

ComparisonReport compare_schedules(const ExperimentConfig& base,
                                   const std::vector<std::string>& modes) {
  if (modes.empty()) throw std::invalid_argument("at least one mode required");
  ComparisonReport report;
  for (const std::string& mode : modes) {
    ExperimentConfig config = base;
    config.mode = mode;
    config.output_dir.clear();
    const std::vector<RunRecord> records = run(config);

    ModeSummary s;
    s.mode = mode;
    s.update_count = update_count_exact(config.effective_schedule());
    std::vector<double> losses, metrics;
    for (const RunRecord& r : records) {
      if (r.failed) {
        ++s.failed_runs;
        continue;
      }
      losses.push_back(r.final_train_loss);
      metrics.push_back(r.final_eval_metric);
      s.updates_executed = r.total_updates;
    }
    s.mean_final_loss = mean_of(losses);
    s.sd_final_loss = sd_of(losses);
    s.mean_final_metric = mean_of(metrics);
    s.sd_final_metric = sd_of(metrics);
    report.modes.push_back(s);
    report.records[mode] = records;
  }
  return report;
}

std::string ComparisonReport::table() const {
  std::ostringstream out;
  out << "mode        updates(exact)  executed  final_loss(mean+/-sd)  "
         "final_metric(mean+/-sd)  failed";
  if (modes.size() > 1) out << "  savings_vs_" << modes.front().mode;
  out << '\n';
  const double base = modes.front().update_count;
  for (const ModeSummary& m : modes) {
    char line[256];
    std::snprintf(line, sizeof(line),
                  "%-10s  %14.2f  %8ld  %10.6f +/- %-8.6f  %10.6f +/- %-8.6f  %6ld",
                  m.mode.c_str(), m.update_count, m.updates_executed,
                  m.mean_final_loss, m.sd_final_loss, m.mean_final_metric,
                  m.sd_final_metric, m.failed_runs);
    out << line;
    if (modes.size() > 1) {
      char ratio[32];
      std::snprintf(ratio, sizeof(ratio), "  %.4fx", base / m.update_count);
      out << ratio;
    }
    out << '\n';
  }
  return out.str();
}

LrSweepReport lr_sweep(const ExperimentConfig& base,
                       const std::vector<double>& lr_values, bool scale_batch) {
  if (lr_values.empty()) throw std::invalid_argument("lr sweep needs values");
  base.validate();
  const double lr0 = base.schedule.phases.at(0).lr;
  LrSweepReport report;
  for (double lr : lr_values) {
    const double k = lr / lr0;
    ExperimentConfig config = base;
    config.output_dir.clear();
    LrSweepRow row;
    row.lr = lr;
    row.factor = k;
    row.total_runs = static_cast<long>(base.seeds.size());
    try {
      if (scale_batch) {
        config.schedule = apply_linear_scaling(base.schedule, k);
      } else {
        for (Phase& p : config.schedule.phases) p.lr *= k;
      }
      row.batch_size = config.schedule.phases.at(0).batch_size;
      std::vector<double> metrics;
      for (const RunRecord& rec : run(config)) {
        if (rec.failed) {
          ++row.failed_runs;
        } else {
          metrics.push_back(rec.final_eval_metric);
        }
      }
      if (!metrics.empty()) {
        std::sort(metrics.begin(), metrics.end());
        const std::size_t n = metrics.size();
        row.median_final_metric = (n % 2 == 1)
                                      ? metrics[n / 2]
                                      : 0.5 * (metrics[n / 2 - 1] + metrics[n / 2]);
      } else {
        row.median_final_metric = std::nan("");
      }
    } catch (const std::invalid_argument&) {
      // e.g. scaled batch exceeds N: recorded as fully failed point
      row.failed_runs = row.total_runs;
      row.median_final_metric = std::nan("");
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string LrSweepReport::table() const {
  std::ostringstream out;
  out << "lr        factor    batch_size  median_final_metric  failed/total\n";
  for (const LrSweepRow& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-8.4g  %-8.4g  %10ld  %19.6f  %ld/%ld\n",
                  r.lr, r.factor, r.batch_size, r.median_final_metric,
                  r.failed_runs, r.total_runs);
    out << line;
  }
  return out.str();
}

std::vector<std::string> emit_curves(const std::vector<RunRecord>& records,
                                     const std::string& dir, CurveFormat format,
                                     CurveAxis axis) {
  if (records.empty()) throw std::invalid_argument("no records to emit");
  ensure_writable_dir(dir);
  const char* ext = format == CurveFormat::csv ? ".csv" : ".jsonl";
  std::vector<std::string> written;

  auto emit_rows = [&](std::ostream& out, const std::vector<RunRow>& rows,
                       bool header) {
    if (format == CurveFormat::csv) {
      if (header) {
        out << "epoch,updates,train_loss,eval_metric,lr,batch_size,noise_scale\n";
      }
      for (const RunRow& r : rows) {
        out << fmt(r.epoch) << ',' << r.updates << ',' << fmt(r.train_loss)
            << ',' << fmt(r.eval_metric) << ',' << fmt(r.lr) << ','
            << r.batch_size << ',' << fmt(r.noise_scale_g) << '\n';
      }
    } else {
      for (const RunRow& r : rows) {
        nlohmann::json j{{"epoch", r.epoch},          {"updates", r.updates},
                         {"train_loss", r.train_loss}, {"eval_metric", r.eval_metric},
                         {"lr", r.lr},                {"batch_size", r.batch_size},
                         {"noise_scale", r.noise_scale_g}};
        out << j.dump() << '\n';
      }
    }
  };

  std::vector<RunRow> aggregate;
  for (const RunRecord& rec : records) {
    const std::string path =
        (fs::path(dir) / ("run_" + std::to_string(rec.seed) + ext)).string();
    std::ofstream out(path);
    emit_rows(out, rec.rows, true);
    written.push_back(path);
    aggregate.insert(aggregate.end(), rec.rows.begin(), rec.rows.end());
  }
  std::stable_sort(aggregate.begin(), aggregate.end(),
                   [axis](const RunRow& a, const RunRow& b) {
                     return axis == CurveAxis::epochs ? a.epoch < b.epoch
                                                      : a.updates < b.updates;
                   });
  const std::string agg_path =
      (fs::path(dir) / (std::string("aggregate") + ext)).string();
  std::ofstream out(agg_path);
  emit_rows(out, aggregate, true);
  written.push_back(agg_path);
  return written;
}

Schedule wide_resnet_reference_schedule() {
  Schedule s;
  s.dataset_size = 50000;
  s.total_epochs = 200.0;
  const double lrs[] = {0.1, 0.02, 0.004, 0.0008};
  const double bounds[] = {0.0, 60.0, 120.0, 160.0, 200.0};
  for (int i = 0; i < 4; ++i) {
    s.phases.push_back({bounds[i], bounds[i + 1], lrs[i], 128, 0.9});
  }
  s.validate();
  return s;
}

std::vector<PaperCountRow> paper_counts() {
  const Schedule original = wide_resnet_reference_schedule();
  const long b_max = 5120;

  const Schedule increasing = convert_to_batch_increase(original);
  const Schedule increasing_capped = convert_to_batch_increase(original, b_max);
  const Schedule raised_lr =
      convert_to_batch_increase(apply_linear_scaling(original, 5.0), b_max);
  const Schedule raised_momentum = convert_to_batch_increase(
      apply_momentum_scaling(apply_linear_scaling(original, 5.0), 0.98), b_max);

  auto approx_bound = [](double count, double target) {
    return std::abs(count - target) / target <= 0.05;
  };

  std::vector<PaperCountRow> rows;
  double c = update_count_exact(original);
  rows.push_back({"Original training schedule", c, "~80000", approx_bound(c, 80000.0)});
  c = update_count_exact(increasing);
  rows.push_back({"Increasing batch size", c, "~29000", approx_bound(c, 29000.0)});
  c = update_count_exact(increasing_capped);
  rows.push_back({"Increasing batch size (B_max=5120)", c, "~29000",
                  approx_bound(c, 29000.0)});
  c = update_count_exact(raised_lr);
  rows.push_back({"Increased initial learning rate", c, "<6500", c < 6500.0});
  c = update_count_exact(raised_momentum);
  rows.push_back({"Increased momentum coefficient", c, "<2500", c < 2500.0});
  return rows;
}

std::string paper_counts_table() {
  std::ostringstream out;
  out << "schedule                               updates     bound    status\n";
  for (const PaperCountRow& r : paper_counts()) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-37s %10.2f  %7s    %s\n",
                  r.name.c_str(), r.update_count, r.bound.c_str(),
                  r.pass ? "pass" : "FAIL");
    out << line;
  }
  return out.str();
}

}  // namespace gradnoise
