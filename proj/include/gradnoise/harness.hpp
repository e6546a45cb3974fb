#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gradnoise/optimizer.hpp"
#include "gradnoise/problem.hpp"
#include "gradnoise/schedule.hpp"

namespace gradnoise {

struct ProblemSpec {
  std::string type;  // quadratic | logistic | mlp | csv
  long n = 0;
  long dim = 0;
  std::uint64_t seed = 0;
  double lambda = 1.0;            // quadratic
  double sigma = 1.0;             // quadratic
  double class_separation = 4.0;  // logistic
  long hidden_units = 8;          // mlp
  std::string path;               // csv
  bool has_header = false;        // csv

  std::unique_ptr<Problem> build() const;
};

struct ExperimentConfig {
  ProblemSpec problem;
  OptimizerConfig optimizer;
  Schedule schedule;
  std::string mode = "decay";  // decay | hybrid | increase
  std::optional<long> b_max;
  std::vector<std::uint64_t> seeds;
  long eval_every = 1;
  std::string output_dir;

  // The schedule actually trained: `decay` is the input schedule, `increase`
  // converts it wholesale, `hybrid` converts with B_max pinned at the first
  // step's batch size.
  Schedule effective_schedule() const;

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
  void validate() const;
};

struct RunRow {
  double epoch = 0.0;
  long updates = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
  double lr = 0.0;
  long batch_size = 0;
  double noise_scale_g = 0.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<RunRow> rows;
  bool failed = false;  // divergence is data, not a crash
  double final_train_loss = 0.0;
  double final_eval_metric = 0.0;
  long total_updates = 0;
  double wall_time_seconds = 0.0;

  std::string to_csv() const;
  static RunRecord from_csv(std::uint64_t seed, const std::string& text);
};

// One deterministic training run per seed. Divergent runs are marked failed
// with their last finite row retained.
std::vector<RunRecord> run(const ExperimentConfig& config);

// Writes config.json, runs/<seed>.csv and summary.json under `dir`.
// Probes writability before any training-side caller starts work.
void persist_experiment(const ExperimentConfig& config,
                        const std::vector<RunRecord>& records,
                        const std::string& dir);
void ensure_writable_dir(const std::string& dir);

struct ModeSummary {
  std::string mode;
  double update_count = 0.0;  // exact expected count
  long updates_executed = 0;
  double mean_final_loss = 0.0;
  double sd_final_loss = 0.0;
  double mean_final_metric = 0.0;
  double sd_final_metric = 0.0;
  long failed_runs = 0;
};

struct ComparisonReport {
  std::vector<ModeSummary> modes;
  std::map<std::string, std::vector<RunRecord>> records;
  std::string table() const;  // degenerates to a run summary for one mode
};

ComparisonReport compare_schedules(const ExperimentConfig& base,
                                   const std::vector<std::string>& modes);

struct LrSweepRow {
  double lr = 0.0;
  double factor = 0.0;
  long batch_size = 0;
  double median_final_metric = 0.0;
  long failed_runs = 0;
  long total_runs = 0;
};

struct LrSweepReport {
  std::vector<LrSweepRow> rows;
  std::string table() const;
};

// Reruns the base config at each initial learning rate, optionally scaling
// B proportionally. Unstable points are recorded as failed, never fatal.
LrSweepReport lr_sweep(const ExperimentConfig& base,
                       const std::vector<double>& lr_values, bool scale_batch);

enum class CurveFormat { csv, jsonl };
enum class CurveAxis { epochs, updates };

// One file per run plus an aggregate; rows sorted by the chosen axis.
std::vector<std::string> emit_curves(const std::vector<RunRecord>& records,
                                     const std::string& dir,
                                     CurveFormat format, CurveAxis axis);

struct PaperCountRow {
  std::string name;
  double update_count = 0.0;
  std::string bound;
  bool pass = false;
};

// The four reference batch-size scaling plans (N = 50000, decays at epochs
// 60/120/160 of 200) and their expected update counts against the reported
// bounds. Pure schedule arithmetic.
std::vector<PaperCountRow> paper_counts();
std::string paper_counts_table();

// Reference schedules used by paper_counts and the test suites.
Schedule wide_resnet_reference_schedule();

}  // namespace gradnoise
