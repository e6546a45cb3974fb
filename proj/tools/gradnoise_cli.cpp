#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradnoise/dynamics.hpp"
#include "gradnoise/harness.hpp"
#include "gradnoise/schedule.hpp"

namespace {

using namespace gradnoise;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
}

std::string default_output_dir() {
  const char* env = std::getenv("GRADNOISE_OUT");
  return env != nullptr ? env : "gradnoise_out";
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::uint64_t>& seed_override,
                             const std::string& out_override) {
  ExperimentConfig config = ExperimentConfig::from_file(path);
  if (!seed_override.empty()) config.seeds = seed_override;
  if (!out_override.empty()) config.output_dir = out_override;
  if (config.output_dir.empty()) config.output_dir = default_output_dir();
  return config;
}

std::vector<long> parse_batches(const std::string& csv) {
  std::vector<long> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stol(cell));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Schedule engine and experiment harness for trading "
               "learning-rate decay against batch-size growth"};
  app.require_subcommand(1);

  // convert
  auto* convert = app.add_subcommand(
      "convert", "Convert a decaying-LR schedule into a batch-increase one");
  std::string convert_in, convert_out, convert_mode = "increase";
  long convert_bmax = 0;
  convert->add_option("--schedule", convert_in, "input schedule JSON")->required();
  convert->add_option("--out", convert_out, "output schedule JSON (default stdout)");
  convert->add_option("--b-max", convert_bmax, "batch size cap (0 = none)");
  convert->add_option("--mode", convert_mode, "decay|hybrid|increase");

  // count
  auto* count = app.add_subcommand("count", "Update counts for a schedule");
  std::string count_in;
  count->add_option("--schedule", count_in, "schedule JSON")->required();

  // paper-counts
  app.add_subcommand("paper-counts",
                     "Update counts of the four reference schedules");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
  std::string run_config, run_out;
  std::vector<std::uint64_t> run_seeds;
  std::uint64_t run_seed = 0;
  run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
  run_cmd->add_option("--seeds", run_seeds, "override the config's seed list");
  auto* seed_opt = run_cmd->add_option("--seed", run_seed, "run a single seed");
  run_cmd->add_option("--out", run_out, "output directory override");

  // compare
  auto* compare = app.add_subcommand("compare", "Compare schedule modes");
  std::string compare_config, compare_modes = "decay,hybrid,increase";
  compare->add_option("--config", compare_config, "experiment config JSON")->required();
  compare->add_option("--modes", compare_modes, "comma separated mode list");

  // sweep-lr
  auto* sweep = app.add_subcommand("sweep-lr", "Initial learning rate sweep");
  std::string sweep_config, sweep_lrs;
  bool scale_batch = false;
  sweep->add_option("--config", sweep_config, "experiment config JSON")->required();
  sweep->add_option("--lrs", sweep_lrs, "comma separated initial lr values")->required();
  sweep->add_flag("--scale-batch", scale_batch, "scale B proportionally to lr");

  // sweep-noise
  auto* noise = app.add_subcommand(
      "sweep-noise", "Stationary variance vs noise scale on the noisy quadratic");
  long noise_n = 2048, noise_dim = 4, noise_burn = 20000, noise_samples = 100000;
  double noise_lambda = 1.0, noise_sigma = 1.0, noise_eps = 0.02, noise_m = 0.0;
  std::string noise_batches = "16,32,64,128", noise_out;
  std::uint64_t noise_seed = 1;
  noise->add_option("--n", noise_n, "dataset size");
  noise->add_option("--dim", noise_dim, "dimension");
  noise->add_option("--lambda", noise_lambda, "curvature");
  noise->add_option("--sigma", noise_sigma, "example spread");
  noise->add_option("--eps", noise_eps, "learning rate");
  noise->add_option("--momentum", noise_m, "momentum coefficient");
  noise->add_option("--batches", noise_batches, "comma separated batch sizes");
  noise->add_option("--burn-in", noise_burn, "burn-in updates");
  noise->add_option("--samples", noise_samples, "samples per point");
  noise->add_option("--seed", noise_seed, "master seed");
  noise->add_option("--out", noise_out, "write delimited results here");

  // verify-accumulation
  auto* acc = app.add_subcommand(
      "verify-accumulation", "Simulated accumulation growth vs closed forms");
  double acc_g = 1.0, acc_m = 0.9;
  long acc_steps = 1000, acc_n = 50000, acc_b = 128;
  acc->add_option("--g", acc_g, "constant gradient G");
  acc->add_option("--momentum", acc_m, "momentum coefficient");
  acc->add_option("--steps", acc_steps, "updates to simulate");
  acc->add_option("--n", acc_n, "dataset size (for lost epochs)");
  acc->add_option("--b", acc_b, "batch size (for lost epochs)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (convert->parsed()) {
      Schedule s = Schedule::from_json(read_file(convert_in));
      Schedule out = s;
      if (convert_mode == "increase") {
        out = convert_to_batch_increase(
            s, convert_bmax > 0 ? std::optional<long>(convert_bmax) : std::nullopt);
      } else if (convert_mode == "hybrid") {
        ExperimentConfig c;
        c.schedule = s;
        c.mode = "hybrid";
        if (convert_bmax > 0) c.b_max = convert_bmax;
        out = c.effective_schedule();
      } else if (convert_mode != "decay") {
        throw std::invalid_argument("mode must be decay, hybrid or increase");
      }
      if (convert_out.empty()) {
        std::cout << out.to_json() << '\n';
      } else {
        write_file(convert_out, out.to_json() + "\n");
      }
    } else if (count->parsed()) {
      Schedule s = Schedule::from_json(read_file(count_in));
      std::cout << "exact_updates   " << update_count_exact(s) << '\n'
                << "integer_updates " << update_count_integer(s) << '\n';
    } else if (app.get_subcommand("paper-counts")->parsed()) {
      std::cout << paper_counts_table();
      for (const PaperCountRow& r : paper_counts()) {
        if (!r.pass) return 1;
      }
    } else if (run_cmd->parsed()) {
      if (*seed_opt) run_seeds = {run_seed};
      ExperimentConfig config = load_config(run_config, run_seeds, run_out);
      const std::vector<RunRecord> records = run(config);
      for (const RunRecord& rec : records) {
        std::cout << "seed " << rec.seed << ": "
                  << (rec.failed ? "diverged" : "ok") << ", final loss "
                  << rec.final_train_loss << ", metric "
                  << rec.final_eval_metric << ", updates "
                  << rec.total_updates << '\n';
      }
      std::cout << "records written to " << config.output_dir << '\n';
    } else if (compare->parsed()) {
      ExperimentConfig config = ExperimentConfig::from_file(compare_config);
      std::vector<std::string> modes;
      std::stringstream ss(compare_modes);
      std::string mode;
      while (std::getline(ss, mode, ',')) modes.push_back(mode);
      std::cout << compare_schedules(config, modes).table();
    } else if (sweep->parsed()) {
      ExperimentConfig config = ExperimentConfig::from_file(sweep_config);
      std::vector<double> lrs;
      std::stringstream ss(sweep_lrs);
      std::string cell;
      while (std::getline(ss, cell, ',')) lrs.push_back(std::stod(cell));
      std::cout << lr_sweep(config, lrs, scale_batch).table();
    } else if (noise->parsed()) {
      NoisyQuadratic problem(noise_lambda, noise_sigma,
                             static_cast<std::size_t>(noise_n),
                             static_cast<std::size_t>(noise_dim), noise_seed);
      std::vector<SweepSetting> settings;
      for (long b : parse_batches(noise_batches)) {
        settings.push_back({noise_eps, b, noise_m});
      }
      const SweepResult result = noise_scale_sweep(problem, settings, noise_burn,
                                                   noise_samples, noise_seed);
      const std::string text = sweep_to_delimited(result);
      if (noise_out.empty()) {
        std::cout << text;
      } else {
        write_file(noise_out, text);
      }
      std::cout << "fit: slope " << result.fit_slope << ", intercept "
                << result.fit_intercept << ", R^2 " << result.r_squared << '\n';
    } else if (acc->parsed()) {
      const AccumulationForecast f =
          accumulation_forecast(acc_g, acc_m, acc_n, acc_b);
      const std::vector<double> sim =
          accumulation_growth_sim(acc_g, acc_m, acc_steps);
      double worst_discrete = 0.0, worst_continuous = 0.0;
      for (long s = 1; s <= acc_steps; ++s) {
        const double a = sim[static_cast<std::size_t>(s - 1)];
        worst_discrete = std::max(
            worst_discrete, std::abs(a - f.discrete_at(static_cast<double>(s))));
        worst_continuous = std::max(
            worst_continuous,
            std::abs(a - f.continuous_at_updates(static_cast<double>(s))) /
                f.steady_state);
      }
      std::cout << "steady_state            " << f.steady_state << '\n'
                << "lost_epochs             " << f.lost_epochs << '\n'
                << "max |sim - discrete|    " << worst_discrete << '\n'
                << "max |sim - cont|/steady " << worst_continuous << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
