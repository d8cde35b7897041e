// Command-line front end: complexity benchmarks with log-log slope fits,
// parameter reports, gradient checks, context-width sweeps, toy overfit
// training and forward evaluation over CSV features.
//
// Exit codes: 0 success, 1 usage error, 2 numerical/capacity error,
// 3 acceptance-threshold failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ldsa/bench.hpp"
#include "ldsa/checkpoint.hpp"
#include "ldsa/training.hpp"

namespace {

using ldsa::Variant;

std::ostream& open_or_stdout(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot open output file: " + path);
  return file;
}

int run_bench(const std::string& variant, const std::vector<std::size_t>& t_list,
              ldsa::BenchOptions opts, const std::string& out_path, bool fit) {
  const Variant v = ldsa::variant_from_string(variant);
  const auto records = ldsa::bench_runtime(v, t_list, opts);
  std::ofstream file;
  ldsa::write_bench_csv(records, open_or_stdout(file, out_path));
  if (fit) {
    const ldsa::SlopeFit f = ldsa::fit_loglog_slope(records);
    std::cerr << "slope=" << f.slope << " intercept=" << f.intercept << " r2=" << f.r2
              << "\n";
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed, const std::string& out_path) {
  const auto reports = ldsa::grad_check_suite(seed);
  std::ofstream file;
  open_or_stdout(file, out_path) << ldsa::grad_reports_to_json(seed, reports);
  for (const auto& r : reports)
    if (!r.pass) return 3;
  return 0;
}

int run_params(const std::string& config_path) {
  const ldsa::EncoderConfig cfg = ldsa::load_config(config_path);
  const ldsa::ParamTable table = ldsa::count_params(cfg);

  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(ldsa::config_to_json(cfg));
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : table.entries) {
    entries.push_back(nlohmann::ordered_json{{"component", e.component},
                                             {"name", e.name},
                                             {"rows", e.rows},
                                             {"cols", e.cols},
                                             {"count", e.count()},
                                             {"kind", e.kind}});
  }
  j["entries"] = std::move(entries);
  std::size_t weights = 0, biases = 0, norms = 0;
  for (const auto& e : table.entries) {
    if (e.kind == "weight") weights += e.count();
    if (e.kind == "bias") biases += e.count();
    if (e.kind == "norm") norms += e.count();
  }
  j["totals"] = nlohmann::ordered_json{
      {"weights", weights}, {"biases", biases}, {"norms", norms}, {"all", table.total()}};
  const ldsa::ParamTable block = ldsa::count_block_params(cfg);
  j["per_block"] = nlohmann::ordered_json{{"weights", block.total_weights()},
                                          {"all", block.total()}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_sweep(const std::string& config_path, const std::vector<std::size_t>& c_list,
              std::size_t t, std::size_t reps, std::uint64_t seed,
              const std::string& out_path) {
  const ldsa::EncoderConfig cfg = ldsa::load_config(config_path);
  ldsa::BenchOptions opts;
  opts.d = cfg.d;
  opts.h = cfg.h;
  opts.conv_kernel = cfg.conv_kernel;
  opts.ffn_inner = cfg.ffn_inner;
  opts.reps = reps;
  opts.seed = seed;
  const auto rows = ldsa::sweep_context_width(c_list, opts, t);
  std::ofstream file;
  ldsa::write_sweep_csv(rows, open_or_stdout(file, out_path));
  return 0;
}

int run_overfit(const std::string& config_path, std::size_t steps, std::uint64_t seed,
                std::uint64_t data_seed, std::size_t n_utts, std::size_t utt_frames,
                std::size_t n_classes, std::size_t warmup, double lr_scale, double min_acc,
                const std::string& out_path, const std::string& weights_dir) {
  const ldsa::EncoderConfig cfg = ldsa::load_config(config_path);
  const ldsa::ToyDataset data =
      ldsa::gen_toy_task(data_seed, n_utts, utt_frames, cfg.feat_dim, n_classes);
  ldsa::TrainOptions opts;
  opts.warmup = warmup;
  opts.lr_scale = lr_scale;
  ldsa::OverfitModel model;
  const ldsa::TrainMetrics metrics = ldsa::train_overfit(cfg, data, steps, seed, opts, &model);

  std::ofstream file;
  ldsa::write_metrics_csv(metrics, open_or_stdout(file, out_path));
  if (!weights_dir.empty()) ldsa::save_encoder_params(cfg, model.encoder, weights_dir);

  if (metrics.diverged) {
    std::cerr << "training diverged at step " << metrics.diverged_step << "\n";
    return 2;
  }
  std::cerr << "final accuracy " << metrics.final_accuracy << " after "
            << metrics.steps.size() << " steps\n";
  if (metrics.final_accuracy < min_acc) return 3;
  return 0;
}

int run_forward(const std::string& config_path, const std::string& weights_dir,
                const std::string& features_path, const std::string& out_path) {
  const ldsa::EncoderConfig cfg = ldsa::load_config(config_path);
  const ldsa::EncoderParams params = ldsa::load_encoder_params(cfg, weights_dir);
  const ldsa::Matrix features = ldsa::load_csv(features_path);
  const ldsa::Matrix y = ldsa::encoder_forward(features, cfg, params);
  std::ofstream file;
  ldsa::write_csv(y, open_or_stdout(file, out_path));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention mechanism verification and benchmark tool"};
  app.require_subcommand(1);
  // --h is a real option (head count), so help is long-form only.
  app.set_help_flag("--help", "print help");

  // bench
  auto* bench = app.add_subcommand("bench", "time attention forward passes over a T grid");
  bench->set_help_flag("--help", "print help");
  std::string bench_variant = "sa";
  std::vector<std::size_t> bench_t;
  ldsa::BenchOptions bench_opts;
  std::string bench_out;
  bool bench_fit = false;
  bench->add_option("--variant", bench_variant, "sa|dsa|ldsa|ha")->required();
  bench->add_option("--T", bench_t, "sequence lengths")->required()->delimiter(',');
  bench->add_option("--c", bench_opts.c, "context width");
  bench->add_option("--d", bench_opts.d, "model width");
  bench->add_option("--h", bench_opts.h, "head count");
  bench->add_option("--reps", bench_opts.reps, "timed repetitions (>= 5)");
  bench->add_option("--seed", bench_opts.seed, "rng seed");
  bench->add_option("--out", bench_out, "output CSV path (default stdout)");
  bench->add_flag("--full-block", bench_opts.full_block, "time a whole encoder block");
  bench->add_flag("--fit", bench_fit, "print the log-log slope fit to stderr");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::uint64_t gc_seed = 42;
  std::string gc_out;
  gradcheck->add_option("--seed", gc_seed, "rng seed");
  gradcheck->add_option("--out", gc_out, "output JSON path (default stdout)");

  // params
  auto* params = app.add_subcommand("params", "exact parameter accounting for a config");
  std::string params_config;
  params->add_option("--config", params_config, "encoder config JSON")->required();

  // sweep-c
  auto* sweep = app.add_subcommand("sweep-c", "parameter/runtime sweep over context widths");
  std::string sweep_config;
  std::vector<std::size_t> sweep_c;
  std::size_t sweep_t = 512, sweep_reps = 9;
  std::uint64_t sweep_seed = 1;
  std::string sweep_out;
  sweep->add_option("--config", sweep_config, "encoder config JSON")->required();
  sweep->add_option("--c", sweep_c, "odd context widths")->required()->delimiter(',');
  sweep->add_option("--T", sweep_t, "sequence length to time at");
  sweep->add_option("--reps", sweep_reps, "timed repetitions");
  sweep->add_option("--seed", sweep_seed, "rng seed");
  sweep->add_option("--out", sweep_out, "output CSV path (default stdout)");

  // overfit
  auto* overfit = app.add_subcommand("overfit", "train on the synthetic frame task");
  std::string of_config, of_out, of_weights;
  std::size_t of_steps = 2000, of_utts = 50, of_frames = 20, of_classes = 4;
  std::size_t of_warmup = 400;
  std::uint64_t of_seed = 1, of_data_seed = 7;
  double of_scale = 1.0, of_min_acc = 0.0;
  overfit->add_option("--config", of_config, "encoder config JSON")->required();
  overfit->add_option("--steps", of_steps, "full-batch training steps")->required();
  overfit->add_option("--seed", of_seed, "init seed");
  overfit->add_option("--data-seed", of_data_seed, "toy dataset seed");
  overfit->add_option("--utts", of_utts, "utterance count");
  overfit->add_option("--utt-frames", of_frames, "input frames per utterance");
  overfit->add_option("--classes", of_classes, "class count");
  overfit->add_option("--warmup", of_warmup, "noam warmup steps");
  overfit->add_option("--lr-scale", of_scale, "noam scale");
  overfit->add_option("--min-acc", of_min_acc, "exit 3 below this final accuracy");
  overfit->add_option("--out", of_out, "metrics CSV path (default stdout)");
  overfit->add_option("--save-weights", of_weights, "checkpoint directory");

  // forward
  auto* forward = app.add_subcommand("forward", "run the encoder over CSV features");
  std::string fw_config, fw_weights, fw_features, fw_out;
  forward->add_option("--config", fw_config, "encoder config JSON")->required();
  forward->add_option("--weights", fw_weights, "checkpoint directory")->required();
  forward->add_option("--features", fw_features, "input features CSV")->required();
  forward->add_option("--out", fw_out, "output CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (bench->parsed()) return run_bench(bench_variant, bench_t, bench_opts, bench_out, bench_fit);
    if (gradcheck->parsed()) return run_gradcheck(gc_seed, gc_out);
    if (params->parsed()) return run_params(params_config);
    if (sweep->parsed())
      return run_sweep(sweep_config, sweep_c, sweep_t, sweep_reps, sweep_seed, sweep_out);
    if (overfit->parsed())
      return run_overfit(of_config, of_steps, of_seed, of_data_seed, of_utts, of_frames,
                         of_classes, of_warmup, of_scale, of_min_acc, of_out, of_weights);
    if (forward->parsed()) return run_forward(fw_config, fw_weights, fw_features, fw_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
