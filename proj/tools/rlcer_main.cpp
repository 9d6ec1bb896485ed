#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "rlcer/metrics.hpp"
#include "rlcer/policy.hpp"
#include "rlcer/trainer.hpp"

namespace {

namespace fs = std::filesystem;

int run_train(const std::string& config_path,
              const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& mode,
              std::optional<std::string> out_dir) {
  rlcer::RunConfig config = rlcer::load_run_config(config_path);
  if (seed) config.seed = *seed;
  if (mode) {
    const auto parsed = rlcer::train_mode_from_string(*mode);
    if (!parsed) throw rlcer::ConfigError("unknown mode: " + *mode);
    config.mode = *parsed;
  }
  config.validate();

  if (!out_dir) {
    out_dir = std::string("runs/") + rlcer::to_string(config.mode) + "-s" +
              std::to_string(config.seed);
  }
  fs::create_directories(*out_dir);
  const std::string metrics_path = (fs::path(*out_dir) / "metrics.csv").string();
  const std::string checkpoint_path =
      (fs::path(*out_dir) / "checkpoint.json").string();

  rlcer::log_info(std::string("training mode=") + rlcer::to_string(config.mode) +
                  " seed=" + std::to_string(config.seed) + " -> " + *out_dir);
  const rlcer::TrainResult result = rlcer::run_training(config, metrics_path);

  rlcer::Checkpoint checkpoint;
  checkpoint.params = result.params;
  checkpoint.env = config.env;
  checkpoint.mode = rlcer::to_string(config.mode);
  checkpoint.seed = config.seed;
  rlcer::save_checkpoint(checkpoint_path, checkpoint);

  std::cout << "metrics: " << metrics_path << "\n";
  std::cout << "checkpoint: " << checkpoint_path << "\n";
  const auto& last = result.rows.back();
  std::printf("final train_accuracy %.4f", last.train_accuracy);
  if (last.eval_pass1) std::printf("  eval pass@1 %.4f", *last.eval_pass1);
  std::printf("\n");
  return 0;
}

int run_eval_cmd(const std::string& checkpoint_path, const std::string& hints,
                 int samples) {
  const auto mode = rlcer::hint_mode_from_string(hints);
  if (!mode) {
    throw rlcer::ConfigError("hints must be one of none|self|oracle");
  }
  if (samples < 1) throw rlcer::ConfigError("samples must be positive");
  const rlcer::Checkpoint checkpoint = rlcer::load_checkpoint(checkpoint_path);
  const rlcer::EvalReport report = rlcer::run_eval(
      checkpoint.params, checkpoint.env, samples, *mode, checkpoint.seed);
  std::printf("hints %s  samples %d\n", rlcer::to_string(*mode), samples);
  std::printf("pass@1 %.6f\n", report.pass1);
  std::printf("best_of_%d %.6f\n", samples, report.best_of_n);
  for (const auto& q : report.questions) {
    std::printf("question %llu rate %.6f any %d\n",
                static_cast<unsigned long long>(q.id), q.rate,
                q.any_correct ? 1 : 0);
  }
  return 0;
}

int run_export(const std::string& metrics_path, const std::string& format,
               std::optional<std::string> out_dir) {
  const auto rows = rlcer::read_metrics_csv(metrics_path);
  if (rows.empty()) throw rlcer::EmptyTable("metrics table is empty");
  if (!out_dir) out_dir = fs::path(metrics_path).parent_path().string();
  if (out_dir->empty()) *out_dir = ".";
  if (format == "csv") {
    const std::string path =
        (fs::path(*out_dir) /
         (fs::path(metrics_path).stem().string() + "_export.csv"))
            .string();
    rlcer::write_metrics_csv(path, rows);
    std::cout << "csv: " << path << "\n";
  } else if (format == "plots") {
    const std::string dir = (fs::path(*out_dir) / "plots").string();
    rlcer::write_metrics_plots(dir, rows);
    std::cout << "plots: " << dir << "\n";
  } else {
    throw rlcer::ConfigError("format must be csv or plots");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rubric-rewarded two-role policy optimization simulator"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run a training loop");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out_dir;
  train->add_option("--config", config_path, "Run config file")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--mode", mode, "Override the config mode");
  train->add_option("--out", out_dir, "Output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint_path;
  std::string hints = "none";
  int samples = 16;
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")
      ->required();
  eval->add_option("--hints", hints, "Hint mode: none|self|oracle");
  eval->add_option("--samples", samples, "Samples per question");

  auto* export_cmd = app.add_subcommand("export", "Re-export a metrics table");
  std::string metrics_path;
  std::string format;
  std::optional<std::string> export_out;
  export_cmd->add_option("--metrics", metrics_path, "Metrics CSV")->required();
  export_cmd->add_option("--format", format, "csv or plots")->required();
  export_cmd->add_option("--out", export_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return run_train(config_path, seed, mode, out_dir);
    if (eval->parsed()) return run_eval_cmd(checkpoint_path, hints, samples);
    if (export_cmd->parsed()) return run_export(metrics_path, format, export_out);
    std::cerr << "no subcommand given\n";
    return 1;
  } catch (const rlcer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const rlcer::EnvError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
