// adaptct: phantom generation, training, evaluation and plotting for
// adaptive scan-angle selection.

#include <iostream>

#include "CLI11.hpp"
#include "adaptct/cli.hpp"

int main(int argc, char** argv) {
  using namespace adaptct::cli;
  CLI::App app{"Adaptive sparse-angle CT: learn which projection angle to acquire next"};
  app.require_subcommand(1);

  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Config file (key = value, needs version = 1)");
    sub->add_option("--set", o.overrides, "Override a config key: --set key=value (repeatable)");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--data-dir", o.data_dir, "Directory holding the phantom files (default: --out)");
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; }, "Seed for this command");
    sub->add_option_function<int>("--workers", [&](const int& w) { o.workers = w; }, "Evaluation worker threads");
    sub->add_flag("--mask-repeats", o.mask_repeats, "Forbid choosing an angle twice in one episode");
    sub->add_flag("--greedy", o.greedy, "Evaluate the greedy learned policy only");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate training and test phantom files");
  common(gen);
  auto* train = app.add_subcommand("train", "Train the actor-critic agent");
  common(train);
  train->add_option("--resume", o.resume, "Continue from this checkpoint");
  auto* eval = app.add_subcommand("eval", "Evaluate policies on the test phantoms");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Learned policy; omit for baselines only");
  auto* plot = app.add_subcommand("plot", "Render metrics or report CSVs as SVG");
  common(plot);
  plot->add_option("csv", o.inputs, "Metrics, report or summary CSV files")->required();
  plot->add_option("--window", o.window, "Rolling window for training curves")->capture_default_str();
  auto* inspect = app.add_subcommand("inspect-checkpoint", "Print the contents of a checkpoint");
  inspect->add_option("checkpoint", o.inputs, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadConfig;
  }

  if (*gen) return cmd_gen_data(o, std::cout, std::cerr);
  if (*train) return cmd_train(o, std::cout, std::cerr);
  if (*eval) return cmd_eval(o, std::cout, std::cerr);
  if (*plot) return cmd_plot(o, std::cout, std::cerr);
  return cmd_inspect_checkpoint(o, std::cout, std::cerr);
}
