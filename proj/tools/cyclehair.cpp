// cyclehair: prepare data, train, translate and render condition grids.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "cyclehair/commands.hpp"
#include "cyclehair/errors.hpp"

namespace {

using namespace cyclehair;

void report_failures(const std::vector<std::pair<std::filesystem::path, std::string>>& failures) {
  for (const auto& [path, message] : failures) std::cerr << "skipped " << path.string() << ": " << message << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional bald-to-hairy image translation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;

  PrepareOptions prepare;
  std::string prepare_mode = "four";
  auto* prepare_cmd = app.add_subcommand("prepare", "Filter, split and report an attribute manifest");
  prepare_cmd->add_option("--manifest", prepare.manifest_path, "Attribute manifest (CelebA list_attr format)")
      ->required();
  prepare_cmd->add_option("--images", prepare.image_root, "Directory holding the image files")->required();
  prepare_cmd->add_option("--out", out, "Output directory")->required();
  prepare_cmd->add_option("--mode", prepare_mode, "Condition mode: none, four or six")->capture_default_str();
  prepare_cmd->add_option("--train", prepare.n_train, "Training images per domain")->required();
  prepare_cmd->add_option("--test", prepare.n_test, "Test images per domain")->default_val(100);
  prepare_cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();

  TrainCommand train;
  std::string config_path;
  std::string preset;
  std::string resume;
  std::string vgg_weights;
  int stop_after = 0;
  std::uint64_t train_seed = 0;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file or preset");
  auto* config_opt = train_cmd->add_option("--config", config_path, "Config file (key = value lines)");
  auto* preset_opt = train_cmd->add_option("--preset", preset, "Experiment 1..12, smoke, overfit or cond-smoke");
  config_opt->excludes(preset_opt);
  train_cmd->add_option("--data", train.data_dir, "Directory written by prepare")->required();
  train_cmd->add_option("--out", out, "Checkpoint root")->default_val("checkpoints");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");
  train_cmd->add_option("--resume", resume, "Checkpoint or run directory to resume from");
  train_cmd->add_option("--stop-after-epoch", stop_after, "Checkpoint and stop after this epoch");
  train_cmd->add_option("--vgg-weights", vgg_weights, "Pretrained VGG16 parameter file for the perceptual term");
  train_cmd->add_flag("--quiet", quiet, "Do not echo metrics lines");

  InferCommand infer;
  std::string infer_condition;
  std::string infer_direction = "forward";
  auto* infer_cmd = app.add_subcommand("infer", "Translate every image in a directory");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint or run directory")->required();
  infer_cmd->add_option("--input", infer.input_dir, "Directory of input images")->required();
  auto* infer_condition_opt =
      infer_cmd->add_option("--condition", infer_condition, "Target hair, e.g. black,straight");
  infer_cmd->add_option("--out", out, "Output directory")->required();
  infer_cmd->add_option("--direction", infer_direction, "forward (bald to hairy) or reverse")->capture_default_str();
  infer_cmd->add_option("--seed", seed, "Accepted for symmetry; inference is deterministic");

  GridCommand grid;
  std::string grid_direction = "forward";
  std::size_t max_rows = 0;
  auto* grid_cmd = app.add_subcommand("grid", "Render inputs under several conditions into one image");
  grid_cmd->add_option("--checkpoint", grid.checkpoint, "Checkpoint or run directory")->required();
  grid_cmd->add_option("--input", grid.input_dir, "Directory of input images")->required();
  grid_cmd->add_option("--condition", grid.conditions, "One column per condition (repeatable)");
  grid_cmd->add_option("--out", out, "Output PNG")->required();
  grid_cmd->add_option("--direction", grid_direction, "forward or reverse")->capture_default_str();
  grid_cmd->add_option("--rows", max_rows, "Use at most this many inputs");
  grid_cmd->add_option("--seed", seed, "Accepted for symmetry; rendering is deterministic");

  SynthCommand synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a procedural face dataset with attribute manifest");
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->add_option("--records", synth.options.n_records, "Number of images")->capture_default_str();
  synth_cmd->add_option("--width", synth.options.width, "Image width")->capture_default_str();
  synth_cmd->add_option("--height", synth.options.height, "Image height")->capture_default_str();
  synth_cmd->add_option("--seed", synth.options.seed, "Generator seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare_cmd) {
      prepare.out_dir = out;
      prepare.mode = parse_condition_mode(prepare_mode);
      prepare.seed = seed;
      const auto result = cmd_prepare(prepare);
      std::cout << format_prepare_report(result, hairy_classes_for(prepare.mode));
    } else if (*train_cmd) {
      if (!config_path.empty()) train.config_path = config_path;
      if (!preset.empty()) train.preset = preset;
      if (*seed_opt) train.seed = train_seed;
      if (!resume.empty()) train.resume = resume;
      if (stop_after > 0) train.stop_after_epoch = stop_after;
      if (!vgg_weights.empty()) train.extractor_weights = vgg_weights;
      train.out_dir = out;
      if (!quiet) {
        train.on_step = [](const std::string& line) { std::cout << line << '\n'; };
      }
      const auto checkpoint = cmd_train(train);
      std::cout << checkpoint.string() << '\n';
    } else if (*infer_cmd) {
      infer.out_dir = out;
      if (*infer_condition_opt) infer.condition = infer_condition;
      infer.direction = parse_direction(infer_direction);
      const auto result = cmd_infer(infer);
      for (const auto& path : result.written) std::cout << path.string() << '\n';
      report_failures(result.failures);
      if (!result.failures.empty()) return 1;
    } else if (*grid_cmd) {
      grid.out_path = out;
      grid.direction = parse_direction(grid_direction);
      if (max_rows > 0) grid.max_rows = max_rows;
      const auto result = cmd_grid(grid);
      std::cout << grid.out_path.string() << ' ' << result.layout.width() << 'x' << result.layout.height() << '\n';
      report_failures(result.failures);
      if (!result.failures.empty()) return 1;
    } else if (*synth_cmd) {
      synth.out_dir = out;
      const auto manifest = cmd_synth(synth);
      std::cout << manifest.records.size() << " images in " << (synth.out_dir / "images").string() << '\n';
    }
  } catch (const NumericAbort& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!e.last_good_checkpoint().empty()) std::cerr << "last good checkpoint: " << e.last_good_checkpoint() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
