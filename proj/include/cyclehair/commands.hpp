#pragma once

// The operator commands behind the cyclehair executable. Each throws a
// cyclehair::Error on failure; the executable maps that to a nonzero exit.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cyclehair/conditioning.hpp"
#include "cyclehair/corpus.hpp"
#include "cyclehair/grid.hpp"
#include "cyclehair/networks.hpp"
#include "cyclehair/registry.hpp"
#include "cyclehair/synthetic.hpp"

namespace cyclehair {

struct PrepareOptions {
  std::filesystem::path manifest_path;
  std::filesystem::path image_root;
  std::filesystem::path out_dir;
  ConditionMode mode = ConditionMode::Four;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
};

struct PrepareResult {
  std::size_t available_x = 0;
  std::size_t available_y = 0;
  corpus::Split x;
  corpus::Split y;
  corpus::ClassHistogram histogram;  // over every hairy-domain record
};

/// Filters both domains, splits them and writes trainX/testX/trainY/testY.txt,
/// attributes.txt (selected records only), image_root.txt and report.txt.
PrepareResult cmd_prepare(const PrepareOptions& options);

/// Hair classes that define the hairy domain for a mode. The unconditional
/// mode still needs visible hair, so it uses all six classes.
std::vector<std::string> hairy_classes_for(ConditionMode mode);

std::string format_prepare_report(const PrepareResult& result, const std::vector<std::string>& classes);

struct TrainCommand {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> preset;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "checkpoints";
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> resume;  // checkpoint or run directory
  std::optional<int> stop_after_epoch;
  std::optional<std::filesystem::path> extractor_weights;
  std::function<void(const std::string&)> on_step;
};

/// Config named by --config or --preset, with --seed applied.
ExperimentConfig resolve_train_config(const TrainCommand& command);

/// Returns the final checkpoint directory.
std::filesystem::path cmd_train(const TrainCommand& command);

enum class Direction { Forward, Reverse };
Direction parse_direction(std::string_view text);

/// One trained generator (G for forward, F for reverse) with its embedding.
struct InferenceModel {
  ExperimentConfig config;
  ConditionVocabulary vocabulary;
  Generator generator;
  ConditionEmbedding embedding{nullptr};
  std::filesystem::path checkpoint;

  /// Accepts a checkpoint directory or a run directory (latest epoch).
  static InferenceModel load(const std::filesystem::path& path, Direction direction);

  /// Parses a condition against the checkpoint vocabulary. Omitted is only
  /// valid for unconditional checkpoints. Throws ConditionError.
  ConditionVector resolve_condition(const std::optional<std::string>& text) const;

  /// (n, 3, s, s) in [-1, 1] to the same shape.
  torch::Tensor translate(const torch::Tensor& batch, const ConditionVector& condition) const;
};

/// Image files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct InferCommand {
  std::filesystem::path checkpoint;
  std::filesystem::path input_dir;
  std::optional<std::string> condition;
  std::filesystem::path out_dir;
  Direction direction = Direction::Forward;
};

struct InferResult {
  std::vector<std::filesystem::path> written;
  std::vector<std::pair<std::filesystem::path, std::string>> failures;
};

/// Writes `<stem>_fake.png` per input. Undecodable inputs are reported in
/// `failures` and skipped.
InferResult cmd_infer(const InferCommand& command);

struct GridCommand {
  std::filesystem::path checkpoint;
  std::filesystem::path input_dir;
  std::vector<std::string> conditions;  // e.g. "black,straight"; empty for unconditional
  std::filesystem::path out_path;
  Direction direction = Direction::Forward;
  std::optional<std::size_t> max_rows;
};

struct GridResult {
  GridLayout layout;
  std::vector<std::pair<std::filesystem::path, std::string>> failures;
};

GridResult cmd_grid(const GridCommand& command);

struct SynthCommand {
  std::filesystem::path out_dir;
  SyntheticOptions options;
};

corpus::AttributeManifest cmd_synth(const SynthCommand& command);

}  // namespace cyclehair
