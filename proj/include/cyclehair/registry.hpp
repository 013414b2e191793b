#pragma once

// The twelve experiment presets, hermetic desk presets, validation and the
// flat key = value config file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cyclehair/types.hpp"

namespace cyclehair {

struct ExperimentConfig {
  std::string name = "custom";
  int id = 0;  // 1..12 for the experiment table, 0 otherwise
  GeneratorFamily generator_family = GeneratorFamily::ResNet;
  int n_blocks = 6;
  int n_train_images = 1000;
  int n_test_images = 100;
  int image_size = 128;
  ConditionMode condition_mode = ConditionMode::Four;
  LossRegime loss_regime;
  Schedule schedule;
  std::uint64_t seed = 0;
  int embedding_dim = 8;
  int base_width = 64;
  int pool_size = 50;
  int batch_size = 1;
  int checkpoint_every = 20;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Experiment n of the table (1..12). Throws UnknownPreset.
ExperimentConfig preset(int n);

/// "smoke", "overfit" or "cond-smoke". Throws UnknownPreset.
ExperimentConfig desk_preset(std::string_view name);
const std::vector<std::string>& desk_preset_names();

/// Accepts "1".."12" or a desk preset name.
ExperimentConfig preset_by_name(std::string_view name);

/// Empty when the config is consistent; otherwise one message per violation.
std::vector<std::string> validate(const ExperimentConfig& config);

/// Table label of the generator, e.g. "ResNet-6" or "U-Net-128".
std::string generator_label(const ExperimentConfig& config);

/// Steps per epoch for a given number of images per domain.
inline int steps_per_epoch(const ExperimentConfig& config) {
  return (config.n_train_images + config.batch_size - 1) / config.batch_size;
}

std::string format_config(const ExperimentConfig& config);
/// Starts from defaults and applies every `key = value` line. Unknown keys
/// and malformed values raise ConfigError naming the key.
ExperimentConfig parse_config(std::string_view text);

ExperimentConfig read_config_file(const std::filesystem::path& path);
void write_config_file(const std::filesystem::path& path, const ExperimentConfig& config);

}  // namespace cyclehair
