#pragma once

#include <string>
#include <string_view>

namespace cyclehair {

enum class GeneratorFamily { ResNet, UNet };

/// Size of the hair-class vocabulary used for conditioning.
enum class ConditionMode { None, Four, Six };

std::string to_string(GeneratorFamily family);
GeneratorFamily parse_generator_family(std::string_view text);

std::string to_string(ConditionMode mode);
ConditionMode parse_condition_mode(std::string_view text);

/// Which reconstruction terms enter the generator objective, and their weights.
/// Codes follow the experiment table: "C" (cycle), "C+P" (cycle + perceptual), "P".
struct LossRegime {
  bool use_cycle = true;
  bool use_perceptual = false;
  double lambda_gan = 1.0;
  double lambda_cyc = 10.0;
  double lambda_perc = 10.0;

  static LossRegime from_code(std::string_view code);
  std::string code() const;
  bool valid() const;

  bool operator==(const LossRegime&) const = default;
};

/// Constant learning rate for `hold_epochs`, then linear decay to zero at
/// `total_epochs`.
struct Schedule {
  int total_epochs = 200;
  int hold_epochs = 100;
  double base_lr = 2e-4;

  bool operator==(const Schedule&) const = default;
};

}  // namespace cyclehair
