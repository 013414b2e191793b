#include "cyclehair/types.hpp"

#include "cyclehair/errors.hpp"

namespace cyclehair {

std::string to_string(GeneratorFamily family) { return family == GeneratorFamily::ResNet ? "resnet" : "unet"; }

GeneratorFamily parse_generator_family(std::string_view text) {
  if (text == "resnet") return GeneratorFamily::ResNet;
  if (text == "unet") return GeneratorFamily::UNet;
  throw ConfigError("unknown generator family '" + std::string(text) + "' (expected resnet or unet)");
}

std::string to_string(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::None: return "none";
    case ConditionMode::Four: return "four";
    case ConditionMode::Six: return "six";
  }
  return "none";
}

ConditionMode parse_condition_mode(std::string_view text) {
  if (text == "none") return ConditionMode::None;
  if (text == "four") return ConditionMode::Four;
  if (text == "six") return ConditionMode::Six;
  throw ConfigError("unknown condition mode '" + std::string(text) + "' (expected none, four or six)");
}

LossRegime LossRegime::from_code(std::string_view code) {
  LossRegime regime;
  if (code == "C") {
    regime.use_cycle = true;
    regime.use_perceptual = false;
  } else if (code == "C+P") {
    regime.use_cycle = true;
    regime.use_perceptual = true;
  } else if (code == "P") {
    regime.use_cycle = false;
    regime.use_perceptual = true;
  } else {
    throw ConfigError("unknown loss regime '" + std::string(code) + "' (expected C, C+P or P)");
  }
  return regime;
}

std::string LossRegime::code() const {
  if (use_cycle && use_perceptual) return "C+P";
  if (use_cycle) return "C";
  if (use_perceptual) return "P";
  return "-";
}

bool LossRegime::valid() const {
  return (use_cycle || use_perceptual) && lambda_gan > 0 && lambda_cyc > 0 && lambda_perc > 0;
}

}  // namespace cyclehair
