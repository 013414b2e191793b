#include "cyclehair/registry.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cyclehair/errors.hpp"

namespace cyclehair {

namespace {

struct TableRow {
  GeneratorFamily family;
  int n_blocks;
  int images;
  int size;
  ConditionMode mode;
  const char* loss;
};

// Generator, #images, image size, #classes, loss. Every run is 200 epochs.
constexpr TableRow kTable[12] = {
    {GeneratorFamily::ResNet, 9, 1000, 256, ConditionMode::None, "C"},
    {GeneratorFamily::ResNet, 6, 1000, 64, ConditionMode::Four, "C"},
    {GeneratorFamily::ResNet, 6, 4430, 64, ConditionMode::Four, "C"},
    {GeneratorFamily::ResNet, 6, 2000, 64, ConditionMode::Four, "C"},
    {GeneratorFamily::ResNet, 6, 2000, 128, ConditionMode::Four, "C"},
    {GeneratorFamily::ResNet, 6, 2000, 64, ConditionMode::Six, "C"},
    {GeneratorFamily::ResNet, 6, 2000, 128, ConditionMode::Six, "C"},
    {GeneratorFamily::ResNet, 6, 2000, 128, ConditionMode::Four, "C+P"},
    {GeneratorFamily::ResNet, 6, 2000, 128, ConditionMode::Four, "P"},
    {GeneratorFamily::UNet, 0, 2000, 128, ConditionMode::None, "C"},
    {GeneratorFamily::UNet, 0, 2000, 128, ConditionMode::Four, "P"},
    {GeneratorFamily::ResNet, 6, 4430, 128, ConditionMode::Four, "P"},
};

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::string format_double(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("'" + value + "' is not a valid number for " + key);
  }
  return out;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

ExperimentConfig preset(int n) {
  if (n < 1 || n > 12) throw UnknownPreset("no experiment preset " + std::to_string(n) + " (expected 1..12)");
  const TableRow& row = kTable[n - 1];
  ExperimentConfig config;
  config.name = "exp" + std::to_string(n);
  config.id = n;
  config.generator_family = row.family;
  config.n_blocks = row.n_blocks;
  config.n_train_images = row.images;
  config.n_test_images = 100;
  config.image_size = row.size;
  config.condition_mode = row.mode;
  config.loss_regime = LossRegime::from_code(row.loss);
  config.schedule = Schedule{200, 100, 2e-4};
  config.seed = 1000 + static_cast<std::uint64_t>(n);
  return config;
}

const std::vector<std::string>& desk_preset_names() {
  static const std::vector<std::string> names{"smoke", "overfit", "cond-smoke"};
  return names;
}

ExperimentConfig desk_preset(std::string_view name) {
  ExperimentConfig config;
  config.name = std::string(name);
  config.id = 0;
  config.generator_family = GeneratorFamily::ResNet;
  config.n_blocks = 6;
  config.image_size = 64;
  config.n_test_images = 2;
  config.checkpoint_every = 1;
  if (name == "smoke") {
    config.n_train_images = 4;
    config.condition_mode = ConditionMode::None;
    config.loss_regime = LossRegime::from_code("C");
    config.schedule = Schedule{2, 1, 2e-4};
    config.seed = 11;
  } else if (name == "overfit") {
    config.n_train_images = 2;
    config.condition_mode = ConditionMode::None;
    config.loss_regime = LossRegime::from_code("C");
    config.schedule = Schedule{150, 150, 2e-4};  // 300 steps at constant rate
    config.checkpoint_every = 50;
    config.seed = 12;
  } else if (name == "cond-smoke") {
    config.n_train_images = 8;
    config.condition_mode = ConditionMode::Four;
    config.loss_regime = LossRegime::from_code("P");
    config.schedule = Schedule{20, 20, 2e-4};  // 160 steps
    config.checkpoint_every = 10;
    config.seed = 13;
  } else {
    throw UnknownPreset("no desk preset '" + std::string(name) + "' (expected smoke, overfit or cond-smoke)");
  }
  return config;
}

ExperimentConfig preset_by_name(std::string_view name) {
  int n = 0;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), n);
  if (ec == std::errc{} && ptr == name.data() + name.size()) return preset(n);
  return desk_preset(name);
}

std::vector<std::string> validate(const ExperimentConfig& config) {
  std::vector<std::string> violations;
  auto check = [&](bool ok, std::string message) {
    if (!ok) violations.push_back(std::move(message));
  };

  check(!config.name.empty() && config.name.find_first_of(" \t/\\") == std::string::npos,
        "name must be non-empty and contain no whitespace or path separators");
  check(config.id >= 0 && config.id <= 12, "id must be 0 or 1..12");
  check(config.n_train_images > 0, "n_train_images must be positive");
  check(config.n_test_images >= 0, "n_test_images must be non-negative");
  check(config.image_size > 0, "image_size must be positive");
  check(config.base_width > 0, "base_width must be positive");
  check(config.batch_size > 0, "batch_size must be positive");
  check(config.pool_size >= 0, "pool_size must be non-negative");
  check(config.checkpoint_every > 0, "checkpoint_every must be positive");

  if (config.generator_family == GeneratorFamily::ResNet) {
    if (config.image_size > 0 && config.image_size % 4 != 0) {
      violations.push_back("resnet image_size must be divisible by 4");
    }
    if (config.image_size > 0 && config.image_size <= 128) {
      check(config.n_blocks == 6, "resnet at " + std::to_string(config.image_size) + " px needs n_blocks = 6, got " +
                                      std::to_string(config.n_blocks));
    } else if (config.image_size >= 256) {
      check(config.n_blocks == 9, "resnet at " + std::to_string(config.image_size) + " px needs n_blocks = 9, got " +
                                      std::to_string(config.n_blocks));
    } else if (config.image_size > 0) {
      violations.push_back("resnet block count is undefined between 128 and 256 px");
    }
  } else {
    check(is_power_of_two(config.image_size) && config.image_size >= 32,
          "unet image_size must be a power of two >= 32");
    check(config.n_blocks == 0, "unet takes no residual blocks (n_blocks = 0)");
  }

  if (config.condition_mode == ConditionMode::None) {
    check(config.embedding_dim >= 0, "embedding_dim must be non-negative");
  } else {
    check(config.embedding_dim > 0, "a conditional run needs embedding_dim > 0");
  }

  const auto& regime = config.loss_regime;
  check(regime.use_cycle || regime.use_perceptual, "loss regime needs cycle and/or perceptual reconstruction");
  check(regime.lambda_gan > 0 && regime.lambda_cyc > 0 && regime.lambda_perc > 0, "loss weights must be positive");
  if (regime.use_perceptual) check(config.image_size >= 16, "perceptual loss needs image_size >= 16");

  const auto& schedule = config.schedule;
  check(schedule.total_epochs > 0, "total_epochs must be positive");
  check(schedule.hold_epochs >= 0 && schedule.hold_epochs <= schedule.total_epochs,
        "hold_epochs must lie in [0, total_epochs]");
  check(schedule.base_lr > 0, "base_lr must be positive");
  return violations;
}

std::string generator_label(const ExperimentConfig& config) {
  if (config.generator_family == GeneratorFamily::ResNet) return "ResNet-" + std::to_string(config.n_blocks);
  return "U-Net-" + std::to_string(config.image_size);
}

std::string format_config(const ExperimentConfig& config) {
  std::ostringstream out;
  out << "name = " << config.name << '\n'
      << "id = " << config.id << '\n'
      << "generator_family = " << to_string(config.generator_family) << '\n'
      << "n_blocks = " << config.n_blocks << '\n'
      << "n_train_images = " << config.n_train_images << '\n'
      << "n_test_images = " << config.n_test_images << '\n'
      << "image_size = " << config.image_size << '\n'
      << "condition_mode = " << to_string(config.condition_mode) << '\n'
      << "loss_regime = " << config.loss_regime.code() << '\n'
      << "lambda_gan = " << format_double(config.loss_regime.lambda_gan) << '\n'
      << "lambda_cyc = " << format_double(config.loss_regime.lambda_cyc) << '\n'
      << "lambda_perc = " << format_double(config.loss_regime.lambda_perc) << '\n'
      << "total_epochs = " << config.schedule.total_epochs << '\n'
      << "hold_epochs = " << config.schedule.hold_epochs << '\n'
      << "base_lr = " << format_double(config.schedule.base_lr) << '\n'
      << "seed = " << config.seed << '\n'
      << "embedding_dim = " << config.embedding_dim << '\n'
      << "base_width = " << config.base_width << '\n'
      << "pool_size = " << config.pool_size << '\n'
      << "batch_size = " << config.batch_size << '\n'
      << "checkpoint_every = " << config.checkpoint_every << '\n';
  return out.str();
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"name", [&](const std::string&, const std::string& v) { config.name = v; }},
      {"id", [&](const std::string& k, const std::string& v) { config.id = parse_number<int>(k, v); }},
      {"generator_family",
       [&](const std::string&, const std::string& v) { config.generator_family = parse_generator_family(v); }},
      {"n_blocks", [&](const std::string& k, const std::string& v) { config.n_blocks = parse_number<int>(k, v); }},
      {"n_train_images",
       [&](const std::string& k, const std::string& v) { config.n_train_images = parse_number<int>(k, v); }},
      {"n_test_images",
       [&](const std::string& k, const std::string& v) { config.n_test_images = parse_number<int>(k, v); }},
      {"image_size", [&](const std::string& k, const std::string& v) { config.image_size = parse_number<int>(k, v); }},
      {"condition_mode",
       [&](const std::string&, const std::string& v) { config.condition_mode = parse_condition_mode(v); }},
      {"loss_regime",
       [&](const std::string&, const std::string& v) {
         const auto weights = config.loss_regime;
         config.loss_regime = LossRegime::from_code(v);
         config.loss_regime.lambda_gan = weights.lambda_gan;
         config.loss_regime.lambda_cyc = weights.lambda_cyc;
         config.loss_regime.lambda_perc = weights.lambda_perc;
       }},
      {"lambda_gan",
       [&](const std::string& k, const std::string& v) { config.loss_regime.lambda_gan = parse_number<double>(k, v); }},
      {"lambda_cyc",
       [&](const std::string& k, const std::string& v) { config.loss_regime.lambda_cyc = parse_number<double>(k, v); }},
      {"lambda_perc",
       [&](const std::string& k, const std::string& v) { config.loss_regime.lambda_perc = parse_number<double>(k, v); }},
      {"total_epochs",
       [&](const std::string& k, const std::string& v) { config.schedule.total_epochs = parse_number<int>(k, v); }},
      {"hold_epochs",
       [&](const std::string& k, const std::string& v) { config.schedule.hold_epochs = parse_number<int>(k, v); }},
      {"base_lr",
       [&](const std::string& k, const std::string& v) { config.schedule.base_lr = parse_number<double>(k, v); }},
      {"seed", [&](const std::string& k, const std::string& v) { config.seed = parse_number<std::uint64_t>(k, v); }},
      {"embedding_dim",
       [&](const std::string& k, const std::string& v) { config.embedding_dim = parse_number<int>(k, v); }},
      {"base_width", [&](const std::string& k, const std::string& v) { config.base_width = parse_number<int>(k, v); }},
      {"pool_size", [&](const std::string& k, const std::string& v) { config.pool_size = parse_number<int>(k, v); }},
      {"batch_size", [&](const std::string& k, const std::string& v) { config.batch_size = parse_number<int>(k, v); }},
      {"checkpoint_every",
       [&](const std::string& k, const std::string& v) { config.checkpoint_every = parse_number<int>(k, v); }},
  };

  std::istringstream in{std::string(text)};
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string content = trim(line);
    if (content.empty() || content[0] == '#') continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_number) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return config;
}

ExperimentConfig read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_config_file(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::binary);
  out << format_config(config);
  if (!out) throw ConfigError(path.string() + ": write failed");
}

}  // namespace cyclehair
