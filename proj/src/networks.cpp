#include "cyclehair/networks.hpp"

#include <map>
#include <sstream>

#include "cyclehair/errors.hpp"

namespace cyclehair {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding, bool bias) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(bias));
}

nn::ConvTranspose2d conv_transpose(int in, int out, int kernel, int stride, int padding, int output_padding,
                                   bool bias) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, kernel)
                                 .stride(stride)
                                 .padding(padding)
                                 .output_padding(output_padding)
                                 .bias(bias));
}

nn::InstanceNorm2d instance_norm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true).track_running_stats(false));
}

nn::LeakyReLU leaky() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

std::map<std::string, std::string> parse_fields(std::string_view text, std::string_view kind) {
  std::istringstream in{std::string(text)};
  std::string word;
  in >> word;
  if (word != kind) throw SpecError("expected a '" + std::string(kind) + "' spec, got '" + std::string(text) + "'");
  std::map<std::string, std::string> fields;
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw SpecError("malformed spec field '" + word + "'");
    fields[word.substr(0, eq)] = word.substr(eq + 1);
  }
  return fields;
}

int int_field(const std::map<std::string, std::string>& fields, const std::string& key) {
  const auto it = fields.find(key);
  if (it == fields.end()) throw SpecError("spec is missing '" + key + "'");
  try {
    std::size_t used = 0;
    const int value = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return value;
  } catch (const std::exception&) {
    throw SpecError("spec field '" + key + "' is not an integer");
  }
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::vector<int> int_list(const std::map<std::string, std::string>& fields, const std::string& key) {
  const auto it = fields.find(key);
  if (it == fields.end()) throw SpecError("spec is missing '" + key + "'");
  std::vector<int> values;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      values.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw SpecError("spec field '" + key + "' is not an integer list");
    }
  }
  return values;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

GeneratorSpec GeneratorSpec::resnet(int image_size, int in_channels, int base_width) {
  return GeneratorSpec{GeneratorFamily::ResNet, image_size, in_channels, base_width, resnet_blocks_for(image_size)};
}

GeneratorSpec GeneratorSpec::unet(int image_size, int in_channels, int base_width) {
  return GeneratorSpec{GeneratorFamily::UNet, image_size, in_channels, base_width, 0};
}

std::string GeneratorSpec::describe() const {
  std::ostringstream out;
  out << "generator family=" << to_string(family) << " image_size=" << image_size << " in_channels=" << in_channels
      << " base_width=" << base_width << " n_blocks=" << n_blocks;
  return out.str();
}

GeneratorSpec GeneratorSpec::parse(std::string_view text) {
  const auto fields = parse_fields(text, "generator");
  const auto family = fields.find("family");
  if (family == fields.end()) throw SpecError("spec is missing 'family'");
  GeneratorSpec spec;
  try {
    spec.family = parse_generator_family(family->second);
  } catch (const ConfigError& e) {
    throw SpecError(e.what());
  }
  spec.image_size = int_field(fields, "image_size");
  spec.in_channels = int_field(fields, "in_channels");
  spec.base_width = int_field(fields, "base_width");
  spec.n_blocks = int_field(fields, "n_blocks");
  return spec;
}

int resnet_blocks_for(int image_size) {
  if (image_size <= 0) throw SpecError("image size must be positive");
  if (image_size <= 128) return 6;
  if (image_size >= 256) return 9;
  throw SpecError("no residual block count is defined for " + std::to_string(image_size) + " px images");
}

int unet_levels_for(int image_size) {
  if (!is_power_of_two(image_size) || image_size < 32) {
    throw SpecError("U-Net image size must be a power of two >= 32, got " + std::to_string(image_size));
  }
  int levels = 0;
  for (int s = image_size; s > 1; s /= 2) ++levels;
  return levels;
}

void validate(const GeneratorSpec& spec) {
  if (spec.in_channels < 1) throw SpecError("generator needs at least one input channel");
  if (spec.base_width < 1) throw SpecError("generator base width must be positive");
  if (spec.family == GeneratorFamily::ResNet) {
    if (spec.image_size % 4 != 0) throw SpecError("residual generator image size must be divisible by 4");
    if (spec.n_blocks != resnet_blocks_for(spec.image_size)) {
      throw SpecError("residual generator at " + std::to_string(spec.image_size) + " px needs " +
                      std::to_string(resnet_blocks_for(spec.image_size)) + " blocks, spec has " +
                      std::to_string(spec.n_blocks));
    }
  } else {
    unet_levels_for(spec.image_size);
  }
}

std::string DiscriminatorSpec::describe() const {
  std::ostringstream out;
  out << "discriminator in_channels=" << in_channels << " widths=" << join(widths) << " kernel=" << kernel
      << " strides=" << join(strides) << " padding=" << padding;
  return out.str();
}

DiscriminatorSpec DiscriminatorSpec::parse(std::string_view text) {
  const auto fields = parse_fields(text, "discriminator");
  DiscriminatorSpec spec;
  spec.in_channels = int_field(fields, "in_channels");
  spec.widths = int_list(fields, "widths");
  spec.kernel = int_field(fields, "kernel");
  spec.strides = int_list(fields, "strides");
  spec.padding = int_field(fields, "padding");
  return spec;
}

void validate(const DiscriminatorSpec& spec) {
  if (spec.in_channels < 1) throw SpecError("discriminator needs at least one input channel");
  if (spec.widths.empty()) throw SpecError("discriminator needs at least one hidden layer");
  if (spec.strides.size() != spec.widths.size() + 1) {
    throw SpecError("discriminator needs one stride per hidden layer plus one for the output layer");
  }
  if (spec.kernel < 1 || spec.padding < 0) throw SpecError("invalid discriminator kernel or padding");
  for (int w : spec.widths) {
    if (w < 1) throw SpecError("discriminator widths must be positive");
  }
  for (int s : spec.strides) {
    if (s < 1) throw SpecError("discriminator strides must be positive");
  }
}

int receptive_field(std::span<const int> kernels, std::span<const int> strides) {
  int field = 1;
  int jump = 1;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    field += (kernels[i] - 1) * jump;
    jump *= strides[i];
  }
  return field;
}

int receptive_field(const DiscriminatorSpec& spec) {
  validate(spec);
  const std::vector<int> kernels(spec.strides.size(), spec.kernel);
  return receptive_field(kernels, spec.strides);
}

int patch_map_size(const DiscriminatorSpec& spec, int input_size) {
  int n = input_size;
  for (int s : spec.strides) {
    n = (n + 2 * spec.padding - spec.kernel) / s + 1;
    if (n < 1) throw ShapeError("input of " + std::to_string(input_size) + " px is too small for the discriminator");
  }
  return n;
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  conv1 = register_module("conv1", conv(channels, channels, 3, 1, 1, false));
  norm1 = register_module("norm1", instance_norm(channels));
  conv2 = register_module("conv2", conv(channels, channels, 3, 1, 1, false));
  norm2 = register_module("norm2", instance_norm(channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto branch = torch::relu(norm1(conv1(x)));
  branch = norm2(conv2(branch));
  return x + branch;
}

ResnetGeneratorImpl::ResnetGeneratorImpl(const GeneratorSpec& spec) : GeneratorImpl(spec) {
  const int w = spec.base_width;
  head = register_module(
      "head", nn::Sequential(nn::ReflectionPad2d(3), conv(spec.in_channels, w, 7, 1, 0, false), instance_norm(w),
                             nn::ReLU(), conv(w, 2 * w, 3, 2, 1, false), instance_norm(2 * w), nn::ReLU(),
                             conv(2 * w, 4 * w, 3, 2, 1, false), instance_norm(4 * w), nn::ReLU()));
  blocks = nn::Sequential();
  for (int i = 0; i < spec.n_blocks; ++i) blocks->push_back(ResidualBlock(4 * w));
  blocks = register_module("blocks", blocks);
  tail = register_module(
      "tail", nn::Sequential(conv_transpose(4 * w, 2 * w, 3, 2, 1, 1, false), instance_norm(2 * w), nn::ReLU(),
                             conv_transpose(2 * w, w, 3, 2, 1, 1, false), instance_norm(w), nn::ReLU(),
                             nn::ReflectionPad2d(3), conv(w, 3, 7, 1, 0, true), nn::Tanh()));
}

torch::Tensor ResnetGeneratorImpl::forward(const torch::Tensor& x) {
  torch::Tensor features;
  if (spec().in_channels > 3) {
    // Constant condition planes would be cancelled by the stem's instance
    // norm, so their share of the stem conv is added after normalizing.
    const auto padded = head[0]->as<nn::ReflectionPad2d>()->forward(x);
    const auto& weight = head[1]->as<nn::Conv2d>()->weight;
    const auto image = torch::conv2d(padded.slice(1, 0, 3), weight.slice(1, 0, 3));
    const auto condition = torch::conv2d(padded.slice(1, 3), weight.slice(1, 3));
    features = head[2]->as<nn::InstanceNorm2d>()->forward(image) + condition;
    for (auto it = head->begin() + 3; it != head->end(); ++it) features = it->forward(features);
  } else {
    features = head->forward(x);
  }
  if (!blocks->is_empty()) features = blocks->forward(features);
  return tail->forward(features);
}

UnetLevelImpl::UnetLevelImpl(int outer_channels, int inner_channels, int input_channels,
                             std::shared_ptr<UnetLevelImpl> inner_level, bool is_outermost)
    : inner(std::move(inner_level)), outermost(is_outermost) {
  const bool innermost = inner == nullptr;
  down = nn::Sequential();
  up = nn::Sequential();
  if (outermost) {
    down->push_back(conv(input_channels, inner_channels, 4, 2, 1, true));
    up->push_back(nn::ReLU());
    up->push_back(conv_transpose(2 * inner_channels, outer_channels, 4, 2, 1, 0, true));
    up->push_back(nn::Tanh());
  } else if (innermost) {
    // 1x1 at the bottom: no normalization on the down side.
    down->push_back(leaky());
    down->push_back(conv(input_channels, inner_channels, 4, 2, 1, true));
    up->push_back(nn::ReLU());
    up->push_back(conv_transpose(inner_channels, outer_channels, 4, 2, 1, 0, false));
    up->push_back(instance_norm(outer_channels));
  } else {
    down->push_back(leaky());
    down->push_back(conv(input_channels, inner_channels, 4, 2, 1, false));
    down->push_back(instance_norm(inner_channels));
    up->push_back(nn::ReLU());
    up->push_back(conv_transpose(2 * inner_channels, outer_channels, 4, 2, 1, 0, false));
    up->push_back(instance_norm(outer_channels));
  }
  down = register_module("down", down);
  if (inner) register_module("inner", inner);
  up = register_module("up", up);
}

torch::Tensor UnetLevelImpl::forward(const torch::Tensor& x) {
  auto y = down->forward(x);
  if (inner) y = inner->forward(y);
  y = up->forward(y);
  return outermost ? y : torch::cat({x, y}, 1);
}

UnetGeneratorImpl::UnetGeneratorImpl(const GeneratorSpec& spec) : GeneratorImpl(spec) {
  const int levels = unet_levels_for(spec.image_size);
  const int cap = 8 * spec.base_width;
  std::vector<int> widths;
  for (int i = 0, w = spec.base_width; i < levels; ++i, w = std::min(2 * w, cap)) widths.push_back(w);

  std::shared_ptr<UnetLevelImpl> level;
  for (int i = levels - 1; i >= 1; --i) {
    level = std::make_shared<UnetLevelImpl>(widths[i - 1], widths[i], widths[i - 1], level, false);
  }
  root = register_module("root", std::make_shared<UnetLevelImpl>(3, widths[0], spec.in_channels, level, true));
}

torch::Tensor UnetGeneratorImpl::forward(const torch::Tensor& x) { return root->forward(x); }

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  layers = nn::Sequential();
  int in = spec.in_channels;
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    const bool normalized = i > 0;
    layers->push_back(conv(in, spec.widths[i], spec.kernel, spec.strides[i], spec.padding, !normalized));
    if (normalized) layers->push_back(instance_norm(spec.widths[i]));
    layers->push_back(leaky());
    in = spec.widths[i];
  }
  layers->push_back(conv(in, 1, spec.kernel, spec.strides.back(), spec.padding, true));
  layers = register_module("layers", layers);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return layers->forward(x); }

void initialize_weights(torch::nn::Module& module, std::uint64_t seed) {
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (const auto& item : module.named_modules()) {
    auto& m = *item.value();
    if (auto* c = m.as<nn::Conv2d>()) {
      c->weight.normal_(0.0, 0.02, generator);
      if (c->bias.defined()) c->bias.zero_();
    } else if (auto* t = m.as<nn::ConvTranspose2d>()) {
      t->weight.normal_(0.0, 0.02, generator);
      if (t->bias.defined()) t->bias.zero_();
    } else if (auto* n = m.as<nn::InstanceNorm2d>()) {
      if (n->weight.defined()) n->weight.fill_(1.0);
      if (n->bias.defined()) n->bias.zero_();
    }
  }
}

Generator build_resnet_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.family != GeneratorFamily::ResNet) throw SpecError("spec is not a residual generator");
  validate(spec);
  auto generator = std::make_shared<ResnetGeneratorImpl>(spec);
  initialize_weights(*generator, seed);
  return generator;
}

Generator build_unet_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.family != GeneratorFamily::UNet) throw SpecError("spec is not a U-Net generator");
  validate(spec);
  auto generator = std::make_shared<UnetGeneratorImpl>(spec);
  initialize_weights(*generator, seed);
  return generator;
}

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  return spec.family == GeneratorFamily::ResNet ? build_resnet_generator(spec, seed)
                                                : build_unet_generator(spec, seed);
}

Discriminator build_patch_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  validate(spec);
  auto discriminator = std::make_shared<PatchDiscriminatorImpl>(spec);
  initialize_weights(*discriminator, seed);
  return discriminator;
}

torch::Tensor forward_generator(GeneratorImpl& generator, const torch::Tensor& batch) {
  const auto& spec = generator.spec();
  if (batch.dim() != 4 || batch.size(1) != spec.in_channels) {
    throw ShapeError("generator expects (n, " + std::to_string(spec.in_channels) + ", h, w) input, got " +
                     std::to_string(batch.dim()) + "-D input with " +
                     (batch.dim() > 1 ? std::to_string(batch.size(1)) : std::string("?")) + " channels");
  }
  const auto divisor = spec.family == GeneratorFamily::ResNet ? 4 : (std::int64_t{1} << unet_levels_for(spec.image_size));
  if (batch.size(2) % divisor != 0 || batch.size(3) % divisor != 0) {
    throw ShapeError("generator input sides must be multiples of " + std::to_string(divisor));
  }
  return generator.forward(batch);
}

torch::Tensor forward_discriminator(PatchDiscriminatorImpl& discriminator, const torch::Tensor& batch) {
  const auto& spec = discriminator.spec();
  if (batch.dim() != 4 || batch.size(1) != spec.in_channels) {
    throw ShapeError("discriminator expects (n, " + std::to_string(spec.in_channels) + ", h, w) input");
  }
  patch_map_size(spec, static_cast<int>(std::min(batch.size(2), batch.size(3))));
  return discriminator.forward(batch);
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t count = 0;
  for (const auto& p : module.parameters()) count += p.numel();
  return count;
}

}  // namespace cyclehair
