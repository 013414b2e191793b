#pragma once

// Generator families (residual encoder-decoder, U-Net) and the patch
// discriminator, with seeded initialization.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "cyclehair/types.hpp"

namespace cyclehair {

struct GeneratorSpec {
  GeneratorFamily family = GeneratorFamily::ResNet;
  int image_size = 128;
  int in_channels = 3;
  int base_width = 64;
  int n_blocks = 6;  // residual blocks; ignored by the U-Net family

  /// Residual generator with the block count implied by the image size.
  static GeneratorSpec resnet(int image_size, int in_channels, int base_width = 64);
  static GeneratorSpec unet(int image_size, int in_channels, int base_width = 64);

  /// One-line echo written into parameter files, e.g.
  /// "generator family=resnet image_size=64 in_channels=11 base_width=64 n_blocks=6".
  std::string describe() const;
  static GeneratorSpec parse(std::string_view text);

  bool operator==(const GeneratorSpec&) const = default;
};

/// 6 blocks up to 128 px, 9 from 256 px. Throws SpecError in between.
int resnet_blocks_for(int image_size);
/// Number of stride-2 levels that take image_size down to 1 px.
int unet_levels_for(int image_size);
/// Throws SpecError on an inconsistent spec.
void validate(const GeneratorSpec& spec);

struct DiscriminatorSpec {
  int in_channels = 3;
  std::vector<int> widths{64, 128, 256, 512};
  int kernel = 4;
  std::vector<int> strides{2, 2, 2, 1, 1};  // one more than widths: the last layer maps to 1 channel
  int padding = 1;

  std::string describe() const;
  static DiscriminatorSpec parse(std::string_view text);

  bool operator==(const DiscriminatorSpec&) const = default;
};

void validate(const DiscriminatorSpec& spec);

/// Input extent seen by one unit of the final map: rf += (k - 1) * jump,
/// jump *= stride, layer by layer.
int receptive_field(std::span<const int> kernels, std::span<const int> strides);
int receptive_field(const DiscriminatorSpec& spec);

/// Side of the logit map for a square input.
int patch_map_size(const DiscriminatorSpec& spec, int input_size);

/// Conv -> instance norm -> ReLU -> conv -> instance norm, plus the input.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::InstanceNorm2d norm1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::InstanceNorm2d norm2{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Common base of both generator families.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorSpec spec) : spec_(spec) {}
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
};

class ResnetGeneratorImpl : public GeneratorImpl {
 public:
  explicit ResnetGeneratorImpl(const GeneratorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x) override;

  torch::nn::Sequential head{nullptr};    // 7x7 stem and the two stride-2 convs; planes skip the stem norm
  torch::nn::Sequential blocks{nullptr};  // residual blocks at 4 * base_width
  torch::nn::Sequential tail{nullptr};    // two transposed convs, 7x7 output conv, tanh
};

/// One level of the U-Net: down path, the nested level, up path, and the skip
/// concatenation (except at the outermost level).
class UnetLevelImpl : public torch::nn::Module {
 public:
  UnetLevelImpl(int outer_channels, int inner_channels, int input_channels, std::shared_ptr<UnetLevelImpl> inner,
                bool outermost);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Sequential down{nullptr};
  torch::nn::Sequential up{nullptr};
  std::shared_ptr<UnetLevelImpl> inner;
  bool outermost;
};

class UnetGeneratorImpl : public GeneratorImpl {
 public:
  explicit UnetGeneratorImpl(const GeneratorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x) override;

  std::shared_ptr<UnetLevelImpl> root;
};

class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const DiscriminatorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorSpec& spec() const { return spec_; }

  torch::nn::Sequential layers{nullptr};

 private:
  DiscriminatorSpec spec_;
};

using Generator = std::shared_ptr<GeneratorImpl>;
using Discriminator = std::shared_ptr<PatchDiscriminatorImpl>;

/// Draws every conv weight from N(0, 0.02), zeroes biases and sets norm
/// affine terms to (1, 0). Same seed, same parameters.
void initialize_weights(torch::nn::Module& module, std::uint64_t seed);

Generator build_resnet_generator(const GeneratorSpec& spec, std::uint64_t seed);
Generator build_unet_generator(const GeneratorSpec& spec, std::uint64_t seed);
Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed);
Discriminator build_patch_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

/// Shape-checked forwards. Throw ShapeError on a channel or rank mismatch.
torch::Tensor forward_generator(GeneratorImpl& generator, const torch::Tensor& batch);
torch::Tensor forward_discriminator(PatchDiscriminatorImpl& discriminator, const torch::Tensor& batch);

std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace cyclehair
