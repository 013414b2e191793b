#pragma once

// Least-squares adversarial loss, L1 cycle loss, feature-space perceptual
// loss, and the per-regime generator/discriminator objectives.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cyclehair/types.hpp"

namespace cyclehair {

/// mean((logit - t)^2) with t = 1 for real targets, 0 for fake.
/// Throws NumericError on non-finite logits.
torch::Tensor gan_loss(const torch::Tensor& logits, bool target_real);

/// Mean absolute difference. Throws ShapeError on mismatched shapes.
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec);

/// Frozen convolutional feature network. Each stage is a run of 3x3 convs
/// with ReLU; stages are separated by 2x2 max pooling and the output of each
/// stage is one tap.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  /// `stage_widths[s]` lists the conv widths of stage s.
  FeatureExtractorImpl(std::vector<std::vector<int>> stage_widths, bool imagenet_input);

  /// Activations at every tap, for images in [-1, 1].
  std::vector<torch::Tensor> forward(const torch::Tensor& images);

  std::size_t tap_count() const { return stages_.size(); }
  /// Smallest square input every stage can process.
  int minimum_input_size() const { return 1 << (stages_.size() - 1); }
  /// Where the weights came from, recorded in run manifests.
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string text) { provenance_ = std::move(text); }

  /// Disables gradients on every parameter and switches to eval mode.
  void freeze();

  const std::vector<std::vector<int>>& stage_widths() const { return stage_widths_; }

 private:
  std::vector<std::vector<int>> stage_widths_;
  std::vector<torch::nn::Sequential> stages_;
  bool imagenet_input_;
  std::string provenance_;
};
TORCH_MODULE(FeatureExtractor);

/// The 13-conv, five-stage 16-layer configuration.
std::vector<std::vector<int>> vgg16_stage_widths();

/// Seeded He-normal weights, frozen. Used when no pretrained weights exist.
FeatureExtractor make_random_extractor(std::vector<std::vector<int>> stage_widths, std::uint64_t seed,
                                       bool imagenet_input = true);
FeatureExtractor make_vgg16_extractor(std::uint64_t seed);
/// Loads VGG16 weights stored as a parameter file (see tensor_io.hpp).
FeatureExtractor load_vgg16_extractor(const std::filesystem::path& weights);

/// Mean over taps of the mean squared activation difference.
/// Throws ShapeError or NumericError.
torch::Tensor perceptual_loss(const torch::Tensor& x, const torch::Tensor& x_rec, FeatureExtractorImpl& extractor);

/// Inputs to the generator objective: both adversarial terms plus the two
/// reconstruction pairs (x, F(G(x))) and (y, G(F(y))).
struct GeneratorParts {
  torch::Tensor gan_xy;
  torch::Tensor gan_yx;
  torch::Tensor x;
  torch::Tensor rec_x;
  torch::Tensor y;
  torch::Tensor rec_y;
};

using NamedTerms = std::vector<std::pair<std::string, torch::Tensor>>;

struct GeneratorObjective {
  torch::Tensor total;
  NamedTerms terms;  // unweighted, in log order
};

/// lambda_gan * (gan_xy + gan_yx) + lambda_cyc * (cyc_x + cyc_y) [if enabled]
/// + lambda_perc * (perc_x + perc_y) [if enabled]. Disabled terms are never
/// computed. Throws ConfigError when a part the regime needs is missing.
GeneratorObjective generator_objective(const LossRegime& regime, const GeneratorParts& parts,
                                       FeatureExtractorImpl* extractor);

/// 0.5 * (gan_loss(real, true) + gan_loss(fake, false)).
torch::Tensor discriminator_objective(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);

/// Scalar results of one training step.
struct LossReport {
  double loss_G = 0.0;
  double loss_D_x = 0.0;
  double loss_D_y = 0.0;
  std::vector<std::pair<std::string, double>> terms;

  bool has(const std::string& name) const;
  double get(const std::string& name) const;  // throws std::out_of_range
  bool all_finite() const;
};

/// Log order of the per-term names.
const std::vector<std::string>& term_order();

}  // namespace cyclehair
