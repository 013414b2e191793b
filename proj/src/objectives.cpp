#include "cyclehair/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclehair/errors.hpp"
#include "cyclehair/tensor_io.hpp"

namespace cyclehair {

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw NumericError(std::string(what) + " contains non-finite values");
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(what) + ": undefined operand");
  if (!a.sizes().equals(b.sizes())) throw ShapeError(std::string(what) + ": operand shapes differ");
}

}  // namespace

torch::Tensor gan_loss(const torch::Tensor& logits, bool target_real) {
  require_finite(logits, "discriminator logits");
  const double target = target_real ? 1.0 : 0.0;
  return (logits - target).square().mean();
}

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec) {
  require_same_shape(x, x_rec, "cycle loss");
  return (x - x_rec).abs().mean();
}

FeatureExtractorImpl::FeatureExtractorImpl(std::vector<std::vector<int>> stage_widths, bool imagenet_input)
    : stage_widths_(std::move(stage_widths)), imagenet_input_(imagenet_input) {
  if (stage_widths_.empty()) throw SpecError("feature extractor needs at least one stage");
  int in = 3;
  for (std::size_t s = 0; s < stage_widths_.size(); ++s) {
    if (stage_widths_[s].empty()) throw SpecError("feature extractor stage " + std::to_string(s) + " is empty");
    torch::nn::Sequential stage;
    for (int width : stage_widths_[s]) {
      stage->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, width, 3).padding(1)));
      stage->push_back(torch::nn::ReLU());
      in = width;
    }
    stages_.push_back(register_module("stage" + std::to_string(s + 1), stage));
  }
}

std::vector<torch::Tensor> FeatureExtractorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("feature extractor expects (n, 3, h, w) images");
  if (std::min(images.size(2), images.size(3)) < minimum_input_size()) {
    throw ShapeError("feature extractor needs inputs of at least " + std::to_string(minimum_input_size()) + " px");
  }
  auto h = (images + 1.0) * 0.5;
  if (imagenet_input_) {
    const auto opts = images.options();
    const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    const auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    h = (h - mean) / std;
  }
  std::vector<torch::Tensor> taps;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) h = torch::max_pool2d(h, 2);
    h = stages_[s]->forward(h);
    taps.push_back(h);
  }
  return taps;
}

void FeatureExtractorImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

std::vector<std::vector<int>> vgg16_stage_widths() {
  return {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
}

FeatureExtractor make_random_extractor(std::vector<std::vector<int>> stage_widths, std::uint64_t seed,
                                       bool imagenet_input) {
  FeatureExtractor extractor(std::move(stage_widths), imagenet_input);
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  {
    torch::NoGradGuard no_grad;
    for (const auto& item : extractor->named_modules()) {
      if (auto* conv = item.value()->as<torch::nn::Conv2d>()) {
        const auto fan_in = static_cast<double>(conv->weight.size(1) * conv->weight.size(2) * conv->weight.size(3));
        conv->weight.normal_(0.0, std::sqrt(2.0 / fan_in), generator);
        conv->bias.zero_();
      }
    }
  }
  extractor->freeze();
  extractor->set_provenance("random seed=" + std::to_string(seed));
  return extractor;
}

FeatureExtractor make_vgg16_extractor(std::uint64_t seed) {
  auto extractor = make_random_extractor(vgg16_stage_widths(), seed, true);
  extractor->set_provenance("vgg16-random seed=" + std::to_string(seed));
  return extractor;
}

FeatureExtractor load_vgg16_extractor(const std::filesystem::path& weights) {
  FeatureExtractor extractor(vgg16_stage_widths(), true);
  load_module(*extractor, read_param_file(weights));
  extractor->freeze();
  extractor->set_provenance("vgg16-pretrained " + weights.string());
  return extractor;
}

torch::Tensor perceptual_loss(const torch::Tensor& x, const torch::Tensor& x_rec, FeatureExtractorImpl& extractor) {
  require_same_shape(x, x_rec, "perceptual loss");
  require_finite(x, "perceptual loss input");
  require_finite(x_rec, "perceptual loss reconstruction");
  const auto a = extractor.forward(x);
  const auto b = extractor.forward(x_rec);
  auto total = torch::zeros({}, x.options());
  for (std::size_t t = 0; t < a.size(); ++t) total = total + (a[t] - b[t]).square().mean();
  return total / static_cast<double>(a.size());
}

GeneratorObjective generator_objective(const LossRegime& regime, const GeneratorParts& parts,
                                       FeatureExtractorImpl* extractor) {
  if (!regime.valid()) throw ConfigError("loss regime needs at least one reconstruction term and positive weights");
  if (!parts.gan_xy.defined() || !parts.gan_yx.defined()) {
    throw ConfigError("generator objective needs both adversarial terms");
  }
  const bool needs_pairs = regime.use_cycle || regime.use_perceptual;
  if (needs_pairs && (!parts.x.defined() || !parts.rec_x.defined() || !parts.y.defined() || !parts.rec_y.defined())) {
    throw ConfigError("generator objective needs both reconstruction pairs");
  }
  if (regime.use_perceptual && extractor == nullptr) {
    throw ConfigError("perceptual regime needs a feature extractor");
  }

  GeneratorObjective out;
  out.terms.emplace_back("gan_G_xy", parts.gan_xy);
  out.terms.emplace_back("gan_G_yx", parts.gan_yx);
  out.total = regime.lambda_gan * (parts.gan_xy + parts.gan_yx);
  if (regime.use_cycle) {
    auto cyc_x = cycle_loss(parts.x, parts.rec_x);
    auto cyc_y = cycle_loss(parts.y, parts.rec_y);
    out.total = out.total + regime.lambda_cyc * (cyc_x + cyc_y);
    out.terms.emplace_back("cyc_x", cyc_x);
    out.terms.emplace_back("cyc_y", cyc_y);
  }
  if (regime.use_perceptual) {
    auto perc_x = perceptual_loss(parts.x, parts.rec_x, *extractor);
    auto perc_y = perceptual_loss(parts.y, parts.rec_y, *extractor);
    out.total = out.total + regime.lambda_perc * (perc_x + perc_y);
    out.terms.emplace_back("perc_x", perc_x);
    out.terms.emplace_back("perc_y", perc_y);
  }
  return out;
}

torch::Tensor discriminator_objective(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
  return 0.5 * (gan_loss(logits_real, true) + gan_loss(logits_fake, false));
}

bool LossReport::has(const std::string& name) const {
  for (const auto& [key, value] : terms) {
    if (key == name) return true;
  }
  return false;
}

double LossReport::get(const std::string& name) const {
  for (const auto& [key, value] : terms) {
    if (key == name) return value;
  }
  throw std::out_of_range("loss report has no term '" + name + "'");
}

bool LossReport::all_finite() const {
  if (!std::isfinite(loss_G) || !std::isfinite(loss_D_x) || !std::isfinite(loss_D_y)) return false;
  for (const auto& [key, value] : terms) {
    if (!std::isfinite(value)) return false;
  }
  return true;
}

const std::vector<std::string>& term_order() {
  static const std::vector<std::string> order{"gan_G_xy", "gan_G_yx", "d_x",    "d_y",
                                              "cyc_x",    "cyc_y",    "perc_x", "perc_y"};
  return order;
}

}  // namespace cyclehair
