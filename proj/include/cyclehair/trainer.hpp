#pragma once

// The cycle-structured training loop: image pools, the learning-rate
// schedule, one joint generator update plus one update per discriminator per
// step, checkpoints and deterministic resume.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "cyclehair/conditioning.hpp"
#include "cyclehair/networks.hpp"
#include "cyclehair/objectives.hpp"
#include "cyclehair/random.hpp"
#include "cyclehair/registry.hpp"

namespace cyclehair {

/// base_lr before hold_epochs, then linear to 0 at total_epochs.
/// Throws ConfigError outside [0, total_epochs].
double lr_at(int epoch, const Schedule& schedule);

/// History buffer of generated images (with the condition they were generated
/// under) that feeds the discriminator updates.
class ImagePool {
 public:
  struct Entry {
    torch::Tensor image;  // (3, h, w), detached
    ConditionVector condition;
  };

  explicit ImagePool(int capacity = 50) : capacity_(capacity) {}

  /// Per item: while the buffer is filling, store it and return it; once
  /// full, with probability 1/2 return a random stored image (replacing it
  /// with the fresh one), otherwise return the fresh image.
  std::pair<torch::Tensor, std::vector<ConditionVector>> query(const torch::Tensor& fresh,
                                                               const std::vector<ConditionVector>& conditions,
                                                               Rng& rng);
  torch::Tensor query(const torch::Tensor& fresh, Rng& rng);

  int capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void restore(std::vector<Entry> entries);

 private:
  int capacity_;
  std::vector<Entry> entries_;
};

/// Generator architecture a config trains (input widened by the planes).
GeneratorSpec generator_spec_for(const ExperimentConfig& config);
DiscriminatorSpec discriminator_spec_for(const ExperimentConfig& config);

/// Everything that evolves during training.
struct TrainState {
  ExperimentConfig config;
  ConditionVocabulary vocabulary;
  Generator G;  // bald -> hairy
  Generator F;  // hairy -> bald
  Discriminator Dx;
  Discriminator Dy;
  ConditionEmbedding embedding{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_G;  // G, F and the embedding
  std::unique_ptr<torch::optim::Adam> opt_Dx;
  std::unique_ptr<torch::optim::Adam> opt_Dy;
  ImagePool pool_x;
  ImagePool pool_y;
  int epoch = 0;           // completed epochs
  std::int64_t step = 0;   // completed steps
  Rng rng;
  std::string last_checkpoint;

  /// Fresh networks and optimizers for a validated config.
  static TrainState initialize(const ExperimentConfig& config);

  GeneratorSpec generator_spec() const { return generator_spec_for(config); }
  DiscriminatorSpec discriminator_spec() const { return discriminator_spec_for(config); }
  int plane_width() const { return embedding_width(config.condition_mode, config.embedding_dim); }

  void set_learning_rate(double lr);

  /// Writes G, F, Dx, Dy, embedding, config.snapshot, rng.state and
  /// train_state.bin into `dir` (created if needed).
  void save(const std::filesystem::path& dir) const;
  /// Restores a state written by save().
  static TrainState load(const std::filesystem::path& dir);
};

/// One generator update (G and F jointly, condition `cond_y` threaded through
/// both cycles) followed by one update of Dy and one of Dx on pooled fakes.
/// `extractor` is required when the regime uses the perceptual term.
/// Throws NumericAbort if any loss or parameter turns non-finite.
LossReport train_step(TrainState& state, const torch::Tensor& batch_x, const torch::Tensor& batch_y,
                      const std::vector<ConditionVector>& cond_y, FeatureExtractorImpl* extractor);

/// Training images for one run.
struct TrainingData {
  std::vector<std::filesystem::path> x_images;
  std::vector<std::filesystem::path> y_images;
  std::vector<ConditionVector> y_conditions;  // parallel to y_images
};

/// Reads a directory written by `prepare` (trainX.txt, trainY.txt,
/// attributes.txt, image_root.txt) and keeps the first n_train_images of each
/// domain. Throws InsufficientRecords when a domain is short.
TrainingData load_training_data(const std::filesystem::path& data_dir, const ExperimentConfig& config);

/// One metrics line: step, epoch, then term=value pairs in stable order.
std::string format_metrics_line(std::int64_t step, int epoch, const LossReport& report, double lr);

struct RunOptions {
  std::filesystem::path out_dir = "checkpoints";  // run directory is out_dir / config.name
  std::optional<std::filesystem::path> resume_from;  // an epoch_<n> directory
  std::optional<int> stop_after_epoch;               // pause: checkpoint and return early
  std::optional<std::filesystem::path> extractor_weights;
  int keep_checkpoints = 2;
  std::size_t prefetch_depth = 4;
  std::function<void(const std::string& metrics_line)> on_step;
};

/// Trains for the configured epochs. Returns the final checkpoint directory.
std::filesystem::path run(const ExperimentConfig& config, const TrainingData& data, const RunOptions& options);

/// Frozen extractor for a regime: nullptr when perceptual loss is off,
/// pretrained weights when given, otherwise the seeded random VGG16.
FeatureExtractor make_extractor_for(const ExperimentConfig& config,
                                    const std::optional<std::filesystem::path>& weights);

/// Latest epoch_<n> directory under a run directory, or `dir` itself when it
/// already is a checkpoint. Throws CheckpointError.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& dir);

/// Stacks images into an (n, 3, h, w) float batch.
torch::Tensor to_batch(const std::vector<corpus::Image>& images);

}  // namespace cyclehair
