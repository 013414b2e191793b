#pragma once

// Hair-class vocabulary, per-image condition vectors and the learned
// embedding that is broadcast to feature planes and concatenated onto the
// network inputs.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "cyclehair/corpus.hpp"
#include "cyclehair/types.hpp"

namespace cyclehair {

/// Ordered hair classes for a condition mode (colors first, then styles).
struct ConditionVocabulary {
  ConditionMode mode = ConditionMode::None;
  std::vector<std::string> classes;   // manifest attribute names, e.g. "Black_Hair"
  std::size_t n_colors = 0;           // classes[0, n_colors) are colors, the rest styles

  static ConditionVocabulary for_mode(ConditionMode mode);

  std::size_t size() const { return classes.size(); }
  bool empty() const { return classes.empty(); }
};

/// Lowercase CLI name ("black") for an attribute name ("Black_Hair").
std::string short_class_name(std::string_view attribute);

/// Multi-hot vector over a vocabulary.
struct ConditionVector {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::string to_string() const;  // e.g. "1010"
  bool operator==(const ConditionVector&) const = default;
};

/// Bit i is set iff the record's flag for classes[i] is +1.
ConditionVector encode(const corpus::AttributeManifest& manifest, const corpus::AttributeRecord& record,
                       const ConditionVocabulary& vocabulary);

/// Parses "black,straight": exactly one color and one style from the active
/// vocabulary. Throws ConditionError.
ConditionVector parse_condition(std::string_view text, const ConditionVocabulary& vocabulary);

/// Human-readable label, "Black-Straight".
std::string condition_label(const ConditionVector& condition, const ConditionVocabulary& vocabulary);

/// Width of the broadcast planes for a mode; unconditional runs inject nothing.
inline int embedding_width(ConditionMode mode, int dim) { return mode == ConditionMode::None ? 0 : dim; }

/// |classes| x d table of learnable rows, one per hair class.
class ConditionEmbeddingImpl : public torch::nn::Module {
 public:
  ConditionEmbeddingImpl(std::int64_t n_classes, std::int64_t dim);

  /// Re-draws the table from N(0, 0.02) with a dedicated generator.
  void reset_parameters(std::uint64_t seed);

  std::int64_t n_classes() const { return table.size(0); }
  std::int64_t dim() const { return table.size(1); }

  torch::Tensor table;
};
TORCH_MODULE(ConditionEmbedding);

/// (n, |classes|) float tensor of condition bits.
torch::Tensor condition_bits(const std::vector<ConditionVector>& conditions, torch::Dtype dtype = torch::kFloat32);

/// Sum of the table rows selected by `condition`, tiled to d x h x w.
/// Throws ShapeError when the vector length does not match the table.
torch::Tensor embed_broadcast(const ConditionVector& condition, const torch::Tensor& table, std::int64_t height,
                              std::int64_t width);

/// Batched form: one condition per batch item, result (n, d, h, w).
torch::Tensor embed_broadcast(const std::vector<ConditionVector>& conditions, const torch::Tensor& table,
                              std::int64_t height, std::int64_t width);

/// Concatenates planes behind the image channels. Planes may be (d, h, w)
/// (shared by every item) or (n, d, h, w). Zero-width planes return the batch
/// unchanged.
torch::Tensor inject(const torch::Tensor& batch, const torch::Tensor& planes);

}  // namespace cyclehair
