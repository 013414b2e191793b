#pragma once

// Procedural stand-in for an aligned face dataset: cartoon heads that are
// bald or carry hair of one color and a straight or wavy texture, plus a
// matching attribute manifest. Used by tests and desk runs.

#include <cstdint>
#include <filesystem>

#include "cyclehair/corpus.hpp"

namespace cyclehair {

struct SyntheticOptions {
  std::size_t n_records = 60;
  int width = 89;
  int height = 109;
  std::uint64_t seed = 7;
  double male_fraction = 0.85;
  double bald_fraction = 0.4;  // among males
};

/// Attribute header of synthetic manifests (alphabetical, CelebA names).
const std::vector<std::string>& synthetic_attributes();

/// Annotations only, no pixels.
corpus::AttributeManifest synthetic_manifest(const SyntheticOptions& options);

/// Renders the face described by `record`.
void render_synthetic_face(const corpus::AttributeManifest& manifest, const corpus::AttributeRecord& record,
                           const SyntheticOptions& options, const std::filesystem::path& png_path);

/// Writes `<dir>/list_attr.txt` and `<dir>/images/<filename>` for every record.
corpus::AttributeManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options);

}  // namespace cyclehair
