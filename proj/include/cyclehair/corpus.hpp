#pragma once

// Attribute manifests (CelebA list_attr format), domain filtering, class
// histograms, seeded splits and image loading.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cyclehair::corpus {

/// One image and its +1/-1 flags, stored parallel to the owning manifest's
/// attribute header.
struct AttributeRecord {
  std::string filename;
  std::vector<std::int8_t> flags;

  bool operator==(const AttributeRecord&) const = default;
};

/// A parsed manifest: the attribute header plus every record.
struct AttributeManifest {
  std::vector<std::string> attributes;
  std::vector<AttributeRecord> records;

  /// Column of `name` in the header. Throws UnknownAttribute.
  std::size_t index_of(std::string_view name) const;
  int flag(const AttributeRecord& record, std::string_view name) const;

  /// Same header, chosen records.
  AttributeManifest with_records(std::vector<AttributeRecord> subset) const;

  bool operator==(const AttributeManifest&) const = default;
};

AttributeManifest parse_attribute_file(std::string_view text);
std::string serialize_attribute_file(const AttributeManifest& manifest);
AttributeManifest read_attribute_file(const std::filesystem::path& path);
void write_attribute_file(const std::filesystem::path& path, const AttributeManifest& manifest);

/// A required attribute value.
struct Literal {
  std::string attribute;
  int flag = 1;
};

/// Conjunction of literals, optionally combined with "at least one of
/// `any_positive` is +1". Both parts empty accepts every record.
struct DomainPredicate {
  std::vector<Literal> all_of;
  std::vector<std::string> any_positive;
};

enum class Domain { XBald, YHairy };

std::string to_string(Domain domain);

/// Male=+1 and Bald=+1.
DomainPredicate bald_predicate();
/// Male=+1, Bald=-1 and at least one of `hair_classes` set.
DomainPredicate hairy_predicate(const std::vector<std::string>& hair_classes);

/// Records satisfying `predicate`, input order preserved.
AttributeManifest filter_domain(const AttributeManifest& manifest, const DomainPredicate& predicate);

using ClassHistogram = std::vector<std::pair<std::string, std::size_t>>;

/// Number of +1 flags per vocabulary class, in vocabulary order.
ClassHistogram class_histogram(const AttributeManifest& manifest, const std::vector<std::string>& vocabulary);

struct SplitSpec {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
};

struct Split {
  AttributeManifest train;
  AttributeManifest test;
};

/// Seeded uniform sample without replacement. Train takes the first n_train
/// shuffled records, test the next n_test. Throws InsufficientRecords.
Split split(const AttributeManifest& manifest, const SplitSpec& spec);

/// Records already filtered into one domain, with the directory their image
/// files live in.
struct DomainManifest {
  Domain domain = Domain::XBald;
  AttributeManifest records;
  std::filesystem::path image_root;
};

/// Plain-text list, one filename per line.
void write_filename_list(const std::filesystem::path& path, const AttributeManifest& manifest);
std::vector<std::string> read_filename_list(const std::filesystem::path& path);

/// Channels-first float image.
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

/// Decodes an 8-bit PNG/JPEG, resizes bilinearly to size x size and maps
/// [0, 255] linearly onto [-1, 1]. Throws ImageDecodeError.
Image load_image(const std::filesystem::path& path, int size);

}  // namespace cyclehair::corpus
