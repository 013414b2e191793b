#include "cyclehair/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cyclehair/errors.hpp"
#include "cyclehair/random.hpp"

namespace cyclehair::corpus {

namespace {

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    if (end > pos) tokens.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return tokens;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::string at_line(std::size_t line_number) { return "line " + std::to_string(line_number) + ": "; }

bool matches(const AttributeRecord& record, const std::vector<std::pair<std::size_t, int>>& required,
             const std::vector<std::size_t>& any_positive) {
  for (const auto& [column, flag] : required) {
    if (record.flags[column] != flag) return false;
  }
  if (any_positive.empty()) return true;
  return std::any_of(any_positive.begin(), any_positive.end(),
                     [&](std::size_t column) { return record.flags[column] == 1; });
}

}  // namespace

std::size_t AttributeManifest::index_of(std::string_view name) const {
  auto it = std::find(attributes.begin(), attributes.end(), name);
  if (it == attributes.end()) throw UnknownAttribute("unknown attribute '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - attributes.begin());
}

int AttributeManifest::flag(const AttributeRecord& record, std::string_view name) const {
  return record.flags[index_of(name)];
}

AttributeManifest AttributeManifest::with_records(std::vector<AttributeRecord> subset) const {
  return AttributeManifest{attributes, std::move(subset)};
}

AttributeManifest parse_attribute_file(std::string_view text) {
  auto lines = split_lines(text);
  while (!lines.empty() && is_blank(lines.back())) lines.pop_back();
  if (lines.size() < 2) throw MalformedManifest("manifest needs a count line and an attribute header");

  const auto count_tokens = split_whitespace(lines[0]);
  std::size_t declared = 0;
  if (count_tokens.size() != 1) throw MalformedManifest(at_line(1) + "expected a single record count");
  {
    const auto token = count_tokens[0];
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), declared);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw MalformedManifest(at_line(1) + "record count '" + std::string(token) + "' is not a number");
    }
  }

  AttributeManifest manifest;
  for (auto name : split_whitespace(lines[1])) manifest.attributes.emplace_back(name);
  if (manifest.attributes.empty()) throw MalformedManifest(at_line(2) + "empty attribute header");
  {
    std::unordered_set<std::string> seen;
    for (const auto& name : manifest.attributes) {
      if (!seen.insert(name).second) throw MalformedManifest(at_line(2) + "attribute '" + name + "' repeated");
    }
  }

  std::unordered_set<std::string> filenames;
  manifest.records.reserve(declared);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const std::size_t line_number = i + 1;
    const auto tokens = split_whitespace(lines[i]);
    if (tokens.empty()) throw MalformedManifest(at_line(line_number) + "blank line inside the record block");
    if (tokens.size() != manifest.attributes.size() + 1) {
      throw MalformedManifest(at_line(line_number) + "expected " + std::to_string(manifest.attributes.size()) +
                              " flags, found " + std::to_string(tokens.size() - 1));
    }
    AttributeRecord record;
    record.filename = std::string(tokens[0]);
    record.flags.reserve(manifest.attributes.size());
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      if (tokens[k] == "1") {
        record.flags.push_back(1);
      } else if (tokens[k] == "-1") {
        record.flags.push_back(-1);
      } else {
        throw InvalidFlag(at_line(line_number) + "flag '" + std::string(tokens[k]) + "' for attribute '" +
                          manifest.attributes[k - 1] + "' is not 1 or -1");
      }
    }
    if (!filenames.insert(record.filename).second) {
      throw DuplicateEntry(at_line(line_number) + "duplicate filename '" + record.filename + "'");
    }
    manifest.records.push_back(std::move(record));
  }

  if (manifest.records.size() != declared) {
    throw MalformedManifest(at_line(1) + "count line says " + std::to_string(declared) + " but " +
                            std::to_string(manifest.records.size()) + " records follow");
  }
  return manifest;
}

std::string serialize_attribute_file(const AttributeManifest& manifest) {
  std::string out;
  out += std::to_string(manifest.records.size());
  out += '\n';
  for (std::size_t i = 0; i < manifest.attributes.size(); ++i) {
    if (i) out += ' ';
    out += manifest.attributes[i];
  }
  out += '\n';
  for (const auto& record : manifest.records) {
    out += record.filename;
    for (auto flag : record.flags) out += flag > 0 ? " 1" : " -1";
    out += '\n';
  }
  return out;
}

AttributeManifest read_attribute_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedManifest(path.string() + ": cannot open manifest");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_attribute_file(buffer.str());
  } catch (const MalformedManifest& e) {
    throw MalformedManifest(path.string() + ": " + e.what());
  } catch (const InvalidFlag& e) {
    throw InvalidFlag(path.string() + ": " + e.what());
  } catch (const DuplicateEntry& e) {
    throw DuplicateEntry(path.string() + ": " + e.what());
  }
}

void write_attribute_file(const std::filesystem::path& path, const AttributeManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  out << serialize_attribute_file(manifest);
  if (!out) throw Error(path.string() + ": write failed");
}

std::string to_string(Domain domain) { return domain == Domain::XBald ? "X_bald" : "Y_hairy"; }

DomainPredicate bald_predicate() { return DomainPredicate{{{"Male", 1}, {"Bald", 1}}, {}}; }

DomainPredicate hairy_predicate(const std::vector<std::string>& hair_classes) {
  return DomainPredicate{{{"Male", 1}, {"Bald", -1}}, hair_classes};
}

AttributeManifest filter_domain(const AttributeManifest& manifest, const DomainPredicate& predicate) {
  std::vector<std::pair<std::size_t, int>> required;
  for (const auto& literal : predicate.all_of) {
    if (literal.flag != 1 && literal.flag != -1) {
      throw InvalidFlag("predicate flag for '" + literal.attribute + "' must be 1 or -1");
    }
    required.emplace_back(manifest.index_of(literal.attribute), literal.flag);
  }
  std::vector<std::size_t> any_positive;
  for (const auto& name : predicate.any_positive) any_positive.push_back(manifest.index_of(name));

  std::vector<AttributeRecord> kept;
  for (const auto& record : manifest.records) {
    if (matches(record, required, any_positive)) kept.push_back(record);
  }
  return manifest.with_records(std::move(kept));
}

ClassHistogram class_histogram(const AttributeManifest& manifest, const std::vector<std::string>& vocabulary) {
  ClassHistogram histogram;
  for (const auto& name : vocabulary) {
    const std::size_t column = manifest.index_of(name);
    const auto count = std::count_if(manifest.records.begin(), manifest.records.end(),
                                     [column](const AttributeRecord& r) { return r.flags[column] == 1; });
    histogram.emplace_back(name, static_cast<std::size_t>(count));
  }
  return histogram;
}

Split split(const AttributeManifest& manifest, const SplitSpec& spec) {
  const std::size_t wanted = spec.n_train + spec.n_test;
  if (wanted < spec.n_train || wanted > manifest.records.size()) {
    throw InsufficientRecords("requested " + std::to_string(spec.n_train) + " train + " + std::to_string(spec.n_test) +
                              " test records but only " + std::to_string(manifest.records.size()) + " are available");
  }
  std::vector<std::size_t> order(manifest.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  shuffle_in_place(order, rng);

  std::vector<AttributeRecord> train;
  std::vector<AttributeRecord> test;
  train.reserve(spec.n_train);
  test.reserve(spec.n_test);
  for (std::size_t i = 0; i < spec.n_train; ++i) train.push_back(manifest.records[order[i]]);
  for (std::size_t i = 0; i < spec.n_test; ++i) test.push_back(manifest.records[order[spec.n_train + i]]);
  return Split{manifest.with_records(std::move(train)), manifest.with_records(std::move(test))};
}

void write_filename_list(const std::filesystem::path& path, const AttributeManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& record : manifest.records) out << record.filename << '\n';
  if (!out) throw Error(path.string() + ": write failed");
}

std::vector<std::string> read_filename_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedManifest(path.string() + ": cannot open filename list");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!is_blank(line)) names.push_back(line);
  }
  return names;
}

Image load_image(const std::filesystem::path& path, int size) {
  if (size <= 0) throw ImageDecodeError("image size must be positive");
  cv::Mat decoded;
  try {
    decoded = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw ImageDecodeError(path.string() + ": " + e.what());
  }
  if (decoded.empty()) throw ImageDecodeError(path.string() + ": cannot decode image");
  if (decoded.depth() != CV_8U) throw ImageDecodeError(path.string() + ": not an 8-bit image");

  cv::Mat rgb;
  cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
  cv::Mat resized;
  if (rgb.rows == size && rgb.cols == size) {
    resized = rgb;
  } else {
    cv::resize(rgb, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  }

  Image image;
  image.height = size;
  image.width = size;
  image.data.resize(static_cast<std::size_t>(3) * size * size);
  for (int y = 0; y < size; ++y) {
    const auto* row = resized.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float value = static_cast<float>(row[x][c]) / 127.5f - 1.0f;
        image.data[(static_cast<std::size_t>(c) * size + y) * size + x] = std::clamp(value, -1.0f, 1.0f);
      }
    }
  }
  return image;
}

}  // namespace cyclehair::corpus
