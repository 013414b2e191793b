#include "cyclehair/conditioning.hpp"

#include <algorithm>
#include <cctype>

#include "cyclehair/errors.hpp"

namespace cyclehair {

namespace {

std::string shape_string(const torch::Tensor& t) {
  std::string out = "(";
  for (std::int64_t i = 0; i < t.dim(); ++i) {
    if (i) out += ", ";
    out += std::to_string(t.size(i));
  }
  return out + ")";
}

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

}  // namespace

ConditionVocabulary ConditionVocabulary::for_mode(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::None: return {mode, {}, 0};
    case ConditionMode::Four: return {mode, {"Black_Hair", "Blond_Hair", "Straight_Hair", "Wavy_Hair"}, 2};
    case ConditionMode::Six:
      return {mode, {"Black_Hair", "Blond_Hair", "Brown_Hair", "Gray_Hair", "Straight_Hair", "Wavy_Hair"}, 4};
  }
  return {};
}

std::string short_class_name(std::string_view attribute) {
  std::string name(attribute);
  if (const auto pos = name.find("_Hair"); pos != std::string::npos) name.erase(pos);
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return name;
}

std::string ConditionVector::to_string() const {
  std::string out;
  for (auto bit : bits) out += bit ? '1' : '0';
  return out;
}

ConditionVector encode(const corpus::AttributeManifest& manifest, const corpus::AttributeRecord& record,
                       const ConditionVocabulary& vocabulary) {
  ConditionVector condition;
  condition.bits.reserve(vocabulary.size());
  for (const auto& name : vocabulary.classes) condition.bits.push_back(manifest.flag(record, name) == 1 ? 1 : 0);
  return condition;
}

ConditionVector parse_condition(std::string_view text, const ConditionVocabulary& vocabulary) {
  if (vocabulary.empty()) {
    throw ConditionError("this model is unconditional; no --condition may be given");
  }
  ConditionVector condition{std::vector<std::uint8_t>(vocabulary.size(), 0)};
  std::size_t colors = 0;
  std::size_t styles = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string token = trim(text.substr(start, end - start));
    for (auto& ch : token) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    start = end + 1;
    if (token.empty()) throw ConditionError("empty class name in condition '" + std::string(text) + "'");

    std::size_t index = vocabulary.size();
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
      if (short_class_name(vocabulary.classes[i]) == token) index = i;
    }
    if (index == vocabulary.size()) {
      std::string known;
      for (const auto& name : vocabulary.classes) known += (known.empty() ? "" : ", ") + short_class_name(name);
      throw ConditionError("'" + token + "' is not in the active vocabulary (" + known + ")");
    }
    if (condition.bits[index]) throw ConditionError("class '" + token + "' repeated");
    condition.bits[index] = 1;
    (index < vocabulary.n_colors ? colors : styles) += 1;
  }
  if (colors != 1 || styles != 1) {
    throw ConditionError("condition '" + std::string(text) + "' must name exactly one color and one style");
  }
  return condition;
}

std::string condition_label(const ConditionVector& condition, const ConditionVocabulary& vocabulary) {
  std::string label;
  for (std::size_t i = 0; i < condition.size() && i < vocabulary.size(); ++i) {
    if (!condition.bits[i]) continue;
    std::string name = short_class_name(vocabulary.classes[i]);
    if (!name.empty()) name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    label += (label.empty() ? "" : "-") + name;
  }
  return label.empty() ? "None" : label;
}

ConditionEmbeddingImpl::ConditionEmbeddingImpl(std::int64_t n_classes, std::int64_t dim) {
  table = register_parameter("table", torch::zeros({n_classes, dim}));
}

void ConditionEmbeddingImpl::reset_parameters(std::uint64_t seed) {
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  table.normal_(0.0, 0.02, generator);
}

torch::Tensor condition_bits(const std::vector<ConditionVector>& conditions, torch::Dtype dtype) {
  const auto n = static_cast<std::int64_t>(conditions.size());
  const auto k = conditions.empty() ? std::int64_t{0} : static_cast<std::int64_t>(conditions.front().size());
  auto bits = torch::zeros({n, k}, torch::kFloat64);
  auto accessor = bits.accessor<double, 2>();
  for (std::int64_t i = 0; i < n; ++i) {
    if (static_cast<std::int64_t>(conditions[i].size()) != k) throw ShapeError("condition vectors differ in length");
    for (std::int64_t j = 0; j < k; ++j) accessor[i][j] = conditions[i].bits[j];
  }
  return bits.to(dtype);
}

torch::Tensor embed_broadcast(const std::vector<ConditionVector>& conditions, const torch::Tensor& table,
                              std::int64_t height, std::int64_t width) {
  if (table.dim() != 2) throw ShapeError("embedding table must be 2-D, got " + shape_string(table));
  for (const auto& condition : conditions) {
    if (static_cast<std::int64_t>(condition.size()) != table.size(0)) {
      throw ShapeError("condition has " + std::to_string(condition.size()) + " entries but the table has " +
                       std::to_string(table.size(0)) + " rows");
    }
  }
  const auto n = static_cast<std::int64_t>(conditions.size());
  const auto d = table.size(1);
  if (n == 0 || d == 0 || table.size(0) == 0) {
    return torch::zeros({n, d, height, width}, table.options().requires_grad(false));
  }
  const auto bits = condition_bits(conditions, table.scalar_type());
  const auto rows = torch::matmul(bits, table);  // (n, d)
  return rows.view({n, d, 1, 1}).expand({n, d, height, width}).contiguous();
}

torch::Tensor embed_broadcast(const ConditionVector& condition, const torch::Tensor& table, std::int64_t height,
                              std::int64_t width) {
  return embed_broadcast(std::vector<ConditionVector>{condition}, table, height, width).squeeze(0);
}

torch::Tensor inject(const torch::Tensor& batch, const torch::Tensor& planes) {
  if (batch.dim() != 4) throw ShapeError("image batch must be 4-D, got " + shape_string(batch));
  if (planes.dim() != 3 && planes.dim() != 4) throw ShapeError("planes must be 3-D or 4-D, got " + shape_string(planes));
  const auto plane_channels = planes.size(planes.dim() - 3);
  if (plane_channels == 0) return batch;
  if (planes.size(-2) != batch.size(2) || planes.size(-1) != batch.size(3)) {
    throw ShapeError("planes " + shape_string(planes) + " do not match batch " + shape_string(batch) + " spatially");
  }
  torch::Tensor expanded = planes;
  if (planes.dim() == 3) {
    expanded = planes.unsqueeze(0).expand({batch.size(0), plane_channels, batch.size(2), batch.size(3)});
  } else if (planes.size(0) != batch.size(0)) {
    throw ShapeError("planes " + shape_string(planes) + " do not match batch " + shape_string(batch) + " in length");
  }
  return torch::cat({batch, expanded.to(batch.scalar_type())}, 1);
}

}  // namespace cyclehair
