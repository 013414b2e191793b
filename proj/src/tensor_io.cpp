#include "cyclehair/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cyclehair/errors.hpp"

namespace cyclehair {

namespace {

constexpr std::string_view kMagic = "cyclehair-params 1";

void append_le_floats(std::string& out, const torch::Tensor& tensor) {
  const auto values = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  const auto n = static_cast<std::size_t>(values.numel());
  const auto* data = values.data_ptr<float>();
  const std::size_t offset = out.size();
  out.resize(offset + n * sizeof(float));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + offset, data, n * sizeof(float));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(data[i]);
      for (int b = 0; b < 4; ++b) out[offset + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
}

torch::Tensor read_le_floats(const char* bytes, const std::vector<std::int64_t>& shape) {
  auto tensor = torch::empty(shape, torch::kFloat32);
  const auto n = static_cast<std::size_t>(tensor.numel());
  auto* data = tensor.data_ptr<float>();
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(data, bytes, n * sizeof(float));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
  }
  return tensor;
}

std::string shape_string(const torch::Tensor& t) {
  std::string out;
  for (std::int64_t i = 0; i < t.dim(); ++i) out += (i ? "x" : "") + std::to_string(t.size(i));
  return out.empty() ? "scalar" : out;
}

}  // namespace

const torch::Tensor& ParamFile::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw CheckpointError("parameter file has no tensor '" + name + "'");
}

bool ParamFile::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::vector<NamedTensor> named_tensors(const torch::nn::Module& module) {
  std::vector<NamedTensor> out;
  for (const auto& p : module.named_parameters()) out.push_back({p.key(), p.value()});
  for (const auto& b : module.named_buffers()) out.push_back({b.key(), b.value()});
  return out;
}

std::string encode_param_file(const std::string& spec, const std::vector<NamedTensor>& tensors) {
  if (spec.find('\n') != std::string::npos) throw CheckpointError("spec echo must be a single line");
  std::ostringstream header;
  header << kMagic << '\n' << "spec " << spec << '\n' << "tensors " << tensors.size() << '\n';
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \n") != std::string::npos) {
      throw CheckpointError("tensor name '" + t.name + "' contains whitespace");
    }
    header << t.name << ' ' << t.value.dim();
    for (std::int64_t i = 0; i < t.value.dim(); ++i) header << ' ' << t.value.size(i);
    header << '\n';
  }
  header << "data\n";
  std::string out = header.str();
  for (const auto& t : tensors) append_le_floats(out, t.value);
  return out;
}

ParamFile decode_param_file(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto end = bytes.find('\n', pos);
    if (end == std::string::npos) throw CheckpointError("truncated parameter header");
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  if (next_line() != kMagic) throw CheckpointError("not a parameter file");
  ParamFile file;
  {
    const std::string line = next_line();
    if (line.rfind("spec ", 0) != 0) throw CheckpointError("parameter header lacks a spec line");
    file.spec = line.substr(5);
  }
  std::size_t count = 0;
  {
    std::istringstream in(next_line());
    std::string word;
    if (!(in >> word >> count) || word != "tensors") throw CheckpointError("parameter header lacks a tensor count");
  }
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> table;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream in(next_line());
    std::string name;
    int rank = 0;
    if (!(in >> name >> rank) || rank < 0) throw CheckpointError("malformed tensor entry " + std::to_string(i));
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) {
      if (!(in >> d) || d < 0) throw CheckpointError("malformed shape for tensor '" + name + "'");
    }
    table.emplace_back(std::move(name), std::move(shape));
  }
  if (next_line() != "data") throw CheckpointError("parameter header is not terminated");

  for (auto& [name, shape] : table) {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    if (pos + n * sizeof(float) > bytes.size()) throw CheckpointError("payload for '" + name + "' is truncated");
    file.tensors.push_back({name, read_le_floats(bytes.data() + pos, shape)});
    pos += n * sizeof(float);
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after the last tensor payload");
  return file;
}

void write_file_atomically(const std::filesystem::path& path, const std::string& bytes) {
  auto temporary = path;
  temporary += ".tmp";
  {
    std::ofstream out(temporary, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(temporary.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw CheckpointError(temporary.string() + ": write failed (disk full?)");
  }
  std::error_code ec;
  std::filesystem::rename(temporary, path, ec);
  if (ec) throw CheckpointError(path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_param_file(const std::filesystem::path& path, const std::string& spec,
                      const std::vector<NamedTensor>& tensors) {
  write_file_atomically(path, encode_param_file(spec, tensors));
}

ParamFile read_param_file(const std::filesystem::path& path) {
  try {
    return decode_param_file(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void save_module(const std::filesystem::path& path, const std::string& spec, const torch::nn::Module& module) {
  write_param_file(path, spec, named_tensors(module));
}

void load_module(torch::nn::Module& module, const ParamFile& file) {
  const auto targets = named_tensors(module);
  if (targets.size() != file.tensors.size()) {
    throw CheckpointError("module has " + std::to_string(targets.size()) + " tensors, file has " +
                          std::to_string(file.tensors.size()));
  }
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& target = targets[i];
    const auto& source = file.tensors[i];
    if (target.name != source.name) {
      throw CheckpointError("tensor " + std::to_string(i) + " is '" + source.name + "', expected '" + target.name + "'");
    }
    if (!target.value.sizes().equals(source.value.sizes())) {
      throw CheckpointError("tensor '" + target.name + "' has shape " + shape_string(source.value) + ", expected " +
                            shape_string(target.value));
    }
    target.value.copy_(source.value);
  }
}

}  // namespace cyclehair
