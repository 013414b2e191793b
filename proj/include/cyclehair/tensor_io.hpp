#pragma once

// Self-describing parameter files: a text header (spec echo plus a
// name/shape table) followed by little-endian float32 payloads.

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace cyclehair {

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

struct ParamFile {
  std::string spec;  // single line, no newline
  std::vector<NamedTensor> tensors;

  const torch::Tensor& get(const std::string& name) const;  // throws CheckpointError
  bool contains(const std::string& name) const;
};

/// Parameters followed by buffers, in registration order.
std::vector<NamedTensor> named_tensors(const torch::nn::Module& module);

std::string encode_param_file(const std::string& spec, const std::vector<NamedTensor>& tensors);
ParamFile decode_param_file(const std::string& bytes);

/// Throws CheckpointError on I/O failure.
void write_param_file(const std::filesystem::path& path, const std::string& spec,
                      const std::vector<NamedTensor>& tensors);
ParamFile read_param_file(const std::filesystem::path& path);

void save_module(const std::filesystem::path& path, const std::string& spec, const torch::nn::Module& module);

/// Copies every tensor of `file` into `module`. Names and shapes must match
/// exactly; throws CheckpointError otherwise.
void load_module(torch::nn::Module& module, const ParamFile& file);

/// Writes `bytes` to a sibling temporary and renames it over `path`.
void write_file_atomically(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace cyclehair
