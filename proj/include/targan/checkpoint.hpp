#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace targan {

/// Named tensors plus a JSON metadata header in one file:
///
///   "TARGANCK"  8-byte magic
///   uint64 LE   header length
///   JSON        {"meta": {...}, "tensors": [{name, dtype, shape, offset, nbytes}]}
///   raw little-endian tensor data, contiguous, in header order
class TensorArchive {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, const torch::Tensor& t);
  bool has(const std::string& name) const;
  const torch::Tensor& get(const std::string& name) const;  // throws IoError if absent
  const std::vector<std::pair<std::string, torch::Tensor>>& tensors() const { return tensors_; }
  /// Names starting with prefix, prefix stripped.
  std::vector<std::pair<std::string, torch::Tensor>> with_prefix(const std::string& prefix) const;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> tensors_;
};

/// Adds every parameter and buffer of `m` under "<prefix>.<name>".
void add_module(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& m);
/// Copies "<prefix>.<name>" tensors into `m`; every parameter must be present
/// with a matching shape (ConfigError otherwise).
void load_module(const TensorArchive& ar, const std::string& prefix, torch::nn::Module& m);

}  // namespace targan
