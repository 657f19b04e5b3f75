#include "targan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "targan/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace targan {
namespace {

constexpr char kMagic[8] = {'T', 'A', 'R', 'G', 'A', 'N', 'C', 'K'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: throw IoError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  if (s == "u8") return torch::kUInt8;
  throw IoError("checkpoint: unknown dtype '" + s + "'");
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void TensorArchive::add(const std::string& name, const torch::Tensor& t) {
  if (has(name)) throw IoError("checkpoint: duplicate tensor name " + name);
  tensors_.emplace_back(name, t.detach().cpu().contiguous().clone());
}

bool TensorArchive::has(const std::string& name) const {
  for (const auto& [n, _] : tensors_)
    if (n == name) return true;
  return false;
}

const torch::Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return t;
  throw IoError("checkpoint: missing tensor " + name);
}

std::vector<std::pair<std::string, torch::Tensor>> TensorArchive::with_prefix(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& [n, t] : tensors_)
    if (n.starts_with(prefix)) out.emplace_back(n.substr(prefix.size()), t);
  return out;
}

void TensorArchive::save(const fs::path& path) const {
  json header;
  header["meta"] = meta;
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    const uint64_t nbytes = t.numel() * t.element_size();
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(t.scalar_type())},
                                 {"shape", t.sizes().vec()},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os.write(kMagic, 8);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors_)
      os.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!os) throw IoError("failed writing checkpoint: " + path.string());
  }
  fs::rename(tmp, path);
}

TensorArchive TensorArchive::load(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing file: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint: " + path.string());
  const uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw IoError("truncated checkpoint header: " + path.string());

  TensorArchive ar;
  json header;
  try {
    header = json::parse(text);
    ar.meta = header.at("meta");
    const auto data_start = is.tellg();
    for (const auto& e : header.at("tensors")) {
      auto shape = e.at("shape").get<std::vector<int64_t>>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(e.at("dtype").get<std::string>())));
      const auto nbytes = e.at("nbytes").get<uint64_t>();
      if (nbytes != static_cast<uint64_t>(t.numel() * t.element_size()))
        throw IoError("checkpoint: size mismatch for " + e.at("name").get<std::string>());
      is.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<uint64_t>()));
      is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!is) throw IoError("truncated checkpoint data: " + path.string());
      ar.tensors_.emplace_back(e.at("name").get<std::string>(), t);
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header " + path.string() + ": " + e.what());
  }
  return ar;
}

void add_module(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters()) ar.add(prefix + "." + p.key(), p.value());
  for (const auto& b : m.named_buffers()) ar.add(prefix + "." + b.key(), b.value());
}

void load_module(const TensorArchive& ar, const std::string& prefix, torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& key, torch::Tensor dst) {
    const std::string name = prefix + "." + key;
    if (!ar.has(name)) throw ConfigError("checkpoint is missing " + name);
    const auto& src = ar.get(name);
    if (src.sizes() != dst.sizes())
      throw ConfigError("checkpoint tensor " + name + " has an incompatible shape");
    dst.copy_(src);
  };
  for (auto& p : m.named_parameters()) copy(p.key(), p.value());
  for (auto& b : m.named_buffers()) copy(b.key(), b.value());
}

}  // namespace targan
