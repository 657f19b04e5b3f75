#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "targan/dataset.hpp"
#include "targan/evaluation.hpp"
#include "targan/training.hpp"

namespace targan {

nlohmann::json to_json(const PhantomSpec& spec);
/// Missing keys keep PhantomSpec::defaults(n_modalities) values.
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SegmenterConfig& c);
SegmenterConfig segmenter_config_from_json(const nlohmann::json& j);

struct EvalConfig {
  EvalOptions options;
  SegmenterConfig segmenter;
  std::filesystem::path segmenter_dir;  // empty: <out_dir>/segmenters
};

struct AblationConfig {
  std::vector<uint64_t> seeds;  // empty: seed, seed + 1, seed + 2
  std::vector<ModelVariant> variants = standard_ablation_variants();
};

/// Everything one invocation needs. All randomness derives from `seed`.
struct RunConfig {
  uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path data_dir;  // empty: <out_dir>/data
  PhantomSpec phantom = PhantomSpec::defaults(3);
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  AblationConfig ablation;

  /// Copies seed into every seeded component and validates every section.
  void resolve();

  std::filesystem::path data_root() const { return data_dir.empty() ? out_dir / "data" : data_dir; }
  std::filesystem::path segmenter_root() const {
    return eval.segmenter_dir.empty() ? out_dir / "segmenters" : eval.segmenter_dir;
  }

  nlohmann::json to_json() const;
  /// Unknown keys raise ConfigError naming the key.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

/// Stable FNV-1a hash of a JSON document's compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

/// Writes resolved_config.json into dir.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace targan
