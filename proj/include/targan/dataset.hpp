#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "targan/image.hpp"

namespace targan {

/// Monotone piecewise-linear map of [0,1] onto itself, given by knots
/// (x, y) with x and y strictly increasing, starting at (0,0) and ending at (1,1).
struct TransferMap {
  std::vector<std::pair<double, double>> knots;

  double apply(double x) const;
  double invert(double y) const;
  void validate() const;  // throws ConfigError
};

/// Procedural stand-in for a multi-modality abdominal corpus. Every anatomy is
/// a latent tissue map in [0,1]; modality m renders it through its own transfer
/// map, so the ground-truth translation between any two modalities is known.
struct PhantomSpec {
  int64_t resolution = 64;
  int n_modalities = 3;
  int n_anatomies = 60;
  int organ_count_min = 2;  // target organ included
  int organ_count_max = 5;
  double target_latent = 0.6;                 // latent tissue value of the target organ
  std::vector<double> target_organ_intensity;  // per modality: image of target_latent
  std::vector<TransferMap> modality_transfer;
  double noise_sigma = 0.02;
  double train_fraction = 0.5;
  std::vector<std::string> modality_names;

  /// Gamma-like transfer curves spread around the identity.
  static PhantomSpec defaults(int n_modalities = 3);
  void validate() const;  // throws ConfigError
  /// modality_transfer[m] with the (target_latent, target_organ_intensity[m]) knot inserted.
  TransferMap effective_transfer(int m) const;
};

enum class Split { Train, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Sample {
  Image x;
  Mask y;
  Modality modality;
  std::string id;
  int anatomy = -1;
  Split split = Split::Train;
};

struct SampleRecord {
  std::string id;
  int modality = 0;
  std::string image;  // relative to root
  std::string mask;
  Split split = Split::Train;
  int anatomy = -1;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> modalities;
  std::vector<SampleRecord> samples;

  void save() const;  // writes <root>/manifest.json
  static DatasetManifest read(const std::filesystem::path& manifest_path);
};

/// In-memory dataset; immutable after construction.
class Dataset {
 public:
  Dataset(std::vector<std::string> modalities, std::vector<Sample> samples);

  int n_modalities() const { return static_cast<int>(modalities_.size()); }
  const std::vector<std::string>& modality_names() const { return modalities_; }
  Modality modality(int id) const { return {id, modalities_.at(id)}; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](size_t i) const { return samples_[i]; }
  const std::vector<size_t>& train_indices() const { return train_; }
  const std::vector<size_t>& test_indices() const { return test_; }
  std::vector<size_t> indices(Split split, int modality) const;
  /// Index of the sample rendering `anatomy` in `modality`, or -1.
  int64_t find(int anatomy, int modality) const;
  int64_t resolution() const { return samples_.empty() ? 0 : samples_.front().x.height; }

 private:
  std::vector<std::string> modalities_;
  std::vector<Sample> samples_;
  std::vector<size_t> train_;
  std::vector<size_t> test_;
};

struct Anatomy {
  std::vector<double> latent;  // [0,1], 0 outside the body
  Mask body;
  Mask target;
};

Anatomy render_anatomy(const PhantomSpec& spec, std::mt19937_64& rng);
Image render_modality(const PhantomSpec& spec, const Anatomy& anatomy, int modality);

/// Phantom samples exactly as they will read back from disk (16-bit quantized).
Dataset make_phantom_dataset(const PhantomSpec& spec, uint64_t seed);

/// Renders the phantom corpus and writes images, masks and manifest.json under root.
DatasetManifest generate_phantom_dataset(const PhantomSpec& spec, uint64_t seed,
                                         const std::filesystem::path& root);

Dataset load_dataset(const std::filesystem::path& manifest_path);

struct BatchItem {
  size_t sample = 0;
  int source = 0;
  int target = 0;
};
using Batch = std::vector<BatchItem>;

/// Uniform draw of training samples with an independent uniform target modality
/// (t == s allowed).
Batch sample_training_batch(const Dataset& data, int batch_size, std::mt19937_64& rng);

}  // namespace targan
