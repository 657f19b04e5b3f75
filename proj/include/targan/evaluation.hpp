#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "targan/dataset.hpp"
#include "targan/metrics.hpp"
#include "targan/networks.hpp"
#include "targan/training.hpp"

namespace targan {

/// Fixed random conv features standing in for Inception: three stride-2
/// 3x3 convolutions with ReLU, then global average pooling to `dim` values.
/// Weights come from a private generator, so the global torch RNG is untouched.
class FeatureEmbedder {
 public:
  explicit FeatureEmbedder(uint64_t seed = 0, int64_t dim = 64, int64_t in_channels = 1);

  torch::Tensor embed(const torch::Tensor& images) const;  // [B,C,H,W] -> [B,dim]
  Eigen::MatrixXd embed(const std::vector<Image>& images) const;
  int64_t dim() const { return dim_; }
  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  int64_t dim_;
  std::vector<torch::Tensor> weights_, biases_;
};

/// Frechet distance between Gaussian fits of the two embedding sets.
double compute_fid(const FeatureEmbedder& embedder, const std::vector<Image>& real,
                   const std::vector<Image>& fake);

// ---------------------------------------------------------------------------
// Segmentation

struct SegmenterConfig {
  int64_t base_channels = 16;
  int64_t depth = 2;
  double lr = 1e-3;
  int batch_size = 8;
  int max_steps = 2000;
  double target_dice = 0.85;  // early stop on held-out DICE; > 1 disables
  int eval_every = 50;
  uint64_t seed = 0;
};

struct Segmenter {
  UNet net{nullptr};
  int modality = -1;  // -1 when not tied to one modality
  double heldout_dice = 0;
  int64_t steps = 0;

  int64_t in_channels() const { return net->config().in_channels; }
  /// Probabilities [B,1,H,W] for inputs [B,C,H,W] in [-1, 1].
  torch::Tensor probabilities(const torch::Tensor& inputs);
  /// Masks thresholded at 0.5.
  std::vector<Mask> predict(const torch::Tensor& inputs);
  std::vector<Mask> predict(const std::vector<Image>& images);

  void save(const std::filesystem::path& path) const;
  static Segmenter load(const std::filesystem::path& path);
};

/// 1 - (2 sum(p y) + 1) / (sum p + sum y + 1)
torch::Tensor soft_dice_loss(const torch::Tensor& probs, const torch::Tensor& target);

/// Supervised training on (inputs [N,C,H,W], masks [N,1,H,W]) with soft-dice
/// loss; held-out DICE is checked every eval_every steps.
Segmenter train_segmenter(const torch::Tensor& inputs, const torch::Tensor& masks,
                          const torch::Tensor& heldout_inputs, const std::vector<Mask>& heldout_masks,
                          const SegmenterConfig& cfg);

/// Segmenter for one modality, trained on the real train split and validated on the test split.
Segmenter train_reference_segmenter(const Dataset& data, int modality, const SegmenterConfig& cfg = {});

double mean_dice(const std::vector<Mask>& predicted, const std::vector<Mask>& reference);
double mean_ravd(const std::vector<Mask>& predicted, const std::vector<Mask>& reference);

/// Mean DICE x 100 between the segmenter's predictions on translated images
/// and the source masks.
double compute_s_score(Segmenter& segmenter, const std::vector<Image>& translated,
                       const std::vector<Mask>& source_masks);

// ---------------------------------------------------------------------------
// Translation

/// Translates one image with the whole-image stream.
Image translate_image(Generator& g, const Image& x, int target);

struct TranslationError {
  double whole_l1 = 0;
  double target_l1 = 0;
};

/// L1 error of G(x_s, t) against the modality-t rendering of the same
/// anatomy, pooled over every pixel (whole) and over mask pixels (target).
TranslationError phantom_translation_error(Generator& g, const Dataset& data, int s, int t,
                                           Split split = Split::Test);

/// Translations into one target modality from every other modality.
struct TranslatedSet {
  int target = 0;
  std::vector<Image> fake;
  std::vector<Mask> masks;          // source masks
  std::vector<const Image*> truth;  // same-anatomy rendering in the target modality
};
std::vector<TranslatedSet> translate_split(Generator& g, const Dataset& data, Split split = Split::Test);

/// Channel stack [real, synthetic...]: [H,W], [1,H,W] or [B,1,H,W] inputs,
/// concatenated along the channel axis.
torch::Tensor enrichment_concat(const torch::Tensor& real, const std::vector<torch::Tensor>& synthetic);

/// [real, G(real, t) for every t != source in ascending id] for a batch [B,1,H,W].
torch::Tensor enrich(Generator& g, const torch::Tensor& real, int source, int n_modalities);

struct EnrichmentResult {
  std::vector<double> single_dice;    // per modality, held-out
  std::vector<double> enriched_dice;  // per modality, held-out
  double mean_single() const;
  double mean_enriched() const;
};

/// For each modality, trains one segmenter on the real channel alone and one
/// on the enriched stack with the same budget and seed, and compares held-out DICE.
EnrichmentResult run_enrichment_experiment(Generator& g, const Dataset& data, const SegmenterConfig& cfg);

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& all_metric_names() {
  static const std::vector<std::string> names = {"fid", "s_score", "dice", "ravd", "whole_l1", "target_l1"};
  return names;
}

struct EvalOptions {
  std::set<std::string> metrics{all_metric_names().begin(), all_metric_names().end()};
  Split split = Split::Test;
  uint64_t embedder_seed = 0;
  int64_t embedder_dim = 64;

  void validate() const;  // ConfigError for an unknown metric name
  bool wants(const std::string& m) const { return metrics.count(m) > 0; }
  bool needs_segmenters() const { return wants("s_score") || wants("dice") || wants("ravd"); }
};

struct EvalReport {
  std::vector<std::string> modalities;
  std::vector<std::map<std::string, double>> per_modality;
  std::map<std::string, double> mean;
  std::string config_hash;
  std::string checkpoint_path;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // modality,<metric...> with a final "mean" row
};

/// segmenters[t] must be trained on real modality-t images when a
/// segmentation metric is requested.
EvalReport evaluate(Generator& g, const Dataset& data, const EvalOptions& options,
                    std::vector<Segmenter>* segmenters = nullptr);

// ---------------------------------------------------------------------------
// Ablation

using AblationVariant = ModelVariant;

/// The six rows of the ablation table, weakest first.
std::vector<AblationVariant> standard_ablation_variants();

/// Directory-safe variant name: "targan", "targan_wo_s_c", ...
std::string variant_slug(const AblationVariant& v);

struct AblationOptions {
  ModelConfig model;
  TrainConfig train;  // seed is overridden per run
  std::vector<uint64_t> seeds = {0, 1, 2};
  std::filesystem::path out_dir;  // empty: nothing written
  int keep_last_checkpoints = 1;
  bool sample_grids = false;
  std::function<void(const std::string&)> log;
};

struct AblationRun {
  AblationVariant variant;
  uint64_t seed = 0;
  std::vector<double> s_score;  // per target modality
  double mean_s_score = 0;
  TranslationError error;       // mean over ordered modality pairs s != t
  double initial_cross = 0;     // before the first update
  double first_epoch_cross = 0; // mean over the first epoch
  double final_cross = 0;       // mean over the last epoch
  std::filesystem::path checkpoint;

  nlohmann::json to_json() const;
};

struct AblationResult {
  std::vector<std::string> modalities;
  std::vector<AblationVariant> variants;
  std::vector<AblationRun> runs;

  /// Rows = variants, columns = modalities + Mean; seed-averaged S-scores.
  std::string table_csv() const;
  std::vector<const AblationRun*> runs_for(const AblationVariant& v) const;
};

/// Trains every variant from scratch for every seed and scores it with the
/// reference segmenters (one per modality). Variants are validated before
/// any training starts.
AblationResult run_ablation(const std::vector<AblationVariant>& variants, const Dataset& data,
                            std::vector<Segmenter>& segmenters, const AblationOptions& options);

/// Mean over ordered pairs s != t of phantom_translation_error.
TranslationError mean_translation_error(Generator& g, const Dataset& data, Split split = Split::Test);

}  // namespace targan
