#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "targan/checkpoint.hpp"
#include "targan/dataset.hpp"
#include "targan/losses.hpp"
#include "targan/networks.hpp"

namespace targan {

/// Which components of the full model are active. The crossing loss needs
/// the target stream.
struct ModelVariant {
  bool use_shape_controller = true;
  bool use_target_stream = true;
  bool use_crossing = true;

  void validate() const;  // ConfigError for use_crossing without use_target_stream
  std::string name() const;  // "TarGAN", "TarGAN w/o S,C", ...
  friend bool operator==(const ModelVariant&, const ModelVariant&) = default;
};

struct ModelConfig {
  GeneratorConfig generator;
  UNetConfig shape_controller;
  DiscriminatorConfig discriminator;
  ModelVariant variant;
};

struct TrainConfig {
  double lr_G_S = 1e-4;
  double lr_D = 3e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int batch_size = 4;
  int epochs = 50;
  double ema_decay = 0.999;
  LossWeights weights;
  uint64_t seed = 0;
  int d_steps_per_g_step = 1;

  void validate() const;
};

/// Adam over a fixed list of named parameters, with explicit state so a
/// checkpoint can restore it exactly.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1, double beta2,
       double eps = 1e-8);

  void zero_grad();
  void step();
  int64_t steps() const { return steps_; }
  double lr() const { return lr_; }

  void save(TensorArchive& ar, const std::string& prefix) const;
  void load(const TensorArchive& ar, const std::string& prefix);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::vector<torch::Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t steps_ = 0;
};

/// ema <- decay * ema + (1 - decay) * g, parameter by parameter.
void ema_update(torch::nn::Module& ema, const torch::nn::Module& g, double decay);
void ema_update(torch::Tensor& ema, const torch::Tensor& g, double decay);

/// Copies every parameter and buffer of src into dst (same architecture).
void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src);

struct BatchTensors {
  torch::Tensor x_s;  // [B,1,H,W]
  torch::Tensor y;    // [B,1,H,W] 0/1
  torch::Tensor r_s;  // target-area images
  torch::Tensor s;    // [B] int64
  torch::Tensor t;    // [B] int64
};
BatchTensors make_batch_tensors(const Dataset& data, const Batch& batch);

/// Owns every piece of training state: networks, optimizer moments, the EMA
/// generator, counters and random streams.
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train, int n_modalities, int64_t resolution);

  /// One Adam step on each active discriminator. Generator outputs are constants.
  LossReport train_step_D(const BatchTensors& b);
  /// One Adam step on G and S over the full translation + cycle graph, then the EMA update.
  LossReport train_step_G_S(const BatchTensors& b);

  /// Runs d_steps_per_g_step D steps then one G/S step on batches drawn from
  /// the trainer's own batch stream. Returns the merged report.
  LossReport iteration(const Dataset& data);

  /// Test-time generator: the EMA copy if present, else the raw generator.
  Generator& generator_for_inference(bool prefer_ema = true);

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Throws ConfigError when expected_modalities is given and differs.
  static Trainer load_checkpoint(const std::filesystem::path& path,
                                 std::optional<int> expected_modalities = std::nullopt);

  const ModelConfig& model_config() const { return model_; }
  const TrainConfig& train_config() const { return train_; }
  int n_modalities() const { return n_modalities_; }
  int64_t resolution() const { return resolution_; }
  int64_t step() const { return step_; }
  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }
  // A resumed run may extend the schedule; everything else comes from the checkpoint.
  void set_total_epochs(int e) { train_.epochs = e; }
  bool has_ema() const { return !G_ema.is_empty(); }
  const LossWeights& effective_weights() const { return weights_; }
  std::mt19937_64& batch_rng() { return batch_rng_; }

  Generator G{nullptr};
  Generator G_ema{nullptr};
  ShapeController S{nullptr};
  Discriminator Dx{nullptr}, Dr{nullptr};

 private:
  void check_finite(const LossReport& r, const char* phase) const;

  ModelConfig model_;
  TrainConfig train_;
  LossWeights weights_;
  int n_modalities_;
  int64_t resolution_;
  std::unique_ptr<Adam> opt_G_, opt_S_, opt_Dx_, opt_Dr_;
  int64_t step_ = 0;    // completed G/S steps
  int64_t d_step_ = 0;  // completed D steps
  int epoch_ = 0;       // completed epochs
  at::Generator torch_rng_;
  std::mt19937_64 batch_rng_;
};

nlohmann::json to_json(const ModelConfig& m);
nlohmann::json to_json(const TrainConfig& t);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  bool checkpoint_every_epoch = true;
  int keep_last_checkpoints = 0;  // 0 keeps every epoch checkpoint
  bool sample_grids = true;
  std::optional<std::filesystem::path> resume;
  std::function<void(int epoch, const LossReport& mean)> on_epoch;
};

struct TrainResult {
  Trainer trainer;
  std::vector<LossReport> history;  // one report per G step, this run only
  double initial_cross = 0;         // crossing loss at the very first G step
};

/// Full training loop: epochs x (train_size / batch_size) iterations, one
/// loss-CSV row per G step, a checkpoint and a sample grid per epoch. On a
/// non-finite loss the state is checkpointed to abort.ckpt and the
/// NumericalError is rethrown.
TrainResult train(const ModelConfig& model, const TrainConfig& config, const Dataset& data,
                  const TrainOptions& options = {});

int iterations_per_epoch(const Dataset& data, int batch_size);

/// n x n grid, rows = source modality, columns = target modality.
Image sample_grid(Generator& g, const Dataset& data);

}  // namespace targan
