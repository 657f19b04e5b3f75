#pragma once

#include <torch/torch.h>

#include <utility>
#include <vector>

#include "targan/image.hpp"

namespace targan {

struct GeneratorConfig {
  int64_t base_channels = 32;
  int64_t depth = 3;          // down/up levels
  int64_t middle_blocks = 2;  // shared residual blocks
  int64_t n_modalities = 3;
  bool target_stream = true;  // false drops encoder_r/decoder_r (ablation "w/o T")

  int64_t channels(int64_t level) const { return base_channels << level; }
  /// Throws ConfigError for an odd base_channels or a resolution that does
  /// not halve cleanly `depth` times.
  void validate(int64_t resolution) const;
};

struct UNetConfig {
  int64_t in_channels = 1;
  int64_t base_channels = 16;
  int64_t depth = 2;

  void validate(int64_t resolution) const;
};

struct DiscriminatorConfig {
  int64_t base_channels = 32;
  int64_t n_layers = 3;  // stride-2 convolutions; patch map is H / 2^n_layers
  int64_t n_modalities = 3;

  void validate(int64_t resolution) const;
};

// ---------------------------------------------------------------------------
// Tensor helpers. Image batches are [B, C, H, W] float tensors.

torch::Tensor to_tensor(const Image& img);                   // [1, 1, H, W]
torch::Tensor to_tensor(const std::vector<const Image*>& imgs);  // [B, 1, H, W]
torch::Tensor to_tensor(const Mask& mask);                   // [1, 1, H, W], float 0/1
Image to_image(const torch::Tensor& t);                      // accepts [H,W], [1,H,W], [1,1,H,W]
Mask to_mask(const torch::Tensor& t, double threshold = 0.5);

/// Same masking rule as extract_target_area, differentiable in x: x inside
/// y, -1 elsewhere (equal to y * (x + 1) - 1 without its rounding).
torch::Tensor mask_background(const torch::Tensor& x, const torch::Tensor& y);

/// Foreground binarization of a batch: 1 where x > -1 + eps.
torch::Tensor binarize(const torch::Tensor& x, double eps = kDefaultForegroundEps);

/// Appends n spatially tiled one-hot label channels; channel 1 + t[b] is ones.
torch::Tensor inject_modality(const torch::Tensor& x, const torch::Tensor& t, int64_t n);
/// Drops the label channels added by inject_modality.
torch::Tensor strip_modality(const torch::Tensor& xt, int64_t image_channels = 1);

/// First half of the channels of a [B, C, H, W] map. Throws ConfigError for odd C.
torch::Tensor half_channel_skip(const torch::Tensor& feature);
int64_t half_channels(int64_t channels);

// ---------------------------------------------------------------------------
// Building blocks

class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(int64_t in_channels, int64_t base_channels, int64_t depth);
  /// Feature maps for levels 0..depth; level l has base << l channels at H / 2^l.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> down_;
};
TORCH_MODULE(Encoder);

class MiddleBlockImpl : public torch::nn::Module {
 public:
  MiddleBlockImpl(int64_t channels, int64_t n_blocks);
  torch::Tensor forward(torch::Tensor x);

 private:
  std::vector<torch::nn::Sequential> blocks_;
};
TORCH_MODULE(MiddleBlock);

class DecoderImpl : public torch::nn::Module {
 public:
  /// half_skips: concatenate only the first half of each encoder level's channels.
  DecoderImpl(int64_t base_channels, int64_t depth, bool half_skips);
  /// Pre-activation output, one channel.
  torch::Tensor forward(torch::Tensor bottom, const std::vector<torch::Tensor>& features);

 private:
  bool half_skips_;
  std::vector<torch::nn::Sequential> up_;  // up_[l] produces level l
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Decoder);

// ---------------------------------------------------------------------------
// Networks

/// Double-stream U-Net generator. Both streams run through the same middle
/// block; the target stream exists only when cfg.target_stream is set.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig cfg);

  /// (x_t, r_t), both tanh-bounded.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x_s, const torch::Tensor& r_s,
                                                  const torch::Tensor& t);
  /// Whole-image stream only; encoder_r/decoder_r are not touched.
  torch::Tensor translate(const torch::Tensor& x_s, const torch::Tensor& t);

  const GeneratorConfig& config() const { return cfg_; }
  Encoder encoder_x{nullptr}, encoder_r{nullptr};
  MiddleBlock middle{nullptr};
  Decoder decoder_x{nullptr}, decoder_r{nullptr};

 private:
  torch::Tensor stream(Encoder& enc, Decoder& dec, const torch::Tensor& img, const torch::Tensor& t);
  GeneratorConfig cfg_;
};
TORCH_MODULE(Generator);

/// Plain U-Net with full skips and a sigmoid head. Used for the shape
/// controller and the reference segmenter.
class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(UNetConfig cfg);
  torch::Tensor forward(const torch::Tensor& x);  // [B,1,H,W] in [0,1]
  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  Encoder encoder_{nullptr};
  Decoder decoder_{nullptr};
};
TORCH_MODULE(UNet);

using ShapeController = UNet;

struct CriticOutput {
  torch::Tensor src;  // [B, 1, H/2^d, W/2^d], unbounded
  torch::Tensor cls;  // [B, 2n]: real-from-0..n-1, then fake-from-0..n-1
};

/// PatchGAN critic with a global modality/provenance classifier head.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);
  CriticOutput forward(const torch::Tensor& img);
  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d src_head_{nullptr};
  torch::nn::Linear cls_head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Ordered (name, shape) list of a module's parameters.
std::vector<std::pair<std::string, std::vector<int64_t>>> parameter_shapes(
    const torch::nn::Module& m);

}  // namespace targan
