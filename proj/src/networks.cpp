#include "targan/networks.hpp"

#include "targan/errors.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace targan {

void GeneratorConfig::validate(int64_t resolution) const {
  if (base_channels <= 0 || base_channels % 2 != 0)
    throw ConfigError("generator base_channels must be positive and even (half-channel skips)");
  if (depth < 1) throw ConfigError("generator depth must be at least 1");
  if (middle_blocks < 0) throw ConfigError("generator middle_blocks must be >= 0");
  if (n_modalities < 2) throw ConfigError("generator needs at least two modalities");
  if (resolution % (int64_t{1} << depth) != 0)
    throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by 2^" +
                      std::to_string(depth));
}

void UNetConfig::validate(int64_t resolution) const {
  if (in_channels < 1 || base_channels < 1 || depth < 1)
    throw ConfigError("invalid U-Net configuration");
  if (resolution % (int64_t{1} << depth) != 0)
    throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by 2^" +
                      std::to_string(depth));
}

void DiscriminatorConfig::validate(int64_t resolution) const {
  if (base_channels < 1 || n_layers < 1) throw ConfigError("invalid discriminator configuration");
  if (n_modalities < 2) throw ConfigError("discriminator needs at least two modalities");
  if (resolution % (int64_t{1} << n_layers) != 0)
    throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by 2^" +
                      std::to_string(n_layers));
}

// ---------------------------------------------------------------------------

torch::Tensor to_tensor(const Image& img) {
  return torch::from_blob(const_cast<float*>(img.values.data()), {1, 1, img.height, img.width},
                          torch::kFloat32)
      .clone();
}

torch::Tensor to_tensor(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw ShapeError("empty image batch");
  std::vector<torch::Tensor> parts;
  parts.reserve(imgs.size());
  for (const Image* img : imgs) {
    if (img->height != imgs.front()->height || img->width != imgs.front()->width)
      throw ShapeError("batch images differ in size");
    parts.push_back(to_tensor(*img));
  }
  return torch::cat(parts, 0);
}

torch::Tensor to_tensor(const Mask& mask) {
  auto t = torch::from_blob(const_cast<uint8_t*>(mask.values.data()), {1, 1, mask.height, mask.width},
                            torch::kUInt8);
  return t.to(torch::kFloat32);
}

Image to_image(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  if (c.dim() == 4 && c.size(0) == 1 && c.size(1) == 1) c = c[0][0];
  if (c.dim() == 3 && c.size(0) == 1) c = c[0];
  if (c.dim() != 2) throw ShapeError("to_image expects a single-channel 2-D tensor");
  c = c.contiguous();
  const float* p = c.data_ptr<float>();
  return Image(c.size(0), c.size(1), std::vector<float>(p, p + c.numel()));
}

Mask to_mask(const torch::Tensor& t, double threshold) {
  Image img = to_image(t);
  Mask m(img.height, img.width);
  for (int64_t i = 0; i < img.size(); ++i) m.values[i] = img.values[i] > threshold ? 1 : 0;
  return m;
}

torch::Tensor mask_background(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.sizes() != y.sizes()) throw ShapeError("mask_background: image and mask shapes differ");
  return torch::where(y > 0.5, x, torch::full_like(x, -1.0));
}

torch::Tensor binarize(const torch::Tensor& x, double eps) {
  return (x > -1.0 + eps).to(x.scalar_type());
}

torch::Tensor inject_modality(const torch::Tensor& x, const torch::Tensor& t, int64_t n) {
  if (x.dim() != 4) throw ShapeError("inject_modality expects [B, C, H, W]");
  if (t.dim() != 1 || t.size(0) != x.size(0)) throw ShapeError("one modality label per batch item");
  if (t.numel() > 0 && (t.min().item<int64_t>() < 0 || t.max().item<int64_t>() >= n))
    throw ConfigError("modality label out of range [0, " + std::to_string(n) + ")");
  auto onehot = F::one_hot(t.to(torch::kLong), n).to(x.dtype());  // [B, n]
  auto tiled = onehot.view({x.size(0), n, 1, 1}).expand({x.size(0), n, x.size(2), x.size(3)});
  return torch::cat({x, tiled}, 1);
}

torch::Tensor strip_modality(const torch::Tensor& xt, int64_t image_channels) {
  return xt.narrow(1, 0, image_channels);
}

int64_t half_channels(int64_t channels) {
  if (channels % 2 != 0)
    throw ConfigError("half-channel skip needs an even channel count, got " + std::to_string(channels));
  return channels / 2;
}

torch::Tensor half_channel_skip(const torch::Tensor& feature) {
  return feature.narrow(1, 0, half_channels(feature.size(1)));
}

// ---------------------------------------------------------------------------

namespace {

nn::Sequential conv_in_relu(int64_t in, int64_t out, int64_t stride) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)),
      nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)), nn::ReLU());
}

}  // namespace

EncoderImpl::EncoderImpl(int64_t in_channels, int64_t base_channels, int64_t depth) {
  stem_ = register_module("stem", conv_in_relu(in_channels, base_channels, 1));
  for (int64_t l = 0; l < depth; ++l) {
    down_.push_back(register_module("down" + std::to_string(l),
                                    conv_in_relu(base_channels << l, base_channels << (l + 1), 2)));
  }
}

std::vector<torch::Tensor> EncoderImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> features;
  features.push_back(stem_->forward(x));
  for (auto& d : down_) features.push_back(d->forward(features.back()));
  return features;
}

MiddleBlockImpl::MiddleBlockImpl(int64_t channels, int64_t n_blocks) {
  for (int64_t b = 0; b < n_blocks; ++b) {
    blocks_.push_back(register_module(
        "res" + std::to_string(b),
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)),
                       nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true)),
                       nn::ReLU(),
                       nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)),
                       nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true)))));
  }
}

torch::Tensor MiddleBlockImpl::forward(torch::Tensor x) {
  for (auto& b : blocks_) x = x + b->forward(x);
  return x;
}

DecoderImpl::DecoderImpl(int64_t base_channels, int64_t depth, bool half_skips)
    : half_skips_(half_skips) {
  up_.resize(static_cast<size_t>(depth));
  for (int64_t l = depth - 1; l >= 0; --l) {
    const int64_t skip = half_skips ? half_channels(base_channels << l) : (base_channels << l);
    up_[l] = register_module("up" + std::to_string(l),
                             conv_in_relu((base_channels << (l + 1)) + skip, base_channels << l, 1));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(base_channels, 1, 3).padding(1)));
}

torch::Tensor DecoderImpl::forward(torch::Tensor x, const std::vector<torch::Tensor>& features) {
  for (int64_t l = static_cast<int64_t>(up_.size()) - 1; l >= 0; --l) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{features[l].size(2), features[l].size(3)})
                              .mode(torch::kNearest));
    const auto& skip = half_skips_ ? half_channel_skip(features[l]) : features[l];
    x = up_[l]->forward(torch::cat({x, skip}, 1));
  }
  return head_->forward(x);
}

// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(cfg) {
  const int64_t in = 1 + cfg_.n_modalities;
  encoder_x = register_module("encoder_x", Encoder(in, cfg_.base_channels, cfg_.depth));
  if (cfg_.target_stream)
    encoder_r = register_module("encoder_r", Encoder(in, cfg_.base_channels, cfg_.depth));
  middle = register_module("middle", MiddleBlock(cfg_.channels(cfg_.depth), cfg_.middle_blocks));
  decoder_x = register_module("decoder_x", Decoder(cfg_.base_channels, cfg_.depth, true));
  if (cfg_.target_stream)
    decoder_r = register_module("decoder_r", Decoder(cfg_.base_channels, cfg_.depth, true));
}

torch::Tensor GeneratorImpl::stream(Encoder& enc, Decoder& dec, const torch::Tensor& img,
                                    const torch::Tensor& t) {
  const int64_t div = int64_t{1} << cfg_.depth;
  if (img.size(2) % div != 0 || img.size(3) % div != 0)
    throw ConfigError("input " + std::to_string(img.size(2)) + "x" + std::to_string(img.size(3)) +
                      " is not divisible by 2^" + std::to_string(cfg_.depth));
  auto features = enc->forward(inject_modality(img, t, cfg_.n_modalities));
  auto bottom = middle->forward(features.back());
  return torch::tanh(dec->forward(bottom, features));
}

std::pair<torch::Tensor, torch::Tensor> GeneratorImpl::forward(const torch::Tensor& x_s,
                                                               const torch::Tensor& r_s,
                                                               const torch::Tensor& t) {
  if (!cfg_.target_stream) throw ConfigError("generator was built without the target stream");
  if (x_s.sizes() != r_s.sizes())
    throw ShapeError("whole image and target-area image must have the same shape");
  auto x_t = stream(encoder_x, decoder_x, x_s, t);
  auto r_t = stream(encoder_r, decoder_r, r_s, t);
  return {x_t, r_t};
}

torch::Tensor GeneratorImpl::translate(const torch::Tensor& x_s, const torch::Tensor& t) {
  return stream(encoder_x, decoder_x, x_s, t);
}

UNetImpl::UNetImpl(UNetConfig cfg) : cfg_(cfg) {
  encoder_ = register_module("encoder", Encoder(cfg_.in_channels, cfg_.base_channels, cfg_.depth));
  decoder_ = register_module("decoder", Decoder(cfg_.base_channels, cfg_.depth, false));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) {
  auto features = encoder_->forward(x);
  return torch::sigmoid(decoder_->forward(features.back(), features));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(cfg) {
  nn::Sequential trunk;
  int64_t in = 1;
  for (int64_t l = 0; l < cfg_.n_layers; ++l) {
    const int64_t out = cfg_.base_channels << l;
    trunk->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    trunk->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    in = out;
  }
  trunk_ = register_module("trunk", trunk);
  src_head_ = register_module("src", nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
  cls_head_ = register_module("cls", nn::Linear(in, 2 * cfg_.n_modalities));
}

CriticOutput DiscriminatorImpl::forward(const torch::Tensor& img) {
  auto h = trunk_->forward(img);
  return {src_head_->forward(h), cls_head_->forward(h.mean({2, 3}))};
}

std::vector<std::pair<std::string, std::vector<int64_t>>> parameter_shapes(
    const torch::nn::Module& m) {
  std::vector<std::pair<std::string, std::vector<int64_t>>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value().sizes().vec());
  return out;
}

}  // namespace targan
