#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "targan/errors.hpp"

namespace targan {

struct LossWeights {
  double lambda_cls_r = 1.0;
  double lambda_cls_f = 1.0;
  double lambda_rec = 1.0;
  double lambda_cross = 50.0;
  double lambda_u = 0.01;
  double lambda_gp = 10.0;

  void validate() const;  // all >= 0
};

// All pixel-wise losses reduce by the mean over pixels and batch.

/// WGAN critic objective: mean(fake) - mean(real).
torch::Tensor critic_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
/// -mean(fake).
torch::Tensor generator_adv_loss(const torch::Tensor& fake_scores);

/// Penalty for one set of interpolates: mean over the batch of
/// (||d mean_patch(critic(x)) / dx||_2 - 1)^2. The graph is kept, so the
/// result can be differentiated again w.r.t. the critic's parameters.
template <class Critic>
torch::Tensor gradient_penalty_at(Critic&& critic, torch::Tensor interpolates) {
  interpolates = interpolates.detach().requires_grad_(true);
  const torch::Tensor scores = critic(interpolates);
  const int64_t batch = interpolates.size(0);
  // per-example scalars; examples do not interact inside the critic
  const torch::Tensor per_example = scores.reshape({batch, -1}).mean(1);
  const torch::Tensor grad = torch::autograd::grad({per_example.sum()}, {interpolates},
                                                   /*grad_outputs=*/{}, /*retain_graph=*/true,
                                                   /*create_graph=*/true)[0];
  const torch::Tensor norms = grad.reshape({batch, -1}).norm(2, 1);
  if (!torch::isfinite(norms).all().item<bool>())
    throw NumericalError("gradient penalty: non-finite critic gradient");
  return (norms - 1.0).square().mean();
}

/// WGAN-GP penalty on random interpolates u * real + (1 - u) * fake, with one
/// u ~ U(0,1) per example drawn from `gen`.
template <class Critic>
torch::Tensor gradient_penalty(Critic&& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               std::optional<at::Generator> gen = std::nullopt) {
  if (real.sizes() != fake.sizes()) throw ShapeError("gradient penalty: batch shapes differ");
  std::vector<int64_t> ushape(static_cast<size_t>(real.dim()), 1);
  ushape[0] = real.size(0);
  const torch::Tensor u = torch::rand(ushape, gen, real.options());
  return gradient_penalty_at(std::forward<Critic>(critic),
                             u * real.detach() + (1.0 - u) * fake.detach());
}

/// Mean cross-entropy of logits [B, K] against integer labels [B].
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels);

/// Provenance label of a translated image: n + source modality.
torch::Tensor fake_provenance_label(const torch::Tensor& source, int64_t n_modalities);

/// Real-image classification with the untraceable term:
/// CE(real_logits, s) + lambda_u * CE(fake_logits, s').
torch::Tensor cls_loss_real(const torch::Tensor& real_logits, const torch::Tensor& s,
                            const torch::Tensor& fake_logits, const torch::Tensor& s_prime,
                            double lambda_u);
/// CE(fake_logits, t), with t a real-modality category.
torch::Tensor cls_loss_fake(const torch::Tensor& fake_logits, const torch::Tensor& t);

/// Mean squared error between the shape controller output and the binarized source.
torch::Tensor shape_consistency_loss(const torch::Tensor& s_out, const torch::Tensor& b);
/// Mean absolute error.
torch::Tensor reconstruction_loss(const torch::Tensor& x_rec, const torch::Tensor& x_orig);
/// Mean |mask_background(x_t, y) - r_t|: ties the whole-image output inside
/// the target area to the target-stream output.
torch::Tensor crossing_loss(const torch::Tensor& x_t, const torch::Tensor& y, const torch::Tensor& r_t);

// ---------------------------------------------------------------------------
// Objective composition, generic over double and torch::Tensor.

template <class T>
T compose_d_loss(const T& critic, const T& gp, const T& cls_r, const LossWeights& w) {
  return critic + w.lambda_gp * gp + w.lambda_cls_r * cls_r;
}

template <class T>
T compose_g_loss(const T& adv_x, const T& adv_r, const T& cls_f_x, const T& cls_f_r, const T& rec_x,
                 const T& rec_r, const T& cross, const LossWeights& w) {
  return adv_x + w.lambda_cls_f * cls_f_x + w.lambda_rec * rec_x + adv_r +
         w.lambda_cls_f * cls_f_r + w.lambda_rec * rec_r + w.lambda_cross * cross;
}

/// Scalar loss values of one training iteration. adv_x/adv_r are the
/// generator-side adversarial terms; critic_x/critic_r are the critic-side
/// terms that enter total_Dx/total_Dr.
struct LossReport {
  double adv_x = 0, adv_r = 0;
  double critic_x = 0, critic_r = 0;
  double gp_x = 0, gp_r = 0;
  double cls_r_x = 0, cls_r_r = 0;
  double cls_f_x = 0, cls_f_r = 0;
  double shape_x = 0, shape_r = 0;
  double rec_x = 0, rec_r = 0;
  double cross = 0;
  double total_D_x = 0, total_D_r = 0;
  double total_G = 0, total_GS = 0;

  static const std::vector<std::string>& csv_columns();
  static std::string csv_header();
  std::string csv_row(int64_t step) const;
  bool all_finite() const;
  std::string describe() const;  // name=value pairs for diagnostics
  /// Copies the D-step fields (critic, gp, cls_r, total_D) from `d`.
  void merge_d(const LossReport& d);
};

enum class Stream { X, R };

double total_D_loss(const LossReport& r, const LossWeights& w, Stream stream);
double total_G_loss(const LossReport& r, const LossWeights& w);
double total_GS_loss(const LossReport& r);

}  // namespace targan
