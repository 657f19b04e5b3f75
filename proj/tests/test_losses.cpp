#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "targan/errors.hpp"
#include "targan/losses.hpp"
#include "targan/networks.hpp"

using namespace targan;

namespace {

auto f64() { return torch::TensorOptions().dtype(torch::kFloat64); }

// Central differences of a scalar function of one tensor, compared to autograd.
void expect_gradient_matches(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                             double h = 1e-4, double rel = 1e-3) {
  x = x.detach().clone().requires_grad_(true);
  f(x).backward();
  const auto analytic = x.grad().clone();
  torch::NoGradGuard ng;
  auto flat = x.detach().clone().reshape({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(flat.reshape(x.sizes())).item<double>();
    flat[i] = orig - h;
    const double down = f(flat.reshape(x.sizes())).item<double>();
    flat[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic.reshape({-1})[i].item<double>();
    EXPECT_LE(std::abs(a - numeric), rel * std::max(std::abs(a), std::abs(numeric)) + 1e-9)
        << "element " << i << ": analytic " << a << " numeric " << numeric;
  }
}

}  // namespace

TEST(Adversarial, ClosedForms) {
  EXPECT_DOUBLE_EQ(critic_loss(torch::ones({4, 1, 2, 2}, f64()), torch::zeros({4, 1, 2, 2}, f64())).item<double>(), -1.0);
  EXPECT_DOUBLE_EQ(generator_adv_loss(torch::full({3, 1, 2, 2}, 2.5, f64())).item<double>(), -2.5);
  const auto s = torch::randn({8, 1, 4, 4}, f64());
  EXPECT_DOUBLE_EQ(critic_loss(s, s).item<double>(), 0.0);
}

TEST(GradientPenalty, LinearCritics) {
  const int64_t d = 16;
  auto sum_critic = [](const torch::Tensor& x) { return x.reshape({x.size(0), -1}).sum(1, true); };
  auto first_critic = [](const torch::Tensor& x) { return x.reshape({x.size(0), -1}).narrow(1, 0, 1); };
  auto double_critic = [](const torch::Tensor& x) { return 2.0 * x.reshape({x.size(0), -1}).sum(1, true); };
  for (int trial = 0; trial < 3; ++trial) {
    const auto real = torch::randn({3, 1, 4, 4}, f64()), fake = torch::randn({3, 1, 4, 4}, f64());
    const double g = std::sqrt(static_cast<double>(d));
    EXPECT_NEAR(gradient_penalty(sum_critic, real, fake).item<double>(), std::pow(g - 1, 2), 1e-12);
    EXPECT_NEAR(gradient_penalty(first_critic, real, fake).item<double>(), 0.0, 1e-12);
    EXPECT_NEAR(gradient_penalty(double_critic, real, fake).item<double>(), std::pow(2 * g - 1, 2), 1e-12);
  }
}

TEST(GradientPenalty, SeededInterpolatesAreReproducible) {
  torch::manual_seed(0);
  Discriminator d(DiscriminatorConfig{4, 2, 3});
  auto critic = [&](const torch::Tensor& x) { return d->forward(x).src; };
  const auto real = torch::randn({2, 1, 8, 8}), fake = torch::randn({2, 1, 8, 8});
  auto g1 = at::detail::createCPUGenerator(5), g2 = at::detail::createCPUGenerator(5);
  EXPECT_EQ(gradient_penalty(critic, real, fake, g1).item<float>(), gradient_penalty(critic, real, fake, g2).item<float>());
  EXPECT_THROW(gradient_penalty(critic, real, torch::randn({1, 1, 8, 8})), ShapeError);
}

TEST(Classification, UniformLogits) {
  const double l6 = -std::log(1.0 / 6.0);
  const auto uniform = torch::zeros({4, 6}, f64());
  const auto s = torch::tensor({0, 1, 2, 0}, torch::kLong);
  const auto sp = fake_provenance_label(s, 3);
  EXPECT_TRUE(torch::equal(sp, torch::tensor({3, 4, 5, 3}, torch::kLong)));
  for (double lu : {0.0, 0.01, 1.0}) {
    const double got = cls_loss_real(uniform, s, uniform, sp, lu).item<double>();
    EXPECT_NEAR(got, l6 * (1 + lu), 1e-6 * l6 * (1 + lu));
  }
  EXPECT_NEAR(cls_loss_fake(uniform, s).item<double>(), l6, 1e-12);

  auto confident = torch::zeros({4, 6}, f64());
  for (int i = 0; i < 4; ++i) confident[i][s[i].item<int64_t>()] = 60.0;
  EXPECT_LT(cls_loss_fake(confident, s).item<double>(), 1e-20);
  EXPECT_DOUBLE_EQ(cls_loss_real(confident, s, uniform, sp, 0.0).item<double>(),
                   cross_entropy(confident, s).item<double>());
}

TEST(Classification, FakeCategoryPermutation) {
  auto logits = torch::randn({3, 6}, f64());
  const auto t = torch::tensor({0, 2, 1}, torch::kLong);
  logits.narrow(1, 3, 2).fill_(0.7);
  auto permuted = logits.clone();
  permuted.narrow(1, 3, 3).copy_(logits.narrow(1, 3, 3).flip({1}));
  EXPECT_NEAR(cls_loss_fake(logits, t).item<double>(), cls_loss_fake(permuted, t).item<double>(), 1e-14);
}

TEST(PixelLosses, ClosedForms) {
  const auto b = torch::cat({torch::ones({1, 1, 2, 4}, f64()), torch::zeros({1, 1, 2, 4}, f64())}, 2);
  EXPECT_DOUBLE_EQ(shape_consistency_loss(b, b).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(shape_consistency_loss(torch::full({1, 1, 4, 4}, 0.5, f64()), b).item<double>(), 0.25);
  EXPECT_DOUBLE_EQ(shape_consistency_loss(torch::zeros({1, 1, 4, 4}, f64()), torch::ones({1, 1, 4, 4}, f64())).item<double>(), 1.0);

  const auto x = torch::randn({2, 1, 4, 4}, f64());
  EXPECT_DOUBLE_EQ(reconstruction_loss(x, x).item<double>(), 0.0);
  EXPECT_NEAR(reconstruction_loss(x + 0.1, x).item<double>(), 0.1, 1e-12);
  const auto z = torch::randn({2, 1, 4, 4}, f64());
  EXPECT_DOUBLE_EQ(reconstruction_loss(x, z).item<double>(), reconstruction_loss(z, x).item<double>());
  EXPECT_THROW(reconstruction_loss(x, torch::zeros({2, 1, 4, 3}, f64())), ShapeError);
}

TEST(Crossing, ClosedForms) {
  const auto y = torch::tensor({1.0, 0.0, 0.0, 0.0}, f64()).reshape({1, 1, 2, 2});
  const auto xt = torch::tensor({0.5, 0.3, -0.2, 0.8}, f64()).reshape({1, 1, 2, 2});
  const auto rt = torch::full({1, 1, 2, 2}, -1.0, f64());
  EXPECT_NEAR(crossing_loss(xt, y, rt).item<double>(), 0.375, 1e-12);

  const auto x = torch::randn({2, 1, 4, 4}, f64());
  const auto m = (torch::rand({2, 1, 4, 4}, f64()) > 0.5).to(torch::kFloat64);
  EXPECT_DOUBLE_EQ(crossing_loss(x, m, mask_background(x, m)).item<double>(), 0.0);
  // values outside y do not matter once r_t is background there
  const auto r = torch::randn({2, 1, 4, 4}, f64()).where(m > 0.5, torch::full({}, -1.0, f64()));
  const auto x2 = x + (1 - m) * torch::randn({2, 1, 4, 4}, f64());
  EXPECT_DOUBLE_EQ(crossing_loss(x, m, r).item<double>(), crossing_loss(x2, m, r).item<double>());
}

TEST(Composition, WeightedSums) {
  LossWeights w;
  EXPECT_DOUBLE_EQ(compose_d_loss(0.0, 0.0, 0.0, w), 0.0);
  EXPECT_DOUBLE_EQ(compose_d_loss(0.5, 0.2, 1.0, w), 3.5);
  LossWeights w2 = w;
  w2.lambda_cls_r = 2;
  EXPECT_DOUBLE_EQ(compose_d_loss(0.5, 0.2, 1.0, w2) - compose_d_loss(0.5, 0.2, 1.0, w), 1.0);
  EXPECT_DOUBLE_EQ(compose_g_loss(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.01, w), 6.5);
  LossWeights w3 = w;
  w3.lambda_cross = 7;
  EXPECT_DOUBLE_EQ(compose_g_loss(1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, w),
                   compose_g_loss(1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, w3));
  LossReport r;
  r.shape_x = 0.1;
  r.shape_r = 0.3;
  EXPECT_DOUBLE_EQ(total_GS_loss(r), 0.4);
  const auto t = compose_d_loss(torch::tensor(0.5), torch::tensor(0.2), torch::tensor(1.0), w);
  EXPECT_NEAR(t.item<double>(), 3.5, 1e-6);
}

TEST(Report, CsvHeader) {
  EXPECT_EQ(LossReport::csv_header(),
            "step,adv_x,adv_r,gp_x,gp_r,cls_r_x,cls_r_r,cls_f_x,cls_f_r,shape_x,shape_r,rec_x,rec_r,cross,"
            "total_Dx,total_Dr,total_G,total_GS");
  LossReport r;
  EXPECT_TRUE(r.all_finite());
  r.cross = std::nan("");
  EXPECT_FALSE(r.all_finite());
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
  torch::manual_seed(100 + GetParam());
  const auto other = torch::randn({1, 1, 4, 4}, f64());
  const auto y = (torch::rand({1, 1, 4, 4}, f64()) > 0.5).to(torch::kFloat64);
  const auto b = (torch::rand({1, 1, 4, 4}, f64()) > 0.5).to(torch::kFloat64);
  const auto labels = torch::randint(0, 6, {4}, torch::kLong);

  expect_gradient_matches([&](const torch::Tensor& x) { return crossing_loss(x, y, other); }, torch::randn({1, 1, 4, 4}, f64()));
  expect_gradient_matches([&](const torch::Tensor& r) { return crossing_loss(other, y, r); }, torch::randn({1, 1, 4, 4}, f64()));
  expect_gradient_matches([&](const torch::Tensor& x) { return reconstruction_loss(x, other); }, torch::randn({1, 1, 4, 4}, f64()));
  expect_gradient_matches([&](const torch::Tensor& s) { return shape_consistency_loss(s, b); }, torch::rand({1, 1, 4, 4}, f64()));
  expect_gradient_matches([&](const torch::Tensor& l) { return cls_loss_fake(l, labels.remainder(3)); }, torch::randn({4, 6}, f64()));
  expect_gradient_matches([&](const torch::Tensor& l) { return cls_loss_real(l, labels.remainder(3), l.flip({0}), labels.remainder(3) + 3, 0.5); },
                          torch::randn({4, 6}, f64()));
  expect_gradient_matches([&](const torch::Tensor& f) { return critic_loss(other, f); }, torch::randn({1, 1, 4, 4}, f64()));
  expect_gradient_matches([&](const torch::Tensor& f) { return generator_adv_loss(f); }, torch::randn({1, 1, 4, 4}, f64()));
}

INSTANTIATE_TEST_SUITE_P(RandomTrials, GradientCheck, ::testing::Range(0, 20));
