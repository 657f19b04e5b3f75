#include <gtest/gtest.h>

#include <cmath>

#include "targan/errors.hpp"
#include "targan/training.hpp"
#include "test_util.hpp"

using namespace targan;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.generator.base_channels = 4;
  m.generator.depth = 2;
  m.generator.middle_blocks = 1;
  m.shape_controller.base_channels = 4;
  m.discriminator.base_channels = 4;
  m.discriminator.n_layers = 2;
  return m;
}

TrainConfig tiny_train(int epochs = 2) {
  TrainConfig t;
  t.batch_size = 2;
  t.epochs = epochs;
  t.seed = 11;
  return t;
}

const Dataset& tiny_data() {
  static const Dataset d = make_phantom_dataset(test::small_spec(16, 8), 4);
  return d;
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

bool same(const std::vector<torch::Tensor>& a, const torch::nn::Module& m) {
  const auto b = m.parameters();
  for (size_t i = 0; i < a.size(); ++i)
    if (!torch::equal(a[i], b[i])) return false;
  return true;
}

}  // namespace

TEST(Ema, ArithmeticAndSeries) {
  auto e = torch::zeros({3}, torch::kFloat64);
  const auto g = torch::ones({3}, torch::kFloat64);
  ema_update(e, g, 0.999);
  EXPECT_NEAR(e[0].item<double>(), 0.001, 1e-15);
  for (int k = 2; k <= 500; ++k) ema_update(e, g, 0.999);
  EXPECT_NEAR(e[0].item<double>(), 1 - std::pow(0.999, 500), 1e-12);

  auto fixed = g.clone();
  ema_update(fixed, g, 0.999);
  EXPECT_TRUE(torch::equal(fixed, g));
}

TEST(Ema, ModuleUpdate) {
  torch::nn::Linear a(3, 2), b(3, 2);
  {
    torch::NoGradGuard ng;
    for (auto& p : a->parameters()) p.zero_();
    for (auto& p : b->parameters()) p.fill_(1);
  }
  ema_update(*a, *b, 0.9);
  for (const auto& p : a->parameters()) EXPECT_NEAR(p.max().item<float>(), 0.1f, 1e-7);
}

TEST(Variant, NamesAndValidation) {
  EXPECT_EQ((ModelVariant{true, true, true}).name(), "TarGAN");
  EXPECT_EQ((ModelVariant{false, false, false}).name(), "TarGAN w/o S,T,C");
  EXPECT_EQ((ModelVariant{true, true, false}).name(), "TarGAN w/o C");
  EXPECT_THROW((ModelVariant{true, false, true}).validate(), ConfigError);
  ModelConfig m = tiny_model();
  m.variant = {true, false, true};
  EXPECT_THROW(Trainer(m, tiny_train(), 3, 16), ConfigError);
}

TEST(TrainerTest, PlayerSeparation) {
  Trainer tr(tiny_model(), tiny_train(), 3, 16);
  std::mt19937_64 rng(1);
  const auto b = make_batch_tensors(tiny_data(), sample_training_batch(tiny_data(), 2, rng));

  const auto g0 = snapshot(*tr.G), s0 = snapshot(*tr.S), dx0 = snapshot(*tr.Dx);
  tr.train_step_D(b);
  EXPECT_TRUE(same(g0, *tr.G));
  EXPECT_TRUE(same(s0, *tr.S));
  EXPECT_FALSE(same(dx0, *tr.Dx));

  const auto dx1 = snapshot(*tr.Dx), dr1 = snapshot(*tr.Dr);
  tr.train_step_G_S(b);
  EXPECT_TRUE(same(dx1, *tr.Dx));
  EXPECT_TRUE(same(dr1, *tr.Dr));
  EXPECT_FALSE(same(g0, *tr.G));
  EXPECT_FALSE(same(s0, *tr.S));
}

TEST(TrainerTest, ZeroCriticRateFreezesCritics) {
  TrainConfig t = tiny_train();
  t.lr_D = 0;
  Trainer tr(tiny_model(), t, 3, 16);
  std::mt19937_64 rng(1);
  const auto b = make_batch_tensors(tiny_data(), sample_training_batch(tiny_data(), 2, rng));
  const auto dx0 = snapshot(*tr.Dx);
  tr.train_step_D(b);
  EXPECT_TRUE(same(dx0, *tr.Dx));
}

TEST(TrainerTest, CrossingComponentIsCrossingLoss) {
  Trainer tr(tiny_model(), tiny_train(), 3, 16);
  std::mt19937_64 rng(2);
  const auto b = make_batch_tensors(tiny_data(), sample_training_batch(tiny_data(), 2, rng));
  torch::Tensor expected;
  {
    torch::NoGradGuard ng;
    const auto [xt, rt] = tr.G->forward(b.x_s, b.r_s, b.t);
    expected = crossing_loss(xt, b.y, rt);
  }
  EXPECT_DOUBLE_EQ(tr.train_step_G_S(b).cross, expected.item<double>());
}

TEST(TrainerTest, EmaAppearsAfterFirstGeneratorStep) {
  Trainer tr(tiny_model(), tiny_train(), 3, 16);
  EXPECT_FALSE(tr.has_ema());
  test::TempDir dir;
  tr.save_checkpoint(dir.path / "a.ckpt");
  EXPECT_FALSE(Trainer::load_checkpoint(dir.path / "a.ckpt").has_ema());
  tr.iteration(tiny_data());
  EXPECT_TRUE(tr.has_ema());
  tr.save_checkpoint(dir.path / "b.ckpt");
  EXPECT_TRUE(Trainer::load_checkpoint(dir.path / "b.ckpt").has_ema());
}

TEST(TrainerTest, CheckpointRoundTrip) {
  Trainer tr(tiny_model(), tiny_train(), 3, 16);
  for (int k = 0; k < 3; ++k) tr.iteration(tiny_data());
  test::TempDir dir;
  tr.save_checkpoint(dir.path / "c.ckpt");
  Trainer back = Trainer::load_checkpoint(dir.path / "c.ckpt", 3);
  EXPECT_EQ(back.step(), tr.step());
  const auto check = [](const torch::nn::Module& a, const torch::nn::Module& b) {
    const auto pa = a.named_parameters(), pb = b.named_parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i].value(), pb[i].value())) << pa[i].key();
  };
  check(*tr.G, *back.G);
  check(*tr.G_ema, *back.G_ema);
  check(*tr.S, *back.S);
  check(*tr.Dx, *back.Dx);
  check(*tr.Dr, *back.Dr);
  EXPECT_THROW(Trainer::load_checkpoint(dir.path / "c.ckpt", 4), ConfigError);

  // the restored trainer continues exactly like the original
  const auto r1 = tr.iteration(tiny_data()), r2 = back.iteration(tiny_data());
  EXPECT_EQ(r1.csv_row(0), r2.csv_row(0));
}

TEST(TrainLoop, OutputsAndDeterminism) {
  test::TempDir dir;
  TrainOptions o;
  o.out_dir = dir.path / "a";
  const auto res = train(tiny_model(), tiny_train(), tiny_data(), o);
  const int iters = iterations_per_epoch(tiny_data(), 2);
  EXPECT_EQ(static_cast<int>(res.history.size()), 2 * iters);
  EXPECT_TRUE(fs::exists(o.out_dir / "checkpoints/epoch_1.ckpt"));
  EXPECT_TRUE(fs::exists(o.out_dir / "checkpoints/epoch_2.ckpt"));
  EXPECT_TRUE(fs::exists(o.out_dir / "samples/epoch_2.png"));
  const auto csv = test::read_file(o.out_dir / "loss.csv");
  EXPECT_EQ(static_cast<int>(std::count(csv.begin(), csv.end(), '\n')), 1 + 2 * iters);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), LossReport::csv_header());

  TrainOptions o2;
  o2.out_dir = dir.path / "b";
  train(tiny_model(), tiny_train(), tiny_data(), o2);
  EXPECT_EQ(csv, test::read_file(o2.out_dir / "loss.csv"));
}

TEST(TrainLoop, ResumeIsBitwise) {
  test::TempDir dir;
  TrainOptions full;
  full.out_dir = dir.path / "full";
  train(tiny_model(), tiny_train(2), tiny_data(), full);

  TrainOptions first;
  first.out_dir = dir.path / "split";
  train(tiny_model(), tiny_train(1), tiny_data(), first);
  TrainOptions rest = first;
  rest.resume = first.out_dir / "checkpoints/epoch_1.ckpt";
  train(tiny_model(), tiny_train(2), tiny_data(), rest);

  EXPECT_EQ(test::read_file(full.out_dir / "checkpoints/epoch_2.ckpt"),
            test::read_file(first.out_dir / "checkpoints/epoch_2.ckpt"));
  EXPECT_EQ(test::read_file(full.out_dir / "loss.csv"), test::read_file(first.out_dir / "loss.csv"));
}

TEST(TrainLoop, KeepLastRotatesCheckpoints) {
  test::TempDir dir;
  TrainOptions o;
  o.out_dir = dir.path;
  o.keep_last_checkpoints = 1;
  o.sample_grids = false;
  train(tiny_model(), tiny_train(3), tiny_data(), o);
  EXPECT_FALSE(fs::exists(dir.path / "checkpoints/epoch_1.ckpt"));
  EXPECT_FALSE(fs::exists(dir.path / "checkpoints/epoch_2.ckpt"));
  EXPECT_TRUE(fs::exists(dir.path / "checkpoints/epoch_3.ckpt"));
}

TEST(ConfigJson, RoundTripAndUnknownKeys) {
  ModelConfig m = tiny_model();
  m.variant = {false, true, false};
  const auto back = model_config_from_json(to_json(m));
  EXPECT_EQ(back.variant, m.variant);
  EXPECT_EQ(back.generator.base_channels, 4);
  TrainConfig t = tiny_train();
  t.weights.lambda_cross = 7;
  EXPECT_DOUBLE_EQ(train_config_from_json(to_json(t)).weights.lambda_cross, 7);
  try {
    train_config_from_json(nlohmann::json{{"lr_g", 1}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr_g"), std::string::npos);
  }
}
