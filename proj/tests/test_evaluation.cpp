#include <gtest/gtest.h>

#include "targan/errors.hpp"
#include "targan/evaluation.hpp"
#include "test_util.hpp"

using namespace targan;

namespace {

const Dataset& data32() {
  static const Dataset d = make_phantom_dataset(test::small_spec(32, 24), 8);
  return d;
}

// small organs at 32 px are too hard for a quick segmenter
const Dataset& data64() {
  static const Dataset d = make_phantom_dataset(test::small_spec(64, 16), 8);
  return d;
}

SegmenterConfig quick_segmenter() {
  SegmenterConfig c;
  c.base_channels = 8;
  c.max_steps = 300;
  c.seed = 3;
  return c;
}

Generator tiny_generator() {
  GeneratorConfig c;
  c.base_channels = 4;
  c.depth = 2;
  c.n_modalities = 3;
  torch::manual_seed(0);
  return Generator(c);
}

}  // namespace

TEST(Enrichment, ChannelLayout) {
  const auto real = torch::rand({2, 1, 8, 8});
  const auto a = torch::rand({2, 1, 8, 8}), b = torch::rand({2, 1, 8, 8});
  const auto out = enrichment_concat(real, {a, b});
  ASSERT_EQ(out.size(1), 3);
  EXPECT_TRUE(torch::equal(out.narrow(1, 0, 1), real));
  EXPECT_TRUE(torch::equal(out.narrow(1, 2, 1), b));
  EXPECT_EQ(enrichment_concat(torch::rand({8, 8}), {torch::rand({8, 8})}).sizes(), (std::vector<int64_t>{2, 8, 8}));
  EXPECT_THROW(enrichment_concat(real, {torch::rand({2, 1, 4, 4})}), ShapeError);

  Generator g = tiny_generator();
  const auto x = torch::rand({2, 1, 16, 16}) * 2 - 1;
  for (int s = 0; s < 3; ++s) {
    const auto e = enrich(g, x, s, 3);
    ASSERT_EQ(e.size(1), 3);
    EXPECT_TRUE(torch::equal(e.narrow(1, 0, 1), x));
    // synthetic channels follow ascending target id, skipping the source
    int c = 1;
    for (int t = 0; t < 3; ++t) {
      if (t == s) continue;
      torch::NoGradGuard ng;
      EXPECT_TRUE(torch::equal(e.narrow(1, c++, 1), g->translate(x, torch::full({2}, t, torch::kLong))));
    }
  }
}

TEST(Segmentation, ReferenceSegmenterLearnsAndIsDeterministic) {
  auto s1 = train_reference_segmenter(data64(), 1, quick_segmenter());
  EXPECT_GE(s1.heldout_dice, 0.85) << "after " << s1.steps << " steps";
  auto s2 = train_reference_segmenter(data64(), 1, quick_segmenter());
  EXPECT_EQ(s1.steps, s2.steps);
  EXPECT_EQ(s1.heldout_dice, s2.heldout_dice);

  std::vector<Image> real;
  std::vector<Mask> masks;
  for (size_t i : data64().indices(Split::Test, 1)) {
    real.push_back(data64()[i].x);
    masks.push_back(data64()[i].y);
  }
  const auto probs = s1.probabilities(to_tensor([&] {
    std::vector<const Image*> p;
    for (const auto& r : real) p.push_back(&r);
    return p;
  }()));
  for (const auto& m : s1.predict(real))
    for (auto v : m.values) EXPECT_TRUE(v == 0 || v == 1);
  EXPECT_GT(probs.max().item<float>(), 0.5f);

  EXPECT_NEAR(compute_s_score(s1, real, masks), 100.0 * s1.heldout_dice, 1e-9);
  std::vector<Image> blank(real.size(), Image(64, 64, -1.0f));
  EXPECT_LT(compute_s_score(s1, blank, masks), 0.5 * compute_s_score(s1, real, masks));

  test::TempDir dir;
  s1.save(dir.path / "s.seg");
  auto back = Segmenter::load(dir.path / "s.seg");
  EXPECT_EQ(back.modality, 1);
  EXPECT_TRUE(torch::equal(back.probabilities(probs.new_zeros({1, 1, 64, 64})),
                           s1.probabilities(probs.new_zeros({1, 1, 64, 64}))));
}

TEST(Segmentation, SoftDice) {
  const auto y = (torch::rand({2, 1, 8, 8}) > 0.5).to(torch::kFloat);
  EXPECT_NEAR(soft_dice_loss(y, y).item<float>(), 0.0f, 1e-6);
  EXPECT_GT(soft_dice_loss(1 - y, y).item<float>(), 0.9f);
}

// A translator that knows both transfer maps reproduces the target rendering
// up to quantization, well under the noise floor.
TEST(TranslationError, OracleIsBelowNoiseFloor) {
  const auto spec = test::small_spec(32, 24);
  const Dataset& d = data32();
  for (int s = 0; s < 3; ++s) {
    for (int t = 0; t < 3; ++t) {
      double err = 0;
      int64_t n = 0;
      for (size_t i : d.indices(Split::Test, s)) {
        const Image& xs = d[i].x;
        const Image& xt = d[static_cast<size_t>(d.find(d[i].anatomy, t))].x;
        for (int64_t p = 0; p < xs.size(); ++p) {
          double v = -1;
          if (xs.values[p] > -1.0f) {
            const double latent = spec.effective_transfer(s).invert((xs.values[p] + 1) / 2);
            v = spec.effective_transfer(t).apply(latent) * 2 - 1;
          }
          err += std::abs(v - xt.values[p]);
          ++n;
        }
      }
      EXPECT_LE(err / n, 3 * spec.noise_sigma);
    }
  }
}

TEST(TranslationError, MatchesDirectComputation) {
  Generator g = tiny_generator();
  const Dataset& d = data32();
  const auto e = phantom_translation_error(g, d, 0, 2);
  double whole = 0;
  int64_t n = 0;
  for (size_t i : d.indices(Split::Test, 0)) {
    const Image y = translate_image(g, d[i].x, 2);
    const Image& truth = d[static_cast<size_t>(d.find(d[i].anatomy, 2))].x;
    for (int64_t p = 0; p < y.size(); ++p) whole += std::abs(static_cast<double>(y.values[p]) - truth.values[p]);
    n += y.size();
  }
  EXPECT_NEAR(e.whole_l1, whole / n, 1e-6);
  EXPECT_GT(e.target_l1, 0.0);
}

TEST(Reports, MetricSelection) {
  Generator g = tiny_generator();
  EvalOptions o;
  o.metrics = {"fid", "whole_l1"};
  const auto rep = evaluate(g, data32(), o);
  ASSERT_EQ(rep.per_modality.size(), 3u);
  for (const auto& pm : rep.per_modality) {
    EXPECT_EQ(pm.size(), 2u);
    EXPECT_TRUE(pm.count("fid"));
  }
  const auto j = rep.to_json();
  EXPECT_TRUE(j.contains("config_hash"));
  EXPECT_FALSE(j["mean"].contains("s_score"));
  EXPECT_EQ(rep.to_csv().substr(0, rep.to_csv().find('\n')), "modality,fid,whole_l1");

  o.metrics = {"s_score"};
  EXPECT_THROW(evaluate(g, data32(), o), ConfigError);
  o.metrics = {"psnr"};
  EXPECT_THROW(evaluate(g, data32(), o), ConfigError);
}

TEST(Ablation, VariantsAndValidation) {
  const auto v = standard_ablation_variants();
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v.back(), (ModelVariant{true, true, true}));
  EXPECT_EQ(v.front().name(), "TarGAN w/o S,T,C");
  EXPECT_EQ(variant_slug(v.front()), "targan_wo_s_t_c");
  EXPECT_EQ(variant_slug(v.back()), "targan");

  std::vector<Segmenter> none;
  AblationOptions o;
  // the illegal row is rejected before anything else is checked or trained
  EXPECT_THROW(run_ablation({{true, true, true}, {true, false, true}}, data32(), none, o), ConfigError);
}

TEST(Ablation, TableShape) {
  AblationResult r;
  r.modalities = {"M0", "M1", "M2"};
  r.variants = {{true, true, false}, {true, true, true}};
  AblationRun a;
  a.variant = r.variants[0];
  a.s_score = {10, 20, 30};
  AblationRun b = a;
  b.s_score = {30, 40, 50};
  AblationRun c;
  c.variant = r.variants[1];
  c.s_score = {60, 60, 60};
  r.runs = {a, b, c};
  EXPECT_EQ(r.table_csv(), "method,M0,M1,M2,Mean\n\"TarGAN w/o C\",20,30,40,30\n\"TarGAN\",60,60,60,60\n");
}
