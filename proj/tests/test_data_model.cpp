#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "targan/dataset.hpp"
#include "targan/errors.hpp"
#include "targan/png_io.hpp"
#include "test_util.hpp"

using namespace targan;
namespace fs = std::filesystem;

TEST(Normalize, Endpoints) {
  EXPECT_DOUBLE_EQ(normalize_value(0, 0, 255), -1.0);
  EXPECT_DOUBLE_EQ(normalize_value(255, 0, 255), 1.0);
  EXPECT_DOUBLE_EQ(normalize_value(127.5, 0, 255), 0.0);
  EXPECT_THROW(normalize_value(1, 5, 5), ConfigError);
  EXPECT_THROW(normalize_value(1, 5, 1), ConfigError);
}

TEST(Normalize, ClampsAndRoundTrips) {
  const std::vector<double> raw = {-10, 0, 100, 255, 400};
  const Image img = normalize_intensity(raw, 1, 5, 0, 255);
  EXPECT_FLOAT_EQ(img.values[0], -1.0f);
  EXPECT_FLOAT_EQ(img.values[4], 1.0f);
  EXPECT_NEAR(denormalize_value(img.values[2], 0, 255), 100.0, 1e-4);
}

TEST(TargetArea, Examples) {
  const Image x(2, 2, {0.5f, 0.2f, -0.3f, 0.9f});
  const Image r = extract_target_area(x, Mask(2, 2, {1, 0, 0, 1}));
  EXPECT_EQ(r.values, (std::vector<float>{0.5f, -1.0f, -1.0f, 0.9f}));
  EXPECT_EQ(extract_target_area(x, Mask(2, 2, 1)), x);
  EXPECT_EQ(extract_target_area(x, Mask(2, 2, 0)), Image(2, 2, -1.0f));
  EXPECT_THROW(extract_target_area(x, Mask(3, 2, 1)), ShapeError);
}

TEST(Binarize, Examples) {
  EXPECT_EQ(foreground_binarize(Image(4, 4, -1.0f)).count(), 0);
  Image x(4, 4, -1.0f);
  x.at(2, 1) = 0.2f;
  const Mask b = foreground_binarize(x);
  EXPECT_EQ(b.count(), 1);
  EXPECT_EQ(b.at(2, 1), 1);
}

TEST(Binarize, PhantomForegroundIsBodyStencil) {
  const auto spec = test::small_spec(32, 4);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 4; ++k) {
    const Anatomy a = render_anatomy(spec, rng);
    for (int m = 0; m < spec.n_modalities; ++m) EXPECT_EQ(foreground_binarize(render_modality(spec, a, m)), a.body);
  }
}

TEST(MaskType, RejectsNonBinary) { EXPECT_THROW(Mask(1, 2, std::vector<uint8_t>{0, 2}), ShapeError); }

TEST(Png, ImageAndMaskRoundTrip) {
  test::TempDir dir;
  Image x(3, 4);
  for (int64_t i = 0; i < x.size(); ++i) x.values[i] = -1.0f + 2.0f * static_cast<float>(i) / 11.0f;
  x = quantize_u16(x);
  png::write_image(dir.path / "x.png", x);
  EXPECT_EQ(png::read_image(dir.path / "x.png"), x);

  const Mask y(3, 4, {0, 1, 1, 0, 1, 0, 0, 0, 1, 1, 1, 1});
  png::write_mask(dir.path / "y.png", y);
  EXPECT_EQ(png::read_mask(dir.path / "y.png"), y);

  try {
    png::read_image(dir.path / "nope.png");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.png"), std::string::npos);
  }
}

TEST(TransferMapTest, ApplyInvert) {
  TransferMap t{{{0, 0}, {0.5, 0.2}, {1, 1}}};
  EXPECT_DOUBLE_EQ(t.apply(0.25), 0.1);
  EXPECT_DOUBLE_EQ(t.apply(0.75), 0.6);
  for (double v : {0.0, 0.1, 0.33, 0.5, 0.9, 1.0}) EXPECT_NEAR(t.invert(t.apply(v)), v, 1e-12);
  EXPECT_THROW((TransferMap{{{0, 0}, {0.5, 0.6}, {0.4, 0.7}, {1, 1}}}.validate()), ConfigError);
  EXPECT_THROW((TransferMap{{{0, 0.1}, {1, 1}}}.validate()), ConfigError);
}

TEST(Phantom, CountsAndSplit) {
  auto spec = test::small_spec(32, 10);
  const Dataset d = make_phantom_dataset(spec, 5);
  ASSERT_EQ(d.samples().size(), 30u);
  for (int m = 0; m < 3; ++m)
    EXPECT_EQ(d.indices(Split::Train, m).size() + d.indices(Split::Test, m).size(), 10u);
  // split is by anatomy, so every modality of one anatomy lands on the same side
  for (const auto& s : d.samples())
    for (int m = 0; m < 3; ++m) EXPECT_EQ(d[static_cast<size_t>(d.find(s.anatomy, m))].split, s.split);
  std::vector<bool> seen(d.samples().size(), false);
  for (size_t i : d.train_indices()) seen[i] = true;
  for (size_t i : d.test_indices()) {
    EXPECT_FALSE(seen[i]);
    seen[i] = true;
  }
  for (bool b : seen) EXPECT_TRUE(b);
}

TEST(Phantom, GroundTruthAcrossModalities) {
  auto spec = test::small_spec(32, 6);
  const Dataset d = make_phantom_dataset(spec, 9);
  const double bound = 3 * spec.noise_sigma;
  for (int a = 0; a < spec.n_anatomies; ++a) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const Image& xi = d[static_cast<size_t>(d.find(a, i))].x;
        const Image& xj = d[static_cast<size_t>(d.find(a, j))].x;
        const auto ti = spec.effective_transfer(i), tj = spec.effective_transfer(j);
        for (int64_t p = 0; p < xi.size(); ++p) {
          if (xi.values[p] == -1.0f) continue;
          const double latent = ti.invert((xi.values[p] + 1.0) / 2.0);
          EXPECT_NEAR(tj.apply(latent) * 2.0 - 1.0, xj.values[p], bound);
        }
      }
    }
  }
}

TEST(Phantom, DiskRoundTripAndDeterminism) {
  test::TempDir dir;
  auto spec = test::small_spec(16, 4);
  generate_phantom_dataset(spec, 3, dir.path / "a");
  generate_phantom_dataset(spec, 3, dir.path / "b");
  EXPECT_EQ(test::read_file(dir.path / "a/manifest.json"), test::read_file(dir.path / "b/manifest.json"));
  EXPECT_EQ(test::read_file(dir.path / "a/images/M1/a0002.png"), test::read_file(dir.path / "b/images/M1/a0002.png"));

  const Dataset mem = make_phantom_dataset(spec, 3);
  const Dataset disk = load_dataset(dir.path / "a/manifest.json");
  ASSERT_EQ(mem.samples().size(), disk.samples().size());
  for (size_t i = 0; i < mem.samples().size(); ++i) {
    EXPECT_EQ(mem[i].x, disk[i].x);
    EXPECT_EQ(mem[i].y, disk[i].y);
    EXPECT_EQ(mem[i].split, disk[i].split);
    EXPECT_EQ(mem[i].anatomy, disk[i].anatomy);
  }
}

TEST(Phantom, MissingFileNamesPath) {
  test::TempDir dir;
  generate_phantom_dataset(test::small_spec(16, 3), 1, dir.path);
  fs::remove(dir.path / "images/M0/a0001.png");
  try {
    load_dataset(dir.path / "manifest.json");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("a0001.png"), std::string::npos) << e.what();
  }
}

TEST(Phantom, RejectsBadSpec) {
  auto spec = test::small_spec(16, 3);
  spec.noise_sigma = 0.2;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = test::small_spec(16, 3);
  spec.modality_transfer.pop_back();
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Batching, SizeAndValidity) {
  const Dataset d = make_phantom_dataset(test::small_spec(16, 6), 2);
  std::mt19937_64 rng(1);
  const Batch b = sample_training_batch(d, 4, rng);
  ASSERT_EQ(b.size(), 4u);
  for (const auto& it : b) {
    EXPECT_EQ(d[it.sample].split, Split::Train);
    EXPECT_EQ(d[it.sample].modality.id, it.source);
    EXPECT_GE(it.target, 0);
    EXPECT_LT(it.target, 3);
  }
}

TEST(Batching, TargetFrequencyIsUniform) {
  const Dataset d = make_phantom_dataset(test::small_spec(16, 6), 2);
  std::mt19937_64 rng(7);
  std::array<int, 3> counts{};
  int total = 0;
  while (total < 10000) {
    for (const auto& it : sample_training_batch(d, 4, rng)) {
      if (total == 10000) break;
      ++counts[static_cast<size_t>(it.target)];
      ++total;
    }
  }
  double chi2 = 0;
  for (int c : counts) {
    EXPECT_NEAR(c / 10000.0, 1.0 / 3.0, 0.02);
    chi2 += std::pow(c - 10000.0 / 3, 2) / (10000.0 / 3);
  }
  EXPECT_LT(chi2, 13.8);  // p = 0.001 with 2 degrees of freedom
}

TEST(Batching, Deterministic) {
  const Dataset d = make_phantom_dataset(test::small_spec(16, 6), 2);
  std::mt19937_64 r1(4), r2(4);
  for (int k = 0; k < 20; ++k) {
    const auto a = sample_training_batch(d, 4, r1), b = sample_training_batch(d, 4, r2);
    for (size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].sample, b[i].sample);
      EXPECT_EQ(a[i].target, b[i].target);
    }
  }
}
