#include "targan/evaluation.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "targan/checkpoint.hpp"
#include "targan/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace targan {
namespace {

constexpr int64_t kEvalBatch = 32;

torch::Tensor stack_images(const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& im : images) ptrs.push_back(&im);
  return to_tensor(ptrs);
}

std::vector<Mask> masks_from_probs(const torch::Tensor& probs) {
  std::vector<Mask> out;
  out.reserve(static_cast<size_t>(probs.size(0)));
  for (int64_t b = 0; b < probs.size(0); ++b) out.push_back(to_mask(probs[b]));
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// FID

FeatureEmbedder::FeatureEmbedder(uint64_t seed, int64_t dim, int64_t in_channels)
    : seed_(seed), dim_(dim) {
  if (dim < 4) throw ConfigError("embedder dimension must be at least 4");
  auto gen = at::detail::createCPUGenerator(seed);
  const int64_t widths[3] = {in_channels, std::max<int64_t>(dim / 4, 1), std::max<int64_t>(dim / 2, 1)};
  for (int l = 0; l < 3; ++l) {
    const int64_t cin = widths[l], cout = l == 2 ? dim : widths[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(cin * 9));
    weights_.push_back(torch::randn({cout, cin, 3, 3}, gen, torch::kFloat64) * scale);
    biases_.push_back(torch::randn({cout}, gen, torch::kFloat64) * 0.1);
  }
}

torch::Tensor FeatureEmbedder::embed(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  auto h = images.to(torch::kFloat64);
  for (size_t l = 0; l < weights_.size(); ++l)
    h = torch::relu(torch::conv2d(h, weights_[l], biases_[l], /*stride=*/2, /*padding=*/1));
  return h.mean({2, 3});
}

Eigen::MatrixXd FeatureEmbedder::embed(const std::vector<Image>& images) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), dim_);
  for (size_t start = 0; start < images.size(); start += kEvalBatch) {
    const size_t end = std::min(images.size(), start + kEvalBatch);
    std::vector<Image> chunk(images.begin() + static_cast<std::ptrdiff_t>(start),
                             images.begin() + static_cast<std::ptrdiff_t>(end));
    const auto f = embed(stack_images(chunk)).contiguous();
    const auto acc = f.accessor<double, 2>();
    for (int64_t i = 0; i < f.size(0); ++i)
      for (int64_t k = 0; k < dim_; ++k) out(static_cast<Eigen::Index>(start) + i, k) = acc[i][k];
  }
  return out;
}

double compute_fid(const FeatureEmbedder& embedder, const std::vector<Image>& real,
                   const std::vector<Image>& fake) {
  if (real.size() < 2 || fake.size() < 2) throw MetricError("FID needs at least two images per set");
  return frechet_distance(fit_gaussian(embedder.embed(real)), fit_gaussian(embedder.embed(fake)));
}

// ---------------------------------------------------------------------------
// Segmentation

torch::Tensor Segmenter::probabilities(const torch::Tensor& inputs) {
  torch::NoGradGuard no_grad;
  if (inputs.dim() != 4 || inputs.size(1) != in_channels())
    throw ShapeError("segmenter expects [B, " + std::to_string(in_channels()) + ", H, W] inputs");
  std::vector<torch::Tensor> parts;
  for (int64_t start = 0; start < inputs.size(0); start += kEvalBatch)
    parts.push_back(net->forward(inputs.slice(0, start, std::min(inputs.size(0), start + kEvalBatch))));
  return torch::cat(parts, 0);
}

std::vector<Mask> Segmenter::predict(const torch::Tensor& inputs) { return masks_from_probs(probabilities(inputs)); }

std::vector<Mask> Segmenter::predict(const std::vector<Image>& images) { return predict(stack_images(images)); }

void Segmenter::save(const fs::path& path) const {
  TensorArchive ar;
  const auto& c = net->config();
  ar.meta = {{"kind", "segmenter"},
             {"modality", modality},
             {"heldout_dice", heldout_dice},
             {"steps", steps},
             {"unet", {{"in_channels", c.in_channels}, {"base_channels", c.base_channels}, {"depth", c.depth}}}};
  add_module(ar, "seg", *net);
  ar.save(path);
}

Segmenter Segmenter::load(const fs::path& path) {
  const auto ar = TensorArchive::load(path);
  if (ar.meta.value("kind", "") != "segmenter") throw ConfigError(path.string() + " is not a segmenter file");
  UNetConfig c;
  c.in_channels = ar.meta["unet"]["in_channels"];
  c.base_channels = ar.meta["unet"]["base_channels"];
  c.depth = ar.meta["unet"]["depth"];
  Segmenter s;
  s.net = UNet(c);
  load_module(ar, "seg", *s.net);
  s.modality = ar.meta["modality"];
  s.heldout_dice = ar.meta["heldout_dice"];
  s.steps = ar.meta["steps"];
  return s;
}

torch::Tensor soft_dice_loss(const torch::Tensor& probs, const torch::Tensor& target) {
  if (probs.sizes() != target.sizes()) throw ShapeError("soft_dice_loss: input shapes differ");
  return 1.0 - (2.0 * (probs * target).sum() + 1.0) / (probs.sum() + target.sum() + 1.0);
}

double mean_dice(const std::vector<Mask>& predicted, const std::vector<Mask>& reference) {
  if (predicted.size() != reference.size()) throw ShapeError("mean_dice: set sizes differ");
  std::vector<double> v;
  for (size_t i = 0; i < predicted.size(); ++i) v.push_back(dice(predicted[i], reference[i]));
  return mean_of(v);
}

double mean_ravd(const std::vector<Mask>& predicted, const std::vector<Mask>& reference) {
  if (predicted.size() != reference.size()) throw ShapeError("mean_ravd: set sizes differ");
  std::vector<double> v;
  for (size_t i = 0; i < predicted.size(); ++i) v.push_back(ravd(reference[i], predicted[i]));
  return mean_of(v);
}

Segmenter train_segmenter(const torch::Tensor& inputs, const torch::Tensor& masks,
                          const torch::Tensor& heldout_inputs, const std::vector<Mask>& heldout_masks,
                          const SegmenterConfig& cfg) {
  if (inputs.dim() != 4 || masks.dim() != 4 || inputs.size(0) != masks.size(0) || masks.size(1) != 1)
    throw ShapeError("train_segmenter expects inputs [N,C,H,W] and masks [N,1,H,W]");
  if (inputs.size(0) == 0) throw ConfigError("train_segmenter: empty training set");
  if (cfg.batch_size < 1 || cfg.max_steps < 0 || cfg.eval_every < 1 || !(cfg.lr > 0))
    throw ConfigError("invalid segmenter training settings");

  UNetConfig uc{inputs.size(1), cfg.base_channels, cfg.depth};
  uc.validate(inputs.size(2));
  torch::manual_seed(cfg.seed);
  Segmenter seg;
  seg.net = UNet(uc);
  torch::optim::Adam opt(seg.net->parameters(), torch::optim::AdamOptions(cfg.lr));
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int64_t> pick(0, inputs.size(0) - 1);

  auto heldout = [&] { return mean_dice(seg.predict(heldout_inputs), heldout_masks); };
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<int64_t> idx(static_cast<size_t>(cfg.batch_size));
    for (auto& i : idx) i = pick(rng);
    const auto sel = torch::tensor(idx, torch::kLong);
    opt.zero_grad();
    const auto loss = soft_dice_loss(seg.net->forward(inputs.index_select(0, sel)), masks.index_select(0, sel));
    if (!std::isfinite(loss.item<double>())) throw NumericalError("non-finite segmenter loss at step " + std::to_string(step));
    loss.backward();
    opt.step();
    seg.steps = step;
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      seg.heldout_dice = heldout();
      if (seg.heldout_dice >= cfg.target_dice) break;
    }
  }
  if (seg.steps == 0) seg.heldout_dice = heldout();
  return seg;
}

Segmenter train_reference_segmenter(const Dataset& data, int modality, const SegmenterConfig& cfg) {
  if (modality < 0 || modality >= data.n_modalities()) throw ConfigError("modality out of range");
  std::vector<const Image*> xs, hx;
  std::vector<torch::Tensor> ys;
  std::vector<Mask> hy;
  for (size_t i : data.indices(Split::Train, modality)) {
    xs.push_back(&data[i].x);
    ys.push_back(to_tensor(data[i].y));
  }
  for (size_t i : data.indices(Split::Test, modality)) {
    hx.push_back(&data[i].x);
    hy.push_back(data[i].y);
  }
  if (hx.empty()) throw ConfigError("reference segmenter needs test samples for validation");
  Segmenter seg = train_segmenter(to_tensor(xs), torch::cat(ys, 0), to_tensor(hx), hy, cfg);
  seg.modality = modality;
  return seg;
}

double compute_s_score(Segmenter& segmenter, const std::vector<Image>& translated,
                       const std::vector<Mask>& source_masks) {
  if (translated.empty()) throw MetricError("S-score of an empty image set");
  return 100.0 * mean_dice(segmenter.predict(translated), source_masks);
}

// ---------------------------------------------------------------------------
// Translation

Image translate_image(Generator& g, const Image& x, int target) {
  torch::NoGradGuard no_grad;
  return to_image(g->translate(to_tensor(x), torch::tensor({static_cast<int64_t>(target)}, torch::kLong)));
}

namespace {

// Chunked translation of a list of images into one target modality.
std::vector<Image> translate_many(Generator& g, const std::vector<const Image*>& xs, int target) {
  torch::NoGradGuard no_grad;
  std::vector<Image> out;
  for (size_t start = 0; start < xs.size(); start += kEvalBatch) {
    const size_t end = std::min(xs.size(), start + kEvalBatch);
    std::vector<const Image*> chunk(xs.begin() + static_cast<std::ptrdiff_t>(start),
                                    xs.begin() + static_cast<std::ptrdiff_t>(end));
    const auto t = torch::full({static_cast<int64_t>(chunk.size())}, target, torch::kLong);
    const auto y = g->translate(to_tensor(chunk), t);
    for (int64_t b = 0; b < y.size(0); ++b) out.push_back(to_image(y[b]));
  }
  return out;
}

struct PairIndex {
  std::vector<size_t> source, target;
};

PairIndex paired(const Dataset& data, int s, int t, Split split) {
  PairIndex p;
  for (size_t i : data.indices(split, s)) {
    const int64_t j = data.find(data[i].anatomy, t);
    if (j < 0) continue;
    p.source.push_back(i);
    p.target.push_back(static_cast<size_t>(j));
  }
  return p;
}

}  // namespace

TranslationError phantom_translation_error(Generator& g, const Dataset& data, int s, int t, Split split) {
  const int n = data.n_modalities();
  if (s < 0 || s >= n || t < 0 || t >= n) throw ConfigError("modality out of range");
  const auto p = paired(data, s, t, split);
  if (p.source.empty()) throw MetricError("no paired samples for translation error");
  std::vector<const Image*> xs;
  for (size_t i : p.source) xs.push_back(&data[i].x);
  const auto fake = translate_many(g, xs, t);

  double whole = 0, target = 0;
  int64_t n_whole = 0, n_target = 0;
  for (size_t k = 0; k < fake.size(); ++k) {
    const auto& truth = data[p.target[k]].x;
    const auto& y = data[p.source[k]].y;
    for (int64_t i = 0; i < truth.size(); ++i) {
      const double d = std::abs(static_cast<double>(fake[k].values[i]) - truth.values[i]);
      whole += d;
      ++n_whole;
      if (y.values[i]) {
        target += d;
        ++n_target;
      }
    }
  }
  return {whole / static_cast<double>(n_whole), n_target ? target / static_cast<double>(n_target) : 0.0};
}

TranslationError mean_translation_error(Generator& g, const Dataset& data, Split split) {
  TranslationError sum;
  int pairs = 0;
  for (int s = 0; s < data.n_modalities(); ++s)
    for (int t = 0; t < data.n_modalities(); ++t) {
      if (s == t) continue;
      const auto e = phantom_translation_error(g, data, s, t, split);
      sum.whole_l1 += e.whole_l1;
      sum.target_l1 += e.target_l1;
      ++pairs;
    }
  if (pairs == 0) throw MetricError("translation error needs at least two modalities");
  return {sum.whole_l1 / pairs, sum.target_l1 / pairs};
}

std::vector<TranslatedSet> translate_split(Generator& g, const Dataset& data, Split split) {
  std::vector<TranslatedSet> out;
  for (int t = 0; t < data.n_modalities(); ++t) {
    TranslatedSet set;
    set.target = t;
    for (int s = 0; s < data.n_modalities(); ++s) {
      if (s == t) continue;
      const auto p = paired(data, s, t, split);
      std::vector<const Image*> xs;
      for (size_t k = 0; k < p.source.size(); ++k) {
        xs.push_back(&data[p.source[k]].x);
        set.masks.push_back(data[p.source[k]].y);
        set.truth.push_back(&data[p.target[k]].x);
      }
      auto fake = translate_many(g, xs, t);
      std::move(fake.begin(), fake.end(), std::back_inserter(set.fake));
    }
    out.push_back(std::move(set));
  }
  return out;
}

torch::Tensor enrichment_concat(const torch::Tensor& real, const std::vector<torch::Tensor>& synthetic) {
  auto as4 = [](const torch::Tensor& t) {
    if (t.dim() == 2) return t.unsqueeze(0).unsqueeze(0);
    if (t.dim() == 3) return t.unsqueeze(0);
    if (t.dim() == 4 && t.size(1) == 1) return t;
    throw ShapeError("enrichment_concat expects single-channel [H,W], [1,H,W] or [B,1,H,W] images");
  };
  std::vector<torch::Tensor> parts{as4(real)};
  for (const auto& s : synthetic) {
    parts.push_back(as4(s));
    if (parts.back().sizes() != parts.front().sizes())
      throw ShapeError("enrichment_concat: synthetic image shape differs from the real image");
  }
  auto out = torch::cat(parts, 1);
  return real.dim() == 4 ? out : out.squeeze(0);
}

torch::Tensor enrich(Generator& g, const torch::Tensor& real, int source, int n_modalities) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> synthetic;
  for (int t = 0; t < n_modalities; ++t) {
    if (t == source) continue;
    std::vector<torch::Tensor> parts;
    for (int64_t start = 0; start < real.size(0); start += kEvalBatch) {
      const auto chunk = real.slice(0, start, std::min(real.size(0), start + kEvalBatch));
      parts.push_back(g->translate(chunk, torch::full({chunk.size(0)}, t, torch::kLong)));
    }
    synthetic.push_back(torch::cat(parts, 0));
  }
  return enrichment_concat(real, synthetic);
}

double EnrichmentResult::mean_single() const { return mean_of(single_dice); }
double EnrichmentResult::mean_enriched() const { return mean_of(enriched_dice); }

EnrichmentResult run_enrichment_experiment(Generator& g, const Dataset& data, const SegmenterConfig& cfg) {
  EnrichmentResult r;
  const int n = data.n_modalities();
  for (int m = 0; m < n; ++m) {
    std::vector<const Image*> xs, hx;
    std::vector<torch::Tensor> ys;
    std::vector<Mask> hy;
    for (size_t i : data.indices(Split::Train, m)) {
      xs.push_back(&data[i].x);
      ys.push_back(to_tensor(data[i].y));
    }
    for (size_t i : data.indices(Split::Test, m)) {
      hx.push_back(&data[i].x);
      hy.push_back(data[i].y);
    }
    const auto train_x = to_tensor(xs), test_x = to_tensor(hx), train_y = torch::cat(ys, 0);
    r.single_dice.push_back(train_segmenter(train_x, train_y, test_x, hy, cfg).heldout_dice);
    r.enriched_dice.push_back(
        train_segmenter(enrich(g, train_x, m, n), train_y, enrich(g, test_x, m, n), hy, cfg).heldout_dice);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reports

void EvalOptions::validate() const {
  const auto& known = all_metric_names();
  for (const auto& m : metrics)
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw ConfigError("unknown metric '" + m + "'");
  if (metrics.empty()) throw ConfigError("no metrics selected");
}

json EvalReport::to_json() const {
  json per = json::object();
  for (size_t m = 0; m < modalities.size(); ++m) per[modalities[m]] = per_modality[m];
  return {{"per_modality", per}, {"mean", mean}, {"config_hash", config_hash}, {"checkpoint_path", checkpoint_path}};
}

std::string EvalReport::to_csv() const {
  std::vector<std::string> cols;
  for (const auto& name : all_metric_names())
    if (mean.count(name)) cols.push_back(name);
  std::ostringstream os;
  os.precision(9);
  os << "modality";
  for (const auto& c : cols) os << ',' << c;
  os << '\n';
  auto row = [&](const std::string& label, const std::map<std::string, double>& values) {
    os << label;
    for (const auto& c : cols) os << ',' << values.at(c);
    os << '\n';
  };
  for (size_t m = 0; m < modalities.size(); ++m) row(modalities[m], per_modality[m]);
  row("mean", mean);
  return os.str();
}

EvalReport evaluate(Generator& g, const Dataset& data, const EvalOptions& options,
                    std::vector<Segmenter>* segmenters) {
  options.validate();
  const int n = data.n_modalities();
  if (options.needs_segmenters()) {
    if (!segmenters || static_cast<int>(segmenters->size()) != n)
      throw ConfigError("segmentation metrics need one reference segmenter per modality");
    for (int m = 0; m < n; ++m)
      if ((*segmenters)[m].in_channels() != 1) throw ConfigError("reference segmenters take one channel");
  }

  EvalReport rep;
  rep.modalities = data.modality_names();
  rep.per_modality.resize(static_cast<size_t>(n));
  const auto sets = translate_split(g, data, options.split);
  const FeatureEmbedder embedder(options.embedder_seed, options.embedder_dim);

  for (int t = 0; t < n; ++t) {
    auto& out = rep.per_modality[static_cast<size_t>(t)];
    const auto& set = sets[static_cast<size_t>(t)];
    if (options.wants("fid")) {
      std::vector<Image> real;
      for (size_t i : data.indices(options.split, t)) real.push_back(data[i].x);
      out["fid"] = compute_fid(embedder, real, set.fake);
    }
    if (options.needs_segmenters()) {
      const auto pred = (*segmenters)[t].predict(set.fake);
      const double d = mean_dice(pred, set.masks);
      if (options.wants("s_score")) out["s_score"] = 100.0 * d;
      if (options.wants("dice")) out["dice"] = d;
      if (options.wants("ravd")) out["ravd"] = mean_ravd(pred, set.masks);
    }
    if (options.wants("whole_l1") || options.wants("target_l1")) {
      TranslationError sum;
      for (int s = 0; s < n; ++s) {
        if (s == t) continue;
        const auto e = phantom_translation_error(g, data, s, t, options.split);
        sum.whole_l1 += e.whole_l1 / (n - 1);
        sum.target_l1 += e.target_l1 / (n - 1);
      }
      if (options.wants("whole_l1")) out["whole_l1"] = sum.whole_l1;
      if (options.wants("target_l1")) out["target_l1"] = sum.target_l1;
    }
  }
  for (const auto& name : all_metric_names()) {
    if (!rep.per_modality.front().count(name)) continue;
    double s = 0;
    for (const auto& pm : rep.per_modality) s += pm.at(name);
    rep.mean[name] = s / n;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationVariant> standard_ablation_variants() {
  return {
      {false, false, false},  // w/o S,T,C
      {false, true, false},   // w/o S,C
      {true, false, false},   // w/o T,C
      {true, true, false},    // w/o C
      {false, true, true},    // w/o S
      {true, true, true},     // full
  };
}

std::string variant_slug(const AblationVariant& v) {
  std::string slug = "targan";
  if (!v.use_shape_controller || !v.use_target_stream || !v.use_crossing) slug += "_wo";
  if (!v.use_shape_controller) slug += "_s";
  if (!v.use_target_stream) slug += "_t";
  if (!v.use_crossing) slug += "_c";
  return slug;
}

json AblationRun::to_json() const {
  return {{"variant", variant.name()},
          {"seed", seed},
          {"s_score", s_score},
          {"mean_s_score", mean_s_score},
          {"whole_l1", error.whole_l1},
          {"target_l1", error.target_l1},
          {"initial_cross", initial_cross},
          {"first_epoch_cross", first_epoch_cross},
          {"final_cross", final_cross},
          {"checkpoint", checkpoint.string()}};
}

std::vector<const AblationRun*> AblationResult::runs_for(const AblationVariant& v) const {
  std::vector<const AblationRun*> out;
  for (const auto& r : runs)
    if (r.variant == v) out.push_back(&r);
  return out;
}

std::string AblationResult::table_csv() const {
  std::ostringstream os;
  os.precision(6);
  os << "method";
  for (const auto& m : modalities) os << ',' << m;
  os << ",Mean\n";
  for (const auto& v : variants) {
    const auto rs = runs_for(v);
    os << '"' << v.name() << '"';
    std::vector<double> col(modalities.size(), 0.0);
    for (const auto* r : rs)
      for (size_t m = 0; m < col.size(); ++m) col[m] += r->s_score[m] / static_cast<double>(rs.size());
    for (double c : col) os << ',' << c;
    os << ',' << mean_of(col) << '\n';
  }
  return os.str();
}

AblationResult run_ablation(const std::vector<AblationVariant>& variants, const Dataset& data,
                            std::vector<Segmenter>& segmenters, const AblationOptions& options) {
  for (const auto& v : variants) v.validate();
  options.train.validate();
  if (variants.empty() || options.seeds.empty()) throw ConfigError("ablation needs variants and seeds");
  if (static_cast<int>(segmenters.size()) != data.n_modalities())
    throw ConfigError("ablation needs one reference segmenter per modality");

  AblationResult result;
  result.modalities = data.modality_names();
  result.variants = variants;
  for (const auto& v : variants) {
    for (uint64_t seed : options.seeds) {
      ModelConfig mc = options.model;
      mc.variant = v;
      TrainConfig tc = options.train;
      tc.seed = seed;
      TrainOptions to;
      if (!options.out_dir.empty()) to.out_dir = options.out_dir / variant_slug(v) / ("seed_" + std::to_string(seed));
      to.keep_last_checkpoints = options.keep_last_checkpoints;
      to.sample_grids = options.sample_grids;
      if (options.log) options.log("training " + v.name() + " seed " + std::to_string(seed));

      auto res = train(mc, tc, data, to);
      AblationRun run;
      run.variant = v;
      run.seed = seed;
      run.initial_cross = res.initial_cross;
      const int iters = iterations_per_epoch(data, tc.batch_size);
      const size_t tail = std::min(res.history.size(), static_cast<size_t>(iters));
      for (size_t k = res.history.size() - tail; k < res.history.size(); ++k)
        run.final_cross += res.history[k].cross / static_cast<double>(tail);
      for (size_t k = 0; k < tail; ++k) run.first_epoch_cross += res.history[k].cross / static_cast<double>(tail);

      Generator& g = res.trainer.generator_for_inference();
      for (const auto& set : translate_split(g, data, Split::Test))
        run.s_score.push_back(compute_s_score(segmenters[static_cast<size_t>(set.target)], set.fake, set.masks));
      run.mean_s_score = mean_of(run.s_score);
      run.error = mean_translation_error(g, data, Split::Test);
      if (!to.out_dir.empty()) {
        run.checkpoint = to.out_dir / "checkpoints" / ("epoch_" + std::to_string(tc.epochs) + ".ckpt");
        std::ofstream(to.out_dir / "summary.json") << run.to_json().dump(2) << '\n';
      }
      if (options.log)
        options.log("  mean S-score " + std::to_string(run.mean_s_score) + ", target L1 " +
                    std::to_string(run.error.target_l1));
      result.runs.push_back(std::move(run));
    }
  }
  if (!options.out_dir.empty()) {
    std::ofstream(options.out_dir / "ablation.csv") << result.table_csv();
    json all = json::array();
    for (const auto& r : result.runs) all.push_back(r.to_json());
    std::ofstream(options.out_dir / "runs.json") << all.dump(2) << '\n';
  }
  return result;
}

}  // namespace targan
