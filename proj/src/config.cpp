#include "targan/config.hpp"

#include <cstdio>
#include <fstream>

#include "targan/errors.hpp"
#include "targan/json_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace targan {

json to_json(const PhantomSpec& spec) {
  json maps = json::array();
  for (const auto& m : spec.modality_transfer) maps.push_back(m.knots);
  return {{"resolution", spec.resolution},
          {"n_modalities", spec.n_modalities},
          {"n_anatomies", spec.n_anatomies},
          {"organ_count_min", spec.organ_count_min},
          {"organ_count_max", spec.organ_count_max},
          {"target_latent", spec.target_latent},
          {"target_organ_intensity", spec.target_organ_intensity},
          {"modality_transfer", maps},
          {"noise_sigma", spec.noise_sigma},
          {"train_fraction", spec.train_fraction},
          {"modality_names", spec.modality_names}};
}

PhantomSpec phantom_spec_from_json(const json& j) {
  const std::string ctx = "phantom";
  check_keys(j,
             {"resolution", "n_modalities", "n_anatomies", "organ_count_min", "organ_count_max", "target_latent",
              "target_organ_intensity", "modality_transfer", "noise_sigma", "train_fraction", "modality_names"},
             ctx);
  int n = 3;
  read_key(j, "n_modalities", n, ctx);
  if (n < 2) throw ConfigError("phantom.n_modalities must be at least 2");
  PhantomSpec spec = PhantomSpec::defaults(n);
  read_key(j, "target_latent", spec.target_latent, ctx);
  read_key(j, "resolution", spec.resolution, ctx);
  read_key(j, "n_anatomies", spec.n_anatomies, ctx);
  read_key(j, "organ_count_min", spec.organ_count_min, ctx);
  read_key(j, "organ_count_max", spec.organ_count_max, ctx);
  read_key(j, "target_organ_intensity", spec.target_organ_intensity, ctx);
  read_key(j, "noise_sigma", spec.noise_sigma, ctx);
  read_key(j, "train_fraction", spec.train_fraction, ctx);
  read_key(j, "modality_names", spec.modality_names, ctx);
  if (j.contains("modality_transfer")) {
    std::vector<std::vector<std::pair<double, double>>> maps;
    read_key(j, "modality_transfer", maps, ctx);
    spec.modality_transfer.clear();
    for (auto& k : maps) spec.modality_transfer.push_back(TransferMap{std::move(k)});
  }
  if (!j.contains("target_organ_intensity") && (j.contains("target_latent") || j.contains("modality_transfer"))) {
    // keep the target organ on each modality's own curve
    if (static_cast<int>(spec.modality_transfer.size()) != n)
      throw ConfigError("modality_transfer needs one map per modality");
    for (int m = 0; m < n; ++m) spec.target_organ_intensity[m] = spec.modality_transfer[m].apply(spec.target_latent);
  }
  spec.validate();
  return spec;
}

json to_json(const SegmenterConfig& c) {
  return {{"base_channels", c.base_channels}, {"depth", c.depth},           {"lr", c.lr},
          {"batch_size", c.batch_size},       {"max_steps", c.max_steps},   {"target_dice", c.target_dice},
          {"eval_every", c.eval_every}};
}

SegmenterConfig segmenter_config_from_json(const json& j) {
  const std::string ctx = "eval.segmenter";
  check_keys(j, {"base_channels", "depth", "lr", "batch_size", "max_steps", "target_dice", "eval_every"}, ctx);
  SegmenterConfig c;
  read_key(j, "base_channels", c.base_channels, ctx);
  read_key(j, "depth", c.depth, ctx);
  read_key(j, "lr", c.lr, ctx);
  read_key(j, "batch_size", c.batch_size, ctx);
  read_key(j, "max_steps", c.max_steps, ctx);
  read_key(j, "target_dice", c.target_dice, ctx);
  read_key(j, "eval_every", c.eval_every, ctx);
  return c;
}

void RunConfig::resolve() {
  train.seed = seed;
  eval.segmenter.seed = seed;
  eval.options.embedder_seed = seed;
  phantom.validate();
  model.variant.validate();
  train.validate();
  eval.options.validate();
  if (eval.segmenter.batch_size < 1 || eval.segmenter.max_steps < 0 || eval.segmenter.eval_every < 1 ||
      !(eval.segmenter.lr > 0))
    throw ConfigError("invalid eval.segmenter settings");
  for (const auto& v : ablation.variants) v.validate();
  if (ablation.seeds.empty()) ablation.seeds = {seed, seed + 1, seed + 2};
  GeneratorConfig g = model.generator;
  g.n_modalities = phantom.n_modalities;
  g.validate(phantom.resolution);
  model.discriminator.validate(phantom.resolution);
  model.shape_controller.validate(phantom.resolution);
}

json RunConfig::to_json() const {
  json train_j = targan::to_json(train);
  train_j.erase("seed");
  json variants = json::array();
  for (const auto& v : ablation.variants)
    variants.push_back({{"use_shape_controller", v.use_shape_controller},
                        {"use_target_stream", v.use_target_stream},
                        {"use_crossing", v.use_crossing}});
  return {{"seed", seed},
          {"out_dir", out_dir.string()},
          {"data_dir", data_dir.string()},
          {"phantom", targan::to_json(phantom)},
          {"model", targan::to_json(model)},
          {"train", train_j},
          {"eval",
           {{"metrics", eval.options.metrics},
            {"split", to_string(eval.options.split)},
            {"embedder_dim", eval.options.embedder_dim},
            {"segmenter", targan::to_json(eval.segmenter)},
            {"segmenter_dir", eval.segmenter_dir.string()}}},
          {"ablation", {{"seeds", ablation.seeds}, {"variants", variants}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"seed", "out_dir", "data_dir", "phantom", "model", "train", "eval", "ablation"}, "");
  RunConfig c;
  read_key(j, "seed", c.seed, "");
  std::string s;
  if (j.contains("out_dir")) {
    read_key(j, "out_dir", s, "");
    c.out_dir = s;
  }
  if (j.contains("data_dir")) {
    read_key(j, "data_dir", s, "");
    c.data_dir = s;
  }
  if (j.contains("phantom")) c.phantom = phantom_spec_from_json(j["phantom"]);
  if (j.contains("model")) c.model = model_config_from_json(j["model"]);
  if (j.contains("train")) {
    if (j["train"].is_object() && j["train"].contains("seed"))
      throw ConfigError("unknown config key 'train.seed' (use the top-level seed)");
    c.train = train_config_from_json(j["train"]);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    const std::string ctx = "eval";
    check_keys(e, {"metrics", "split", "embedder_dim", "segmenter", "segmenter_dir"}, ctx);
    if (e.contains("metrics")) {
      std::vector<std::string> m;
      read_key(e, "metrics", m, ctx);
      c.eval.options.metrics = {m.begin(), m.end()};
    }
    if (e.contains("split")) {
      read_key(e, "split", s, ctx);
      if (s != "train" && s != "test") throw ConfigError("invalid value for config key 'eval.split'");
      c.eval.options.split = split_from_string(s);
    }
    read_key(e, "embedder_dim", c.eval.options.embedder_dim, ctx);
    if (e.contains("segmenter")) c.eval.segmenter = segmenter_config_from_json(e["segmenter"]);
    if (e.contains("segmenter_dir")) {
      read_key(e, "segmenter_dir", s, ctx);
      c.eval.segmenter_dir = s;
    }
  }
  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    check_keys(a, {"seeds", "variants"}, "ablation");
    read_key(a, "seeds", c.ablation.seeds, "ablation");
    if (a.contains("variants")) {
      if (!a["variants"].is_array()) throw ConfigError("invalid value for config key 'ablation.variants'");
      c.ablation.variants.clear();
      for (const auto& v : a["variants"]) {
        check_keys(v, {"use_shape_controller", "use_target_stream", "use_crossing"}, "ablation.variants");
        ModelVariant mv;
        read_key(v, "use_shape_controller", mv.use_shape_controller, "ablation.variants");
        read_key(v, "use_target_stream", mv.use_target_stream, "ablation.variants");
        read_key(v, "use_crossing", mv.use_crossing, "ablation.variants");
        c.ablation.variants.push_back(mv);
      }
    }
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string config_hash(const json& j) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_resolved_config(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json");
  if (!out) throw IoError("cannot write " + (dir / "resolved_config.json").string());
  out << cfg.to_json().dump(2) << '\n';
}

}  // namespace targan
