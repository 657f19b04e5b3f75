#include "targan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "targan/config.hpp"
#include "targan/errors.hpp"
#include "targan/evaluation.hpp"
#include "targan/png_io.hpp"
#include "targan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace targan {
namespace {

struct GlobalFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

RunConfig load_run_config(const GlobalFlags& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  cfg.resolve();
  return cfg;
}

Dataset load_data(const RunConfig& cfg, const std::string& manifest) {
  const fs::path path = manifest.empty() ? cfg.data_root() / "manifest.json" : fs::path(manifest);
  if (!fs::exists(path))
    throw IoError("missing file: " + path.string() + " (run `targan gen-data` first)");
  return load_dataset(path);
}

int parse_modality(const std::string& s, const std::vector<std::string>& names, int n) {
  int id = -1;
  const auto it = std::find(names.begin(), names.end(), s);
  if (it != names.end()) {
    id = static_cast<int>(it - names.begin());
  } else {
    try {
      size_t used = 0;
      id = std::stoi(s, &used);
      if (used != s.size()) id = -1;
    } catch (const std::exception&) {
      id = -1;
    }
  }
  if (id < 0 || id >= n) throw ConfigError("unknown modality '" + s + "'");
  return id;
}

fs::path segmenter_path(const fs::path& dir, const std::string& modality) { return dir / (modality + ".seg"); }

std::vector<Segmenter> load_segmenters(const fs::path& dir, const Dataset& data) {
  std::vector<Segmenter> out;
  for (const auto& name : data.modality_names()) {
    const auto p = segmenter_path(dir, name);
    if (!fs::exists(p))
      throw ConfigError("no reference segmenter for modality '" + name + "' (expected " + p.string() +
                        "); run `targan train-segmenter` first");
    out.push_back(Segmenter::load(p));
  }
  return out;
}

std::vector<Segmenter> train_segmenters(const RunConfig& cfg, const Dataset& data, std::ostream& log) {
  const fs::path dir = cfg.segmenter_root();
  fs::create_directories(dir);
  std::vector<Segmenter> out;
  json summary = json::object();
  for (int m = 0; m < data.n_modalities(); ++m) {
    const auto& name = data.modality_names()[m];
    log << "training reference segmenter for " << name << "\n";
    Segmenter seg = train_reference_segmenter(data, m, cfg.eval.segmenter);
    seg.save(segmenter_path(dir, name));
    log << "  held-out DICE " << seg.heldout_dice << " after " << seg.steps << " steps\n";
    summary[name] = {{"heldout_dice", seg.heldout_dice}, {"steps", seg.steps}};
    out.push_back(std::move(seg));
  }
  std::ofstream(dir / "segmenters.json") << summary.dump(2) << '\n';
  write_resolved_config(cfg, dir);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  const fs::path root = cfg.data_root();
  const auto manifest = generate_phantom_dataset(cfg.phantom, cfg.seed, root);
  write_resolved_config(cfg, root);
  out << "wrote " << manifest.samples.size() << " samples to " << (root / "manifest.json").string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& resume, int keep_last, std::ostream& out,
              std::ostream& log) {
  const Dataset data = load_data(cfg, "");
  const fs::path dir = cfg.out_dir / "train";
  write_resolved_config(cfg, dir);
  TrainOptions opt;
  opt.out_dir = dir;
  opt.keep_last_checkpoints = keep_last;
  if (!resume.empty()) opt.resume = fs::path(resume);
  opt.on_epoch = [&](int epoch, const LossReport& r) {
    log << "epoch " << epoch << "/" << cfg.train.epochs << "  G " << r.total_G << "  Dx " << r.total_D_x
        << "  cross " << r.cross << "\n";
  };
  const auto res = train(cfg.model, cfg.train, data, opt);
  out << "trained to step " << res.trainer.step() << "; checkpoints in " << (dir / "checkpoints").string() << "\n";
  return 0;
}

int cmd_translate(const RunConfig& cfg, const std::string& ckpt, const std::string& input,
                  const std::string& source, const std::string& target, std::string output, bool raw,
                  std::ostream& out) {
  Trainer tr = Trainer::load_checkpoint(ckpt);
  const int n = tr.n_modalities();
  const int s = parse_modality(source, cfg.phantom.modality_names, n);
  const int t = parse_modality(target, cfg.phantom.modality_names, n);
  if (!fs::is_directory(input)) throw IoError("input directory not found: " + input);
  const fs::path dst = output.empty() ? cfg.out_dir / "translate" : fs::path(output);
  fs::create_directories(dst);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  Generator& g = tr.generator_for_inference(!raw);
  for (const auto& f : files) {
    const Image x = png::read_image(f);
    if (x.height != tr.resolution() || x.width != tr.resolution())
      throw ShapeError(f.string() + " does not match the checkpoint resolution");
    png::write_image(dst / f.filename(), translate_image(g, x, t));
  }
  write_resolved_config(cfg, dst);
  std::ofstream(dst / "translation.json") << json{{"checkpoint", ckpt},
                                                  {"source", s},
                                                  {"target", t},
                                                  {"params", raw ? "raw" : "ema"},
                                                  {"count", files.size()}}
                                                  .dump(2)
                                           << '\n';
  out << "translated " << files.size() << " images into " << dst.string() << "\n";
  return 0;
}

int cmd_eval(RunConfig cfg, const std::string& ckpt, const std::string& manifest,
             const std::vector<std::string>& metrics, const std::string& segdir, bool raw, std::ostream& out) {
  if (!metrics.empty()) {
    cfg.eval.options.metrics = {metrics.begin(), metrics.end()};
    cfg.eval.options.validate();
  }
  if (!segdir.empty()) cfg.eval.segmenter_dir = segdir;
  const Dataset data = load_data(cfg, manifest);
  std::vector<Segmenter> segs;
  if (cfg.eval.options.needs_segmenters()) segs = load_segmenters(cfg.segmenter_root(), data);

  Trainer tr = Trainer::load_checkpoint(ckpt, data.n_modalities());
  EvalReport rep = evaluate(tr.generator_for_inference(!raw), data, cfg.eval.options, &segs);
  json resolved = cfg.to_json();
  resolved["checkpoint"] = ckpt;
  rep.config_hash = config_hash(resolved);
  rep.checkpoint_path = ckpt;

  const fs::path dir = cfg.out_dir / "eval";
  write_resolved_config(cfg, dir);
  std::ofstream(dir / "report.json") << rep.to_json().dump(2) << '\n';
  std::ofstream(dir / "report.csv") << rep.to_csv();
  out << rep.to_json().dump(2) << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const Dataset data = load_data(cfg, "");
  std::vector<Segmenter> segs;
  bool have_all = true;
  for (const auto& name : data.modality_names())
    have_all = have_all && fs::exists(segmenter_path(cfg.segmenter_root(), name));
  segs = have_all ? load_segmenters(cfg.segmenter_root(), data) : train_segmenters(cfg, data, log);

  AblationOptions opt;
  opt.model = cfg.model;
  opt.train = cfg.train;
  opt.seeds = cfg.ablation.seeds;
  opt.out_dir = cfg.out_dir / "ablation";
  opt.log = [&](const std::string& line) { log << line << "\n"; };
  write_resolved_config(cfg, opt.out_dir);
  const auto result = run_ablation(cfg.ablation.variants, data, segs, opt);
  out << result.table_csv();
  return 0;
}

int cmd_train_segmenter(const RunConfig& cfg, const std::string& manifest, std::ostream& out,
                        std::ostream& log) {
  const Dataset data = load_data(cfg, manifest);
  train_segmenters(cfg, data, log);
  out << "segmenters written to " << cfg.segmenter_root().string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target-aware multi-modality image translation on phantom data"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "seed for every random stream (overrides the config)");
  app.add_option("--out", g.out, "output directory (overrides the config)");

  auto* gen = app.add_subcommand("gen-data", "render the phantom corpus");

  auto* trn = app.add_subcommand("train", "train a model");
  std::string resume;
  int keep_last = 0;
  trn->add_option("--resume", resume, "checkpoint to continue from");
  trn->add_option("--keep-last", keep_last, "keep only the newest N epoch checkpoints (0 keeps all)");

  auto* tsl = app.add_subcommand("translate", "translate a directory of images");
  std::string ckpt, input, source, target, output;
  bool raw = false, ema = false;
  tsl->add_option("--checkpoint", ckpt)->required();
  tsl->add_option("--input", input, "directory of 16-bit PNG images")->required();
  tsl->add_option("--source", source, "source modality (name or id)")->required();
  tsl->add_option("--target", target, "target modality (name or id)")->required();
  tsl->add_option("--output", output, "output directory");
  auto* raw_flag = tsl->add_flag("--raw", raw, "use the raw generator parameters");
  tsl->add_flag("--ema", ema, "use the averaged parameters (default)")->excludes(raw_flag);

  auto* evl = app.add_subcommand("eval", "compute metrics for a checkpoint");
  std::string manifest, segdir;
  std::vector<std::string> metrics;
  bool eval_raw = false;
  evl->add_option("--checkpoint", ckpt)->required();
  evl->add_option("--manifest", manifest, "dataset manifest (default: <data_dir>/manifest.json)");
  evl->add_option("--metrics", metrics, "subset of fid,s_score,dice,ravd,whole_l1,target_l1")->delimiter(',');
  evl->add_option("--segmenters", segdir, "directory of reference segmenters");
  evl->add_flag("--raw", eval_raw, "use the raw generator parameters");

  auto* abl = app.add_subcommand("ablate", "train and score every ablation variant");

  auto* seg = app.add_subcommand("train-segmenter", "train reference segmenters on real images");
  seg->add_option("--manifest", manifest, "dataset manifest (default: <data_dir>/manifest.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = load_run_config(g);
    if (gen->parsed()) return cmd_gen_data(cfg, out);
    if (trn->parsed()) return cmd_train(cfg, resume, keep_last, out, err);
    if (tsl->parsed()) return cmd_translate(cfg, ckpt, input, source, target, output, raw, out);
    if (evl->parsed()) return cmd_eval(cfg, ckpt, manifest, metrics, segdir, eval_raw, out);
    if (abl->parsed()) return cmd_ablate(cfg, out, err);
    if (seg->parsed()) return cmd_train_segmenter(cfg, manifest, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace targan
