#include "targan/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include <json.hpp>

#include "targan/errors.hpp"
#include "targan/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace targan {

// ---------------------------------------------------------------------------
// Transfer maps

double TransferMap::apply(double x) const {
  x = std::clamp(x, 0.0, 1.0);
  for (size_t i = 1; i < knots.size(); ++i) {
    const auto [x0, y0] = knots[i - 1];
    const auto [x1, y1] = knots[i];
    if (x <= x1) return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  }
  return knots.back().second;
}

double TransferMap::invert(double y) const {
  y = std::clamp(y, 0.0, 1.0);
  for (size_t i = 1; i < knots.size(); ++i) {
    const auto [x0, y0] = knots[i - 1];
    const auto [x1, y1] = knots[i];
    if (y <= y1) return x0 + (x1 - x0) * (y - y0) / (y1 - y0);
  }
  return knots.back().first;
}

void TransferMap::validate() const {
  if (knots.size() < 2) throw ConfigError("transfer map needs at least two knots");
  if (knots.front() != std::pair{0.0, 0.0} || knots.back() != std::pair{1.0, 1.0})
    throw ConfigError("transfer map must start at (0,0) and end at (1,1)");
  for (size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].first > knots[i - 1].first) || !(knots[i].second > knots[i - 1].second))
      throw ConfigError("transfer map knots must be strictly increasing");
  }
}

// ---------------------------------------------------------------------------
// Phantom spec

PhantomSpec PhantomSpec::defaults(int n_modalities) {
  PhantomSpec spec;
  spec.n_modalities = n_modalities;
  const double mid = (n_modalities - 1) / 2.0;
  for (int m = 0; m < n_modalities; ++m) {
    const double gamma = mid > 0 ? std::pow(2.0, (m - mid) / mid) : 1.0;
    // modality order: identity first, then brighter, then darker
    const double g = n_modalities == 3 ? std::array{1.0, 0.5, 2.0}[m] : gamma;
    TransferMap map;
    for (double x : {0.0, 0.2, 0.4, 0.8, 1.0}) map.knots.emplace_back(x, std::pow(x, g));
    spec.modality_transfer.push_back(map);
    spec.target_organ_intensity.push_back(std::pow(spec.target_latent, g));
    spec.modality_names.push_back("M" + std::to_string(m));
  }
  return spec;
}

TransferMap PhantomSpec::effective_transfer(int m) const {
  TransferMap map = modality_transfer.at(m);
  const double ty = target_organ_intensity.at(m);
  auto it = std::find_if(map.knots.begin(), map.knots.end(),
                         [&](const auto& k) { return k.first >= target_latent; });
  if (it != map.knots.end() && it->first == target_latent)
    it->second = ty;
  else
    map.knots.insert(it, {target_latent, ty});
  return map;
}

void PhantomSpec::validate() const {
  if (resolution < 8) throw ConfigError("phantom resolution must be at least 8");
  if (n_modalities < 2) throw ConfigError("phantom needs at least two modalities");
  if (n_anatomies < 2) throw ConfigError("phantom needs at least two anatomies");
  if (organ_count_min < 1 || organ_count_max < organ_count_min)
    throw ConfigError("invalid organ_count_range");
  if (!(target_latent >= 0.3 && target_latent <= 0.8))
    throw ConfigError("target_latent must lie in [0.3, 0.8]");
  if (static_cast<int>(modality_transfer.size()) != n_modalities)
    throw ConfigError("modality_transfer needs one map per modality");
  if (static_cast<int>(target_organ_intensity.size()) != n_modalities)
    throw ConfigError("target_organ_intensity needs one value per modality");
  if (static_cast<int>(modality_names.size()) != n_modalities)
    throw ConfigError("modality_names needs one name per modality");
  if (!(noise_sigma >= 0.0 && noise_sigma < 0.1)) throw ConfigError("noise_sigma must be in [0, 0.1)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");
  for (int m = 0; m < n_modalities; ++m) {
    try {
      effective_transfer(m).validate();
    } catch (const ConfigError& e) {
      throw ConfigError("modality " + std::to_string(m) + ": " + e.what());
    }
  }
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw IoError("unknown split tag '" + s + "'");
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

// Body tissue never drops below this latent value, keeping every body pixel
// above the foreground threshold in every modality.
constexpr double kLatentFloor = 0.1;

struct Ellipse {
  double cy, cx, ay, ax, angle;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / ax;
    const double v = (-s * dx + c * dy) / ay;
    return u * u + v * v <= 1.0;
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Mask rasterize(const Ellipse& e, int64_t res) {
  Mask m(res, res);
  for (int64_t r = 0; r < res; ++r)
    for (int64_t c = 0; c < res; ++c) m.at(r, c) = e.contains(r + 0.5, c + 0.5) ? 1 : 0;
  return m;
}

bool inside(const Mask& inner, const Mask& outer) {
  for (int64_t i = 0; i < inner.size(); ++i)
    if (inner.values[i] && !outer.values[i]) return false;
  return true;
}

// Random ellipse fully inside `body`; retries with shrinking size.
Ellipse place_inside(const Mask& body, const Ellipse& bounds, double min_frac, double max_frac,
                     int64_t res, std::mt19937_64& rng, Mask& out) {
  double scale = 1.0;
  for (int attempt = 0; attempt < 400; ++attempt) {
    if (attempt > 0 && attempt % 50 == 0) scale *= 0.8;
    Ellipse e;
    e.ay = uniform(rng, min_frac, max_frac) * res * scale;
    e.ax = uniform(rng, min_frac, max_frac) * res * scale;
    e.angle = uniform(rng, 0.0, std::numbers::pi);
    e.cy = bounds.cy + uniform(rng, -0.7, 0.7) * bounds.ay;
    e.cx = bounds.cx + uniform(rng, -0.7, 0.7) * bounds.ax;
    Mask m = rasterize(e, res);
    if (m.count() >= 4 && inside(m, body)) {
      out = std::move(m);
      return e;
    }
  }
  throw ConfigError("could not place an organ inside the body; resolution too small?");
}

}  // namespace

Anatomy render_anatomy(const PhantomSpec& spec, std::mt19937_64& rng) {
  const int64_t res = spec.resolution;
  Anatomy a;
  a.latent.assign(static_cast<size_t>(res * res), 0.0);

  Ellipse body{res / 2.0 + uniform(rng, -0.05, 0.05) * res,
               res / 2.0 + uniform(rng, -0.05, 0.05) * res, uniform(rng, 0.30, 0.42) * res,
               uniform(rng, 0.36, 0.46) * res, uniform(rng, -0.3, 0.3)};
  a.body = rasterize(body, res);
  const double body_latent = uniform(rng, 0.25, 0.40);
  for (int64_t i = 0; i < a.body.size(); ++i)
    if (a.body.values[i]) a.latent[i] = body_latent;

  const int n_organs =
      std::uniform_int_distribution<int>(spec.organ_count_min, spec.organ_count_max)(rng);
  for (int k = 0; k + 1 < n_organs; ++k) {
    Mask organ;
    place_inside(a.body, body, 0.05, 0.12, res, rng, organ);
    // keep distractor organs away from the target tissue value
    const double v = uniform(rng, 0.0, 1.0) < 0.5 ? uniform(rng, 0.15, spec.target_latent - 0.15)
                                                  : uniform(rng, spec.target_latent + 0.15, 0.95);
    for (int64_t i = 0; i < organ.size(); ++i)
      if (organ.values[i]) a.latent[i] = v;
  }
  // target organ drawn last so its stencil is exactly the mask
  place_inside(a.body, body, 0.12, 0.22, res, rng, a.target);
  for (int64_t i = 0; i < a.target.size(); ++i)
    if (a.target.values[i]) a.latent[i] = spec.target_latent;

  std::normal_distribution<double> noise(0.0, 1.0);
  for (int64_t i = 0; i < a.body.size(); ++i) {
    if (!a.body.values[i]) continue;
    const double n = spec.noise_sigma > 0 ? spec.noise_sigma * noise(rng) : 0.0;
    a.latent[i] = std::clamp(a.latent[i] + n, kLatentFloor, 1.0);
  }
  return a;
}

Image render_modality(const PhantomSpec& spec, const Anatomy& anatomy, int modality) {
  const TransferMap map = spec.effective_transfer(modality);
  Image img(spec.resolution, spec.resolution, -1.0f);
  for (int64_t i = 0; i < img.size(); ++i) {
    if (anatomy.body.values[i])
      img.values[i] = static_cast<float>(map.apply(anatomy.latent[i]) * 2.0 - 1.0);
  }
  return quantize_u16(img);
}

namespace {

std::string anatomy_id(int a) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "a%04d", a);
  return buf;
}

}  // namespace

Dataset make_phantom_dataset(const PhantomSpec& spec, uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);

  std::vector<int> order(spec.n_anatomies);
  for (int a = 0; a < spec.n_anatomies; ++a) order[a] = a;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = std::clamp(
      static_cast<int>(std::lround(spec.train_fraction * spec.n_anatomies)), 1, spec.n_anatomies - 1);
  std::vector<Split> split(spec.n_anatomies, Split::Test);
  for (int k = 0; k < n_train; ++k) split[order[k]] = Split::Train;

  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(spec.n_anatomies * spec.n_modalities));
  for (int a = 0; a < spec.n_anatomies; ++a) {
    const Anatomy anatomy = render_anatomy(spec, rng);
    for (int m = 0; m < spec.n_modalities; ++m) {
      Sample s;
      s.x = render_modality(spec, anatomy, m);
      s.y = anatomy.target;
      s.modality = {m, spec.modality_names[m]};
      s.id = anatomy_id(a);
      s.anatomy = a;
      s.split = split[a];
      samples.push_back(std::move(s));
    }
  }
  return Dataset(spec.modality_names, std::move(samples));
}

DatasetManifest generate_phantom_dataset(const PhantomSpec& spec, uint64_t seed,
                                         const fs::path& root) {
  const Dataset data = make_phantom_dataset(spec, seed);
  DatasetManifest manifest;
  manifest.root = root;
  manifest.modalities = data.modality_names();

  std::error_code ec;
  for (const auto& name : manifest.modalities) {
    fs::create_directories(root / "images" / name, ec);
    if (!ec) fs::create_directories(root / "masks" / name, ec);
    if (ec) throw IoError("cannot create dataset directory under " + root.string() + ": " + ec.message());
  }
  for (const Sample& s : data.samples()) {
    SampleRecord rec;
    rec.id = s.id;
    rec.modality = s.modality.id;
    rec.image = (fs::path("images") / s.modality.name / (s.id + ".png")).generic_string();
    rec.mask = (fs::path("masks") / s.modality.name / (s.id + ".png")).generic_string();
    rec.split = s.split;
    rec.anatomy = s.anatomy;
    png::write_image(root / rec.image, s.x);
    png::write_mask(root / rec.mask, s.y);
    manifest.samples.push_back(std::move(rec));
  }
  manifest.save();
  return manifest;
}

// ---------------------------------------------------------------------------
// Manifest

void DatasetManifest::save() const {
  json j;
  j["modalities"] = modalities;
  j["samples"] = json::array();
  for (const auto& s : samples) {
    j["samples"].push_back({{"id", s.id},
                            {"modality", modalities.at(s.modality)},
                            {"image", s.image},
                            {"mask", s.mask},
                            {"split", to_string(s.split)},
                            {"anatomy", s.anatomy}});
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write manifest: " + (root / "manifest.json").string());
  out << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::read(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("missing file: " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("corrupt manifest " + manifest_path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  try {
    m.modalities = j.at("modalities").get<std::vector<std::string>>();
    std::unordered_map<std::string, int> ids;
    for (size_t i = 0; i < m.modalities.size(); ++i) ids[m.modalities[i]] = static_cast<int>(i);
    for (const auto& r : j.at("samples")) {
      SampleRecord rec;
      rec.id = r.at("id").get<std::string>();
      const auto mod = r.at("modality").get<std::string>();
      if (!ids.contains(mod)) throw IoError("sample " + rec.id + " has unknown modality " + mod);
      rec.modality = ids.at(mod);
      rec.image = r.at("image").get<std::string>();
      rec.mask = r.at("mask").get<std::string>();
      rec.split = split_from_string(r.at("split").get<std::string>());
      rec.anatomy = r.value("anatomy", -1);
      m.samples.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return m;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest m = DatasetManifest::read(manifest_path);
  std::vector<Sample> samples;
  samples.reserve(m.samples.size());
  for (const auto& rec : m.samples) {
    const fs::path img_path = m.root / rec.image;
    const fs::path mask_path = m.root / rec.mask;
    if (!fs::exists(img_path)) throw IoError("missing file: " + img_path.string());
    if (!fs::exists(mask_path)) throw IoError("missing file: " + mask_path.string());
    Sample s;
    s.x = png::read_image(img_path);
    s.y = png::read_mask(mask_path);
    if (s.x.height != s.y.height || s.x.width != s.y.width)
      throw ShapeError("mask/image dimension mismatch for sample " + rec.id + " (" +
                       img_path.string() + ")");
    s.modality = {rec.modality, m.modalities[rec.modality]};
    s.id = rec.id;
    s.anatomy = rec.anatomy;
    s.split = rec.split;
    samples.push_back(std::move(s));
  }
  return Dataset(m.modalities, std::move(samples));
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<std::string> modalities, std::vector<Sample> samples)
    : modalities_(std::move(modalities)), samples_(std::move(samples)) {
  if (modalities_.size() < 2) throw ConfigError("a dataset needs at least two modalities");
  for (size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.modality.id < 0 || s.modality.id >= n_modalities())
      throw ConfigError("sample " + s.id + " has modality id out of range");
    if (s.x.height != samples_.front().x.height || s.x.width != samples_.front().x.width)
      throw ShapeError("all samples must share one resolution");
    if (s.x.height != s.y.height || s.x.width != s.y.width)
      throw ShapeError("mask/image dimension mismatch for sample " + s.id);
    if (s.split == Split::Train) {
      if (s.y.count() == 0) throw ConfigError("training sample " + s.id + " has an empty target mask");
      train_.push_back(i);
    } else {
      test_.push_back(i);
    }
  }
}

std::vector<size_t> Dataset::indices(Split split, int modality) const {
  std::vector<size_t> out;
  for (size_t i : split == Split::Train ? train_ : test_)
    if (samples_[i].modality.id == modality) out.push_back(i);
  return out;
}

int64_t Dataset::find(int anatomy, int modality) const {
  for (size_t i = 0; i < samples_.size(); ++i)
    if (samples_[i].anatomy == anatomy && samples_[i].modality.id == modality)
      return static_cast<int64_t>(i);
  return -1;
}

Batch sample_training_batch(const Dataset& data, int batch_size, std::mt19937_64& rng) {
  const auto& train = data.train_indices();
  if (train.empty()) throw ConfigError("dataset has no training samples");
  std::uniform_int_distribution<size_t> pick(0, train.size() - 1);
  std::uniform_int_distribution<int> target(0, data.n_modalities() - 1);
  Batch batch(static_cast<size_t>(batch_size));
  for (auto& item : batch) {
    item.sample = train[pick(rng)];
    item.source = data[item.sample].modality.id;
    item.target = target(rng);
  }
  return batch;
}

}  // namespace targan
