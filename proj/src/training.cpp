#include "targan/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "targan/errors.hpp"
#include "targan/json_util.hpp"
#include "targan/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace targan {

// ---------------------------------------------------------------------------
// Configuration

void ModelVariant::validate() const {
  if (use_crossing && !use_target_stream)
    throw ConfigError("illegal variant: the crossing loss requires the target stream");
}

std::string ModelVariant::name() const {
  std::string removed;
  auto drop = [&](bool on, const char* tag) {
    if (!on) removed += (removed.empty() ? "" : ",") + std::string(tag);
  };
  drop(use_shape_controller, "S");
  drop(use_target_stream, "T");
  drop(use_crossing, "C");
  return removed.empty() ? "TarGAN" : "TarGAN w/o " + removed;
}

void TrainConfig::validate() const {
  if (!(lr_G_S >= 0) || !(lr_D >= 0)) throw ConfigError("learning rates must be >= 0");
  if (!(ema_decay > 0 && ema_decay < 1)) throw ConfigError("ema_decay must lie in (0, 1)");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (d_steps_per_g_step < 1) throw ConfigError("d_steps_per_g_step must be positive");
  weights.validate();
}

json to_json(const ModelConfig& m) {
  return {{"generator",
           {{"base_channels", m.generator.base_channels},
            {"depth", m.generator.depth},
            {"middle_blocks", m.generator.middle_blocks}}},
          {"shape_controller",
           {{"base_channels", m.shape_controller.base_channels}, {"depth", m.shape_controller.depth}}},
          {"discriminator",
           {{"base_channels", m.discriminator.base_channels}, {"n_layers", m.discriminator.n_layers}}},
          {"variant",
           {{"use_shape_controller", m.variant.use_shape_controller},
            {"use_target_stream", m.variant.use_target_stream},
            {"use_crossing", m.variant.use_crossing}}}};
}

json to_json(const TrainConfig& t) {
  return {{"lr_G_S", t.lr_G_S},
          {"lr_D", t.lr_D},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"ema_decay", t.ema_decay},
          {"weights",
           {{"lambda_cls_r", t.weights.lambda_cls_r},
            {"lambda_cls_f", t.weights.lambda_cls_f},
            {"lambda_rec", t.weights.lambda_rec},
            {"lambda_cross", t.weights.lambda_cross},
            {"lambda_u", t.weights.lambda_u},
            {"lambda_gp", t.weights.lambda_gp}}},
          {"seed", t.seed},
          {"d_steps_per_g_step", t.d_steps_per_g_step}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  check_keys(j, {"generator", "shape_controller", "discriminator", "variant"}, "model");
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    check_keys(g, {"base_channels", "depth", "middle_blocks"}, "model.generator");
    read_key(g, "base_channels", m.generator.base_channels, "model.generator");
    read_key(g, "depth", m.generator.depth, "model.generator");
    read_key(g, "middle_blocks", m.generator.middle_blocks, "model.generator");
  }
  if (j.contains("shape_controller")) {
    const auto& s = j["shape_controller"];
    check_keys(s, {"base_channels", "depth"}, "model.shape_controller");
    read_key(s, "base_channels", m.shape_controller.base_channels, "model.shape_controller");
    read_key(s, "depth", m.shape_controller.depth, "model.shape_controller");
  }
  if (j.contains("discriminator")) {
    const auto& d = j["discriminator"];
    check_keys(d, {"base_channels", "n_layers"}, "model.discriminator");
    read_key(d, "base_channels", m.discriminator.base_channels, "model.discriminator");
    read_key(d, "n_layers", m.discriminator.n_layers, "model.discriminator");
  }
  if (j.contains("variant")) {
    const auto& v = j["variant"];
    check_keys(v, {"use_shape_controller", "use_target_stream", "use_crossing"}, "model.variant");
    read_key(v, "use_shape_controller", m.variant.use_shape_controller, "model.variant");
    read_key(v, "use_target_stream", m.variant.use_target_stream, "model.variant");
    read_key(v, "use_crossing", m.variant.use_crossing, "model.variant");
  }
  return m;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig t;
  const std::string ctx = "train";
  check_keys(j,
             {"lr_G_S", "lr_D", "adam_beta1", "adam_beta2", "batch_size", "epochs", "ema_decay", "weights",
              "seed", "d_steps_per_g_step"},
             ctx);
  read_key(j, "lr_G_S", t.lr_G_S, ctx);
  read_key(j, "lr_D", t.lr_D, ctx);
  read_key(j, "adam_beta1", t.adam_beta1, ctx);
  read_key(j, "adam_beta2", t.adam_beta2, ctx);
  read_key(j, "batch_size", t.batch_size, ctx);
  read_key(j, "epochs", t.epochs, ctx);
  read_key(j, "ema_decay", t.ema_decay, ctx);
  read_key(j, "seed", t.seed, ctx);
  read_key(j, "d_steps_per_g_step", t.d_steps_per_g_step, ctx);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    const std::string wctx = "train.weights";
    check_keys(w, {"lambda_cls_r", "lambda_cls_f", "lambda_rec", "lambda_cross", "lambda_u", "lambda_gp"},
               wctx);
    read_key(w, "lambda_cls_r", t.weights.lambda_cls_r, wctx);
    read_key(w, "lambda_cls_f", t.weights.lambda_cls_f, wctx);
    read_key(w, "lambda_rec", t.weights.lambda_rec, wctx);
    read_key(w, "lambda_cross", t.weights.lambda_cross, wctx);
    read_key(w, "lambda_u", t.weights.lambda_u, wctx);
    read_key(w, "lambda_gp", t.weights.lambda_gp, wctx);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1,
           double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [_, p] : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& [_, p] : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++steps_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    const auto& g = p.grad();
    if (!g.defined()) continue;
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    const auto denom = (v_[i] / bias2).sqrt_().add_(eps_);
    p.addcdiv_(m_[i], denom, -lr_ / bias1);
  }
}

void Adam::save(TensorArchive& ar, const std::string& prefix) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    ar.add(prefix + ".m." + params_[i].first, m_[i]);
    ar.add(prefix + ".v." + params_[i].first, v_[i]);
  }
  ar.meta["optimizer_steps"][prefix] = steps_;
}

void Adam::load(const TensorArchive& ar, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].copy_(ar.get(prefix + ".m." + params_[i].first));
    v_[i].copy_(ar.get(prefix + ".v." + params_[i].first));
  }
  steps_ = ar.meta.at("optimizer_steps").at(prefix).get<int64_t>();
}

// ---------------------------------------------------------------------------
// EMA

void ema_update(torch::Tensor& ema, const torch::Tensor& g, double decay) {
  torch::NoGradGuard no_grad;
  ema.mul_(decay).add_(g.detach(), 1.0 - decay);
}

void ema_update(torch::nn::Module& ema, const torch::nn::Module& g, double decay) {
  auto dst = ema.parameters();
  const auto src = g.parameters();
  if (dst.size() != src.size()) throw ConfigError("EMA and generator architectures differ");
  for (size_t i = 0; i < dst.size(); ++i) ema_update(dst[i], src[i], decay);
  torch::NoGradGuard no_grad;
  auto dbuf = ema.buffers();
  const auto sbuf = g.buffers();
  for (size_t i = 0; i < dbuf.size(); ++i) dbuf[i].copy_(sbuf[i]);
}

void copy_parameters(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard no_grad;
  auto dp = dst.parameters();
  const auto sp = src.parameters();
  if (dp.size() != sp.size()) throw ConfigError("parameter copy between different architectures");
  for (size_t i = 0; i < dp.size(); ++i) dp[i].copy_(sp[i]);
  auto db = dst.buffers();
  const auto sb = src.buffers();
  for (size_t i = 0; i < db.size(); ++i) db[i].copy_(sb[i]);
}

// ---------------------------------------------------------------------------
// Batches

BatchTensors make_batch_tensors(const Dataset& data, const Batch& batch) {
  std::vector<const Image*> imgs;
  std::vector<torch::Tensor> masks;
  std::vector<int64_t> s, t;
  for (const auto& item : batch) {
    imgs.push_back(&data[item.sample].x);
    masks.push_back(to_tensor(data[item.sample].y));
    s.push_back(item.source);
    t.push_back(item.target);
  }
  BatchTensors b;
  b.x_s = to_tensor(imgs);
  b.y = torch::cat(masks, 0);
  b.r_s = mask_background(b.x_s, b.y);
  b.s = torch::tensor(s, torch::kLong);
  b.t = torch::tensor(t, torch::kLong);
  return b;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::vector<std::pair<std::string, torch::Tensor>> named_params(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value());
  return out;
}

// Freezes a module's parameters for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module* m) : m_(m) {
    if (m_)
      for (auto& p : m_->parameters()) p.set_requires_grad(false);
  }
  ~FreezeGuard() {
    if (m_)
      for (auto& p : m_->parameters()) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  torch::nn::Module* m_;
};

double value(const torch::Tensor& t) { return t.item<double>(); }

constexpr uint64_t kTorchStreamSalt = 0x9E3779B97F4A7C15ull;

}  // namespace

Trainer::Trainer(ModelConfig model, TrainConfig train, int n_modalities, int64_t resolution)
    : model_(std::move(model)),
      train_(train),
      weights_(train.weights),
      n_modalities_(n_modalities),
      resolution_(resolution),
      torch_rng_(at::detail::createCPUGenerator(train.seed ^ kTorchStreamSalt)),
      batch_rng_(train.seed) {
  model_.variant.validate();
  train_.validate();
  model_.generator.n_modalities = n_modalities;
  model_.generator.target_stream = model_.variant.use_target_stream;
  model_.discriminator.n_modalities = n_modalities;
  model_.shape_controller.in_channels = 1;
  model_.generator.validate(resolution);
  model_.discriminator.validate(resolution);
  if (model_.variant.use_shape_controller) model_.shape_controller.validate(resolution);
  if (!model_.variant.use_crossing) weights_.lambda_cross = 0.0;

  torch::manual_seed(train_.seed);
  G = Generator(model_.generator);
  opt_G_ = std::make_unique<Adam>(named_params(*G), train_.lr_G_S, train_.adam_beta1, train_.adam_beta2);
  if (model_.variant.use_shape_controller) {
    S = ShapeController(model_.shape_controller);
    opt_S_ = std::make_unique<Adam>(named_params(*S), train_.lr_G_S, train_.adam_beta1, train_.adam_beta2);
  }
  Dx = Discriminator(model_.discriminator);
  opt_Dx_ = std::make_unique<Adam>(named_params(*Dx), train_.lr_D, train_.adam_beta1, train_.adam_beta2);
  if (model_.variant.use_target_stream) {
    Dr = Discriminator(model_.discriminator);
    opt_Dr_ = std::make_unique<Adam>(named_params(*Dr), train_.lr_D, train_.adam_beta1, train_.adam_beta2);
  }
}

void Trainer::check_finite(const LossReport& r, const char* phase) const {
  if (!r.all_finite())
    throw NumericalError(std::string("non-finite loss in ") + phase + " at step " +
                         std::to_string(step_) + " (epoch " + std::to_string(epoch_ + 1) +
                         "): " + r.describe());
}

LossReport Trainer::train_step_D(const BatchTensors& b) {
  const bool T = model_.variant.use_target_stream;
  const double lambda_u = weights_.lambda_u;
  torch::Tensor x_t, r_t;
  {
    torch::NoGradGuard no_grad;
    if (T)
      std::tie(x_t, r_t) = G->forward(b.x_s, b.r_s, b.t);
    else
      x_t = G->translate(b.x_s, b.t);
  }
  const auto s_prime = fake_provenance_label(b.s, n_modalities_);

  struct Terms {
    torch::Tensor critic, gp, cls, total;
  };
  auto critic_terms = [&](Discriminator& D, const torch::Tensor& real, const torch::Tensor& fake) {
    auto out_real = D->forward(real);
    auto out_fake = D->forward(fake);
    Terms t;
    t.critic = critic_loss(out_real.src, out_fake.src);
    try {
      t.gp = gradient_penalty([&](const torch::Tensor& z) { return D->forward(z).src; }, real, fake,
                              torch_rng_);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at D step " + std::to_string(d_step_));
    }
    t.cls = cls_loss_real(out_real.cls, b.s, out_fake.cls, s_prime, lambda_u);
    t.total = compose_d_loss(t.critic, t.gp, t.cls, weights_);
    return t;
  };

  LossReport rep;
  opt_Dx_->zero_grad();
  const Terms tx = critic_terms(Dx, b.x_s, x_t);
  rep.critic_x = value(tx.critic);
  rep.gp_x = value(tx.gp);
  rep.cls_r_x = value(tx.cls);
  rep.total_D_x = value(tx.total);
  Terms tr;
  if (T) {
    opt_Dr_->zero_grad();
    tr = critic_terms(Dr, b.r_s, r_t);
    rep.critic_r = value(tr.critic);
    rep.gp_r = value(tr.gp);
    rep.cls_r_r = value(tr.cls);
    rep.total_D_r = value(tr.total);
  }
  check_finite(rep, "discriminator step");

  tx.total.backward();
  opt_Dx_->step();
  if (T) {
    tr.total.backward();
    opt_Dr_->step();
  }
  ++d_step_;
  return rep;
}

LossReport Trainer::train_step_G_S(const BatchTensors& b) {
  const bool T = model_.variant.use_target_stream;
  const bool S_on = model_.variant.use_shape_controller;
  FreezeGuard freeze_x(Dx.ptr().get());
  FreezeGuard freeze_r(T ? Dr.ptr().get() : nullptr);

  if (G_ema.is_empty()) {
    // EMA starts from the generator's initial parameters
    G_ema = Generator(model_.generator);
    copy_parameters(*G_ema, *G);
    for (auto& p : G_ema->parameters()) p.set_requires_grad(false);
  }

  opt_G_->zero_grad();
  if (S_on) opt_S_->zero_grad();

  torch::Tensor x_t, r_t, x_rec, r_rec;
  if (T) {
    std::tie(x_t, r_t) = G->forward(b.x_s, b.r_s, b.t);
    std::tie(x_rec, r_rec) = G->forward(x_t, r_t, b.s);
  } else {
    x_t = G->translate(b.x_s, b.t);
    x_rec = G->translate(x_t, b.s);
  }

  const auto zero = torch::zeros({}, b.x_s.options());
  auto out_x = Dx->forward(x_t);
  const auto adv_x = generator_adv_loss(out_x.src);
  const auto cls_f_x = cls_loss_fake(out_x.cls, b.t);
  const auto rec_x = reconstruction_loss(x_rec, b.x_s);
  torch::Tensor adv_r = zero, cls_f_r = zero, rec_r = zero, cross = zero;
  if (T) {
    auto out_r = Dr->forward(r_t);
    adv_r = generator_adv_loss(out_r.src);
    cls_f_r = cls_loss_fake(out_r.cls, b.t);
    rec_r = reconstruction_loss(r_rec, b.r_s);
    cross = crossing_loss(x_t, b.y, r_t);
  }
  torch::Tensor shape_x = zero, shape_r = zero;
  if (S_on) {
    shape_x = shape_consistency_loss(S->forward(x_t), binarize(b.x_s));
    if (T) shape_r = shape_consistency_loss(S->forward(r_t), binarize(b.r_s));
  }
  const auto total_g = compose_g_loss(adv_x, adv_r, cls_f_x, cls_f_r, rec_x, rec_r, cross, weights_);
  const auto total_gs = shape_x + shape_r;

  LossReport rep;
  rep.adv_x = value(adv_x);
  rep.adv_r = value(adv_r);
  rep.cls_f_x = value(cls_f_x);
  rep.cls_f_r = value(cls_f_r);
  rep.rec_x = value(rec_x);
  rep.rec_r = value(rec_r);
  rep.cross = value(cross);
  rep.shape_x = value(shape_x);
  rep.shape_r = value(shape_r);
  rep.total_G = value(total_g);
  rep.total_GS = value(total_gs);
  check_finite(rep, "generator step");

  (total_g + total_gs).backward();
  opt_G_->step();
  if (S_on) opt_S_->step();
  ema_update(*G_ema, *G, train_.ema_decay);
  ++step_;
  return rep;
}

LossReport Trainer::iteration(const Dataset& data) {
  LossReport d;
  BatchTensors b;
  for (int k = 0; k < train_.d_steps_per_g_step; ++k) {
    b = make_batch_tensors(data, sample_training_batch(data, train_.batch_size, batch_rng_));
    d = train_step_D(b);
  }
  LossReport g = train_step_G_S(b);
  g.merge_d(d);
  return g;
}

Generator& Trainer::generator_for_inference(bool prefer_ema) {
  if (prefer_ema && !G_ema.is_empty()) return G_ema;
  return G;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  TensorArchive ar;
  ar.meta["config"] = {{"model", to_json(model_)}, {"train", to_json(train_)}};
  ar.meta["n_modalities"] = n_modalities_;
  ar.meta["resolution"] = resolution_;
  ar.meta["step"] = step_;
  ar.meta["d_step"] = d_step_;
  ar.meta["epoch"] = epoch_;
  ar.meta["ema"] = !G_ema.is_empty();
  std::ostringstream rng;
  rng << batch_rng_;
  ar.meta["batch_rng"] = rng.str();

  add_module(ar, "G", *G);
  if (!G_ema.is_empty()) add_module(ar, "G_ema", *G_ema);
  if (!S.is_empty()) add_module(ar, "S", *S);
  add_module(ar, "Dx", *Dx);
  if (!Dr.is_empty()) add_module(ar, "Dr", *Dr);
  opt_G_->save(ar, "opt.G");
  if (opt_S_) opt_S_->save(ar, "opt.S");
  opt_Dx_->save(ar, "opt.Dx");
  if (opt_Dr_) opt_Dr_->save(ar, "opt.Dr");
  auto torch_state = torch_rng_.get_state();
  ar.add("rng.torch", torch_state);
  ar.save(path);
}

Trainer Trainer::load_checkpoint(const fs::path& path, std::optional<int> expected_modalities) {
  const TensorArchive ar = TensorArchive::load(path);
  try {
    const int n = ar.meta.at("n_modalities").get<int>();
    if (expected_modalities && *expected_modalities != n)
      throw ConfigError("checkpoint " + path.string() + " was trained with " + std::to_string(n) +
                        " modalities, dataset has " + std::to_string(*expected_modalities));
    Trainer tr(model_config_from_json(ar.meta.at("config").at("model")),
               train_config_from_json(ar.meta.at("config").at("train")), n,
               ar.meta.at("resolution").get<int64_t>());
    load_module(ar, "G", *tr.G);
    if (ar.meta.at("ema").get<bool>()) {
      tr.G_ema = Generator(tr.model_.generator);
      load_module(ar, "G_ema", *tr.G_ema);
      for (auto& p : tr.G_ema->parameters()) p.set_requires_grad(false);
    }
    if (!tr.S.is_empty()) load_module(ar, "S", *tr.S);
    load_module(ar, "Dx", *tr.Dx);
    if (!tr.Dr.is_empty()) load_module(ar, "Dr", *tr.Dr);
    tr.opt_G_->load(ar, "opt.G");
    if (tr.opt_S_) tr.opt_S_->load(ar, "opt.S");
    tr.opt_Dx_->load(ar, "opt.Dx");
    if (tr.opt_Dr_) tr.opt_Dr_->load(ar, "opt.Dr");
    tr.torch_rng_.set_state(ar.get("rng.torch"));
    std::istringstream rng(ar.meta.at("batch_rng").get<std::string>());
    rng >> tr.batch_rng_;
    tr.step_ = ar.meta.at("step").get<int64_t>();
    tr.d_step_ = ar.meta.at("d_step").get<int64_t>();
    tr.epoch_ = ar.meta.at("epoch").get<int>();
    return tr;
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint metadata in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training loop

int iterations_per_epoch(const Dataset& data, int batch_size) {
  return std::max<int>(1, static_cast<int>(data.train_indices().size()) / batch_size);
}

Image sample_grid(Generator& g, const Dataset& data) {
  torch::NoGradGuard no_grad;
  const int n = data.n_modalities();
  const int64_t res = data.resolution();
  Image grid(n * res, n * res, -1.0f);
  for (int s = 0; s < n; ++s) {
    auto idx = data.indices(Split::Test, s);
    if (idx.empty()) idx = data.indices(Split::Train, s);
    if (idx.empty()) continue;
    const auto x = to_tensor(data[idx.front()].x).expand({n, 1, res, res}).contiguous();
    const auto out = g->translate(x, torch::arange(n, torch::kLong));
    for (int t = 0; t < n; ++t) {
      const Image tile = to_image(out[t]);
      for (int64_t r = 0; r < res; ++r)
        for (int64_t c = 0; c < res; ++c) grid.at(s * res + r, t * res + c) = tile.at(r, c);
    }
  }
  return grid;
}

namespace {

LossReport mean_report(const std::vector<LossReport>& rows, size_t begin) {
  LossReport m;
  const double k = static_cast<double>(rows.size() - begin);
  if (k <= 0) return m;
  auto acc = [&](double LossReport::*f) {
    double s = 0;
    for (size_t i = begin; i < rows.size(); ++i) s += rows[i].*f;
    m.*f = s / k;
  };
  for (auto f : {&LossReport::adv_x, &LossReport::adv_r, &LossReport::critic_x, &LossReport::critic_r,
                 &LossReport::gp_x, &LossReport::gp_r, &LossReport::cls_r_x, &LossReport::cls_r_r,
                 &LossReport::cls_f_x, &LossReport::cls_f_r, &LossReport::shape_x, &LossReport::shape_r,
                 &LossReport::rec_x, &LossReport::rec_r, &LossReport::cross, &LossReport::total_D_x,
                 &LossReport::total_D_r, &LossReport::total_G, &LossReport::total_GS})
    acc(f);
  return m;
}

// Keeps the header and the rows up to `step` of an existing loss CSV.
void truncate_csv(const fs::path& path, int64_t step) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (kept.empty()) {
        kept.push_back(line);
        continue;
      }
      if (std::stoll(line.substr(0, line.find(','))) <= step) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& config, const Dataset& data,
                  const TrainOptions& options) {
  config.validate();
  if (static_cast<int>(data.train_indices().size()) < config.batch_size)
    throw ConfigError("dataset has fewer training samples than batch_size");

  TrainResult result{options.resume ? Trainer::load_checkpoint(*options.resume, data.n_modalities())
                                    : Trainer(model, config, data.n_modalities(), data.resolution()),
                     {},
                     0.0};
  Trainer& tr = result.trainer;
  if (tr.resolution() != data.resolution())
    throw ConfigError("checkpoint resolution does not match the dataset");
  if (options.resume) tr.set_total_epochs(config.epochs);

  const bool write = !options.out_dir.empty();
  std::ofstream csv;
  if (write) {
    fs::create_directories(options.out_dir / "checkpoints");
    if (options.sample_grids) fs::create_directories(options.out_dir / "samples");
    const fs::path csv_path = options.out_dir / "loss.csv";
    if (options.resume && fs::exists(csv_path)) {
      truncate_csv(csv_path, tr.step());
      csv.open(csv_path, std::ios::app);
    } else {
      csv.open(csv_path, std::ios::trunc);
      csv << LossReport::csv_header() << '\n';
    }
    if (!csv) throw IoError("cannot write " + csv_path.string());
  }

  const int iters = iterations_per_epoch(data, tr.train_config().batch_size);
  for (int epoch = tr.epoch() + 1; epoch <= config.epochs; ++epoch) {
    const size_t epoch_begin = result.history.size();
    for (int it = 0; it < iters; ++it) {
      LossReport rep;
      try {
        rep = tr.iteration(data);
      } catch (const NumericalError&) {
        if (write) tr.save_checkpoint(options.out_dir / "checkpoints" / "abort.ckpt");
        throw;
      }
      if (result.history.empty() && tr.step() == 1) result.initial_cross = rep.cross;
      result.history.push_back(rep);
      if (write) csv << rep.csv_row(tr.step()) << '\n' << std::flush;
    }
    tr.set_epoch(epoch);
    if (write) {
      if (options.checkpoint_every_epoch) {
        const auto dir = options.out_dir / "checkpoints";
        tr.save_checkpoint(dir / ("epoch_" + std::to_string(epoch) + ".ckpt"));
        const int stale = epoch - options.keep_last_checkpoints;
        if (options.keep_last_checkpoints > 0 && stale >= 1)
          fs::remove(dir / ("epoch_" + std::to_string(stale) + ".ckpt"));
      }
      if (options.sample_grids)
        png::write_image(options.out_dir / "samples" / ("epoch_" + std::to_string(epoch) + ".png"),
                         sample_grid(tr.generator_for_inference(), data));
    }
    if (options.on_epoch) options.on_epoch(epoch, mean_report(result.history, epoch_begin));
  }
  return result;
}

}  // namespace targan
