#include "targan/losses.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "targan/networks.hpp"

namespace F = torch::nn::functional;

namespace targan {

void LossWeights::validate() const {
  for (double w : {lambda_cls_r, lambda_cls_f, lambda_rec, lambda_cross, lambda_u, lambda_gp}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

torch::Tensor critic_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return fake_scores.mean() - real_scores.mean();
}

torch::Tensor generator_adv_loss(const torch::Tensor& fake_scores) { return -fake_scores.mean(); }

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2 || labels.dim() != 1 || logits.size(0) != labels.size(0))
    throw ShapeError("cross_entropy expects logits [B, K] and labels [B]");
  return F::cross_entropy(logits, labels.to(torch::kLong));
}

torch::Tensor fake_provenance_label(const torch::Tensor& source, int64_t n_modalities) {
  return source.to(torch::kLong) + n_modalities;
}

torch::Tensor cls_loss_real(const torch::Tensor& real_logits, const torch::Tensor& s,
                            const torch::Tensor& fake_logits, const torch::Tensor& s_prime,
                            double lambda_u) {
  return cross_entropy(real_logits, s) + lambda_u * cross_entropy(fake_logits, s_prime);
}

torch::Tensor cls_loss_fake(const torch::Tensor& fake_logits, const torch::Tensor& t) {
  return cross_entropy(fake_logits, t);
}

namespace {

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": input shapes differ");
}

}  // namespace

torch::Tensor shape_consistency_loss(const torch::Tensor& s_out, const torch::Tensor& b) {
  require_same(s_out, b, "shape_consistency_loss");
  return (s_out - b).square().mean();
}

torch::Tensor reconstruction_loss(const torch::Tensor& x_rec, const torch::Tensor& x_orig) {
  require_same(x_rec, x_orig, "reconstruction_loss");
  return (x_rec - x_orig).abs().mean();
}

torch::Tensor crossing_loss(const torch::Tensor& x_t, const torch::Tensor& y, const torch::Tensor& r_t) {
  require_same(x_t, y, "crossing_loss");
  require_same(x_t, r_t, "crossing_loss");
  return (mask_background(x_t, y) - r_t).abs().mean();
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& LossReport::csv_columns() {
  static const std::vector<std::string> cols = {
      "step",    "adv_x",   "adv_r",   "gp_x",    "gp_r",  "cls_r_x",  "cls_r_r",
      "cls_f_x", "cls_f_r", "shape_x", "shape_r", "rec_x", "rec_r",    "cross",
      "total_Dx", "total_Dr", "total_G", "total_GS"};
  return cols;
}

std::string LossReport::csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string LossReport::csv_row(int64_t step) const {
  std::ostringstream os;
  os.precision(9);
  os << step;
  for (double v : {adv_x, adv_r, gp_x, gp_r, cls_r_x, cls_r_r, cls_f_x, cls_f_r, shape_x, shape_r, rec_x,
                   rec_r, cross, total_D_x, total_D_r, total_G, total_GS})
    os << ',' << v;
  return os.str();
}

bool LossReport::all_finite() const {
  for (double v : {adv_x, adv_r, critic_x, critic_r, gp_x, gp_r, cls_r_x, cls_r_r, cls_f_x, cls_f_r,
                   shape_x, shape_r, rec_x, rec_r, cross, total_D_x, total_D_r, total_G, total_GS})
    if (!std::isfinite(v)) return false;
  return true;
}

std::string LossReport::describe() const {
  std::ostringstream os;
  os << "adv_x=" << adv_x << " adv_r=" << adv_r << " critic_x=" << critic_x << " critic_r=" << critic_r
     << " gp_x=" << gp_x << " gp_r=" << gp_r << " cls_r_x=" << cls_r_x << " cls_r_r=" << cls_r_r
     << " cls_f_x=" << cls_f_x << " cls_f_r=" << cls_f_r << " shape_x=" << shape_x
     << " shape_r=" << shape_r << " rec_x=" << rec_x << " rec_r=" << rec_r << " cross=" << cross
     << " total_Dx=" << total_D_x << " total_Dr=" << total_D_r << " total_G=" << total_G
     << " total_GS=" << total_GS;
  return os.str();
}

void LossReport::merge_d(const LossReport& d) {
  critic_x = d.critic_x;
  critic_r = d.critic_r;
  gp_x = d.gp_x;
  gp_r = d.gp_r;
  cls_r_x = d.cls_r_x;
  cls_r_r = d.cls_r_r;
  total_D_x = d.total_D_x;
  total_D_r = d.total_D_r;
}

double total_D_loss(const LossReport& r, const LossWeights& w, Stream stream) {
  return stream == Stream::X ? compose_d_loss(r.critic_x, r.gp_x, r.cls_r_x, w)
                             : compose_d_loss(r.critic_r, r.gp_r, r.cls_r_r, w);
}

double total_G_loss(const LossReport& r, const LossWeights& w) {
  return compose_g_loss(r.adv_x, r.adv_r, r.cls_f_x, r.cls_f_r, r.rec_x, r.rec_r, r.cross, w);
}

double total_GS_loss(const LossReport& r) { return r.shape_x + r.shape_r; }

}  // namespace targan
