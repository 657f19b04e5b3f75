#include "targan/metrics.hpp"

#include <cmath>

#include "targan/errors.hpp"

namespace targan {
namespace {

void require_same_dims(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("mask dimensions differ");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double dice(const Mask& a, const Mask& b) {
  require_same_dims(a, b);
  int64_t inter = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    na += a.values[i];
    nb += b.values[i];
    inter += a.values[i] & b.values[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double ravd(const Mask& reference, const Mask& prediction) {
  require_same_dims(reference, prediction);
  const int64_t ref = reference.count();
  if (ref == 0) throw MetricError("RAVD is undefined for an empty reference mask");
  return 100.0 * std::abs(static_cast<double>(prediction.count() - ref)) / static_cast<double>(ref);
}

Gaussian fit_gaussian(const Eigen::MatrixXd& samples, double ridge) {
  const auto n = samples.rows();
  if (n < 2) throw MetricError("need at least two samples to fit a Gaussian");
  Gaussian g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  if (n <= samples.cols()) g.cov.diagonal().array() += ridge;
  return g;
}

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov2) {
  const auto d = mu1.size();
  if (mu2.size() != d || cov1.rows() != d || cov1.cols() != d || cov2.rows() != d || cov2.cols() != d)
    throw ShapeError("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd s1 = psd_sqrt(cov1);
  const Eigen::MatrixXd inner = s1 * cov2 * s1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * tr_sqrt;
}

}  // namespace targan
