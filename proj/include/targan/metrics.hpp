#pragma once

#include <Eigen/Dense>

#include "targan/image.hpp"

namespace targan {

/// 2|a & b| / (|a| + |b|); 1 when both masks are empty.
double dice(const Mask& a, const Mask& b);

/// Relative absolute volume difference in percent:
/// 100 * | |prediction| - |reference| | / |reference|. Throws MetricError
/// for an empty reference.
double ravd(const Mask& reference, const Mask& prediction);

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance of the rows of `samples` (n x d).
/// With n <= d the covariance is singular and `ridge` is added to its diagonal.
Gaussian fit_gaussian(const Eigen::MatrixXd& samples, double ridge = 1e-6);

/// ||mu1 - mu2||^2 + Tr(C1 + C2 - 2 (C1 C2)^{1/2}). The square-root trace is
/// taken from the eigenvalues of C1^{1/2} C2 C1^{1/2}, negative ones clipped to 0.
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov2);
inline double frechet_distance(const Gaussian& a, const Gaussian& b) {
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

}  // namespace targan
