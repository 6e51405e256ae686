#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "cnce/numerics.hpp"

namespace cnce {

/// Correlated-Gaussian pair: (X, Y) = Z + eps with Z ~ N(0, sigma_z) and
/// eps ~ N(0, sigma_eps), so (X, Y) ~ N(0, sigma_z + sigma_eps).
struct GaussianPairSpec {
  Matrix sigma_z;
  Matrix sigma_eps;

  /// sigma_z = [[1, -0.5], [-0.5, 1]], sigma_eps = [[1, 0.9], [0.9, 1]].
  static GaussianPairSpec benchmark();

  Matrix joint() const { return sigma_z + sigma_eps; }
  /// Throws if either component or the joint covariance is not SPD.
  void validate() const;
};

struct PairDataset {
  std::vector<double> xs;
  std::vector<double> ys;

  std::size_t size() const { return xs.size(); }
};

/// Mutual information in nats of a bivariate Gaussian with covariance sigma:
/// -1/2 log(1 - s12 s21 / (s11 s22)).
double analytic_mi(const Matrix& sigma);

PairDataset sample_pairs(const GaussianPairSpec& spec, std::size_t n, Rng& rng);

/// Unbiased 2x2 sample covariance of (x, y).
Matrix empirical_covariance(const PairDataset& data);

/// CSV with header `x,y`, 17 significant digits.
void write_csv(std::ostream& out, const PairDataset& data);

}  // namespace cnce
