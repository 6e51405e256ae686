#include "cnce/gaussian_toy.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace cnce {

GaussianPairSpec GaussianPairSpec::benchmark() {
  return {Matrix::from_rows({{1.0, -0.5}, {-0.5, 1.0}}), Matrix::from_rows({{1.0, 0.9}, {0.9, 1.0}})};
}

void GaussianPairSpec::validate() const {
  cholesky2x2(sigma_z);
  cholesky2x2(sigma_eps);
  cholesky2x2(joint());
}

double analytic_mi(const Matrix& sigma) {
  cholesky2x2(sigma);  // rejects non-SPD input
  const double rho2 = sigma(0, 1) * sigma(1, 0) / (sigma(0, 0) * sigma(1, 1));
  return -0.5 * std::log1p(-rho2);
}

PairDataset sample_pairs(const GaussianPairSpec& spec, std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("sample_pairs: need at least 2 points");
  const Matrix lz = cholesky2x2(spec.sigma_z);
  const Matrix le = cholesky2x2(spec.sigma_eps);
  const double zero[2] = {0.0, 0.0};
  PairDataset data;
  data.xs.reserve(n);
  data.ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = gauss_sample(rng, zero, lz);
    const auto e = gauss_sample(rng, zero, le);
    data.xs.push_back(z[0] + e[0]);
    data.ys.push_back(z[1] + e[1]);
  }
  return data;
}

Matrix empirical_covariance(const PairDataset& data) {
  const std::size_t n = data.size();
  if (n < 2 || data.ys.size() != n) throw std::invalid_argument("empirical_covariance: need n >= 2 paired values");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += data.xs[i];
    my += data.ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = data.xs[i] - mx;
    const double dy = data.ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double d = static_cast<double>(n - 1);
  return Matrix::from_rows({{sxx / d, sxy / d}, {sxy / d, syy / d}});
}

void write_csv(std::ostream& out, const PairDataset& data) {
  out << "x,y\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", data.xs[i], data.ys[i]);
    out << buf;
  }
}

}  // namespace cnce
