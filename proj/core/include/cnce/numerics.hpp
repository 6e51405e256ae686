#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cnce {

/// xoshiro256** generator seeded through splitmix64 from (seed, stream).
///
/// Streams are the unit of reproducible parallelism: every experiment trial
/// owns one, so results do not depend on scheduling. Normals come from the
/// polar-free Box-Muller transform; both outputs of a pair are used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Independent generator for substream `stream` of the same seed.
  Rng split(std::uint64_t stream) const { return Rng(seed_, stream_mix(stream)); }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n). Consumes exactly one uniform() draw.
  std::size_t index(std::size_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t stream_mix(std::uint64_t stream) const;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  Matrix transpose() const;
  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator+(const Matrix& a, const Matrix& b);
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

/// log(sum(exp(v))) via max-shift. Throws on empty input or NaN.
double logsumexp(std::span<const double> values);

/// log(mean(exp(v))).
double logmeanexp(std::span<const double> values);

/// Lower-triangular L with L L^T = sigma for a 2x2 SPD matrix.
Matrix cholesky2x2(const Matrix& sigma);

/// Cholesky factor for SPD matrices up to 8x8.
Matrix cholesky(const Matrix& sigma);

/// mean + L z with z ~ N(0, I).
std::vector<double> gauss_sample(Rng& rng, std::span<const double> mean, const Matrix& chol);

/// Mean and unbiased (n-1) standard deviation. std is 0 for a single value.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace cnce
