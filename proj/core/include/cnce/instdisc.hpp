#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnce/annealing.hpp"
#include "cnce/encoder.hpp"
#include "cnce/numerics.hpp"
#include "cnce/samplers.hpp"

namespace cnce {

/// Gaussian class clusters standing in for an image dataset. Labels are
/// only read by the nearest-neighbor evaluation.
struct SyntheticDataset {
  Matrix points;             // n x D
  std::vector<int> labels;   // class per point
  Matrix class_means;        // C x D
  double class_scale = 0.0;
  double noise_scale = 0.0;

  std::size_t size() const { return points.rows; }
  std::size_t dim() const { return points.cols; }
};

/// Class means uniform on the sphere of radius class_scale; points are
/// mean + N(0, noise_scale^2 I). Points are grouped by class.
SyntheticDataset make_synthetic(std::size_t classes, std::size_t per_class, std::size_t dim, double class_scale,
                                double noise_scale, Rng& rng);

/// A random view: add N(0, sigma^2) noise, scale each coordinate by
/// U(jitter_lo, jitter_hi), then zero each coordinate with probability
/// dropout.
struct AugmentationSpec {
  double noise_sigma = 0.0;
  double jitter_lo = 1.0;
  double jitter_hi = 1.0;
  double dropout = 0.0;

  void validate() const;
};

std::vector<double> augment(std::span<const double> point, const AugmentationSpec& spec, Rng& rng);

/// Seeded shuffle into train/test index sets.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_dataset(std::size_t n, double train_fraction, Rng& rng);

/// 1-NN accuracy in L2, ties to the lowest training index.
double knn_accuracy(const Matrix& train_embeddings, std::span<const int> train_labels, const Matrix& test_embeddings,
                    std::span<const int> test_labels);

/// Leave-one-out 1-NN accuracy within one labeled set.
double loo_knn_accuracy(const Matrix& embeddings, std::span<const int> labels);

Matrix embed_rows(const Mlp& encoder, const Matrix& points, std::span<const std::size_t> rows);

/// Embeds both splits with `encoder` and returns test 1-NN accuracy.
double knn_eval(const Mlp& encoder, const SyntheticDataset& data, const Split& split);

enum class Method { ir, moco, la };
enum class RingMode { off, ring, ball, cave, ring_plus_close };

Method parse_method(const std::string& name);
RingMode parse_ring_mode(const std::string& name);
std::string to_string(Method m);
std::string to_string(RingMode r);

struct RunConfig {
  Method method = Method::ir;
  RingMode ring = RingMode::off;
  RingSpec spec{0.0, 1.0};   // spec.upper bounds ring mode; spec.lower is unused when a schedule drives it
  Schedule schedule;         // drives the lower threshold of every ring-like support
  std::vector<std::size_t> hidden{64};
  std::size_t out_dim = 16;
  std::size_t k = 64;        // negatives per anchor (ir, la); moco uses the selected queue slice
  double tau = 0.1;
  OptimizerConfig optimizer{OptimizerKind::sgd, 0.03, 0.9, 0.9, 0.999, 1e-8, 1e-4};
  double moco_momentum = 0.99;
  std::size_t queue_size = 256;
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::size_t kmeans_k = 8;
  std::size_t kmeans_iters = 20;
  AugmentationSpec augmentation;
  std::size_t eval_every = 1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for inconsistent settings.
  void validate(std::size_t train_size) const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double omega_lower = 0.0;
  double knn_acc = 0.0;  // NaN when not evaluated this epoch
  std::size_t skipped = 0;
};

void write_metrics_csv(std::ostream& out, std::span<const EpochLog> log);

/// One training run. Copyable, so a run can be branched at any epoch.
class Trainer {
 public:
  Trainer(RunConfig config, const SyntheticDataset& data, Split split);

  /// Runs epochs until `epoch` epochs have completed.
  void run_until(std::size_t epoch);
  void run() { run_until(config_.epochs); }

  /// Continues from the current state under a new ring mode and schedule.
  Trainer branch(RingMode ring, Schedule schedule) const;

  std::size_t epoch() const { return epoch_; }
  const RunConfig& config() const { return config_; }
  const Mlp& encoder() const { return encoder_; }
  const MemoryBank& bank() const { return bank_; }
  const FifoQueue& queue() const { return queue_; }
  const MomentumEncoder& momentum_encoder() const { return momentum_; }
  const std::vector<EpochLog>& log() const { return log_; }
  const Split& split() const { return split_; }
  double test_accuracy() const;

 private:
  void run_epoch();
  std::vector<std::size_t> select_support(std::span<const double> anchor, const Matrix& store,
                                          std::optional<std::size_t> exclude, double omega_lower,
                                          std::size_t local_index, const ClusterAssignment* clusters) const;

  RunConfig config_;
  const SyntheticDataset* data_;
  Split split_;
  Matrix train_points_;
  Mlp encoder_;
  Optimizer optimizer_;
  MemoryBank bank_;
  FifoQueue queue_;
  MomentumEncoder momentum_;
  Annealer annealer_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  std::vector<EpochLog> log_;
};

struct TrainResult {
  Mlp encoder;
  std::vector<EpochLog> log;
  double final_accuracy = 0.0;
};

TrainResult train(const RunConfig& config, const SyntheticDataset& data, const Split& split);

/// accuracy[b][w]: final test accuracy when a baseline (ring off) run is
/// branched at branch_epochs[b] into ring mode `branch_ring` with constant
/// lower threshold omegas[w], then trained to base_config.epochs.
struct PhaseGrid {
  std::vector<std::size_t> branch_epochs;
  std::vector<double> omegas;
  std::vector<std::vector<double>> accuracy;
};

PhaseGrid hardness_phase_study(const RunConfig& base_config, const SyntheticDataset& data, const Split& split,
                               std::span<const std::size_t> branch_epochs, std::span<const double> omegas,
                               RingMode branch_ring = RingMode::ball);

}  // namespace cnce
