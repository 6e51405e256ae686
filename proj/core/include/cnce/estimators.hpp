#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cnce/encoder.hpp"
#include "cnce/gaussian_toy.hpp"
#include "cnce/numerics.hpp"
#include "cnce/samplers.hpp"

namespace cnce {

/// Critic f(x, y) = g_x(x) . g_y(y) / tau over scalar inputs.
struct PairCritic {
  Mlp x_encoder;
  Mlp y_encoder;
  double tau = 1.0;

  double operator()(double x, double y) const;
  /// sims(i, j) = f(x_i, y_j); the diagonal holds the positive pairs.
  Matrix similarity_matrix(const PairDataset& data) const;
};

/// Critic whose encoders ignore their input, so f is constant.
PairCritic constant_critic(std::size_t out_dim, double tau);

struct CriticTrainConfig {
  std::size_t hidden = 10;
  std::size_t linear_layers = 5;
  std::size_t out_dim = 10;
  double tau = 1.0;
  std::size_t epochs = 100;
  std::size_t batch = 128;
  std::size_t negatives = 100;
  OptimizerConfig optimizer{OptimizerKind::adam, 0.03, 0.0, 0.9, 0.999, 1e-8, 0.0};
};

/// Trains both encoders on the NCE objective. Each step refreshes all
/// embeddings; each side is updated with the other side's embeddings held
/// fixed, and negatives are drawn uniformly from the other pairs.
PairCritic train_critic(const PairDataset& data, const CriticTrainConfig& config, Rng& rng);

/// pos - logsumexp({pos} u negs) + ln(|negs| + 1).
double nce_term(double pos_sim, std::span<const double> neg_sims);

/// A mutual information estimate in nats.
///
/// Every estimate averages over k + 1 terms (the positive plus k negatives);
/// `term_count` records that so results from other conventions can be
/// offset by ln((k + 1) / k).
struct EstimateRecord {
  std::string estimator;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> per_seed;
  std::size_t k = 0;
  std::size_t term_count = 0;
  std::optional<RingSpec> omega;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Pools single-seed records of one configuration.
EstimateRecord combine_seeds(std::span<const EstimateRecord> records);

/// Estimators over a similarity matrix sims(i, j) = f(u_i, v_j). Anchor i's
/// candidates are all j != i, sorted by similarity; each anchor consumes
/// exactly k uniform draws, so calls sharing an Rng state are coupled
/// (common random numbers) across supports.
EstimateRecord nce_estimate(const Matrix& sims, std::size_t k, Rng& rng);
EstimateRecord cnce_estimate(const Matrix& sims, std::size_t k, const RingSpec& spec, Rng& rng);
/// Negatives from the bottom `epsilon_fraction` of each anchor's candidates.
/// This q violates the support condition, so the result is not a bound.
EstimateRecord adversarial_estimate(const Matrix& sims, std::size_t k, double epsilon_fraction, Rng& rng);

EstimateRecord nce_estimate(const PairDataset& data, const PairCritic& critic, std::size_t k, Rng& rng);
EstimateRecord cnce_estimate(const PairDataset& data, const PairCritic& critic, std::size_t k, const RingSpec& spec,
                             Rng& rng);
EstimateRecord adversarial_estimate(const PairDataset& data, const PairCritic& critic, std::size_t k,
                                    double epsilon_fraction, Rng& rng);

/// log( mean_{j in close} e^{z.M[j]/tau} / mean_{j in background} e^{z.M[j]/tau} ).
double la_objective(std::span<const double> anchor, const Matrix& bank, std::span<const std::size_t> close_set,
                    std::span<const std::size_t> background_set, double tau);

struct SupportStats {
  std::string support;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double bias_se = 0.0;
  double variance_se = 0.0;
  std::size_t trials = 0;
};

struct BiasVarianceReport {
  SupportStats p;
  SupportStats q;
  std::optional<SupportStats> complement;  // absent when the ring covers everything
  double true_mi = 0.0;
  std::size_t anchors = 0;
  std::size_t k = 0;
  RingSpec spec;
};

/// Monte Carlo over `trials` resamplings of negatives for a fixed set of
/// the first `anchors` anchors. Each trial's statistic is the mean NCE term
/// over the anchor set, with negatives from the marginal (p), the ring (q)
/// and the ring's complement. Each trial owns its Rng substream.
BiasVarianceReport bias_variance(const Matrix& sims, std::size_t k, const RingSpec& spec, std::size_t trials,
                                 std::size_t anchors, double true_mi, Rng& rng);

}  // namespace cnce
