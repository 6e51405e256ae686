#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cnce/numerics.hpp"

namespace cnce {

/// One cached embedding per dataset instance; row i is instance i.
class MemoryBank {
 public:
  MemoryBank() = default;
  /// Rows initialized to random unit vectors.
  MemoryBank(std::size_t n, std::size_t dim, Rng& rng);

  /// Replaces row `index`. The embedding must be unit norm.
  void update(std::size_t index, std::span<const double> embedding);
  std::span<const double> row(std::size_t index) const { return entries_.row(index); }
  const Matrix& entries() const { return entries_; }
  std::size_t size() const { return entries_.rows; }
  std::size_t dim() const { return entries_.cols; }

 private:
  Matrix entries_;
};

/// Fixed-capacity FIFO of embeddings; enqueueing into a full queue evicts
/// the oldest entry.
class FifoQueue {
 public:
  FifoQueue() = default;
  FifoQueue(std::size_t capacity, std::size_t dim);
  /// Full queue of random unit vectors.
  static FifoQueue random(std::size_t capacity, std::size_t dim, Rng& rng);

  void enqueue(std::span<const double> embedding);
  /// Entry j in age order, 0 = oldest.
  std::span<const double> at(std::size_t j) const;
  /// Rows in age order, oldest first.
  Matrix snapshot() const;

  std::size_t size() const { return count_; }
  std::size_t capacity() const { return buffer_.rows; }
  bool full() const { return count_ == capacity(); }

 private:
  Matrix buffer_;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::size_t count_ = 0;
};

/// Rank-slice thresholds: candidates sorted by ascending similarity, the
/// slice [floor(lower n), floor(upper n)) is the support.
struct RingSpec {
  double lower = 0.0;
  double upper = 1.0;

  void validate() const;
  friend bool operator==(const RingSpec&, const RingSpec&) = default;
};

/// Candidate indices (excluding `exclude`) sorted by ascending similarity,
/// ties broken by ascending index.
std::vector<std::size_t> sort_by_similarity(std::span<const double> similarities,
                                            std::optional<std::size_t> exclude = std::nullopt);

/// Ring support from precomputed similarities. The result is in ascending
/// similarity order. Throws when the slice is empty.
std::vector<std::size_t> ring_select(std::span<const double> similarities, const RingSpec& spec,
                                     std::optional<std::size_t> exclude = std::nullopt);

/// Ring support of `anchor` over the rows of `store`.
std::vector<std::size_t> ring_select(std::span<const double> anchor, const Matrix& store, const RingSpec& spec,
                                     double tau, std::optional<std::size_t> exclude = std::nullopt);

/// Ring with the upper threshold fixed at 1.
std::vector<std::size_t> ball_select(std::span<const double> anchor, const Matrix& store, double omega_lower,
                                     double tau, std::optional<std::size_t> exclude = std::nullopt);

struct ClusterAssignment {
  Matrix centroids;                  // K x d
  std::vector<std::size_t> labels;   // one per candidate
  std::vector<double> objective;     // within-cluster SSE after each Lloyd iteration
  std::size_t iterations = 0;
};

/// Within-cluster sum of squared distances.
double kmeans_objective(const Matrix& points, const Matrix& centroids, std::span<const std::size_t> labels);

/// Lloyd iterations from the given centroids. Stops after `max_iters` or when
/// assignments stop changing. Empty clusters are reseeded to the point
/// farthest from its current centroid.
ClusterAssignment lloyd(const Matrix& points, Matrix centroids, std::size_t max_iters);

/// k-means++ seeding followed by Lloyd iterations.
ClusterAssignment kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, Rng& rng);

/// Members of the anchor's cluster other than the anchor. Throws when the
/// anchor is alone in its cluster.
std::vector<std::size_t> cave_select(std::size_t anchor_index, const ClusterAssignment& assignment);

/// Same as cave_select, but an empty result is allowed.
std::vector<std::size_t> close_neighbor_set(std::size_t anchor_index, const ClusterAssignment& assignment);

/// `m` indices drawn i.i.d. uniformly from `support`, one uniform draw each:
/// support[floor(u |support|)].
std::vector<std::size_t> sample_negatives(std::span<const std::size_t> support, std::size_t m, Rng& rng);

}  // namespace cnce
