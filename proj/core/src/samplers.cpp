#include "cnce/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cnce {

namespace {

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (!(norm > 0.0)) {
    for (auto& x : v) x = rng.normal();
    norm = l2_norm(v);
  }
  for (auto& x : v) x /= norm;
  return v;
}

void check_unit(std::span<const double> e, const char* who) {
  if (std::abs(l2_norm(e) - 1.0) > 1e-6) throw std::invalid_argument(std::string(who) + ": embedding is not unit norm");
}

}  // namespace

MemoryBank::MemoryBank(std::size_t n, std::size_t dim, Rng& rng) : entries_(n, dim) {
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = random_unit(dim, rng);
    std::copy(v.begin(), v.end(), entries_.row(i).begin());
  }
}

void MemoryBank::update(std::size_t index, std::span<const double> embedding) {
  if (index >= size()) throw std::out_of_range("MemoryBank::update: index out of range");
  if (embedding.size() != dim()) throw std::invalid_argument("MemoryBank::update: dimension mismatch");
  check_unit(embedding, "MemoryBank::update");
  std::copy(embedding.begin(), embedding.end(), entries_.row(index).begin());
}

FifoQueue::FifoQueue(std::size_t capacity, std::size_t dim) : buffer_(capacity, dim) {
  if (capacity == 0) throw std::invalid_argument("FifoQueue: capacity must be positive");
}

FifoQueue FifoQueue::random(std::size_t capacity, std::size_t dim, Rng& rng) {
  FifoQueue q(capacity, dim);
  for (std::size_t i = 0; i < capacity; ++i) q.enqueue(random_unit(dim, rng));
  return q;
}

void FifoQueue::enqueue(std::span<const double> embedding) {
  if (capacity() == 0) throw std::logic_error("FifoQueue::enqueue: queue has no capacity");
  if (embedding.size() != buffer_.cols) throw std::invalid_argument("FifoQueue::enqueue: dimension mismatch");
  check_unit(embedding, "FifoQueue::enqueue");
  std::size_t slot;
  if (full()) {
    slot = head_;
    head_ = (head_ + 1) % capacity();
  } else {
    slot = (head_ + count_) % capacity();
    ++count_;
  }
  std::copy(embedding.begin(), embedding.end(), buffer_.row(slot).begin());
}

std::span<const double> FifoQueue::at(std::size_t j) const {
  if (j >= count_) throw std::out_of_range("FifoQueue::at: index out of range");
  return buffer_.row((head_ + j) % capacity());
}

Matrix FifoQueue::snapshot() const {
  Matrix m(count_, buffer_.cols);
  for (std::size_t j = 0; j < count_; ++j) {
    const auto r = at(j);
    std::copy(r.begin(), r.end(), m.row(j).begin());
  }
  return m;
}

void RingSpec::validate() const {
  if (!(lower >= 0.0 && lower < upper && upper <= 1.0))
    throw std::invalid_argument("RingSpec: need 0 <= lower < upper <= 1");
}

std::vector<std::size_t> sort_by_similarity(std::span<const double> similarities, std::optional<std::size_t> exclude) {
  std::vector<std::size_t> order;
  order.reserve(similarities.size());
  for (std::size_t i = 0; i < similarities.size(); ++i)
    if (!exclude || *exclude != i) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return similarities[a] < similarities[b]; });
  return order;
}

std::vector<std::size_t> ring_select(std::span<const double> similarities, const RingSpec& spec,
                                     std::optional<std::size_t> exclude) {
  spec.validate();
  auto order = sort_by_similarity(similarities, exclude);
  const auto n = static_cast<double>(order.size());
  const auto lo = static_cast<std::size_t>(std::floor(spec.lower * n));
  const auto hi = static_cast<std::size_t>(std::floor(spec.upper * n));
  if (lo >= hi)
    throw std::invalid_argument("ring_select: empty support for " + std::to_string(order.size()) +
                                " candidates; relax the thresholds or grow the store");
  return {order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi)};
}

std::vector<std::size_t> ring_select(std::span<const double> anchor, const Matrix& store, const RingSpec& spec,
                                     double tau, std::optional<std::size_t> exclude) {
  if (store.rows == 0) throw std::invalid_argument("ring_select: empty store");
  if (!(tau > 0.0)) throw std::invalid_argument("ring_select: temperature must be positive");
  std::vector<double> sims(store.rows);
  for (std::size_t j = 0; j < store.rows; ++j) sims[j] = dot(anchor, store.row(j)) / tau;
  return ring_select(sims, spec, exclude);
}

std::vector<std::size_t> ball_select(std::span<const double> anchor, const Matrix& store, double omega_lower,
                                     double tau, std::optional<std::size_t> exclude) {
  return ring_select(anchor, store, RingSpec{omega_lower, 1.0}, tau, exclude);
}

double kmeans_objective(const Matrix& points, const Matrix& centroids, std::span<const std::size_t> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) s += squared_distance(points.row(i), centroids.row(labels[i]));
  return s;
}

namespace {

std::size_t nearest(std::span<const double> p, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = squared_distance(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

ClusterAssignment lloyd(const Matrix& points, Matrix centroids, std::size_t max_iters) {
  const std::size_t n = points.rows, k = centroids.rows, d = points.cols;
  if (k == 0 || k > n) throw std::invalid_argument("kmeans: need 1 <= K <= n");
  if (centroids.cols != d) throw std::invalid_argument("kmeans: centroid dimension mismatch");

  ClusterAssignment a;
  a.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.labels[i] = nearest(points.row(i), centroids);

  for (std::size_t it = 0; it < max_iters; ++it) {
    // Update step.
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(a.labels[i]);
      const auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) s[j] += p[j];
      ++counts[a.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[a.labels[i]] <= 1) continue;
        const double dist = squared_distance(points.row(i), centroids.row(a.labels[i]));
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      --counts[a.labels[far]];
      a.labels[far] = c;
      counts[c] = 1;
      std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
    }

    // Assignment step.
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(points.row(i), centroids);
      if (c != a.labels[i]) {
        a.labels[i] = c;
        changed = true;
      }
    }
    a.objective.push_back(kmeans_objective(points, centroids, a.labels));
    a.iterations = it + 1;
    if (!changed) break;
  }
  a.centroids = std::move(centroids);
  return a;
}

ClusterAssignment kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, Rng& rng) {
  const std::size_t n = points.rows;
  if (k == 0 || k > n) throw std::invalid_argument("kmeans: need 1 <= K <= n");
  Matrix centroids(k, points.cols);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.index(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
      total += d2[i];
    }
    if (!(total > 0.0)) {
      pick = rng.index(n);
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return lloyd(points, std::move(centroids), max_iters);
}

std::vector<std::size_t> close_neighbor_set(std::size_t anchor_index, const ClusterAssignment& assignment) {
  if (anchor_index >= assignment.labels.size()) throw std::out_of_range("close_neighbor_set: anchor not assigned");
  const std::size_t cluster = assignment.labels[anchor_index];
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.labels.size(); ++i)
    if (i != anchor_index && assignment.labels[i] == cluster) out.push_back(i);
  return out;
}

std::vector<std::size_t> cave_select(std::size_t anchor_index, const ClusterAssignment& assignment) {
  auto out = close_neighbor_set(anchor_index, assignment);
  if (out.empty()) throw std::invalid_argument("cave_select: anchor is alone in its cluster; no negatives available");
  return out;
}

std::vector<std::size_t> sample_negatives(std::span<const std::size_t> support, std::size_t m, Rng& rng) {
  if (support.empty()) throw std::invalid_argument("sample_negatives: empty support");
  std::vector<std::size_t> out(m);
  for (auto& idx : out) idx = support[rng.index(support.size())];
  return out;
}

}  // namespace cnce
