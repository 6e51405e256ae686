#include "cnce/instdisc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace cnce {

SyntheticDataset make_synthetic(std::size_t classes, std::size_t per_class, std::size_t dim, double class_scale,
                                double noise_scale, Rng& rng) {
  if (classes < 1 || per_class < 1 || dim < 1) throw std::invalid_argument("make_synthetic: counts must be >= 1");
  SyntheticDataset d;
  d.class_scale = class_scale;
  d.noise_scale = noise_scale;
  d.class_means = Matrix(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    auto m = d.class_means.row(c);
    double norm = 0.0;
    while (!(norm > 0.0)) {
      for (auto& v : m) v = rng.normal();
      norm = l2_norm(m);
    }
    for (auto& v : m) v *= class_scale / norm;
  }
  d.points = Matrix(classes * per_class, dim);
  d.labels.resize(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t r = c * per_class + i;
      auto p = d.points.row(r);
      for (std::size_t j = 0; j < dim; ++j) p[j] = d.class_means(c, j) + noise_scale * rng.normal();
      d.labels[r] = static_cast<int>(c);
    }
  return d;
}

void AugmentationSpec::validate() const {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("AugmentationSpec: negative noise");
  if (!(jitter_lo <= jitter_hi)) throw std::invalid_argument("AugmentationSpec: jitter range is inverted");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw std::invalid_argument("AugmentationSpec: dropout outside [0, 1]");
}

std::vector<double> augment(std::span<const double> point, const AugmentationSpec& spec, Rng& rng) {
  std::vector<double> v(point.begin(), point.end());
  for (auto& x : v) {
    if (spec.noise_sigma > 0.0) x += spec.noise_sigma * rng.normal();
    if (spec.jitter_lo != spec.jitter_hi || spec.jitter_lo != 1.0) x *= rng.uniform(spec.jitter_lo, spec.jitter_hi);
    if (spec.dropout > 0.0 && rng.uniform() < spec.dropout) x = 0.0;
  }
  return v;
}

Split split_dataset(std::size_t n, double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("split_dataset: fraction outside (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw std::invalid_argument("split_dataset: a split would be empty");
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

double knn_accuracy(const Matrix& train_embeddings, std::span<const int> train_labels, const Matrix& test_embeddings,
                    std::span<const int> test_labels) {
  if (train_embeddings.rows == 0 || test_embeddings.rows == 0) throw std::invalid_argument("knn_accuracy: empty split");
  std::size_t correct = 0;
  for (std::size_t t = 0; t < test_embeddings.rows; ++t) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < train_embeddings.rows; ++r) {
      const double d = squared_distance(test_embeddings.row(t), train_embeddings.row(r));
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    if (train_labels[best] == test_labels[t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_embeddings.rows);
}

double loo_knn_accuracy(const Matrix& embeddings, std::span<const int> labels) {
  if (embeddings.rows < 2) throw std::invalid_argument("loo_knn_accuracy: need at least two points");
  std::size_t correct = 0;
  for (std::size_t t = 0; t < embeddings.rows; ++t) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < embeddings.rows; ++r) {
      if (r == t) continue;
      const double d = squared_distance(embeddings.row(t), embeddings.row(r));
      if (d < best_d) {
        best_d = d;
        best = r;
      }
    }
    if (labels[best] == labels[t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(embeddings.rows);
}

Matrix embed_rows(const Mlp& encoder, const Matrix& points, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), encoder.output_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto e = encoder.forward(points.row(rows[i]));
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

namespace {

std::vector<int> labels_of(const SyntheticDataset& data, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(data.labels[r]);
  return out;
}

}  // namespace

double knn_eval(const Mlp& encoder, const SyntheticDataset& data, const Split& split) {
  return knn_accuracy(embed_rows(encoder, data.points, split.train), labels_of(data, split.train),
                      embed_rows(encoder, data.points, split.test), labels_of(data, split.test));
}

Method parse_method(const std::string& name) {
  if (name == "ir") return Method::ir;
  if (name == "moco") return Method::moco;
  if (name == "la") return Method::la;
  throw std::invalid_argument("unknown method '" + name + "'");
}

RingMode parse_ring_mode(const std::string& name) {
  if (name == "off") return RingMode::off;
  if (name == "ring") return RingMode::ring;
  if (name == "ball") return RingMode::ball;
  if (name == "cave") return RingMode::cave;
  if (name == "ring_plus_close") return RingMode::ring_plus_close;
  throw std::invalid_argument("unknown ring mode '" + name + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::ir: return "ir";
    case Method::moco: return "moco";
    case Method::la: return "la";
  }
  return "ir";
}

std::string to_string(RingMode r) {
  switch (r) {
    case RingMode::off: return "off";
    case RingMode::ring: return "ring";
    case RingMode::ball: return "ball";
    case RingMode::cave: return "cave";
    case RingMode::ring_plus_close: return "ring_plus_close";
  }
  return "off";
}

void RunConfig::validate(std::size_t train_size) const {
  if (!(tau > 0.0)) throw std::invalid_argument("RunConfig: tau must be positive");
  if (batch == 0 || out_dim == 0) throw std::invalid_argument("RunConfig: batch and out_dim must be positive");
  if (train_size < 2) throw std::invalid_argument("RunConfig: need at least two training points");
  augmentation.validate();
  spec.validate();
  const bool uses_bank = method != Method::moco;
  if (uses_bank && (k == 0 || k >= train_size)) throw std::invalid_argument("RunConfig: need 1 <= k < train size");
  if (method == Method::moco) {
    if (queue_size < batch) throw std::invalid_argument("RunConfig: moco queue cannot be smaller than the batch");
    if (ring == RingMode::cave || ring == RingMode::ring_plus_close)
      throw std::invalid_argument("RunConfig: ring mode '" + to_string(ring) + "' needs a memory bank");
    if (!(moco_momentum >= 0.0 && moco_momentum <= 1.0)) throw std::invalid_argument("RunConfig: momentum outside [0, 1]");
  }
  const bool clusters = ring == RingMode::cave || ring == RingMode::ring_plus_close || method == Method::la;
  if (clusters && (kmeans_k == 0 || kmeans_k > train_size)) throw std::invalid_argument("RunConfig: need 1 <= kmeans_k <= train size");
  const std::size_t candidates = uses_bank ? train_size - 1 : queue_size;
  if (ring == RingMode::ring || ring == RingMode::ring_plus_close) schedule.validate(spec.upper, candidates);
  if (ring == RingMode::ball) schedule.validate(1.0, candidates);
}

void write_metrics_csv(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,loss,omega_lower,knn_acc\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,", e.epoch, e.loss, e.omega_lower);
    out << buf;
    if (std::isnan(e.knn_acc)) out << "\n";
    else {
      std::snprintf(buf, sizeof buf, "%.17g\n", e.knn_acc);
      out << buf;
    }
  }
}

namespace {

std::vector<std::size_t> encoder_dims(const RunConfig& c, std::size_t input_dim) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(c.out_dim);
  return dims;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

}  // namespace

Trainer::Trainer(RunConfig config, const SyntheticDataset& data, Split split)
    : config_(std::move(config)),
      data_(&data),
      split_(std::move(split)),
      train_points_(gather_rows(data.points, split_.train)),
      optimizer_(config_.optimizer, 0),
      annealer_(config_.schedule),
      rng_(Rng(config_.seed).split(2)) {
  config_.validate(split_.train.size());
  Rng init = Rng(config_.seed).split(1);
  encoder_ = Mlp(encoder_dims(config_, data.dim()), init);
  optimizer_ = Optimizer(config_.optimizer, encoder_.param_count());
  bank_ = MemoryBank(split_.train.size(), config_.out_dim, init);
  if (config_.method == Method::moco) {
    queue_ = FifoQueue::random(config_.queue_size, config_.out_dim, init);
    momentum_ = MomentumEncoder(encoder_);
  }
}

double Trainer::test_accuracy() const { return knn_eval(encoder_, *data_, split_); }

Trainer Trainer::branch(RingMode ring, Schedule schedule) const {
  Trainer t = *this;
  t.config_.ring = ring;
  t.config_.schedule = std::move(schedule);
  t.config_.validate(split_.train.size());
  t.annealer_ = Annealer(t.config_.schedule);
  return t;
}

void Trainer::run_until(std::size_t epoch) {
  while (epoch_ < epoch) run_epoch();
}

std::vector<std::size_t> Trainer::select_support(std::span<const double> anchor, const Matrix& store,
                                                 std::optional<std::size_t> exclude, double omega_lower,
                                                 std::size_t local_index, const ClusterAssignment* clusters) const {
  switch (config_.ring) {
    // The full support is kept in similarity order so that draws are coupled
    // with every ring slice under a shared seed.
    case RingMode::off: return ring_select(anchor, store, RingSpec{0.0, 1.0}, config_.tau, exclude);
    case RingMode::ring:
    case RingMode::ring_plus_close:
      return ring_select(anchor, store, RingSpec{omega_lower, config_.spec.upper}, config_.tau, exclude);
    case RingMode::ball: return ball_select(anchor, store, omega_lower, config_.tau, exclude);
    case RingMode::cave: return cave_select(local_index, *clusters);
  }
  return {};
}

void Trainer::run_epoch() {
  const std::size_t n = train_points_.rows;
  const bool moco = config_.method == Method::moco;
  const bool needs_clusters =
      config_.ring == RingMode::cave || config_.ring == RingMode::ring_plus_close || config_.method == Method::la;

  ClusterAssignment clusters;
  if (needs_clusters) clusters = kmeans(bank_.entries(), config_.kmeans_k, config_.kmeans_iters, rng_);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng_.index(i)]);

  std::vector<double> grads(encoder_.param_count());
  Mlp::Cache cache;
  double epoch_loss = 0.0;
  std::size_t processed = 0, skipped = 0;
  double omega_sum = 0.0;
  std::size_t batches = 0;

  for (std::size_t start = 0; start < n; start += config_.batch) {
    const std::size_t end = std::min(n, start + config_.batch);
    const double omega = annealer_.omega(epoch_);
    omega_sum += omega;
    ++batches;
    std::fill(grads.begin(), grads.end(), 0.0);
    std::vector<std::pair<std::size_t, Embedding>> bank_updates;
    std::vector<Embedding> keys;
    const Matrix queue_rows = moco ? queue_.snapshot() : Matrix();
    const Matrix& store = moco ? queue_rows : bank_.entries();
    double batch_loss = 0.0;
    std::size_t batch_count = 0;

    for (std::size_t b = start; b < end; ++b) {
      const std::size_t i = order[b];
      const auto view = augment(train_points_.row(i), config_.augmentation, rng_);
      const Embedding z = encoder_.forward(view, &cache);

      Embedding key;
      std::span<const double> positive;
      if (moco) {
        key = momentum_.forward(augment(train_points_.row(i), config_.augmentation, rng_));
        positive = key;
      } else {
        positive = bank_.row(i);
      }

      const std::optional<std::size_t> exclude = moco ? std::nullopt : std::optional<std::size_t>(i);
      const auto support = select_support(z, store, exclude, omega, i, &clusters);
      std::vector<std::span<const double>> negatives;
      if (moco) {
        for (auto j : support) negatives.push_back(store.row(j));
      } else {
        for (auto j : sample_negatives(support, config_.k, rng_)) negatives.push_back(store.row(j));
      }

      EmbeddingLoss el;
      if (config_.method == Method::la) {
        const auto close = close_neighbor_set(i, clusters);
        if (close.empty()) {
          ++skipped;
          bank_updates.emplace_back(i, z);
          continue;
        }
        std::vector<std::span<const double>> pos;
        for (auto j : close) pos.push_back(bank_.row(j));
        el = aggregation_loss(z, pos, negatives, config_.tau);
      } else if (config_.ring == RingMode::ring_plus_close) {
        std::vector<std::span<const double>> pos{positive};
        for (auto j : close_neighbor_set(i, clusters)) pos.push_back(bank_.row(j));
        std::vector<std::span<const double>> background = pos;
        background.insert(background.end(), negatives.begin(), negatives.end());
        el = aggregation_loss(z, pos, background, config_.tau);
      } else {
        el = contrastive_loss(z, positive, negatives, config_.tau);
      }
      if (!std::isfinite(el.loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch_) + ", step " +
                                 std::to_string(step_) + ", instance " + std::to_string(i));
      encoder_.accumulate_gradient(cache, el.grad, grads);
      batch_loss += el.loss;
      ++batch_count;
      if (moco) keys.push_back(std::move(key));
      else bank_updates.emplace_back(i, z);
    }

    if (batch_count > 0) {
      const double scale = 1.0 / static_cast<double>(batch_count);
      for (auto& g : grads) g *= scale;
      optimizer_.step(encoder_.params(), grads);
    }
    for (const auto& [i, e] : bank_updates) bank_.update(i, e);
    if (moco) {
      momentum_.update(encoder_, config_.moco_momentum);
      for (const auto& key : keys) queue_.enqueue(key);
    }
    epoch_loss += batch_loss;
    processed += batch_count;
    if (config_.schedule.kind == ScheduleKind::adaptive_loss && batch_count > 0)
      annealer_.adaptive_update({FeedbackSignal::Kind::negative_training_loss,
                                 -batch_loss / static_cast<double>(batch_count), step_});
    ++step_;
  }

  EpochLog entry;
  entry.epoch = epoch_;
  entry.loss = processed ? epoch_loss / static_cast<double>(processed) : 0.0;
  entry.omega_lower = config_.ring == RingMode::off || config_.ring == RingMode::cave ? 0.0
                                                                                       : omega_sum / static_cast<double>(batches);
  entry.skipped = skipped;
  entry.knn_acc = std::numeric_limits<double>::quiet_NaN();
  const bool last = epoch_ + 1 == config_.epochs;
  if (last || (config_.eval_every > 0 && (epoch_ + 1) % config_.eval_every == 0)) entry.knn_acc = test_accuracy();

  if (config_.schedule.kind == ScheduleKind::adaptive_validation) {
    const Matrix emb = embed_rows(encoder_, train_points_, [&] {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }());
    annealer_.adaptive_update({FeedbackSignal::Kind::validation_accuracy,
                               loo_knn_accuracy(emb, labels_of(*data_, split_.train)), epoch_});
  }
  log_.push_back(entry);
  ++epoch_;
}

TrainResult train(const RunConfig& config, const SyntheticDataset& data, const Split& split) {
  Trainer t(config, data, split);
  t.run();
  TrainResult r;
  r.encoder = t.encoder();
  r.log = t.log();
  r.final_accuracy = t.test_accuracy();
  return r;
}

PhaseGrid hardness_phase_study(const RunConfig& base_config, const SyntheticDataset& data, const Split& split,
                               std::span<const std::size_t> branch_epochs, std::span<const double> omegas,
                               RingMode branch_ring) {
  PhaseGrid grid;
  grid.branch_epochs.assign(branch_epochs.begin(), branch_epochs.end());
  grid.omegas.assign(omegas.begin(), omegas.end());
  if (!std::is_sorted(grid.branch_epochs.begin(), grid.branch_epochs.end()))
    throw std::invalid_argument("hardness_phase_study: branch epochs must be ascending");
  for (auto b : grid.branch_epochs)
    if (b > base_config.epochs) throw std::invalid_argument("hardness_phase_study: branch epoch beyond horizon");

  RunConfig base = base_config;
  base.ring = RingMode::off;
  base.schedule = Schedule{};
  Trainer baseline(base, data, split);
  for (auto b : grid.branch_epochs) {
    baseline.run_until(b);
    std::vector<double> row;
    for (double omega : grid.omegas) {
      Schedule fixed;
      fixed.kind = ScheduleKind::constant;
      fixed.start_omega = fixed.end_omega = omega;
      fixed.omega_min = 0.0;
      fixed.omega_max = omega;
      Trainer t = baseline.branch(branch_ring, fixed);
      t.run();
      row.push_back(t.test_accuracy());
    }
    grid.accuracy.push_back(std::move(row));
  }
  return grid;
}

}  // namespace cnce
