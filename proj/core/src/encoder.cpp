#include "cnce/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cnce {

Mlp::Mlp(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    if (dims_[l] == 0 || dims_[l + 1] == 0) throw std::invalid_argument("Mlp: zero layer width");
    offsets_.push_back(total);
    total += dims_[l] * dims_[l + 1] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, Rng& rng) : Mlp(std::move(layer_dims)) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims_[l]));
    double* w = params_.data() + offsets_[l];
    for (std::size_t i = 0; i < dims_[l] * dims_[l + 1]; ++i) w[i] = rng.uniform(-bound, bound);
  }
}

Mlp Mlp::zeros(std::vector<std::size_t> layer_dims) { return Mlp(std::move(layer_dims)); }

double& Mlp::weight(std::size_t l, std::size_t out, std::size_t in) {
  return params_.at(offsets_.at(l) + out * dims_[l] + in);
}

double& Mlp::bias(std::size_t l, std::size_t out) {
  return params_.at(offsets_.at(l) + dims_[l] * dims_[l + 1] + out);
}

Embedding Mlp::forward(std::span<const double> x, Cache* cache) const {
  if (x.size() != input_dim()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
  const std::size_t layers = num_layers();
  if (cache) {
    cache->inputs.resize(layers);
    cache->pre.resize(layers);
  }
  std::vector<double> act(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = dims_[l], out = dims_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + in * out;
    next.assign(b, b + out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w + o * in;
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * act[i];
      next[o] += s;
    }
    if (cache) {
      cache->inputs[l] = act;
      cache->pre[l] = next;
    }
    if (l + 1 < layers)
      for (auto& v : next) v = std::max(v, 0.0);
    act.swap(next);
  }
  const double norm = l2_norm(act);
  if (!(norm > 0.0)) throw std::domain_error("Mlp::forward: zero output cannot be normalized");
  for (auto& v : act) v /= norm;
  if (cache) {
    cache->output = act;
    cache->norm = norm;
  }
  return act;
}

void Mlp::accumulate_gradient(const Cache& cache, std::span<const double> grad_embedding,
                              std::span<double> grads) const {
  if (grads.size() != params_.size()) throw std::invalid_argument("Mlp: gradient buffer has wrong size");
  if (grad_embedding.size() != output_dim()) throw std::invalid_argument("Mlp: embedding gradient has wrong size");
  const std::size_t layers = num_layers();

  // Through z = y / |y|: dL/dy = (g - z (z.g)) / |y|.
  const double zg = dot(cache.output, grad_embedding);
  std::vector<double> delta(output_dim());
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = (grad_embedding[i] - cache.output[i] * zg) / cache.norm;

  std::vector<double> prev;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = dims_[l], out = dims_[l + 1];
    if (l + 1 < layers)
      for (std::size_t o = 0; o < out; ++o)
        if (cache.pre[l][o] <= 0.0) delta[o] = 0.0;
    const double* w = params_.data() + offsets_[l];
    double* gw = grads.data() + offsets_[l];
    double* gb = gw + in * out;
    const auto& input = cache.inputs[l];
    prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* gwr = gw + o * in;
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        gwr[i] += d * input[i];
        prev[i] += d * wr[i];
      }
    }
    delta.swap(prev);
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'N', 'C', 'E', 'M', 'L', 'P', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("load_checkpoint: truncated stream");
  return value;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Mlp& mlp) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(mlp.num_layers()));
  for (auto d : mlp.layer_dims()) write_le<std::uint64_t>(out, d);
  for (double p : mlp.params()) write_le<double>(out, p);
}

Mlp load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("load_checkpoint: bad magic");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("load_checkpoint: unsupported version");
  const auto layers = read_le<std::uint32_t>(in);
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) dims.push_back(read_le<std::uint64_t>(in));
  Mlp mlp = Mlp::zeros(dims);
  for (double& p : mlp.params()) p = read_le<double>(in);
  return mlp;
}

double similarity(std::span<const double> a, std::span<const double> b, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("similarity: temperature must be positive");
  return dot(a, b) / tau;
}

namespace {

// Softmax-weighted sum of `vectors` under logits, scaled into `out`.
void add_softmax_combination(std::span<const double> logits, std::span<const std::span<const double>> vectors,
                             double scale, std::vector<double>& out) {
  const double lse = logsumexp(logits);
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    const double w = scale * std::exp(logits[j] - lse);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * vectors[j][i];
  }
}

}  // namespace

EmbeddingLoss contrastive_loss(std::span<const double> anchor, std::span<const double> positive,
                               std::span<const std::span<const double>> negatives, double tau) {
  if (negatives.empty()) throw std::invalid_argument("contrastive_loss: need at least one negative");
  std::vector<std::span<const double>> all;
  all.reserve(negatives.size() + 1);
  all.push_back(positive);
  all.insert(all.end(), negatives.begin(), negatives.end());
  std::vector<double> logits(all.size());
  for (std::size_t j = 0; j < all.size(); ++j) logits[j] = similarity(anchor, all[j], tau);

  EmbeddingLoss r;
  r.loss = -logits[0] + logsumexp(logits) - std::log(static_cast<double>(all.size()));
  r.grad.assign(anchor.size(), 0.0);
  for (std::size_t i = 0; i < anchor.size(); ++i) r.grad[i] = -positive[i] / tau;
  add_softmax_combination(logits, all, 1.0 / tau, r.grad);
  return r;
}

EmbeddingLoss aggregation_loss(std::span<const double> anchor,
                               std::span<const std::span<const double>> positives,
                               std::span<const std::span<const double>> background, double tau) {
  if (positives.empty() || background.empty())
    throw std::invalid_argument("aggregation_loss: positive and background sets must be nonempty");
  std::vector<double> pos(positives.size()), bg(background.size());
  for (std::size_t j = 0; j < positives.size(); ++j) pos[j] = similarity(anchor, positives[j], tau);
  for (std::size_t j = 0; j < background.size(); ++j) bg[j] = similarity(anchor, background[j], tau);

  EmbeddingLoss r;
  r.loss = -logmeanexp(pos) + logmeanexp(bg);
  r.grad.assign(anchor.size(), 0.0);
  add_softmax_combination(pos, positives, -1.0 / tau, r.grad);
  add_softmax_combination(bg, background, 1.0 / tau, r.grad);
  return r;
}

ParamLoss loss_and_grad(const Mlp& mlp, std::span<const double> anchor_input, const Embedding& positive,
                        const std::vector<Embedding>& negatives, double tau) {
  Mlp::Cache cache;
  const Embedding z = mlp.forward(anchor_input, &cache);
  std::vector<std::span<const double>> negs(negatives.begin(), negatives.end());
  const EmbeddingLoss el = contrastive_loss(z, positive, negs, tau);
  ParamLoss r;
  r.loss = el.loss;
  r.grads.assign(mlp.param_count(), 0.0);
  mlp.accumulate_gradient(cache, el.grad, r.grads);
  return r;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t param_count)
    : config_(config), first_(param_count, 0.0), second_(config.kind == OptimizerKind::adam ? param_count : 0, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != first_.size() || grads.size() != first_.size())
    throw std::invalid_argument("Optimizer::step: shape mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::domain_error("Optimizer::step: non-finite gradient");
  ++steps_;
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i] + wd * params[i];
      first_[i] = config_.momentum * first_[i] + g;
      params[i] -= lr * first_[i];
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + wd * params[i];
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g * g;
    const double m_hat = first_[i] / c1;
    const double v_hat = second_[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

void momentum_update(std::span<double> target, std::span<const double> online, double m) {
  if (target.size() != online.size()) throw std::invalid_argument("momentum_update: shape mismatch");
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("momentum_update: coefficient outside [0, 1]");
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = m * target[i] + (1.0 - m) * online[i];
}

void MomentumEncoder::update(const Mlp& online, double m) {
  if (online.layer_dims() != mlp_.layer_dims()) throw std::invalid_argument("MomentumEncoder: architecture mismatch");
  momentum_update(mlp_.params(), online.params(), m);
}

}  // namespace cnce
