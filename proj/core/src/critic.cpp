#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "cnce/estimators.hpp"

namespace cnce {

double PairCritic::operator()(double x, double y) const {
  const double xin[1] = {x};
  const double yin[1] = {y};
  return similarity(x_encoder.forward(xin), y_encoder.forward(yin), tau);
}

namespace {

Matrix embed_all(const Mlp& mlp, std::span<const double> values) {
  Matrix out(values.size(), mlp.output_dim());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double in[1] = {values[i]};
    const auto e = mlp.forward(in);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> encoder_dims(const CriticTrainConfig& c) {
  if (c.linear_layers < 1) throw std::invalid_argument("CriticTrainConfig: need at least one layer");
  std::vector<std::size_t> dims{1};
  for (std::size_t l = 0; l + 1 < c.linear_layers; ++l) dims.push_back(c.hidden);
  dims.push_back(c.out_dim);
  return dims;
}

// One side of the symmetric objective: anchors from `enc`, positives and
// negatives from the other side's fixed embeddings.
double accumulate_side(const Mlp& enc, std::span<const double> inputs, const Matrix& other,
                       std::span<const std::size_t> batch, std::size_t k, double tau, Rng& rng,
                       std::vector<double>& grads) {
  const std::size_t n = inputs.size();
  Mlp::Cache cache;
  std::vector<std::span<const double>> negs(k);
  double total = 0.0;
  for (std::size_t i : batch) {
    const double in[1] = {inputs[i]};
    const auto z = enc.forward(in, &cache);
    for (auto& s : negs) {
      std::size_t j = rng.index(n - 1);
      if (j >= i) ++j;
      s = other.row(j);
    }
    const auto el = contrastive_loss(z, other.row(i), negs, tau);
    total += el.loss;
    enc.accumulate_gradient(cache, el.grad, grads);
  }
  return total;
}

}  // namespace

PairCritic constant_critic(std::size_t out_dim, double tau) {
  PairCritic c;
  c.tau = tau;
  c.x_encoder = Mlp::zeros({1, out_dim});
  c.y_encoder = Mlp::zeros({1, out_dim});
  c.x_encoder.bias(0, 0) = 1.0;
  c.y_encoder.bias(0, 0) = 1.0;
  return c;
}

Matrix PairCritic::similarity_matrix(const PairDataset& data) const {
  const Matrix ex = embed_all(x_encoder, data.xs);
  const Matrix ey = embed_all(y_encoder, data.ys);
  const std::size_t n = data.size();
  Matrix sims(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sims(i, j) = dot(ex.row(i), ey.row(j)) / tau;
  return sims;
}

PairCritic train_critic(const PairDataset& data, const CriticTrainConfig& config, Rng& rng) {
  const std::size_t n = data.size();
  if (config.negatives == 0 || config.negatives >= n)
    throw std::invalid_argument("train_critic: need 1 <= negatives < n");
  if (config.batch == 0) throw std::invalid_argument("train_critic: batch must be positive");

  Rng init = rng.split(0);
  Rng steps = rng.split(1);
  PairCritic critic;
  critic.tau = config.tau;
  critic.x_encoder = Mlp(encoder_dims(config), init);
  critic.y_encoder = Mlp(encoder_dims(config), init);
  Optimizer opt_x(config.optimizer, critic.x_encoder.param_count());
  Optimizer opt_y(config.optimizer, critic.y_encoder.param_count());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gx(critic.x_encoder.param_count()), gy(critic.y_encoder.param_count());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[steps.index(i)]);
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::span<const std::size_t> batch(order.data() + start, std::min(config.batch, n - start));
      const Matrix ex = embed_all(critic.x_encoder, data.xs);
      const Matrix ey = embed_all(critic.y_encoder, data.ys);
      std::fill(gx.begin(), gx.end(), 0.0);
      std::fill(gy.begin(), gy.end(), 0.0);
      accumulate_side(critic.x_encoder, data.xs, ey, batch, config.negatives, config.tau, steps, gx);
      accumulate_side(critic.y_encoder, data.ys, ex, batch, config.negatives, config.tau, steps, gy);
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (auto& g : gx) g *= scale;
      for (auto& g : gy) g *= scale;
      opt_x.step(critic.x_encoder.params(), gx);
      opt_y.step(critic.y_encoder.params(), gy);
    }
  }
  return critic;
}

}  // namespace cnce
