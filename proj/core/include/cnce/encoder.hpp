#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cnce/numerics.hpp"

namespace cnce {

/// Unit-norm encoder output.
using Embedding = std::vector<double>;

/// Fully connected ReLU network whose output is L2-normalized.
///
/// Parameters live in one flat buffer so optimizers, EMA updates and
/// checkpoints treat the network as a single vector. Layer l stores its
/// weight as a row-major (out x in) block followed by its bias.
class Mlp {
 public:
  /// Activations recorded by forward() for use by backward().
  struct Cache {
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
    Embedding output;
    double norm = 0.0;  // norm of the pre-normalization output
  };

  Mlp() = default;
  /// He-uniform weights, zero biases.
  Mlp(std::vector<std::size_t> layer_dims, Rng& rng);
  static Mlp zeros(std::vector<std::size_t> layer_dims);

  /// Throws std::domain_error when the pre-normalization output is zero.
  Embedding forward(std::span<const double> x, Cache* cache = nullptr) const;

  /// Adds d(loss)/d(params) to `grads` given d(loss)/d(embedding).
  void accumulate_gradient(const Cache& cache, std::span<const double> grad_embedding,
                           std::span<double> grads) const;

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

  /// Weight element (out, in) of layer l, and bias element of layer l.
  double& weight(std::size_t l, std::size_t out, std::size_t in);
  double& bias(std::size_t l, std::size_t out);

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  explicit Mlp(std::vector<std::size_t> layer_dims);

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Binary checkpoint: "CNCEMLP\0", u32 version (=1), u32 layer count L,
/// L+1 u64 widths, then the flat parameter buffer as little-endian f64.
void save_checkpoint(std::ostream& out, const Mlp& mlp);
Mlp load_checkpoint(std::istream& in);

/// Dot product of two embeddings divided by the temperature.
double similarity(std::span<const double> a, std::span<const double> b, double tau);

/// Loss value and its gradient with respect to the anchor embedding.
struct EmbeddingLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Negative mean-normalized NCE term:
///   -( s_pos - logsumexp({s_pos} u {s_neg}) + ln(k + 1) ),  s = z.v / tau.
/// Positive and negatives are treated as constants.
EmbeddingLoss contrastive_loss(std::span<const double> anchor, std::span<const double> positive,
                               std::span<const std::span<const double>> negatives, double tau);

/// Negative log-ratio of mean exponentiated similarities:
///   -( logmeanexp(s over positives) - logmeanexp(s over background) ).
EmbeddingLoss aggregation_loss(std::span<const double> anchor,
                               std::span<const std::span<const double>> positives,
                               std::span<const std::span<const double>> background, double tau);

struct ParamLoss {
  double loss = 0.0;
  std::vector<double> grads;  // shaped like Mlp::params()
};

/// Contrastive loss of mlp(anchor_input) against detached embeddings, with
/// gradients through the anchor branch only.
ParamLoss loss_and_grad(const Mlp& mlp, std::span<const double> anchor_input, const Embedding& positive,
                        const std::vector<Embedding>& negatives, double tau);

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.03;
  double momentum = 0.9;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// SGD with heavy-ball momentum or Adam. Weight decay enters as an L2 term
/// added to the gradient before the moment updates.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t param_count);

  /// Throws std::domain_error on non-finite gradients.
  void step(std::span<double> params, std::span<const double> grads);

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::size_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<double> first_;
  std::vector<double> second_;
};

/// theta' <- m theta' + (1 - m) theta, elementwise.
void momentum_update(std::span<double> target, std::span<const double> online, double m);

/// EMA copy of an encoder; never receives gradients.
class MomentumEncoder {
 public:
  MomentumEncoder() = default;
  explicit MomentumEncoder(const Mlp& online) : mlp_(online) {}

  void update(const Mlp& online, double m);
  Embedding forward(std::span<const double> x) const { return mlp_.forward(x); }
  const Mlp& mlp() const { return mlp_; }

 private:
  Mlp mlp_;
};

}  // namespace cnce
