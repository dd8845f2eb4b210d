#pragma once

#include "cpdalign/log.hpp"
#include "cpdalign/metrics.hpp"
#include "cpdalign/numerics.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cpdalign {

struct DiscriminatorConfig {
  std::vector<std::size_t> hidden = {2048};
  double dropout = 0.1;       // on the input layer
  double leaky_slope = 0.2;
};

struct DiscriminatorGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Feed-forward classifier: input dropout, leaky-ReLU hidden layers and a
/// sigmoid output giving the probability that a row is a real embedding.
/// Logits are clamped to [-30, 30] so outputs stay strictly inside (0, 1).
class Discriminator {
 public:
  static constexpr double kLogitClamp = 30.0;

  Discriminator(Eigen::Index input_dim, const DiscriminatorConfig& config, std::mt19937_64& rng);

  // Layers given explicitly; weights[l] is (out x in).
  Discriminator(std::vector<Matrix> weights, std::vector<Vector> biases, double dropout, double leaky_slope);

  Eigen::Index input_dim() const { return weights_.front().cols(); }
  double dropout() const { return dropout_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

  struct Trace {
    Matrix input_scale;               // dropout mask (already divided by keep prob); empty in eval mode
    std::vector<Matrix> activations;  // activations[0] is the (dropped) input
    std::vector<Matrix> pre;          // pre-activations per layer
    Vector logits;                    // clamped
    Vector raw_logits;
    Vector probs;
  };

  // Training pass when `rng` is given (dropout active), evaluation otherwise.
  Trace forward(const Matrix& batch, std::mt19937_64* rng) const;

  // Probabilities with dropout disabled.
  Vector predict(const Matrix& batch) const { return forward(batch, nullptr).probs; }

  struct Backward {
    DiscriminatorGradients grads;
    Matrix input_grad;
  };
  // Backpropagates dL/dlogit (already zero where the logit was clamped).
  Backward backward(const Trace& trace, const Vector& logit_grad) const;

  void apply_gradients(const DiscriminatorGradients& grads, double learning_rate);

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  double dropout_;
  double leaky_slope_;
};

/// Mean log(p_real) + mean log(1 - p_synth), logs floored at 1e-12.
double adversarial_objective(std::span<const double> real_probs, std::span<const double> synth_probs);

/// E[log D(y)] + E[log(1 - D(x_mapped))] with dropout disabled.
double adv_loss(const Discriminator& d, const Matrix& real_batch, const Matrix& synth_batch);

/// mean ||x F G - x||_2 + mean ||y G F - y||_2 (maps act on row vectors).
double cyc_loss(const LinearMap& forward, const LinearMap& backward, const Matrix& x_batch, const Matrix& y_batch);

/// W <- (1 + beta) W - beta (W W^T) W, applied once. beta must lie in (0, 0.1].
LinearMap orthogonalize_update(const LinearMap& w, double beta);

struct AlignConfig {
  double lambda_cyc = 5.0;
  double beta_orth = 0.001;
  std::size_t epochs = 5;
  std::size_t epoch_size = 100000;  // sampled rows per epoch
  std::size_t batch_size = 32;
  std::size_t disc_steps = 5;
  double gen_learning_rate = 0.1;
  double disc_learning_rate = 0.1;
  double lr_decay = 0.98;
  double lr_shrink = 0.5;
  double min_learning_rate = 1e-6;
  std::size_t disc_vocab_limit = 50000;
  double label_smoothing = 0.1;
  DiscriminatorConfig discriminator;
  CslsParams criterion;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CheckpointPolicy {
  enum class Kind { best, epoch };
  Kind kind = Kind::best;
  std::size_t epoch = 0;

  static CheckpointPolicy parse(std::string_view text);
  std::string to_string() const;
};

struct AlignCheckpoint {
  LinearMap forward;
  LinearMap backward;
  std::size_t epoch = 0;
  double criterion = 0.0;
  bool valid = true;
  double disc_accuracy_source = 0.0;  // D_X on real source vs mapped target
  double disc_accuracy_target = 0.0;  // D_Y on real target vs mapped source
};

struct GeneratorLoss {
  double adversarial = 0.0;
  double cyclic = 0.0;
  double total = 0.0;
  Matrix grad_forward;
  Matrix grad_backward;
};

/// Generator objective for one batch and its gradient w.r.t. both maps:
/// BCE(D_Y(x F), 1 - smoothing) + BCE(D_X(y G), 1 - smoothing)
///   + lambda_cyc * cyc_loss(F, G, x, y).
/// Dropout is applied only when `dropout_rng` is given.
GeneratorLoss generator_loss(const LinearMap& forward, const LinearMap& backward, const Discriminator& d_source,
                             const Discriminator& d_target, const Matrix& x_batch, const Matrix& y_batch,
                             const AlignConfig& config, std::mt19937_64* dropout_rng);

/// Mutable training state for the two-player game.
class AdversarialTrainer {
 public:
  AdversarialTrainer(const Matrix& x, const Matrix& y, const AlignConfig& config);

  struct DiscriminatorStep {
    double loss_source = 0.0;
    double loss_target = 0.0;
  };
  struct GeneratorStep {
    GeneratorLoss loss;
    double defect_before_orth_forward = 0.0;
    double defect_before_orth_backward = 0.0;
  };

  DiscriminatorStep discriminator_step(double learning_rate);
  GeneratorStep generator_step(double learning_rate);

  const LinearMap& forward() const { return forward_; }
  const LinearMap& backward() const { return backward_; }
  const Discriminator& d_source() const { return d_source_; }
  const Discriminator& d_target() const { return d_target_; }
  void set_maps(LinearMap forward, LinearMap backward);
  void restore(const AdversarialTrainer& snapshot);

  // Classification accuracy of both discriminators on up to `rows` frequent rows.
  std::pair<double, double> discriminator_accuracy(std::size_t rows) const;

 private:
  Matrix sample(const Matrix& m, std::size_t limit);

  const Matrix* x_;
  const Matrix* y_;
  AlignConfig config_;
  std::mt19937_64 rng_;
  LinearMap forward_;
  LinearMap backward_;
  Discriminator d_source_;
  Discriminator d_target_;
};

struct AlignResult {
  LinearMap forward;
  LinearMap backward;
  std::vector<AlignCheckpoint> checkpoints;  // checkpoints[0] is the identity start
  std::size_t selected = 0;
  std::vector<std::string> warnings;
};

/// Index of the checkpoint chosen by `policy`. `best` is the argmax of the
/// criterion over valid checkpoints, earliest on ties.
std::size_t select_checkpoint(const std::vector<AlignCheckpoint>& checkpoints, const CheckpointPolicy& policy);

/// Adversarial training from identity maps. Records the selection criterion
/// after every epoch and returns the maps of the checkpoint chosen by
/// `policy`. Both embedding sets should already be normalized.
AlignResult train_align(const Matrix& x, const Matrix& y, const AlignConfig& config,
                        const CheckpointPolicy& policy = {}, const LogSink& log = {});

}  // namespace cpdalign
