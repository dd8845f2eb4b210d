#include "cpdalign/align.hpp"

#include "cpdalign/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <tuple>
#include <sstream>

namespace cpdalign {

namespace {

constexpr double kLogFloor = 1e-12;

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Mean binary cross-entropy against a constant label and dL/dlogit (batch-mean
// scaled, zero where the logit was clamped).
std::pair<double, Vector> bce(const Discriminator::Trace& trace, double label) {
  const Eigen::Index n = trace.probs.size();
  double loss = 0.0;
  Vector grad(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = trace.probs(i);
    loss -= label * std::log(std::max(p, kLogFloor)) + (1.0 - label) * std::log(std::max(1.0 - p, kLogFloor));
    const bool clamped = std::abs(trace.raw_logits(i)) >= Discriminator::kLogitClamp;
    grad(i) = clamped ? 0.0 : (p - label) / static_cast<double>(n);
  }
  return {loss / static_cast<double>(n), grad};
}

Matrix rows_of(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

// Rows of r divided by their norms; zero rows stay zero (the norm has no
// gradient there).
Matrix unit_residuals(const Matrix& r) {
  Matrix u = r;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double n = u.row(i).norm();
    if (n > 0.0) {
      u.row(i) /= n;
    } else {
      u.row(i).setZero();
    }
  }
  return u;
}

}  // namespace

Discriminator::Discriminator(Eigen::Index input_dim, const DiscriminatorConfig& config, std::mt19937_64& rng)
    : dropout_(config.dropout), leaky_slope_(config.leaky_slope) {
  if (input_dim < 1) throw ConfigError("discriminator: input dimension must be >= 1");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("discriminator: dropout must be in [0, 1)");
  std::vector<Eigen::Index> sizes{input_dim};
  for (auto h : config.hidden) {
    if (h == 0) throw ConfigError("discriminator: hidden layer sizes must be >= 1");
    sizes.push_back(static_cast<Eigen::Index>(h));
  }
  sizes.push_back(1);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> init(-bound, bound);
    Matrix w(sizes[l + 1], sizes[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = init(rng);
    }
    Vector b(sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = init(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

Discriminator::Discriminator(std::vector<Matrix> weights, std::vector<Vector> biases, double dropout,
                             double leaky_slope)
    : weights_(std::move(weights)), biases_(std::move(biases)), dropout_(dropout), leaky_slope_(leaky_slope) {
  if (weights_.empty() || weights_.size() != biases_.size()) throw ContractError("discriminator: malformed layers");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (biases_[l].size() != weights_[l].rows()) throw ContractError("discriminator: bias size mismatch");
    if (l > 0 && weights_[l].cols() != weights_[l - 1].rows()) throw ContractError("discriminator: layer mismatch");
  }
  if (weights_.back().rows() != 1) throw ContractError("discriminator: output layer must have one unit");
}

Discriminator::Trace Discriminator::forward(const Matrix& batch, std::mt19937_64* rng) const {
  if (batch.cols() != input_dim()) throw ContractError("discriminator: input dimension mismatch");
  Trace trace;
  Matrix input = batch;
  if (rng != nullptr && dropout_ > 0.0) {
    std::bernoulli_distribution keep(1.0 - dropout_);
    const double scale = 1.0 / (1.0 - dropout_);
    trace.input_scale.resize(batch.rows(), batch.cols());
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
      for (Eigen::Index j = 0; j < batch.cols(); ++j) trace.input_scale(i, j) = keep(*rng) ? scale : 0.0;
    }
    input = input.cwiseProduct(trace.input_scale);
  }
  trace.activations.push_back(std::move(input));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix pre = trace.activations.back() * weights_[l].transpose();
    pre.rowwise() += biases_[l].transpose();
    if (l + 1 < weights_.size()) {
      const double slope = leaky_slope_;
      trace.activations.push_back(pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; }));
    }
    trace.pre.push_back(std::move(pre));
  }
  trace.raw_logits = trace.pre.back().col(0);
  trace.logits = trace.raw_logits.cwiseMax(-kLogitClamp).cwiseMin(kLogitClamp);
  trace.probs = trace.logits.unaryExpr([](double a) { return sigmoid(a); });
  return trace;
}

Discriminator::Backward Discriminator::backward(const Trace& trace, const Vector& logit_grad) const {
  Backward out;
  out.grads.weights.resize(weights_.size());
  out.grads.biases.resize(biases_.size());
  Matrix g = logit_grad;  // (B x 1)
  for (std::size_t l = weights_.size(); l-- > 0;) {
    out.grads.weights[l] = g.transpose() * trace.activations[l];
    out.grads.biases[l] = g.colwise().sum().transpose();
    Matrix prev = g * weights_[l];
    if (l > 0) {
      const double slope = leaky_slope_;
      prev = prev.cwiseProduct(trace.pre[l - 1].unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
    }
    g = std::move(prev);
  }
  out.input_grad = trace.input_scale.size() ? g.cwiseProduct(trace.input_scale) : g;
  return out;
}

void Discriminator::apply_gradients(const DiscriminatorGradients& grads, double learning_rate) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l] -= learning_rate * grads.weights[l];
    biases_[l] -= learning_rate * grads.biases[l];
  }
}

double adversarial_objective(std::span<const double> real_probs, std::span<const double> synth_probs) {
  if (real_probs.empty() || synth_probs.empty()) throw ContractError("adv_loss: empty batch");
  double real = 0.0;
  for (double p : real_probs) real += std::log(std::max(p, kLogFloor));
  double synth = 0.0;
  for (double p : synth_probs) synth += std::log(std::max(1.0 - p, kLogFloor));
  return real / static_cast<double>(real_probs.size()) + synth / static_cast<double>(synth_probs.size());
}

double adv_loss(const Discriminator& d, const Matrix& real_batch, const Matrix& synth_batch) {
  const Vector real = d.predict(real_batch);
  const Vector synth = d.predict(synth_batch);
  return adversarial_objective(std::span<const double>(real.data(), static_cast<std::size_t>(real.size())),
                               std::span<const double>(synth.data(), static_cast<std::size_t>(synth.size())));
}

double cyc_loss(const LinearMap& forward, const LinearMap& backward, const Matrix& x_batch, const Matrix& y_batch) {
  if (x_batch.rows() == 0 || y_batch.rows() == 0) throw ContractError("cyc_loss: empty batch");
  const Matrix rx = x_batch * forward * backward - x_batch;
  const Matrix ry = y_batch * backward * forward - y_batch;
  return rx.rowwise().norm().mean() + ry.rowwise().norm().mean();
}

LinearMap orthogonalize_update(const LinearMap& w, double beta) {
  if (w.rows() != w.cols()) throw ContractError("orthogonalize_update: map must be square");
  if (!(beta > 0.0 && beta <= 0.1)) throw ContractError("orthogonalize_update: beta must lie in (0, 0.1]");
  return (1.0 + beta) * w - beta * (w * w.transpose()) * w;
}

void AlignConfig::validate() const {
  if (!(lambda_cyc > 0.0)) throw ConfigError("lambda_cyc must be > 0");
  if (!(beta_orth > 0.0 && beta_orth <= 0.1)) throw ConfigError("beta must lie in (0, 0.1]");
  if (batch_size < 1 || epoch_size < 1 || disc_steps < 1 || disc_vocab_limit < 1) {
    throw ConfigError("align counts must be >= 1");
  }
  if (!(gen_learning_rate >= 0.0) || !(disc_learning_rate >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) throw ConfigError("label smoothing must lie in [0, 0.5)");
  if (!(discriminator.dropout >= 0.0 && discriminator.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (criterion.k < 1) throw ConfigError("csls k must be >= 1");
}

CheckpointPolicy CheckpointPolicy::parse(std::string_view text) {
  if (text == "best") return CheckpointPolicy{};
  constexpr std::string_view prefix = "epoch:";
  if (text.substr(0, prefix.size()) == prefix) {
    std::string_view digits = text.substr(prefix.size());
    std::size_t epoch = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), epoch);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) {
      return CheckpointPolicy{Kind::epoch, epoch};
    }
  }
  throw ConfigError("checkpoint policy must be 'best' or 'epoch:N', got '" + std::string(text) + "'");
}

std::string CheckpointPolicy::to_string() const {
  return kind == Kind::best ? "best" : "epoch:" + std::to_string(epoch);
}

GeneratorLoss generator_loss(const LinearMap& forward, const LinearMap& backward, const Discriminator& d_source,
                             const Discriminator& d_target, const Matrix& x_batch, const Matrix& y_batch,
                             const AlignConfig& config, std::mt19937_64* dropout_rng) {
  const double real_label = 1.0 - config.label_smoothing;
  GeneratorLoss out;

  const Matrix x_mapped = x_batch * forward;
  const Matrix y_mapped = y_batch * backward;
  const auto trace_t = d_target.forward(x_mapped, dropout_rng);
  const auto trace_s = d_source.forward(y_mapped, dropout_rng);
  auto [loss_t, grad_t] = bce(trace_t, real_label);
  auto [loss_s, grad_s] = bce(trace_s, real_label);
  out.adversarial = loss_t + loss_s;
  out.grad_forward = x_batch.transpose() * d_target.backward(trace_t, grad_t).input_grad;
  out.grad_backward = y_batch.transpose() * d_source.backward(trace_s, grad_s).input_grad;

  const Matrix rx = x_mapped * backward - x_batch;
  const Matrix ry = y_mapped * forward - y_batch;
  out.cyclic = rx.rowwise().norm().mean() + ry.rowwise().norm().mean();
  const Matrix ux = unit_residuals(rx) / static_cast<double>(x_batch.rows());
  const Matrix uy = unit_residuals(ry) / static_cast<double>(y_batch.rows());
  const double lambda = config.lambda_cyc;
  out.grad_forward += lambda * (x_batch.transpose() * (ux * backward.transpose()) + y_mapped.transpose() * uy);
  out.grad_backward += lambda * (x_mapped.transpose() * ux + y_batch.transpose() * (uy * forward.transpose()));

  out.total = out.adversarial + lambda * out.cyclic;
  return out;
}

AdversarialTrainer::AdversarialTrainer(const Matrix& x, const Matrix& y, const AlignConfig& config)
    : x_(&x),
      y_(&y),
      config_(config),
      rng_(config.seed),
      forward_(LinearMap::Identity(x.cols(), y.cols())),
      backward_(LinearMap::Identity(y.cols(), x.cols())),
      d_source_(x.cols(), config.discriminator, rng_),
      d_target_(y.cols(), config.discriminator, rng_) {
  config_.validate();
  if (x.cols() != y.cols()) throw ContractError("align: source and target dimensions differ");
  if (x.rows() < 1 || y.rows() < 1) throw ContractError("align: empty embedding set");
}

Matrix AdversarialTrainer::sample(const Matrix& m, std::size_t limit) {
  const auto upper = static_cast<Eigen::Index>(std::min<std::size_t>(limit, static_cast<std::size_t>(m.rows())));
  std::uniform_int_distribution<Eigen::Index> pick(0, upper - 1);
  std::vector<Eigen::Index> idx(config_.batch_size);
  for (auto& i : idx) i = pick(rng_);
  return rows_of(m, idx);
}

AdversarialTrainer::DiscriminatorStep AdversarialTrainer::discriminator_step(double learning_rate) {
  const Matrix xb = sample(*x_, config_.disc_vocab_limit);
  const Matrix yb = sample(*y_, config_.disc_vocab_limit);
  const double real_label = 1.0 - config_.label_smoothing;
  const double synth_label = config_.label_smoothing;

  auto step = [&](Discriminator& d, const Matrix& real, const Matrix& synth) {
    const auto trace_real = d.forward(real, &rng_);
    const auto trace_synth = d.forward(synth, &rng_);
    auto [loss_real, grad_real] = bce(trace_real, real_label);
    auto [loss_synth, grad_synth] = bce(trace_synth, synth_label);
    auto g = d.backward(trace_real, grad_real).grads;
    const auto g_synth = d.backward(trace_synth, grad_synth).grads;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      g.weights[l] += g_synth.weights[l];
      g.biases[l] += g_synth.biases[l];
    }
    const double loss = loss_real + loss_synth;
    if (!std::isfinite(loss)) throw NumericalError("discriminator loss is not finite", loss);
    if (learning_rate > 0.0) d.apply_gradients(g, learning_rate);
    return loss;
  };

  DiscriminatorStep out;
  out.loss_target = step(d_target_, yb, xb * forward_);
  out.loss_source = step(d_source_, xb, yb * backward_);
  return out;
}

AdversarialTrainer::GeneratorStep AdversarialTrainer::generator_step(double learning_rate) {
  const Matrix xb = sample(*x_, config_.disc_vocab_limit);
  const Matrix yb = sample(*y_, config_.disc_vocab_limit);
  GeneratorStep out;
  out.loss = generator_loss(forward_, backward_, d_source_, d_target_, xb, yb, config_, &rng_);
  if (!std::isfinite(out.loss.total) || !out.loss.grad_forward.allFinite() || !out.loss.grad_backward.allFinite()) {
    throw NumericalError("generator loss is not finite", out.loss.total);
  }
  if (learning_rate > 0.0) {
    forward_ -= learning_rate * out.loss.grad_forward;
    backward_ -= learning_rate * out.loss.grad_backward;
    out.defect_before_orth_forward = orthogonality_defect(forward_);
    out.defect_before_orth_backward = orthogonality_defect(backward_);
    forward_ = orthogonalize_update(forward_, config_.beta_orth);
    backward_ = orthogonalize_update(backward_, config_.beta_orth);
  } else {
    out.defect_before_orth_forward = orthogonality_defect(forward_);
    out.defect_before_orth_backward = orthogonality_defect(backward_);
  }
  return out;
}

void AdversarialTrainer::set_maps(LinearMap forward, LinearMap backward) {
  forward_ = std::move(forward);
  backward_ = std::move(backward);
}

void AdversarialTrainer::restore(const AdversarialTrainer& snapshot) {
  forward_ = snapshot.forward_;
  backward_ = snapshot.backward_;
  d_source_ = snapshot.d_source_;
  d_target_ = snapshot.d_target_;
}

std::pair<double, double> AdversarialTrainer::discriminator_accuracy(std::size_t rows) const {
  const auto nx = std::min<Eigen::Index>(x_->rows(), static_cast<Eigen::Index>(rows));
  const auto ny = std::min<Eigen::Index>(y_->rows(), static_cast<Eigen::Index>(rows));
  const Matrix xr = x_->topRows(nx);
  const Matrix yr = y_->topRows(ny);
  auto accuracy = [](const Vector& real, const Vector& synth) {
    const auto right = (real.array() >= 0.5).count() + (synth.array() < 0.5).count();
    return static_cast<double>(right) / static_cast<double>(real.size() + synth.size());
  };
  const double src = accuracy(d_source_.predict(xr), d_source_.predict(yr * backward_));
  const double tgt = accuracy(d_target_.predict(yr), d_target_.predict(xr * forward_));
  return {src, tgt};
}

std::size_t select_checkpoint(const std::vector<AlignCheckpoint>& checkpoints, const CheckpointPolicy& policy) {
  if (checkpoints.empty()) throw ContractError("select_checkpoint: no checkpoints");
  if (policy.kind == CheckpointPolicy::Kind::epoch) {
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
      if (checkpoints[i].epoch == policy.epoch) return i;
    }
    throw ConfigError("no checkpoint recorded for epoch " + std::to_string(policy.epoch));
  }
  std::size_t best = checkpoints.size();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (!checkpoints[i].valid) continue;
    if (best == checkpoints.size() || checkpoints[i].criterion > checkpoints[best].criterion) best = i;
  }
  if (best == checkpoints.size()) throw StageError("select_checkpoint: every checkpoint criterion is invalid");
  return best;
}

AlignResult train_align(const Matrix& x, const Matrix& y, const AlignConfig& config, const CheckpointPolicy& policy,
                        const LogSink& log) {
  config.validate();
  AdversarialTrainer trainer(x, y, config);
  AlignResult result;
  constexpr std::size_t kAccuracyRows = 1000;

  auto record = [&](std::size_t epoch) {
    AlignCheckpoint cp;
    cp.forward = trainer.forward();
    cp.backward = trainer.backward();
    cp.epoch = epoch;
    cp.criterion = selection_criterion(x, y, cp.forward, cp.backward, config.criterion);
    cp.valid = std::isfinite(cp.criterion);
    std::tie(cp.disc_accuracy_source, cp.disc_accuracy_target) = trainer.discriminator_accuracy(kAccuracyRows);
    if (!cp.valid) result.warnings.push_back("align: criterion is NaN at epoch " + std::to_string(epoch) + "; skipped");
    if (log) {
      std::ostringstream line;
      line << "align epoch " << epoch << " criterion " << cp.criterion << " disc_acc " << cp.disc_accuracy_source
           << '/' << cp.disc_accuracy_target << " orth " << orthogonality_defect(cp.forward);
      log(line.str());
    }
    result.checkpoints.push_back(std::move(cp));
  };

  record(0);
  double best = result.checkpoints.back().valid ? result.checkpoints.back().criterion
                                                 : -std::numeric_limits<double>::infinity();
  double gen_lr = config.gen_learning_rate;
  const std::size_t iterations = std::max<std::size_t>(1, config.epoch_size / config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const AdversarialTrainer snapshot = trainer;
    try {
      for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t s = 0; s < config.disc_steps; ++s) trainer.discriminator_step(config.disc_learning_rate);
        trainer.generator_step(gen_lr);
      }
    } catch (const NumericalError& e) {
      trainer.restore(snapshot);
      result.warnings.push_back("align: epoch " + std::to_string(epoch) + " aborted: " + e.what());
    }
    record(epoch);
    const auto& cp = result.checkpoints.back();
    gen_lr *= config.lr_decay;
    if (cp.valid && cp.criterion > best) {
      best = cp.criterion;
    } else {
      gen_lr *= config.lr_shrink;
    }
    if (gen_lr < config.min_learning_rate) {
      if (log) log("align: learning rate below minimum, stopping");
      break;
    }
  }

  result.selected = select_checkpoint(result.checkpoints, policy);
  result.forward = result.checkpoints[result.selected].forward;
  result.backward = result.checkpoints[result.selected].backward;
  return result;
}

}  // namespace cpdalign
