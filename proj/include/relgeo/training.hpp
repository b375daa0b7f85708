// Backpropagation and Adam for MLP autoencoders and instance-discrimination
// (Diet) heads.
//
// Losses:
//   MSE                 (1/B)·Σ_i ‖ŷ_i − y_i‖²
//   DietCrossEntropy    (1/B)·Σ_i −log softmax(W·f(x_i))[label_i]
#pragma once

#include <optional>
#include <string>
#include <variant>

#include "relgeo/models.hpp"
#include "relgeo/numerics.hpp"

namespace relgeo {

enum class LossKind { MSE, DietCrossEntropy };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::MSE;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("train config: learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
      throw Error("train config: Adam betas must lie in (0, 1)");
    if (batch_size == 0) throw Error("train config: batch size must be >= 1");
    if (!(adam_eps > 0.0)) throw Error("train config: Adam eps must be positive");
  }
};

/// Layer widths [in, h1, ..., out] with one activation per affine layer.
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;
  bool last_layer_bias = true;
};

/// Glorot-uniform weights (a = sqrt(6/(fan_in+fan_out))), zero biases.
inline Mlp init_mlp(const MlpSpec& spec, RngStream& rng) {
  if (spec.widths.size() < 2 || spec.activations.size() + 1 != spec.widths.size())
    throw Error("mlp spec: need widths.size() == activations.size() + 1 >= 2");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer;
    layer.weight = Matrix(out, in);
    for (double& w : layer.weight.data()) w = rng.uniform(-a, a);
    const bool last = l + 2 == spec.widths.size();
    if (!last || spec.last_layer_bias) layer.bias.assign(out, 0.0);
    layer.activation = spec.activations[l];
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;  // empty entries for bias-free layers
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Per-layer activations of a batch forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  const Matrix& output() const { return post.back(); }
};

inline ForwardCache forward_cached(const Mlp& model, const Matrix& x) {
  if (x.cols() != model.input_dim()) throw DimensionError("forward: batch width does not match model input");
  ForwardCache c;
  Matrix a = x;
  for (const Layer& layer : model.layers()) {
    Matrix pre = matmul(a, transpose(layer.weight));
    if (layer.has_bias())
      for (std::size_t i = 0; i < pre.rows(); ++i)
        for (std::size_t j = 0; j < pre.cols(); ++j) pre(i, j) += layer.bias[j];
    Matrix post = pre;
    for (double& v : post.data()) v = activate(layer.activation, v);
    c.inputs.push_back(std::move(a));
    c.pre.push_back(std::move(pre));
    a = post;
    c.post.push_back(std::move(post));
  }
  return c;
}

/// Reverse-mode gradients given ∂L/∂output for every row of the batch.
inline Gradients backward(const Mlp& model, const ForwardCache& cache, const Matrix& output_grad) {
  const auto& layers = model.layers();
  Gradients g;
  g.weight.resize(layers.size());
  g.bias.resize(layers.size());
  Matrix delta = output_grad;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    for (std::size_t k = 0; k < delta.size(); ++k)
      delta.data()[k] *= activation_derivative(layer.activation, cache.pre[l].data()[k], cache.post[l].data()[k]);
    g.weight[l] = matmul(transpose(delta), cache.inputs[l]);
    if (layer.has_bias()) {
      g.bias[l].assign(layer.out_dim(), 0.0);
      for (std::size_t i = 0; i < delta.rows(); ++i)
        for (std::size_t j = 0; j < delta.cols(); ++j) g.bias[l][j] += delta(i, j);
    }
    if (l > 0) delta = matmul(delta, layer.weight);
  }
  return g;
}

/// Returns (loss, ∂loss/∂prediction).
inline std::pair<double, Matrix> mse_loss(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw DimensionError("mse loss: shape mismatch");
  const double b = static_cast<double>(prediction.rows());
  Matrix grad(prediction.rows(), prediction.cols());
  double loss = 0.0;
  for (std::size_t k = 0; k < prediction.size(); ++k) {
    const double e = prediction.data()[k] - target.data()[k];
    loss += e * e;
    grad.data()[k] = 2.0 * e / b;
  }
  return {loss / b, grad};
}

/// Softmax cross-entropy over logits; returns (loss, ∂loss/∂logits).
inline std::pair<double, Matrix> cross_entropy_loss(const Matrix& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("cross entropy: one label per row is required");
  const double b = static_cast<double>(logits.rows());
  Matrix grad(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    if (labels[i] >= row.size()) throw Error("cross entropy: label out of range");
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    loss += log_z - row[labels[i]];
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double p = std::exp(row[j] - log_z);
      grad(i, j) = (p - (j == labels[i] ? 1.0 : 0.0)) / b;
    }
  }
  return {loss / b, grad};
}

using TrainTarget = std::variant<Matrix, IndexVector>;

/// One forward/backward pass: regression targets for MSE, instance labels for
/// Diet cross-entropy (the model's output is then the logits).
inline LossAndGradients backprop_step(const Mlp& model, const Matrix& batch, const TrainTarget& target,
                                      LossKind loss) {
  if (batch.cols() != model.input_dim()) throw DimensionError("backprop: batch width does not match model");
  const ForwardCache cache = forward_cached(model, batch);
  std::pair<double, Matrix> lg;
  if (loss == LossKind::MSE) {
    const auto* y = std::get_if<Matrix>(&target);
    if (!y) throw Error("backprop: MSE needs a target matrix");
    lg = mse_loss(cache.output(), *y);
  } else {
    const auto* labels = std::get_if<IndexVector>(&target);
    if (!labels) throw Error("backprop: cross-entropy needs instance labels");
    lg = cross_entropy_loss(cache.output(), *labels);
  }
  return {lg.first, backward(model, cache, lg.second)};
}

class Adam {
 public:
  Adam(const Mlp& model, const TrainConfig& cfg) : cfg_(cfg) {
    for (const Layer& layer : model.layers()) {
      m_w_.emplace_back(layer.weight.rows(), layer.weight.cols());
      v_w_.emplace_back(layer.weight.rows(), layer.weight.cols());
      m_b_.emplace_back(layer.bias.size(), 0.0);
      v_b_.emplace_back(layer.bias.size(), 0.0);
    }
  }

  void step(Mlp& model, const Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto update = [&](std::span<double> p, std::span<const double> grad, std::span<double> m,
                      std::span<double> v) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * grad[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
        p[k] -= cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_eps);
      }
    };
    auto& layers = model.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight.data(), g.weight[l].data(), m_w_[l].data(), v_w_[l].data());
      if (layers[l].has_bias()) update(layers[l].bias, g.bias[l], m_b_[l], v_b_[l]);
    }
  }

 private:
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_w_, v_w_;
  std::vector<Vector> m_b_, v_b_;
};

namespace detail {

// Shuffled minibatch loop shared by both trainers. `step` receives the batch
// indices and returns that batch's loss.
template <typename StepFn>
Vector run_epochs(std::size_t rows, const TrainConfig& cfg, StepFn&& step) {
  Vector history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngStream shuffle(cfg.seed, "shuffle:epoch-" + std::to_string(epoch));
    const IndexVector order = shuffle.sample_without_replacement(rows, rows);
    double total = 0.0;
    for (std::size_t start = 0; start < rows; start += cfg.batch_size) {
      const std::size_t end = std::min(rows, start + cfg.batch_size);
      const IndexVector idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                            order.begin() + static_cast<std::ptrdiff_t>(end));
      const double loss = step(idx);
      if (!std::isfinite(loss)) throw Error("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      total += loss * static_cast<double>(idx.size());
    }
    history.push_back(total / static_cast<double>(rows));
  }
  return history;
}

}  // namespace detail

struct AutoencoderResult {
  Mlp encoder;
  Mlp decoder;
  Vector loss_history;  // mean training loss per epoch
};

/// Trains encoder and decoder jointly on reconstruction.
inline AutoencoderResult train_autoencoder(const Matrix& data, const MlpSpec& encoder_spec,
                                           const MlpSpec& decoder_spec, const TrainConfig& cfg) {
  cfg.validate();
  if (data.rows() < cfg.batch_size) throw Error("train_autoencoder: fewer rows than the batch size");
  if (encoder_spec.widths.front() != data.cols() || decoder_spec.widths.back() != data.cols() ||
      encoder_spec.widths.back() != decoder_spec.widths.front())
    throw DimensionError("train_autoencoder: encoder/decoder widths do not chain with the data");
  RngStream init(cfg.seed, "init:model");
  Mlp encoder = init_mlp(encoder_spec, init);
  Mlp decoder = init_mlp(decoder_spec, init);
  const std::size_t enc_layers = encoder.layers().size();
  Mlp model = chain(encoder, decoder);
  Adam adam(model, cfg);
  Vector history = detail::run_epochs(data.rows(), cfg, [&](const IndexVector& idx) {
    const Matrix batch = select_rows(data, idx);
    const LossAndGradients lg = backprop_step(model, batch, batch, LossKind::MSE);
    adam.step(model, lg.grads);
    return lg.loss;
  });
  return {model.slice(0, enc_layers), model.slice(enc_layers, model.layers().size()), std::move(history)};
}

/// Instance-discrimination head: f (Tanh hidden layers) followed by a bias-free
/// linear map W onto instance logits.
struct DietHead {
  Mlp f;
  Matrix w;  // instances x penultimate-dim
  std::size_t num_instances() const noexcept { return w.rows(); }

  Mlp as_mlp() const {
    std::vector<Layer> layers = f.layers();
    layers.push_back(Layer{w, {}, Activation::Identity});
    return Mlp(std::move(layers));
  }

  static DietHead from_mlp(const Mlp& model) {
    if (model.layers().size() < 2) throw Error("diet head: need f layers plus the projection");
    const Layer& last = model.layers().back();
    if (last.has_bias() || last.activation != Activation::Identity)
      throw Error("diet head: projection layer must be linear without bias");
    return {model.slice(0, model.layers().size() - 1), last.weight};
  }
};

struct DietSpec {
  std::vector<std::size_t> hidden{64};  // Tanh layer widths; last one is the penultimate layer
  std::size_t num_instances = 0;        // 0: infer as max label + 1
};

struct DietTrainResult {
  DietHead head;
  Vector loss_history;
  double train_accuracy = 0.0;
};

inline double diet_accuracy(const DietHead& head, const Matrix& x, std::span<const std::size_t> labels) {
  const Matrix logits = head.as_mlp().forward_batch(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    if (best == labels[i]) ++hit;
  }
  return logits.rows() == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(logits.rows());
}

inline DietTrainResult train_diet(const Matrix& embeddings, const IndexVector& labels, const DietSpec& spec,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (labels.size() != embeddings.rows()) throw DimensionError("train_diet: one label per embedding row");
  if (spec.hidden.empty()) throw Error("train_diet: need at least one hidden layer");
  std::size_t instances = spec.num_instances;
  if (instances == 0)
    for (std::size_t l : labels) instances = std::max(instances, l + 1);
  std::vector<bool> used(instances, false);
  for (std::size_t l : labels) {
    if (l >= instances) throw Error("train_diet: label " + std::to_string(l) + " out of range");
    used[l] = true;
  }
  for (std::size_t c = 0; c < instances; ++c)
    if (!used[c]) throw Error("train_diet: instance label " + std::to_string(c) + " is never used");

  MlpSpec mspec;
  mspec.widths.push_back(embeddings.cols());
  for (std::size_t h : spec.hidden) {
    mspec.widths.push_back(h);
    mspec.activations.push_back(Activation::Tanh);
  }
  mspec.widths.push_back(instances);
  mspec.activations.push_back(Activation::Identity);
  mspec.last_layer_bias = false;
  RngStream init(cfg.seed, "init:model");
  Mlp model = init_mlp(mspec, init);
  Adam adam(model, cfg);
  Vector history = detail::run_epochs(embeddings.rows(), cfg, [&](const IndexVector& idx) {
    const Matrix batch = select_rows(embeddings, idx);
    IndexVector batch_labels;
    for (std::size_t i : idx) batch_labels.push_back(labels[i]);
    const LossAndGradients lg = backprop_step(model, batch, batch_labels, LossKind::DietCrossEntropy);
    adam.step(model, lg.grads);
    return lg.loss;
  });
  DietTrainResult r{DietHead::from_mlp(model), std::move(history), 0.0};
  r.train_accuracy = diet_accuracy(r.head, embeddings, labels);
  return r;
}

}  // namespace relgeo
