#pragma once

#include "pour/metrics.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pour {

enum class Activation { linear, tanh };

inline std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::linear;
};

/// Feature extractor (stack of affine + activation layers) followed by a
/// bias-free linear head. An optional projection stage sits between the two;
/// POUR-P installs it instead of rewriting any weights.
struct ToyModel {
  std::vector<Layer> layers;
  Matrix head;  // feature_dim x class_count
  int class_count = 0;
  std::optional<Projector> projection;
  std::optional<int> forgotten_class;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int feature_dim() const { return static_cast<int>(layers.back().weight.rows()); }

  void validate() const {
    if (layers.empty()) throw Error(ErrorKind::invalid_argument, "model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].bias.size() != layers[l].weight.rows())
        throw Error(ErrorKind::dimension_mismatch, "bias size mismatch in layer " + std::to_string(l));
      if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
        throw Error(ErrorKind::dimension_mismatch, "layer " + std::to_string(l) + " does not compose");
    }
    if (head.rows() != feature_dim() || head.cols() != class_count)
      throw Error(ErrorKind::dimension_mismatch, "head shape does not match feature_dim x class_count");
    if (projection && projection->dim() != feature_dim())
      throw Error(ErrorKind::dimension_mismatch, "projection size differs from feature_dim");
  }
};

/// Gradients with the same layout as the model parameters.
struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
  Matrix head;  // empty when the head is frozen
  double loss = 0.0;

  double squared_norm() const {
    double s = head.squaredNorm();
    for (const auto& w : weight) s += w.squaredNorm();
    for (const auto& b : bias) s += b.squaredNorm();
    return s;
  }
};

/// input -> hidden (tanh) -> feature_dim (linear), head feature_dim x C.
///
/// Weights are seeded Gaussians with scale 1/sqrt(fan_in); biases start at
/// zero. Head columns are re-centered to sum to zero, a property the
/// cross-entropy gradient then preserves.
inline ToyModel make_mlp(int input_dim, int hidden, int feature_dim, int class_count, std::uint64_t seed) {
  Rng rng(seed);
  ToyModel m;
  m.class_count = class_count;
  m.layers.push_back({rng.gaussian(hidden, input_dim, 1.0 / std::sqrt(double(input_dim))),
                      Vector::Zero(hidden), Activation::tanh});
  m.layers.push_back({rng.gaussian(feature_dim, hidden, 1.0 / std::sqrt(double(hidden))),
                      Vector::Zero(feature_dim), Activation::linear});
  m.head = rng.gaussian(feature_dim, class_count, 1.0 / std::sqrt(double(feature_dim)));
  m.head = (m.head.colwise() - m.head.rowwise().mean()).eval();
  return m;
}

/// Single linear identity layer with the given head: features equal inputs.
inline ToyModel make_identity_model(const Matrix& head) {
  ToyModel m;
  const auto p = head.rows();
  m.class_count = static_cast<int>(head.cols());
  m.layers.push_back({Matrix::Identity(p, p), Vector::Zero(p), Activation::linear});
  m.head = head;
  return m;
}

namespace detail {

struct ForwardCache {
  std::vector<Matrix> activations;  // activations[0] = inputs, [l+1] = output of layer l
  Matrix features;                  // after the optional projection
};

inline ForwardCache forward_cached(const ToyModel& model, const Matrix& inputs) {
  if (model.layers.empty()) throw Error(ErrorKind::invalid_argument, "model has no layers");
  if (inputs.cols() != model.input_dim())
    throw Error(ErrorKind::dimension_mismatch, "input dim " + std::to_string(inputs.cols()) +
                                                   " != model input dim " +
                                                   std::to_string(model.input_dim()));
  ForwardCache cache;
  cache.activations.reserve(model.layers.size() + 1);
  cache.activations.push_back(inputs);
  for (const Layer& layer : model.layers) {
    Matrix a = cache.activations.back() * layer.weight.transpose();
    a.rowwise() += layer.bias.transpose();
    if (layer.activation == Activation::tanh) a = a.array().tanh().matrix();
    cache.activations.push_back(std::move(a));
  }
  cache.features = model.projection ? model.projection->apply_rows(cache.activations.back())
                                    : cache.activations.back();
  return cache;
}

/// Backpropagates dL/d(features) through projection and extractor.
inline Gradients backward_from_features(const ToyModel& model, const ForwardCache& cache,
                                        Matrix grad_features) {
  Gradients g;
  const std::size_t depth = model.layers.size();
  g.weight.resize(depth);
  g.bias.resize(depth);
  Matrix grad = model.projection ? Matrix(grad_features * model.projection->matrix())
                                 : std::move(grad_features);
  for (std::size_t k = depth; k-- > 0;) {
    const Layer& layer = model.layers[k];
    if (layer.activation == Activation::tanh)
      grad = (grad.array() * (1.0 - cache.activations[k + 1].array().square())).matrix();
    g.weight[k] = grad.transpose() * cache.activations[k];
    g.bias[k] = grad.colwise().sum().transpose();
    if (k > 0) grad = grad * layer.weight;
  }
  return g;
}

}  // namespace detail

inline Matrix forward_features(const ToyModel& model, const Matrix& inputs) {
  return detail::forward_cached(model, inputs).features;
}

inline Matrix forward_logits(const ToyModel& model, const Matrix& inputs) {
  return forward_features(model, inputs) * model.head;
}

inline FeatureSource feature_source(ToyModel model) {
  return [m = std::move(model)](const Matrix& inputs) { return forward_features(m, inputs); };
}

/// Margin the forgotten class must clear: 1e-12 relative, 1e-12 absolute floor.
inline double forgotten_tie_margin(double best_retained) { return 1e-12 * std::max(1.0, std::abs(best_retained)); }

/// Argmax of the logits with lowest-index tie-breaking. When the model carries
/// a forgotten class, that class only wins if it beats every retained logit
/// by more than `forgotten_tie_margin`; rounding-level leftovers count as ties.
inline std::vector<int> predict(const ToyModel& model, const Matrix& inputs) {
  const Matrix logits = forward_logits(model, inputs);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = -1;
    for (int c = 0; c < model.class_count; ++c) {
      if (model.forgotten_class && c == *model.forgotten_class) continue;
      if (best < 0 || logits(r, c) > logits(r, best)) best = c;
    }
    if (model.forgotten_class) {
      const int u = *model.forgotten_class;
      if (best < 0 || logits(r, u) > logits(r, best) + forgotten_tie_margin(logits(r, best))) best = u;
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

/// Mean squared feature error (1/n) sum_i |f(x_i) - t_i|^2 and its gradient
/// with respect to every extractor parameter. The head gets no gradient.
inline Gradients backward_l2_feature_loss(const ToyModel& model, const Matrix& inputs,
                                          const Matrix& targets) {
  const auto cache = detail::forward_cached(model, inputs);
  if (targets.rows() != cache.features.rows() || targets.cols() != cache.features.cols())
    throw Error(ErrorKind::dimension_mismatch, "targets must be n x feature_dim");
  const Matrix diff = cache.features - targets;
  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  Gradients g = detail::backward_from_features(model, cache, 2.0 * inv_n * diff);
  g.loss = inv_n * diff.squaredNorm();
  return g;
}

/// Mean cross-entropy of softmax(features * head) and gradients of every
/// parameter including the head.
inline Gradients backward_cross_entropy(const ToyModel& model, const Matrix& inputs,
                                        const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows())
    throw Error(ErrorKind::length_mismatch, "label count differs from input rows");
  const auto cache = detail::forward_cached(model, inputs);
  const Matrix logits = cache.features * model.head;
  Matrix probs = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= model.class_count) throw Error(ErrorKind::invalid_argument, "label out of range");
    const double peak = logits.row(r).maxCoeff();
    const double lse = peak + std::log((logits.row(r).array() - peak).exp().sum());
    loss += lse - logits(r, y);
    probs(r, y) -= 1.0;
  }
  const Matrix grad_logits = inv_n * probs;
  Gradients g = detail::backward_from_features(model, cache, grad_logits * model.head.transpose());
  g.head = cache.features.transpose() * grad_logits;
  g.loss = inv_n * loss;
  return g;
}

enum class Optimizer { gradient_descent, momentum };

struct TrainConfig {
  int steps = 2000;
  double step_size = 0.1;
  int batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::momentum;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double update_clip = 0.0;  // > 0 caps the norm of each parameter update

  void validate() const {
    if (steps < 1) throw Error(ErrorKind::invalid_argument, "steps must be >= 1");
    if (!(step_size > 0.0)) throw Error(ErrorKind::invalid_argument, "step_size must be > 0");
    if (batch_size < 0) throw Error(ErrorKind::invalid_argument, "batch_size must be >= 0");
    if (update_clip < 0.0) throw Error(ErrorKind::invalid_argument, "update_clip must be >= 0");
  }
};

struct Snapshot {
  int step = 0;
  ToyModel model;
};

struct TrainResult {
  ToyModel model;
  std::vector<double> losses;       // loss before each step
  std::vector<Snapshot> snapshots;  // every `snapshot_every` steps, plus the final model
};

/// Loss/gradient callback evaluated on the rows selected for one step.
using GradientFn = std::function<Gradients(const ToyModel&, const std::vector<Eigen::Index>&)>;

struct OptimizeOptions {
  bool train_head = true;
  double direction = 1.0;  // -1 ascends the loss
  int snapshot_every = 0;
};

/// Generic first-order loop shared by supervised training, POUR-D and the
/// baselines. Minibatches come from per-epoch shuffles drawn from
/// `Rng(config.seed)`; full-batch runs draw nothing.
inline TrainResult optimize(ToyModel model, Eigen::Index sample_count, const GradientFn& gradient,
                            const TrainConfig& config, const OptimizeOptions& options = {}) {
  config.validate();
  if (sample_count < 1) throw Error(ErrorKind::insufficient_data, "no training samples");
  Rng rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(sample_count));
  for (Eigen::Index i = 0; i < sample_count; ++i) order[static_cast<std::size_t>(i)] = i;
  const std::size_t batch = (config.batch_size == 0 || config.batch_size >= sample_count)
                                ? order.size()
                                : static_cast<std::size_t>(config.batch_size);
  std::size_t cursor = order.size();

  Gradients velocity;
  for (const Layer& l : model.layers) {
    velocity.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    velocity.bias.push_back(Vector::Zero(l.bias.size()));
  }
  velocity.head = Matrix::Zero(model.head.rows(), model.head.cols());

  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(config.steps));
  std::vector<Eigen::Index> selected;
  for (int step = 0; step < config.steps; ++step) {
    if (batch == order.size()) {
      selected = order;
    } else {
      if (cursor + batch > order.size()) {
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
        cursor = 0;
      }
      selected.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                      order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
      cursor += batch;
    }
    if (options.snapshot_every > 0 && step % options.snapshot_every == 0)
      result.snapshots.push_back({step, model});

    Gradients g = gradient(model, selected);
    if (!std::isfinite(g.loss))
      throw Error(ErrorKind::non_finite_loss, "loss became non-finite at step " + std::to_string(step));
    result.losses.push_back(g.loss);

    const double wd = config.weight_decay;
    const double mu = config.optimizer == Optimizer::momentum ? config.momentum : 0.0;
    Gradients update;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      velocity.weight[l] = mu * velocity.weight[l] +
                           options.direction * g.weight[l] + wd * model.layers[l].weight;
      velocity.bias[l] = mu * velocity.bias[l] + options.direction * g.bias[l];
      update.weight.push_back(config.step_size * velocity.weight[l]);
      update.bias.push_back(config.step_size * velocity.bias[l]);
    }
    if (options.train_head) {
      velocity.head = mu * velocity.head + options.direction * g.head + wd * model.head;
      update.head = config.step_size * velocity.head;
    }
    double scale = 1.0;
    if (config.update_clip > 0.0) {
      const double norm = std::sqrt(update.squared_norm());
      if (norm > config.update_clip) scale = config.update_clip / norm;
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      model.layers[l].weight -= scale * update.weight[l];
      model.layers[l].bias -= scale * update.bias[l];
    }
    if (options.train_head) model.head -= scale * update.head;
  }
  if (options.snapshot_every > 0) result.snapshots.push_back({config.steps, model});
  result.model = std::move(model);
  return result;
}

namespace detail {

inline Matrix gather_rows(const Matrix& rows, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = rows.row(idx[k]);
  return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<Eigen::Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Eigen::Index i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

/// Cross-entropy training of extractor and head. `direction = -1` gives
/// gradient ascent on the same loss.
inline TrainResult train_cross_entropy(const ToyModel& model, const FeatureMatrix& data,
                                       const TrainConfig& config, double direction = 1.0) {
  model.validate();
  data.validate();
  if (data.class_count > model.class_count)
    throw Error(ErrorKind::invalid_argument, "data has more classes than the model head");
  GradientFn fn = [&](const ToyModel& m, const std::vector<Eigen::Index>& idx) {
    return backward_cross_entropy(m, detail::gather_rows(data.rows, idx),
                                  detail::gather_labels(data.labels, idx));
  };
  OptimizeOptions options;
  options.direction = direction;
  return optimize(model, data.size(), fn, config, options);
}

inline ToyModel train_supervised(const ToyModel& model, const FeatureMatrix& data, const TrainConfig& config) {
  return train_cross_entropy(model, data, config).model;
}

/// Nearest class mean; `means` holds one mean per column. Ties go to the
/// lowest class index.
inline std::vector<int> ncm_classify(const Matrix& means, const Matrix& features) {
  if (means.cols() < 1) throw Error(ErrorKind::invalid_argument, "no class means");
  if (means.rows() != features.cols())
    throw Error(ErrorKind::dimension_mismatch, "mean and feature dims differ");
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    Eigen::Index best = 0;
    double best_dist = (features.row(r).transpose() - means.col(0)).squaredNorm();
    for (Eigen::Index c = 1; c < means.cols(); ++c) {
      const double dist = (features.row(r).transpose() - means.col(c)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace pour
