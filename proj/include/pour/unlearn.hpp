#pragma once

#include "pour/toy_model.hpp"

#include <optional>
#include <vector>

namespace pour {

enum class DirectionSource { head_column, empirical_mean };
enum class Variant { pour_p, pour_d, random_label, gradient_ascent };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::pour_p: return "pour_p";
    case Variant::pour_d: return "pour_d";
    case Variant::random_label: return "random_label";
    case Variant::gradient_ascent: return "gradient_ascent";
  }
  return "unknown";
}

inline std::string_view to_string(DirectionSource s) {
  return s == DirectionSource::head_column ? "head_column" : "empirical_mean";
}

inline TrainConfig default_pour_d_train() {
  TrainConfig c;
  c.steps = 500;
  c.step_size = 0.05;
  c.optimizer = Optimizer::momentum;
  c.weight_decay = 0.0;
  return c;
}

inline TrainConfig default_baseline_train() {
  TrainConfig c;
  c.steps = 500;
  c.step_size = 0.01;
  c.optimizer = Optimizer::gradient_descent;
  c.weight_decay = 0.0;
  return c;
}

struct UnlearnConfig {
  int forget_class = 0;
  DirectionSource direction_source = DirectionSource::head_column;
  Variant variant = Variant::pour_d;
  TrainConfig pour_d_train = default_pour_d_train();
  TrainConfig baseline_train = default_baseline_train();
  double ascent_clip = 1.0;
  int snapshot_every = 0;

  void validate(int class_count) const {
    if (forget_class < 0 || forget_class >= class_count)
      throw Error(ErrorKind::invalid_argument, "forget_class must be < class_count");
    if (!(ascent_clip > 0.0)) throw Error(ErrorKind::invalid_argument, "ascent_clip must be > 0");
    pour_d_train.validate();
    baseline_train.validate();
  }
};

struct PourPResult {
  ToyModel model;
  Projector projector;
};

/// The unlearning direction: head column w_u, or the empirical mean of the
/// original features over the forget set.
inline Vector forget_direction(const ToyModel& model, const UnlearnConfig& config,
                               const FeatureMatrix* forget_set) {
  if (config.direction_source == DirectionSource::head_column)
    return model.head.col(config.forget_class);
  if (forget_set == nullptr || forget_set->empty())
    throw Error(ErrorKind::empty_class, "empirical_mean direction needs a nonempty forget set");
  ToyModel base = model;
  base.projection.reset();
  return forward_features(base, forget_set->rows).colwise().mean().transpose();
}

/// Closed-form unlearning: append P = I - w w^T/|w|^2 after the extractor.
/// Extractor and head are left untouched.
inline PourPResult pour_p(const ToyModel& model, const UnlearnConfig& config,
                          const FeatureMatrix* forget_set = nullptr) {
  model.validate();
  config.validate(model.class_count);
  if (model.projection) throw Error(ErrorKind::invalid_argument, "model already carries a projection");
  if (model.class_count < 3)
    throw Error(ErrorKind::degenerate_frame, "forgetting one of two classes leaves no retained geometry");
  Projector p = projector_from_direction(forget_direction(model, config, forget_set));
  ToyModel out = model;
  out.projection = p;
  out.forgotten_class = config.forget_class;
  return {std::move(out), std::move(p)};
}

struct PourDResult {
  ToyModel student;
  ToyModel teacher;
  Projector projector;
  std::vector<double> losses;
  std::vector<Snapshot> snapshots;
  double final_loss = 0.0;  // mean L2 loss of the returned student
};

/// Projection-guided distillation on the forget set only.
///
/// Teacher: frozen (P o theta, W). Student: warm-started at theta, trained on
/// (1/n) sum |theta_s(x) - P theta(x)|^2 over D_f with the head frozen.
inline PourDResult pour_d(const ToyModel& model, const UnlearnConfig& config,
                          const FeatureMatrix& forget_set) {
  if (forget_set.empty()) throw Error(ErrorKind::empty_class, "POUR-D needs a nonempty forget set");
  auto [teacher, projector] = pour_p(model, config, &forget_set);
  const Matrix targets = forward_features(teacher, forget_set.rows);

  ToyModel student = model;
  student.projection.reset();
  student.forgotten_class = config.forget_class;
  GradientFn fn = [&](const ToyModel& m, const std::vector<Eigen::Index>& idx) {
    return backward_l2_feature_loss(m, detail::gather_rows(forget_set.rows, idx),
                                    detail::gather_rows(targets, idx));
  };
  OptimizeOptions options;
  options.train_head = false;
  options.snapshot_every = config.snapshot_every;
  TrainResult run = optimize(std::move(student), forget_set.size(), fn, config.pour_d_train, options);

  PourDResult out{std::move(run.model), std::move(teacher), std::move(projector),
                  std::move(run.losses), std::move(run.snapshots), 0.0};
  out.final_loss = (forward_features(out.student, forget_set.rows) - targets).squaredNorm() /
                   static_cast<double>(forget_set.size());
  return out;
}

/// Cross-entropy on D_f with each label replaced by a uniform draw from the
/// retained classes.
inline TrainResult baseline_random_label(const ToyModel& model, const FeatureMatrix& forget_set,
                                         const UnlearnConfig& config) {
  config.validate(model.class_count);
  if (forget_set.empty()) throw Error(ErrorKind::empty_class, "random-label needs a nonempty forget set");
  if (model.class_count < 2) throw Error(ErrorKind::invalid_argument, "no retained class to relabel to");
  Rng rng(Rng::derive(config.baseline_train.seed, 0x7e1abe1));
  FeatureMatrix relabeled = forget_set;
  relabeled.class_count = model.class_count;
  const auto retained = static_cast<std::uint64_t>(model.class_count - 1);
  for (int& label : relabeled.labels) {
    const int draw = static_cast<int>(rng.below(retained));
    label = draw >= config.forget_class ? draw + 1 : draw;
  }
  TrainResult run = train_cross_entropy(model, relabeled, config.baseline_train);
  run.model.forgotten_class = config.forget_class;
  return run;
}

/// Gradient ascent on the forget-set cross-entropy, each parameter update
/// clipped to norm `ascent_clip`.
inline TrainResult baseline_gradient_ascent(const ToyModel& model, const FeatureMatrix& forget_set,
                                            const UnlearnConfig& config) {
  config.validate(model.class_count);
  if (forget_set.empty()) throw Error(ErrorKind::empty_class, "gradient ascent needs a nonempty forget set");
  TrainConfig train = config.baseline_train;
  train.update_clip = config.ascent_clip;
  FeatureMatrix data = forget_set;
  data.class_count = model.class_count;
  TrainResult run = train_cross_entropy(model, data, train, -1.0);
  run.model.forgotten_class = config.forget_class;
  return run;
}

struct UniformityStats {
  double max_abs_retained_logit = 0.0;
  double max_softmax_deviation = 0.0;     // max |q_i(x) - 1/(C-1)| over samples and retained i
  double max_abs_mean_retained_logit = 0.0;
  double mean_logit_tolerance = 0.0;      // 3 sigma kappa / sqrt(n)
};

/// Retained-class logits and softmax on forget-class samples after POUR-P.
inline UniformityStats uniformity_check(const ToyModel& projected, const Matrix& forget_inputs, double sigma) {
  if (!projected.projection || !projected.forgotten_class)
    throw Error(ErrorKind::invalid_argument, "uniformity_check needs a projected model");
  const int u = *projected.forgotten_class;
  const Matrix logits = forward_logits(projected, forget_inputs);
  Matrix retained(logits.rows(), logits.cols() - 1);
  double kappa = 0.0;
  for (Eigen::Index c = 0, k = 0; c < logits.cols(); ++c) {
    if (c == u) continue;
    retained.col(k++) = logits.col(c);
    kappa = std::max(kappa, projected.head.col(c).norm());
  }
  UniformityStats s;
  if (retained.rows() == 0) return s;
  s.max_abs_retained_logit = retained.cwiseAbs().maxCoeff();
  const double uniform = 1.0 / static_cast<double>(retained.cols());
  s.max_softmax_deviation = (softmax_rows(retained).array() - uniform).abs().maxCoeff();
  s.max_abs_mean_retained_logit = retained.colwise().mean().cwiseAbs().maxCoeff();
  s.mean_logit_tolerance = 3.0 * sigma * kappa / std::sqrt(static_cast<double>(retained.rows()));
  return s;
}

struct UnlearnResult {
  ToyModel model;
  std::optional<Projector> projector;
  std::vector<double> losses;
  std::vector<Snapshot> snapshots;
};

/// Dispatches on `config.variant`. Only forget-set rows are ever passed in.
inline UnlearnResult unlearn(const ToyModel& model, const UnlearnConfig& config,
                             const FeatureMatrix& forget_set) {
  switch (config.variant) {
    case Variant::pour_p: {
      auto r = pour_p(model, config, &forget_set);
      return {std::move(r.model), std::move(r.projector), {}, {}};
    }
    case Variant::pour_d: {
      auto r = pour_d(model, config, forget_set);
      return {std::move(r.student), std::move(r.projector), std::move(r.losses), std::move(r.snapshots)};
    }
    case Variant::random_label: {
      auto r = baseline_random_label(model, forget_set, config);
      return {std::move(r.model), std::nullopt, std::move(r.losses), {}};
    }
    case Variant::gradient_ascent: {
      auto r = baseline_gradient_ascent(model, forget_set, config);
      return {std::move(r.model), std::nullopt, std::move(r.losses), {}};
    }
  }
  throw Error(ErrorKind::invalid_argument, "unknown variant");
}

}  // namespace pour
