#pragma once

#include "pour/report.hpp"

#include <chrono>
#include <functional>

namespace pour {

/// Holds the forget/retain split of the training data. While sealed, every
/// read of the retained part is counted; the unlearn stage runs sealed.
class ForgetOnlyGate {
 public:
  ForgetOnlyGate(const FeatureMatrix& train, int forget_class) {
    auto [forget, retained] = split_forget_retain(train, forget_class);
    forget_ = std::move(forget);
    retained_ = std::move(retained);
  }

  const FeatureMatrix& forget_set() const { return forget_; }
  const FeatureMatrix& retained_set() const {
    if (sealed_) ++violations_;
    return retained_;
  }

  void seal() { sealed_ = true; }
  void unseal() { sealed_ = false; }
  bool sealed() const { return sealed_; }
  std::size_t violations() const { return violations_; }

 private:
  FeatureMatrix forget_;
  FeatureMatrix retained_;
  bool sealed_ = false;
  mutable std::size_t violations_ = 0;
};

struct Datasets {
  EtfFrame frame;
  FeatureMatrix train;
  FeatureMatrix test;
};

/// Test hooks. `during_unlearn` runs inside the sealed stage with the gate.
struct RunHooks {
  std::function<void(const ForgetOnlyGate&)> during_unlearn;
};

struct RunOutput {
  RunManifest manifest;
  Datasets data;
  ToyModel original;
  UnlearnResult unlearned;
  std::optional<ToyModel> reference;
};

namespace detail {

template <typename F>
auto stage(std::string_view name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + std::string(name) + ": " + e.detail());
  }
}

inline Matrix normalized_columns(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double n = out.col(c).norm();
    if (!(n >= 1e-12)) throw Error(ErrorKind::zero_vector, "zero head column " + std::to_string(c));
    out.col(c) /= n;
  }
  return out;
}

}  // namespace detail

inline Datasets generate_data(const ExperimentConfig& c) {
  EtfFrame frame = make_etf(c.class_count, c.ambient_dim, Rng::derive(c.seed, 1));
  FeatureMatrix train = sample_nc_features({frame, c.sigma, c.samples_per_class, Rng::derive(c.seed, 2)});
  FeatureMatrix test = sample_nc_features({frame, c.sigma, c.test_samples_per_class, Rng::derive(c.seed, 3)});
  return {std::move(frame), std::move(train), std::move(test)};
}

/// The original model: a trained MLP, or the NC oracle (identity extractor
/// with head = head_scale times the generating frame).
inline ToyModel build_original(const ExperimentConfig& c, const Datasets& data) {
  if (c.model_kind == ModelKind::nc_oracle) return make_identity_model(c.head_scale * data.frame.directions());
  ToyModel m = make_mlp(c.ambient_dim, c.hidden, c.resolved_feature_dim(), c.class_count, Rng::derive(c.seed, 4));
  TrainConfig t = c.train;
  t.seed = Rng::derive(c.seed, 6);
  return train_supervised(m, data.train, t);
}

/// Reference model trained from scratch on the retained rows only.
inline ToyModel build_reference(const ExperimentConfig& c, const FeatureMatrix& retained) {
  ToyModel m = make_mlp(c.ambient_dim, c.hidden, c.resolved_feature_dim(), c.class_count, Rng::derive(c.seed, 5));
  TrainConfig t = c.train;
  t.seed = Rng::derive(c.seed, 7);
  return train_supervised(m, retained, t);
}

/// Randomized mixture pairs checked against the decomposition bound.
inline std::vector<BoundTriple> bound_trials(const ExperimentConfig& config) {
  std::vector<BoundTriple> out;
  Rng rng(Rng::derive(config.seed, 10));
  for (int t = 0; t < config.bound_trials; ++t) {
    const auto [p, q] = random_mixture_pair(rng);
    out.push_back(verify_decomposition_bound(p, q, config.bound_samples_per_component, config.bound_kernel,
                                             rng.next()));
  }
  return out;
}

/// Metrics for one finished unlearning run.
inline RunManifest evaluate(const ExperimentConfig& config, const Datasets& data, const ToyModel& original,
                            const UnlearnResult& unlearned, const std::optional<ToyModel>& reference) {
  const int u = config.unlearn.forget_class;
  RunManifest m;
  m.config_hash = config_hash(config);
  m.variant = std::string(to_string(config.unlearn.variant));
  m.seed = config.seed;
  m.losses = unlearned.losses;

  const ToyModel& model = unlearned.model;
  const auto [test_f, test_r] = split_forget_retain(data.test, u);
  const auto [train_f, train_r] = split_forget_retain(data.train, u);
  const auto acc = [](const ToyModel& mdl, const FeatureMatrix& d) {
    return accuracy(predict(mdl, d.rows), d.labels);
  };
  MetricsReport& r = m.metrics;
  r.acc_r = acc(model, test_r);
  r.acc_f = acc(model, test_f);
  r.acc_tr = acc(model, train_r);
  r.acc_tf = acc(model, train_f);
  r.aus = aus(*r.acc_r, acc(original, test_r), *r.acc_f);

  if (config.rmia)
    r.rmia = rmia_linear_probe(forward_features(model, train_f.rows), forward_features(model, test_f.rows),
                               config.rmia_folds);

  const bool projected_only = config.unlearn.variant == Variant::pour_p;
  if ((config.rus_o || reference) && (!projected_only || config.cka_after_projection)) {
    try {
      std::optional<FeatureSource> ref;
      if (reference) ref = feature_source(*reference);
      MetricsReport cka = rus_report(feature_source(model), feature_source(original), ref, train_f, train_r);
      if (config.rus_o) {
        r.cka_f_o = cka.cka_f_o;
        r.cka_r_o = cka.cka_r_o;
        r.rus_o = cka.rus_o;
      }
      r.cka_f_r = cka.cka_f_r;
      r.cka_r_r = cka.cka_r_r;
      r.rus_r = cka.rus_r;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_input) throw;
      m.notes.push_back("representation metrics omitted: " + e.detail());
    }
  }
  if (config.cka_whole_distribution && (!projected_only || config.cka_after_projection)) {
    try {
      m.cka_whole_o = linear_cka(forward_features(model, data.train.rows),
                                 forward_features(original, data.train.rows));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_input) throw;
      m.notes.push_back("whole-distribution CKA omitted: " + e.detail());
    }
  }

  if (config.angles) {
    m.angles = weight_angle_stats(original.head);
    m.head_gram_residual = gram_residual(EtfFrame::from_directions(detail::normalized_columns(original.head)));
  }
  if (projected_only) m.uniformity = uniformity_check(model, train_f.rows, config.sigma);

  if (config.unlearn.snapshot_every > 0 && !unlearned.snapshots.empty()) {
    Matrix ref_features = reference ? forward_features(*reference, train_f.rows)
                                    : forward_features(original, train_f.rows);
    if (!reference && unlearned.projector) ref_features = unlearned.projector->apply_rows(ref_features);
    m.alpha = alpha_sweep(unlearned.snapshots, train_f, u, ref_features, config.bound_kernel);
  }

  if (config.bounds) m.bounds = bound_trials(config);
  return m;
}

/// generate -> train original -> unlearn (forget rows only) -> optional
/// reference on the retained rows -> metrics.
inline RunOutput run_experiment(const ExperimentConfig& config, const RunHooks& hooks = {}) {
  const auto start = std::chrono::steady_clock::now();
  detail::stage("validate", [&] { validate(config); });
  const int u = config.unlearn.forget_class;

  Datasets data = detail::stage("generate", [&] { return generate_data(config); });
  ToyModel original = detail::stage("train", [&] { return build_original(config, data); });

  ForgetOnlyGate gate(data.train, u);
  UnlearnConfig ucfg = config.unlearn;
  ucfg.pour_d_train.seed = Rng::derive(config.seed, 8);
  ucfg.baseline_train.seed = Rng::derive(config.seed, 9);
  gate.seal();
  UnlearnResult unlearned = detail::stage("unlearn", [&] {
    UnlearnResult r = unlearn(original, ucfg, gate.forget_set());
    if (hooks.during_unlearn) hooks.during_unlearn(gate);
    return r;
  });
  gate.unseal();
  if (gate.violations() != 0)
    throw Error(ErrorKind::protocol, "stage unlearn: retained rows accessed " +
                                         std::to_string(gate.violations()) + " time(s)");

  std::optional<ToyModel> reference;
  if (config.rus_r)
    reference = detail::stage("reference", [&] { return build_reference(config, gate.retained_set()); });

  RunManifest m = detail::stage("metrics", [&] { return evaluate(config, data, original, unlearned, reference); });
  m.retained_rows_seen_by_unlearn = gate.violations();
  m.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(m), std::move(data), std::move(original), std::move(unlearned), std::move(reference)};
}

/// Independent pipelines with seeds base_seed + i.
inline std::vector<RunOutput> run_sweep(const ExperimentConfig& config, int runs) {
  if (runs < 1) throw Error(ErrorKind::invalid_argument, "runs must be >= 1");
  std::vector<RunOutput> out;
  for (int i = 0; i < runs; ++i) {
    ExperimentConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(i);
    out.push_back(run_experiment(c));
  }
  return out;
}

}  // namespace pour
