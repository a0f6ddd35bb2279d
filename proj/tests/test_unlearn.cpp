#include "pour/unlearn.hpp"
#include "pour/metrics.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace pour;

namespace {

struct Fixture {
  EtfFrame frame;
  FeatureMatrix data;
  ToyModel model;
};

// NC oracle: identity extractor, head equal to the generating frame.
Fixture nc_oracle(int c, int d, double sigma, int per_class, std::uint64_t seed) {
  EtfFrame f = make_etf(c, d, seed);
  FeatureMatrix x = sample_nc_features({f, sigma, per_class, seed + 1});
  ToyModel m = make_identity_model(f.directions());
  return {std::move(f), std::move(x), std::move(m)};
}

// Trained MLP on NC blobs (C=4, d=3).
struct Trained {
  FeatureMatrix data;
  ToyModel model;
};

const Trained& trained_mlp(double sigma) {
  static std::map<double, Trained> cache;
  auto it = cache.find(sigma);
  if (it != cache.end()) return it->second;
  const EtfFrame f = make_etf(4, 3, 1);
  FeatureMatrix x = sample_nc_features({f, sigma, 200, 2});
  TrainConfig t;
  t.steps = 1500;
  t.seed = 3;
  ToyModel m = train_supervised(make_mlp(3, 32, 3, 4, 4), x, t);
  return cache.emplace(sigma, Trained{std::move(x), std::move(m)}).first->second;
}

UnlearnConfig config_for(int u, Variant v) {
  UnlearnConfig c;
  c.forget_class = u;
  c.variant = v;
  return c;
}

}  // namespace

TEST(PourP, ZeroNoiseCollapsesForgetFeatures) {
  const Fixture fx = nc_oracle(4, 6, 0.0, 10, 1);
  for (int u = 0; u < 4; ++u) {
    const auto [f, r] = split_forget_retain(fx.data, u);
    const PourPResult res = pour_p(fx.model, config_for(u, Variant::pour_p), &f);
    EXPECT_LT(forward_features(res.model, f.rows).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(res.model.head, fx.model.head);
    // retained decisions unchanged
    ToyModel before = fx.model;
    before.forgotten_class = u;
    EXPECT_EQ(predict(res.model, r.rows), predict(before, r.rows));
    EXPECT_EQ(predict(res.model, r.rows), r.labels);
    // projected-renormalized retained means form a (C-1)-ETF
    Matrix means(6, 3);
    for (int c = 0, k = 0; c < 4; ++c) {
      if (c == u) continue;
      const Vector m = res.projector.apply(empirical_class_mean(fx.data, c));
      means.col(k++) = m / m.norm();
    }
    EXPECT_LT(gram_residual(EtfFrame::from_directions(means)), 1e-9);
  }
}

TEST(PourP, EmpiricalMeanMatchesHeadColumnAtZeroNoise) {
  const Fixture fx = nc_oracle(5, 4, 0.0, 6, 2);
  const auto [f, r] = split_forget_retain(fx.data, 3);
  UnlearnConfig a = config_for(3, Variant::pour_p);
  UnlearnConfig b = a;
  b.direction_source = DirectionSource::empirical_mean;
  EXPECT_LT((pour_p(fx.model, a, &f).projector.matrix() - pour_p(fx.model, b, &f).projector.matrix()).norm(),
            1e-14);
}

TEST(PourP, EmpiricalMeanNeedsForgetRows) {
  const Fixture fx = nc_oracle(4, 3, 0.0, 2, 3);
  UnlearnConfig c = config_for(0, Variant::pour_p);
  c.direction_source = DirectionSource::empirical_mean;
  EXPECT_THROW(pour_p(fx.model, c, nullptr), Error);
}

TEST(PourP, ZeroDirectionRejected) {
  Fixture fx = nc_oracle(4, 3, 0.0, 2, 4);
  fx.model.head.col(1).setZero();
  try {
    pour_p(fx.model, config_for(1, Variant::pour_p));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::zero_vector);
  }
}

TEST(PourP, TwoClassesDegenerate) {
  const Fixture fx = nc_oracle(2, 1, 0.0, 2, 5);
  try {
    pour_p(fx.model, config_for(0, Variant::pour_p));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_frame);
  }
}

TEST(PourD, FixedPointWhenFeaturesOrthogonalToDirection) {
  // Features live in the first two coordinates; w_u = e_3, so P theta = theta.
  Matrix head = Matrix::Zero(3, 3);
  head(0, 0) = 1.0;
  head(1, 1) = 1.0;
  head(2, 2) = 1.0;
  const ToyModel m = make_identity_model(head);
  Rng rng(6);
  FeatureMatrix f{Matrix::Zero(20, 3), std::vector<int>(20, 2), 3};
  f.rows.leftCols(2) = rng.gaussian(20, 2);
  const PourDResult r = pour_d(m, config_for(2, Variant::pour_d), f);
  EXPECT_LT(r.final_loss, 1e-28);
  for (double l : r.losses) EXPECT_LT(l, 1e-28);
  EXPECT_LT((r.student.layers[0].weight - m.layers[0].weight).norm(), 1e-12);
}

TEST(PourD, ConvergesAndMatchesTeacher) {
  const Trained& t = trained_mlp(0.05);
  const auto [f, r] = split_forget_retain(t.data, 1);
  UnlearnConfig c = config_for(1, Variant::pour_d);
  const PourDResult res = pour_d(t.model, c, f);
  ASSERT_EQ(f.size(), 200);
  EXPECT_EQ(res.losses.size(), 500u);
  EXPECT_LT(res.final_loss, 1e-3);
  EXPECT_GT(linear_cka(forward_features(res.student, f.rows), forward_features(res.teacher, f.rows)), 0.99);
  EXPECT_EQ(res.student.head, t.model.head);
  EXPECT_FALSE(res.student.projection.has_value());
}

TEST(PourD, PlainGradientDescentLossNonIncreasing) {
  const Trained& t = trained_mlp(0.05);
  const FeatureMatrix f = split_forget_retain(t.data, 0).first;
  UnlearnConfig c = config_for(0, Variant::pour_d);
  c.pour_d_train.optimizer = Optimizer::gradient_descent;
  c.pour_d_train.step_size = 0.01;
  c.pour_d_train.steps = 200;
  const PourDResult res = pour_d(t.model, c, f);
  for (std::size_t i = 1; i < res.losses.size(); ++i) EXPECT_LE(res.losses[i], res.losses[i - 1] + 1e-12);
  EXPECT_LT(res.losses.back(), res.losses.front());
}

TEST(PourD, EmptyForgetSet) {
  const Fixture fx = nc_oracle(4, 3, 0.0, 1, 7);
  FeatureMatrix empty{Matrix(0, 3), {}, 4};
  try {
    pour_d(fx.model, config_for(0, Variant::pour_d), empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_class);
  }
}

TEST(RandomLabel, TwoClassesRelabelToTheOther) {
  Rng rng(8);
  FeatureMatrix f{rng.gaussian(30, 2), std::vector<int>(30, 0), 2};
  ToyModel m = make_mlp(2, 4, 1, 2, 1);
  UnlearnConfig c = config_for(0, Variant::random_label);
  c.baseline_train.steps = 300;
  c.baseline_train.step_size = 0.1;
  const TrainResult r = baseline_random_label(m, f, c);
  ToyModel plain = r.model;
  plain.forgotten_class.reset();
  for (int p : predict(plain, f.rows)) EXPECT_EQ(p, 1);
}

TEST(RandomLabel, LowersForgetAccuracy) {
  const Trained& t = trained_mlp(0.1);
  const auto [f, r] = split_forget_retain(t.data, 2);
  const double before = accuracy(predict(t.model, f.rows), f.labels);
  const TrainResult res = baseline_random_label(t.model, f, config_for(2, Variant::random_label));
  const double after = accuracy(predict(res.model, f.rows), f.labels);
  EXPECT_LT(after, before);
  RecordProperty("acc_r_after", std::to_string(accuracy(predict(res.model, r.rows), r.labels)));
}

TEST(GradientAscent, LowersForgetAccuracy) {
  const Trained& t = trained_mlp(0.1);
  const FeatureMatrix f = split_forget_retain(t.data, 3).first;
  const double before = accuracy(predict(t.model, f.rows), f.labels);
  UnlearnConfig c = config_for(3, Variant::gradient_ascent);
  c.baseline_train.step_size = 0.05;
  const TrainResult res = baseline_gradient_ascent(t.model, f, c);
  EXPECT_LT(accuracy(predict(res.model, f.rows), f.labels), before);
}

TEST(GradientAscent, LossRisesMonotonicallyAtDefaultStep) {
  const Trained& t = trained_mlp(0.1);
  const FeatureMatrix f = split_forget_retain(t.data, 3).first;
  const TrainResult res = baseline_gradient_ascent(t.model, f, config_for(3, Variant::gradient_ascent));
  for (std::size_t i = 1; i < res.losses.size(); ++i) EXPECT_GE(res.losses[i], res.losses[i - 1]);
  EXPECT_GT(res.losses.back(), res.losses.front());
}

TEST(GradientAscent, ClipMustBePositive) {
  const Fixture fx = nc_oracle(4, 3, 0.1, 3, 9);
  UnlearnConfig c = config_for(0, Variant::gradient_ascent);
  c.ascent_clip = 0.0;
  EXPECT_THROW(baseline_gradient_ascent(fx.model, fx.data, c), Error);
}

TEST(Uniformity, ExactAtZeroNoise) {
  const Fixture fx = nc_oracle(4, 3, 0.0, 20, 10);
  const FeatureMatrix f = split_forget_retain(fx.data, 0).first;
  const PourPResult p = pour_p(fx.model, config_for(0, Variant::pour_p), &f);
  const UniformityStats s = uniformity_check(p.model, f.rows, 0.0);
  EXPECT_LT(s.max_abs_retained_logit, 1e-15);
  EXPECT_EQ(s.max_softmax_deviation, 0.0);
  for (int label : predict(p.model, f.rows)) EXPECT_NE(label, 0);
}

TEST(Uniformity, MeanLogitWithinGaussianTolerance) {
  const Fixture fx = nc_oracle(4, 3, 0.05, 500, 11);
  const FeatureMatrix f = split_forget_retain(fx.data, 2).first;
  const PourPResult p = pour_p(fx.model, config_for(2, Variant::pour_p), &f);
  const UniformityStats s = uniformity_check(p.model, f.rows, 0.05);
  EXPECT_LE(s.max_abs_mean_retained_logit, s.mean_logit_tolerance);
}

TEST(Uniformity, DeviationGrowsWithSigma) {
  double previous = -1.0;
  for (double sigma : {0.01, 0.05, 0.1}) {
    const Fixture fx = nc_oracle(4, 3, sigma, 200, 12);
    const FeatureMatrix f = split_forget_retain(fx.data, 1).first;
    const PourPResult p = pour_p(fx.model, config_for(1, Variant::pour_p), &f);
    const double dev = uniformity_check(p.model, f.rows, sigma).max_softmax_deviation;
    EXPECT_GT(dev, previous);
    previous = dev;
  }
}

TEST(Dispatch, VariantsReturnTaggedModels) {
  const Fixture fx = nc_oracle(4, 3, 0.05, 10, 13);
  const FeatureMatrix f = split_forget_retain(fx.data, 0).first;
  for (Variant v : {Variant::pour_p, Variant::pour_d, Variant::random_label, Variant::gradient_ascent}) {
    UnlearnConfig c = config_for(0, v);
    c.pour_d_train.steps = 5;
    c.baseline_train.steps = 5;
    const UnlearnResult r = unlearn(fx.model, c, f);
    EXPECT_EQ(r.model.forgotten_class, 0);
    EXPECT_EQ(r.projector.has_value(), v == Variant::pour_p || v == Variant::pour_d);
  }
}
