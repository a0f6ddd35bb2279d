#include "pour/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pour;

namespace {

// Gram entries by explicit dot-product loops.
double brute_dot(const Matrix& m, int i, int j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < m.rows(); ++k) s += m(k, i) * m(k, j);
  return s;
}

}  // namespace

TEST(MakeEtf, C4InThreeDimensionsMatchesIdealGram) {
  const EtfFrame f = make_etf(4, 3, 0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(brute_dot(f.directions(), i, j), i == j ? 1.0 : -1.0 / 3.0, 1e-12);
  EXPECT_LT(f.directions().rowwise().sum().norm(), 1e-12);
}

TEST(MakeEtf, C10InSixteenDimensionsHasTinyResidual) {
  const EtfFrame f = make_etf(10, 16, 5);
  EXPECT_EQ(f.ambient_dim(), 16);
  EXPECT_LT(gram_residual(f), 1e-12);
}

TEST(MakeEtf, DimensionBelowCMinusOneIsRejected) {
  try {
    make_etf(5, 3, 0);
    FAIL() << "expected dimension_too_small";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_too_small);
  }
}

TEST(MakeEtf, SeedsRotateButKeepGram) {
  const EtfFrame a = make_etf(5, 12, 1);
  const EtfFrame b = make_etf(5, 12, 2);
  EXPECT_GT((a.directions() - b.directions()).norm(), 1e-3);
  EXPECT_LT((a.gram() - b.gram()).cwiseAbs().maxCoeff(), 1e-12);
  const EtfFrame a2 = make_etf(5, 12, 1);
  EXPECT_EQ(a.directions(), a2.directions());
}

TEST(Projector, HandDerivedValues) {
  Vector v(3);
  v << 1.0, 1.0, 0.0;
  const Projector p = projector_from_direction(v);
  Matrix expected(3, 3);
  expected << 0.5, -0.5, 0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 1.0;
  EXPECT_LT((p.matrix() - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(p.apply(v).norm(), 1e-15);
  EXPECT_LT((p.matrix() * p.matrix() - p.matrix()).norm(), 1e-15);
  EXPECT_EQ(p.matrix(), p.matrix().transpose());
}

TEST(Projector, ScaleOfDirectionIrrelevant) {
  Vector v(4);
  v << 0.3, -1.0, 2.0, 0.5;
  EXPECT_LT((projector_from_direction(v).matrix() - projector_from_direction(-7.5 * v).matrix()).norm(), 1e-14);
}

TEST(Projector, ZeroDirectionRejected) {
  try {
    projector_from_direction(Vector::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::zero_vector);
  }
}

TEST(ProjectFrame, RetainedFrameIsEtfWithKnownPrenorm) {
  for (int c : {3, 4, 7}) {
    const EtfFrame f = make_etf(c, c + 2, 11);
    for (int u = 0; u < c; ++u) {
      const ProjectedFrame pf = project_frame_detailed(f, u);
      EXPECT_EQ(pf.frame.class_count(), c - 1);
      EXPECT_LT(gram_residual(pf.frame), 1e-9);
      const double expected = double(c) * (c - 2) / ((c - 1.0) * (c - 1.0));
      for (Eigen::Index i = 0; i < pf.prenorm.size(); ++i)
        EXPECT_NEAR(pf.prenorm(i) * pf.prenorm(i), expected, 1e-10);
    }
  }
}

TEST(ProjectFrame, TwoClassFrameIsDegenerate) {
  try {
    project_frame(make_etf(2, 1, 0), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_frame);
  }
}

TEST(ProjectFrame, ForgetIndexOutOfRange) {
  EXPECT_THROW(project_frame(make_etf(4, 3, 0), 4), Error);
}
