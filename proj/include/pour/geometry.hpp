#pragma once

#include "pour/core.hpp"

#include <cstdint>
#include <string>

namespace pour {

/// A set of C class directions stored as the columns of a d x C matrix.
///
/// Frames built by `make_etf` or `project_frame` satisfy the simplex ETF
/// identities (unit norms, pairwise dot products -1/(C-1), zero sum).
/// Frames built from arbitrary columns via `from_directions` are accepted as-is
/// so that `gram_residual` can measure how far they are from that ideal.
class EtfFrame {
 public:
  static EtfFrame from_directions(Matrix directions) {
    if (directions.cols() < 2)
      throw Error(ErrorKind::invalid_argument, "a frame needs at least two directions");
    if (directions.rows() < 1)
      throw Error(ErrorKind::invalid_argument, "a frame needs ambient dimension >= 1");
    return EtfFrame(std::move(directions));
  }

  const Matrix& directions() const { return directions_; }
  Vector direction(Eigen::Index i) const { return directions_.col(i); }
  int class_count() const { return static_cast<int>(directions_.cols()); }
  int ambient_dim() const { return static_cast<int>(directions_.rows()); }

  Matrix gram() const { return directions_.transpose() * directions_; }

 private:
  explicit EtfFrame(Matrix directions) : directions_(std::move(directions)) {}

  Matrix directions_;
};

/// Rank-(d-1) orthogonal projector onto the complement of one direction.
class Projector {
 public:
  const Matrix& matrix() const { return matrix_; }
  const Vector& removed_direction() const { return removed_; }
  int dim() const { return static_cast<int>(matrix_.rows()); }

  Vector apply(const Vector& v) const { return matrix_ * v; }

  /// Projects each row of `rows` (n x d).
  Matrix apply_rows(const Matrix& rows) const { return rows * matrix_; }

  friend Projector projector_from_direction(const Vector& v);
  static Projector from_parts(Matrix matrix, Vector removed) {
    Projector p;
    p.matrix_ = std::move(matrix);
    p.removed_ = std::move(removed);
    return p;
  }

 private:
  Projector() = default;

  Matrix matrix_;
  Vector removed_;
};

/// P = I - v v^T / |v|^2.
inline Projector projector_from_direction(const Vector& v) {
  const double norm = v.norm();
  if (!(norm >= 1e-12))
    throw Error(ErrorKind::zero_vector, "projection direction has norm " + std::to_string(norm));
  Projector p;
  p.removed_ = v / norm;
  const auto d = v.size();
  p.matrix_ = Matrix::Identity(d, d) - p.removed_ * p.removed_.transpose();
  // Exact symmetry regardless of rounding in the outer product.
  p.matrix_ = 0.5 * (p.matrix_ + p.matrix_.transpose()).eval();
  return p;
}

namespace detail {

/// Canonical simplex ETF in R^{C-1}: the centered standard basis of R^C,
/// normalized, expressed in the Helmert orthonormal basis of the sum-zero
/// hyperplane. Column i is v_i.
inline Matrix canonical_etf(int class_count) {
  const int c = class_count;
  Matrix centered = Matrix::Identity(c, c) - Matrix::Constant(c, c, 1.0 / c);
  centered *= std::sqrt(static_cast<double>(c) / (c - 1));
  Matrix helmert(c, c - 1);
  helmert.setZero();
  for (int k = 1; k < c; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) helmert(i, k - 1) = scale;
    helmert(k, k - 1) = -k * scale;
  }
  return helmert.transpose() * centered;
}

/// Seeded d x k matrix with orthonormal columns (QR of a Gaussian matrix with
/// the sign of R's diagonal folded into Q).
inline Matrix random_orthonormal(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix g = rng.gaussian(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix r = qr.matrixQR().topLeftCorner(cols, cols);
  for (int j = 0; j < cols; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace detail

/// Simplex ETF with `class_count` directions in R^`ambient_dim`.
///
/// With ambient_dim == C-1 the canonical frame is returned unchanged. Larger
/// ambient dimensions embed it through a seeded random orthonormal basis.
inline EtfFrame make_etf(int class_count, int ambient_dim, std::uint64_t orientation_seed) {
  if (class_count < 2)
    throw Error(ErrorKind::invalid_argument, "class_count must be >= 2");
  if (ambient_dim < class_count - 1)
    throw Error(ErrorKind::dimension_too_small,
                "ambient_dim below C-1 (" + std::to_string(ambient_dim) + " < " +
                    std::to_string(class_count - 1) + ")");
  Matrix canonical = detail::canonical_etf(class_count);
  if (ambient_dim == class_count - 1) return EtfFrame::from_directions(std::move(canonical));
  const Matrix basis = detail::random_orthonormal(ambient_dim, class_count - 1, orientation_seed);
  return EtfFrame::from_directions(basis * canonical);
}

/// Ideal simplex-ETF Gram: 1 on the diagonal, -1/(C-1) elsewhere.
inline Matrix ideal_etf_gram(int class_count) {
  const double off = -1.0 / (class_count - 1);
  Matrix g = Matrix::Constant(class_count, class_count, off);
  g.diagonal().setOnes();
  return g;
}

/// Max absolute elementwise deviation of the frame's Gram from the ideal.
inline double gram_residual(const EtfFrame& frame) {
  return (frame.gram() - ideal_etf_gram(frame.class_count())).cwiseAbs().maxCoeff();
}

/// Result of projecting a frame: the retained (C-1)-class frame plus the
/// pre-normalization norms |P v_i| in retained order.
struct ProjectedFrame {
  EtfFrame frame;
  Vector prenorm;
  Projector projector;
};

/// Removes direction `forget_index` and renormalizes the rest.
inline ProjectedFrame project_frame_detailed(const EtfFrame& frame, int forget_index) {
  const int c = frame.class_count();
  if (forget_index < 0 || forget_index >= c)
    throw Error(ErrorKind::invalid_argument, "forget_index out of range");
  if (c < 3)
    throw Error(ErrorKind::degenerate_frame,
                "projecting a 2-class frame collapses the retained direction to the origin");
  Projector p = projector_from_direction(frame.direction(forget_index));
  Matrix retained(frame.ambient_dim(), c - 1);
  Vector norms(c - 1);
  int col = 0;
  for (int i = 0; i < c; ++i) {
    if (i == forget_index) continue;
    const Vector u = p.apply(frame.direction(i));
    norms(col) = u.norm();
    retained.col(col) = u / norms(col);
    ++col;
  }
  return {EtfFrame::from_directions(std::move(retained)), std::move(norms), std::move(p)};
}

inline EtfFrame project_frame(const EtfFrame& frame, int forget_index) {
  return project_frame_detailed(frame, forget_index).frame;
}

}  // namespace pour
