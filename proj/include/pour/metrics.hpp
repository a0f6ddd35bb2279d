#pragma once

#include "pour/synthetic_nc.hpp"

#include <algorithm>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

namespace pour {

namespace detail {

inline Matrix center_columns(const Matrix& x) {
  return x.rowwise() - x.colwise().mean();
}

}  // namespace detail

/// Linear CKA between two representations of the same n samples.
///
/// Each feature dimension is shifted to zero mean over the samples first. The
/// Frobenius products of the n x n Grams are evaluated through the identities
/// <XX^T, YY^T> = |X^T Y|^2 and |XX^T| = |X^T X|, which keeps the cost linear in n.
inline double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows())
    throw Error(ErrorKind::length_mismatch, "CKA inputs must have the same number of rows");
  if (x.rows() < 2) throw Error(ErrorKind::insufficient_data, "CKA needs at least two samples");
  const Matrix xc = detail::center_columns(x);
  const Matrix yc = detail::center_columns(y);
  const double norm_x = (xc.transpose() * xc).norm();
  const double norm_y = (yc.transpose() * yc).norm();
  if (norm_x < 1e-12 || norm_y < 1e-12)
    throw Error(ErrorKind::degenerate_input, "centered Gram is zero (constant features)");
  const double cross = (xc.transpose() * yc).squaredNorm();
  return cross / (norm_x * norm_y);
}

/// Harmonic mean of the forgetting indicator and retention alignment.
inline double rus(double phi_f, double cka_r) {
  const double denom = phi_f + cka_r;
  if (denom == 0.0) return 0.0;
  return 2.0 * phi_f * cka_r / denom;
}

/// (1 - drop_r) / (1 + acc_f). drop_r may be negative, so AUS can exceed 1.
inline double aus(double acc_r_unlearned, double acc_r_original, double acc_f_unlearned) {
  const double drop_r = acc_r_original - acc_r_unlearned;
  return (1.0 - drop_r) / (1.0 + acc_f_unlearned);
}

inline double accuracy(const std::vector<int>& predictions, const std::vector<int>& truth) {
  if (predictions.size() != truth.size())
    throw Error(ErrorKind::length_mismatch, "prediction and truth lengths differ");
  if (truth.empty()) throw Error(ErrorKind::insufficient_data, "accuracy of zero samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Classification- and representation-level results of one run. Entries that
/// were not computed (no reference model, POUR-P without projected CKA, ...)
/// stay empty and are rendered as "--" in reports.
struct MetricsReport {
  std::optional<double> acc_r, acc_f, acc_tr, acc_tf, aus, rmia;
  std::optional<double> cka_f_o, cka_r_o, rus_o;
  std::optional<double> cka_f_r, cka_r_r, rus_r;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Maps a batch of input rows to feature rows.
using FeatureSource = std::function<Matrix(const Matrix&)>;

/// Fills the CKA / RUS slots. `model_r` is the retrained reference; without
/// it the (r) entries stay empty.
inline MetricsReport rus_report(const FeatureSource& model_f, const FeatureSource& model_o,
                                const std::optional<FeatureSource>& model_r,
                                const FeatureMatrix& d_f, const FeatureMatrix& d_r,
                                MetricsReport report = {}) {
  const Matrix f_on_f = model_f(d_f.rows);
  const Matrix f_on_r = model_f(d_r.rows);
  report.cka_f_o = linear_cka(f_on_f, model_o(d_f.rows));
  report.cka_r_o = linear_cka(f_on_r, model_o(d_r.rows));
  const double phi_o = std::clamp(1.0 - *report.cka_f_o, 0.0, 1.0);
  report.rus_o = rus(phi_o, std::clamp(*report.cka_r_o, 0.0, 1.0));
  if (model_r) {
    report.cka_f_r = linear_cka(f_on_f, (*model_r)(d_f.rows));
    report.cka_r_r = linear_cka(f_on_r, (*model_r)(d_r.rows));
    report.rus_r = rus(std::clamp(*report.cka_f_r, 0.0, 1.0), std::clamp(*report.cka_r_r, 0.0, 1.0));
  }
  return report;
}

struct RmiaResult {
  double accuracy = 0.0;
  std::vector<double> fold_accuracies;
};

/// Fixed probe hyperparameters for the membership attack.
struct RmiaProbeConfig {
  double l2_penalty = 1e-3;
  int steps = 200;
  double step_size = 0.1;
};

/// Representation-level membership attack: a logistic linear probe tries to
/// tell `features_train` (label 1) from `features_test` (label 0).
///
/// Folds are stratified and deterministic (row i of each side goes to fold
/// i mod folds). Each fold standardizes features with its training-part
/// statistics and runs full-batch gradient descent from zero weights.
inline RmiaResult rmia_linear_probe_detailed(const Matrix& features_train, const Matrix& features_test,
                                             int folds, const RmiaProbeConfig& probe = {}) {
  if (folds < 2) throw Error(ErrorKind::invalid_argument, "folds must be >= 2");
  if (features_train.cols() != features_test.cols())
    throw Error(ErrorKind::dimension_mismatch, "train/test feature dims differ");
  if (features_train.rows() < folds || features_test.rows() < folds)
    throw Error(ErrorKind::insufficient_data, "a fold would be empty");

  const Eigen::Index p = features_train.cols();
  const Eigen::Index n_in = features_train.rows();
  const Eigen::Index n_out = features_test.rows();
  Matrix all(n_in + n_out, p);
  all << features_train, features_test;
  std::vector<int> fold_of(static_cast<std::size_t>(n_in + n_out));
  Vector target(n_in + n_out);
  for (Eigen::Index i = 0; i < n_in; ++i) {
    fold_of[static_cast<std::size_t>(i)] = static_cast<int>(i % folds);
    target(i) = 1.0;
  }
  for (Eigen::Index j = 0; j < n_out; ++j) {
    fold_of[static_cast<std::size_t>(n_in + j)] = static_cast<int>(j % folds);
    target(n_in + j) = 0.0;
  }

  RmiaResult result;
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<Eigen::Index> fit_idx, held_idx;
    for (std::size_t r = 0; r < fold_of.size(); ++r)
      (fold_of[r] == fold ? held_idx : fit_idx).push_back(static_cast<Eigen::Index>(r));
    Matrix fit(static_cast<Eigen::Index>(fit_idx.size()), p);
    Vector fit_y(fit.rows());
    for (std::size_t k = 0; k < fit_idx.size(); ++k) {
      fit.row(static_cast<Eigen::Index>(k)) = all.row(fit_idx[k]);
      fit_y(static_cast<Eigen::Index>(k)) = target(fit_idx[k]);
    }
    const Eigen::RowVectorXd mean = fit.colwise().mean();
    Eigen::RowVectorXd scale =
        ((fit.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index j = 0; j < p; ++j)
      if (scale(j) < 1e-12) scale(j) = 1.0;
    const Matrix z = (fit.rowwise() - mean).array().rowwise() / scale.array();

    Vector w = Vector::Zero(p);
    double b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(z.rows());
    for (int step = 0; step < probe.steps; ++step) {
      const Vector score = (z * w).array() + b;
      const Vector resid = (1.0 / (1.0 + (-score.array()).exp())).matrix() - fit_y;
      const Vector grad_w = inv_n * (z.transpose() * resid) + probe.l2_penalty * w;
      const double grad_b = inv_n * resid.sum();
      w -= probe.step_size * grad_w;
      b -= probe.step_size * grad_b;
    }

    std::size_t hits = 0;
    for (Eigen::Index r : held_idx) {
      const Eigen::RowVectorXd zr = (all.row(r) - mean).array() / scale.array();
      const double score = zr.dot(w.transpose()) + b;
      const double predicted = score >= 0.0 ? 1.0 : 0.0;
      hits += predicted == target(r);
    }
    result.fold_accuracies.push_back(static_cast<double>(hits) /
                                     static_cast<double>(held_idx.size()));
  }
  double sum = 0.0;
  for (double a : result.fold_accuracies) sum += a;
  result.accuracy = sum / folds;
  return result;
}

inline double rmia_linear_probe(const Matrix& features_train, const Matrix& features_test, int folds) {
  return rmia_linear_probe_detailed(features_train, features_test, folds).accuracy;
}

struct AngleStats {
  double mean_angle_deg = 0.0;
  double ideal_angle_deg = 0.0;
  std::vector<double> per_pair_angles;  // (0,1), (0,2), ..., (C-2,C-1)
};

/// Pairwise angles between classifier columns (head is p x C).
inline AngleStats weight_angle_stats(const Matrix& head) {
  const Eigen::Index c = head.cols();
  if (c < 2) throw Error(ErrorKind::invalid_argument, "need at least two head columns");
  Vector norms(c);
  for (Eigen::Index i = 0; i < c; ++i) {
    norms(i) = head.col(i).norm();
    if (norms(i) < 1e-12)
      throw Error(ErrorKind::zero_vector, "head column " + std::to_string(i) + " is zero");
  }
  constexpr double to_deg = 180.0 / std::numbers::pi;
  AngleStats stats;
  stats.ideal_angle_deg = std::acos(-1.0 / static_cast<double>(c - 1)) * to_deg;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < c; ++i)
    for (Eigen::Index j = i + 1; j < c; ++j) {
      const double cosine = std::clamp(head.col(i).dot(head.col(j)) / (norms(i) * norms(j)), -1.0, 1.0);
      stats.per_pair_angles.push_back(std::acos(cosine) * to_deg);
      sum += stats.per_pair_angles.back();
    }
  stats.mean_angle_deg = sum / static_cast<double>(stats.per_pair_angles.size());
  return stats;
}

}  // namespace pour
