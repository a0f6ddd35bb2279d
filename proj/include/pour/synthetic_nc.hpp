#pragma once

#include "pour/geometry.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace pour {

/// n x p feature rows with one class label per row. n == 0 is allowed and
/// denotes an empty split.
struct FeatureMatrix {
  Matrix rows;
  std::vector<int> labels;
  int class_count = 0;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
  bool empty() const { return rows.rows() == 0; }

  void validate() const {
    if (static_cast<Eigen::Index>(labels.size()) != rows.rows())
      throw Error(ErrorKind::length_mismatch, "label count differs from row count");
    if (class_count < 1) throw Error(ErrorKind::invalid_argument, "class_count must be >= 1");
    for (int label : labels)
      if (label < 0 || label >= class_count)
        throw Error(ErrorKind::invalid_argument,
                    "label " + std::to_string(label) + " outside [0, class_count)");
  }

  /// Rows selected by index, in the given order.
  FeatureMatrix select(const std::vector<Eigen::Index>& indices) const {
    FeatureMatrix out;
    out.class_count = class_count;
    out.rows.resize(static_cast<Eigen::Index>(indices.size()), rows.cols());
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      out.rows.row(static_cast<Eigen::Index>(k)) = rows.row(indices[k]);
      out.labels.push_back(labels[static_cast<std::size_t>(indices[k])]);
    }
    return out;
  }
};

struct NcGenConfig {
  EtfFrame frame;
  double sigma = 0.0;
  int samples_per_class = 1;
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian features around the ETF vertices.
///
/// Rows are class-major: the first `samples_per_class` rows belong to class 0,
/// and so on. Row i of class c is v_c + sigma * eps with eps drawn from
/// `Rng(seed)` in row-major order.
inline FeatureMatrix sample_nc_features(const NcGenConfig& config) {
  if (!(config.sigma >= 0.0)) throw Error(ErrorKind::invalid_argument, "sigma must be >= 0");
  if (config.samples_per_class < 1)
    throw Error(ErrorKind::invalid_argument, "samples_per_class must be >= 1");
  const int c = config.frame.class_count();
  const int d = config.frame.ambient_dim();
  const Eigen::Index n = static_cast<Eigen::Index>(c) * config.samples_per_class;
  FeatureMatrix out;
  out.class_count = c;
  out.rows.resize(n, d);
  out.labels.resize(static_cast<std::size_t>(n));
  Rng rng(config.seed);
  Eigen::Index r = 0;
  for (int cls = 0; cls < c; ++cls) {
    const Vector mean = config.frame.direction(cls);
    for (int k = 0; k < config.samples_per_class; ++k, ++r) {
      for (int j = 0; j < d; ++j) out.rows(r, j) = mean(j) + config.sigma * rng.normal();
      out.labels[static_cast<std::size_t>(r)] = cls;
    }
  }
  return out;
}

inline Vector empirical_class_mean(const FeatureMatrix& features, int class_id) {
  Vector sum = Vector::Zero(features.dim());
  Eigen::Index count = 0;
  for (Eigen::Index r = 0; r < features.size(); ++r) {
    if (features.labels[static_cast<std::size_t>(r)] != class_id) continue;
    sum += features.rows.row(r).transpose();
    ++count;
  }
  if (count == 0)
    throw Error(ErrorKind::empty_class, "no rows labeled " + std::to_string(class_id));
  return sum / static_cast<double>(count);
}

/// Splits into (rows labeled forget_class, all other rows), order preserved.
inline std::pair<FeatureMatrix, FeatureMatrix> split_forget_retain(const FeatureMatrix& features,
                                                                   int forget_class) {
  if (forget_class < 0 || forget_class >= features.class_count)
    throw Error(ErrorKind::invalid_argument, "forget_class out of range");
  std::vector<Eigen::Index> forget;
  std::vector<Eigen::Index> retain;
  for (Eigen::Index r = 0; r < features.size(); ++r)
    (features.labels[static_cast<std::size_t>(r)] == forget_class ? forget : retain).push_back(r);
  return {features.select(forget), features.select(retain)};
}

}  // namespace pour
