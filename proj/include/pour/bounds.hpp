#pragma once

#include "pour/toy_model.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace pour {

enum class KernelKind { linear, gaussian };

/// Kernel choice for MMD. A gaussian kernel without an explicit bandwidth
/// uses the median pairwise distance of the pooled sample.
struct Kernel {
  KernelKind kind = KernelKind::gaussian;
  std::optional<double> bandwidth;

  static Kernel linear() { return {KernelKind::linear, std::nullopt}; }
  static Kernel gaussian(std::optional<double> bandwidth = std::nullopt) {
    return {KernelKind::gaussian, bandwidth};
  }
};

namespace detail {

inline Matrix kernel_matrix(const Matrix& a, const Matrix& b, KernelKind kind, double bandwidth) {
  Matrix k = a * b.transpose();
  if (kind == KernelKind::linear) return k;
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      k(i, j) = std::exp(scale * std::max(0.0, na(i) + nb(j) - 2.0 * k(i, j)));
  return k;
}

}  // namespace detail

/// Median of all pairwise Euclidean distances among the rows of `pooled`.
/// Falls back to 1 when the median is zero (all rows identical).
inline double median_heuristic(const Matrix& pooled) {
  std::vector<double> dist;
  const Eigen::Index n = pooled.rows();
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dist.push_back((pooled.row(i) - pooled.row(j)).norm());
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

inline double resolve_bandwidth(const Kernel& kernel, const Matrix& x, const Matrix& y) {
  if (kernel.kind == KernelKind::linear) return 1.0;
  if (kernel.bandwidth) {
    if (!(*kernel.bandwidth > 0.0)) throw Error(ErrorKind::invalid_argument, "bandwidth must be > 0");
    return *kernel.bandwidth;
  }
  Matrix pooled(x.rows() + y.rows(), x.cols());
  pooled << x, y;
  return median_heuristic(pooled);
}

/// Distance between the kernel mean embeddings of two weighted empirical
/// measures (weights need not be uniform; each side should sum to one).
inline double mmd_weighted(const Matrix& x, const Vector& wx, const Matrix& y, const Vector& wy,
                           KernelKind kind, double bandwidth) {
  if (kind == KernelKind::gaussian && !(bandwidth > 0.0))
    throw Error(ErrorKind::invalid_argument, "bandwidth must be > 0");
  const double xx = wx.dot(detail::kernel_matrix(x, x, kind, bandwidth) * wx);
  const double yy = wy.dot(detail::kernel_matrix(y, y, kind, bandwidth) * wy);
  const double xy = wx.dot(detail::kernel_matrix(x, y, kind, bandwidth) * wy);
  return std::sqrt(std::max(0.0, xx + yy - 2.0 * xy));
}

/// Biased (V-statistic) MMD, square-rooted.
inline double mmd(const Matrix& x, const Matrix& y, const Kernel& kernel) {
  if (x.rows() < 2 || y.rows() < 2) throw Error(ErrorKind::insufficient_data, "MMD needs n >= 2 per side");
  if (x.cols() != y.cols()) throw Error(ErrorKind::dimension_mismatch, "MMD sample dims differ");
  const double bw = resolve_bandwidth(kernel, x, y);
  const Vector wx = Vector::Constant(x.rows(), 1.0 / static_cast<double>(x.rows()));
  const Vector wy = Vector::Constant(y.rows(), 1.0 / static_cast<double>(y.rows()));
  return mmd_weighted(x, wx, y, wy, kernel.kind, bw);
}

struct GaussianComponent {
  Vector mean;
  double scale = 0.0;  // isotropic standard deviation
};

/// Two-component mixture: weight_alpha on the forgotten-class component.
struct MixtureSpec {
  GaussianComponent component_u;
  GaussianComponent component_not_u;
  double weight_alpha = 0.5;

  void validate() const {
    if (!(weight_alpha >= 0.0 && weight_alpha <= 1.0))
      throw Error(ErrorKind::invalid_argument, "weight_alpha must lie in [0, 1]");
    if (component_u.mean.size() != component_not_u.mean.size())
      throw Error(ErrorKind::dimension_mismatch, "component means differ in dimension");
    if (component_u.scale < 0.0 || component_not_u.scale < 0.0)
      throw Error(ErrorKind::invalid_argument, "component scale must be >= 0");
  }
};

/// Averages over repetitions of the three-term sandwich
///   |beta K_u - (1-beta) K_nu| - |alpha-beta| delta_c
///     <= K(P_z, Q_z) <=
///   |alpha-beta| delta_c + beta K_u + (1-beta) K_nu
/// with K_u = K(P_u, Q_u), K_nu = K(P_not_u, Q_not_u) and delta_c = K(P_u, P_not_u).
struct BoundTriple {
  double lower = 0.0;
  double middle = 0.0;
  double upper = 0.0;
  double delta_c = 0.0;            // P-side separation, used in the bound
  double delta_c_reference = 0.0;  // Q-side separation, reported only
  double k_u = 0.0;
  double k_not_u = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double estimator_std = 0.0;      // sample std of `middle` across repetitions
  int repetitions = 0;

  bool ordered() const { return lower <= upper; }
  bool sandwiched(double slack_sigmas = 3.0) const {
    return middle >= lower - slack_sigmas * estimator_std &&
           middle <= upper + slack_sigmas * estimator_std;
  }
};

namespace detail {

inline Matrix sample_component(const GaussianComponent& c, int n, Rng& rng) {
  Matrix out(n, c.mean.size());
  for (int r = 0; r < n; ++r)
    for (Eigen::Index j = 0; j < c.mean.size(); ++j) out(r, j) = c.mean(j) + c.scale * rng.normal();
  return out;
}

}  // namespace detail

/// Monte-Carlo check of the mixture decomposition bound.
///
/// Each repetition draws `samples_per_component` points from each of the four
/// components. The mixtures P_z and Q_z are the weighted empirical measures
/// alpha * P_u + (1 - alpha) * P_not_u (resp. beta, Q) over those same points,
/// and all five discrepancies share one kernel (a median-heuristic bandwidth
/// is fixed from the first repetition's pooled sample).
inline BoundTriple verify_decomposition_bound(const MixtureSpec& p_spec, const MixtureSpec& q_spec,
                                              int samples_per_component, const Kernel& kernel,
                                              std::uint64_t seed, int repetitions = 10) {
  p_spec.validate();
  q_spec.validate();
  if (p_spec.component_u.mean.size() != q_spec.component_u.mean.size())
    throw Error(ErrorKind::dimension_mismatch, "P and Q live in different dimensions");
  if (samples_per_component < 2) throw Error(ErrorKind::insufficient_data, "need >= 2 samples per component");
  if (repetitions < 2) throw Error(ErrorKind::invalid_argument, "need >= 2 repetitions");

  const double a = p_spec.weight_alpha;
  const double b = q_spec.weight_alpha;
  const int n = samples_per_component;
  const Vector uniform = Vector::Constant(n, 1.0 / n);
  Vector wp(2 * n), wq(2 * n);
  wp << Vector::Constant(n, a / n), Vector::Constant(n, (1.0 - a) / n);
  wq << Vector::Constant(n, b / n), Vector::Constant(n, (1.0 - b) / n);

  std::optional<double> bandwidth = kernel.kind == KernelKind::linear ? std::optional<double>(1.0)
                                                                       : kernel.bandwidth;
  if (bandwidth && !(*bandwidth > 0.0)) throw Error(ErrorKind::invalid_argument, "bandwidth must be > 0");

  BoundTriple out;
  out.alpha = a;
  out.beta = b;
  out.repetitions = repetitions;
  std::vector<double> middles;
  for (int rep = 0; rep < repetitions; ++rep) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(rep)));
    const Matrix pu = detail::sample_component(p_spec.component_u, n, rng);
    const Matrix pn = detail::sample_component(p_spec.component_not_u, n, rng);
    const Matrix qu = detail::sample_component(q_spec.component_u, n, rng);
    const Matrix qn = detail::sample_component(q_spec.component_not_u, n, rng);
    Matrix pz(2 * n, pu.cols()), qz(2 * n, pu.cols());
    pz << pu, pn;
    qz << qu, qn;
    if (!bandwidth) {
      Matrix pooled(4 * n, pu.cols());
      pooled << pz, qz;
      bandwidth = median_heuristic(pooled);
    }
    const double bw = *bandwidth;
    const auto k = [&](const Matrix& x, const Matrix& y) {
      return mmd_weighted(x, uniform, y, uniform, kernel.kind, bw);
    };
    const double k_u = k(pu, qu);
    const double k_nu = k(pn, qn);
    const double delta = k(pu, pn);
    const double delta_ref = k(qu, qn);
    const double middle = mmd_weighted(pz, wp, qz, wq, kernel.kind, bw);
    const double shift = std::abs(a - b) * delta;
    out.lower += std::abs(b * k_u - (1.0 - b) * k_nu) - shift;
    out.upper += shift + b * k_u + (1.0 - b) * k_nu;
    out.middle += middle;
    out.delta_c += delta;
    out.delta_c_reference += delta_ref;
    out.k_u += k_u;
    out.k_not_u += k_nu;
    middles.push_back(middle);
  }
  const double inv = 1.0 / repetitions;
  for (double* field : {&out.lower, &out.middle, &out.upper, &out.delta_c, &out.delta_c_reference,
                        &out.k_u, &out.k_not_u})
    *field *= inv;
  double ss = 0.0;
  for (double m : middles) ss += (m - out.middle) * (m - out.middle);
  out.estimator_std = std::sqrt(ss / (repetitions - 1));
  return out;
}

/// Random (P, Q) mixture pair for property trials: dimension 1..max_dim,
/// priors uniform on [0, 1], means N(0, 2^2 I), scales uniform on [0.05, 1.5].
inline std::pair<MixtureSpec, MixtureSpec> random_mixture_pair(Rng& rng, int max_dim = 8) {
  const auto dim = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(max_dim)));
  const auto component = [&] {
    GaussianComponent c;
    c.mean = Vector(dim);
    for (Eigen::Index j = 0; j < dim; ++j) c.mean(j) = 2.0 * rng.normal();
    c.scale = 0.05 + 1.45 * rng.uniform();
    return c;
  };
  MixtureSpec p{component(), component(), rng.uniform()};
  MixtureSpec q{component(), component(), rng.uniform()};
  return {p, q};
}

struct AlphaPoint {
  int step = 0;
  double alpha = 0.0;  // fraction of forget samples still predicted as the forgotten class
  double k = 0.0;      // MMD between current forget features and the reference features
};

struct AlphaSweep {
  std::vector<AlphaPoint> points;
  bool alpha_non_increasing = true;
};

/// Tracks the forgetting coefficient and K along a recorded unlearning run.
inline AlphaSweep alpha_sweep(const std::vector<Snapshot>& trajectory, const FeatureMatrix& forget_set,
                              int forget_class, const Matrix& reference_features, const Kernel& kernel) {
  AlphaSweep sweep;
  for (const Snapshot& snap : trajectory) {
    const std::vector<int> pred = predict(snap.model, forget_set.rows);
    const auto hits = std::count(pred.begin(), pred.end(), forget_class);
    AlphaPoint point;
    point.step = snap.step;
    point.alpha = pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
    point.k = mmd(forward_features(snap.model, forget_set.rows), reference_features, kernel);
    if (!sweep.points.empty() && point.alpha > sweep.points.back().alpha) sweep.alpha_non_increasing = false;
    sweep.points.push_back(point);
  }
  return sweep;
}

}  // namespace pour
