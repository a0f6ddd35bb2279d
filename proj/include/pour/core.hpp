#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pour {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

/// Failure categories. Each maps onto one CLI exit code (see `exit_code`).
enum class ErrorKind {
  dimension_too_small,
  zero_vector,
  degenerate_frame,
  empty_class,
  degenerate_input,
  dimension_mismatch,
  length_mismatch,
  insufficient_data,
  non_finite_loss,
  invalid_argument,
  config,
  parse,
  io,
  checksum,
  shape_mismatch,
  protocol,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension_too_small: return "dimension-too-small";
    case ErrorKind::zero_vector: return "zero-vector";
    case ErrorKind::degenerate_frame: return "degenerate-frame";
    case ErrorKind::empty_class: return "empty-class";
    case ErrorKind::degenerate_input: return "degenerate-input";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::length_mismatch: return "length-mismatch";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::non_finite_loss: return "non-finite-loss";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::config: return "config";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
    case ErrorKind::checksum: return "checksum";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::protocol: return "protocol";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// 0 success, 2 config/validation, 3 numerical failure, 4 I/O.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::parse:
    case ErrorKind::dimension_too_small:
    case ErrorKind::invalid_argument:
      return 2;
    case ErrorKind::io:
    case ErrorKind::checksum:
    case ErrorKind::shape_mismatch:
      return 4;
    default:
      return 3;
  }
}

/// Seeded random source used everywhere in the library.
///
/// Uniforms come from std::mt19937_64 (fully specified by the standard) using
/// the top 53 bits of each draw. Normals use the Box-Muller transform on two
/// such uniforms, caching the second variate, so streams are reproducible
/// across standard libraries (std::normal_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Plain rejection sampling.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return draw % bound;
  }

  Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = scale * normal();
    return out;
  }

  /// splitmix64 finalizer, so nearby seeds give unrelated streams.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// Seed for an independent sub-stream identified by `stream`.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit FNV-1a. Used for checkpoint checksums and config hashes.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t state = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

inline std::string to_hex(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - peak).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Eigen::Index argmax_lowest(const Eigen::DenseBase<Derived>& values) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i)
    if (values(i) > values(best)) best = i;
  return best;
}

}  // namespace pour
