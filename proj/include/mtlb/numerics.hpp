#pragma once

// Random sampling and dense linear algebra shared by every other module.
//
// All samplers are pure functions of their arguments plus the Rng handed in;
// nothing here owns global state.

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

namespace mtlb {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Seeded 64-bit generator with label-keyed child streams.
///
/// A child's seed depends only on the parent's seed and the label, never on
/// how many numbers the parent has produced, so `derive_child("task:3")`
/// names the same stream no matter the execution order. The child seed is
/// `splitmix64(seed ^ splitmix64(fnv1a64(label)))`; the stream itself is
/// `std::mt19937_64`.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  Rng derive_child(std::string_view label) const;
  /// Shorthand for `derive_child("<prefix>:<index>")`.
  Rng derive_child(std::string_view prefix, std::uint64_t index) const;

  std::uint64_t operator()() { return engine_(); }
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  double normal();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on {0, ..., n - 1}; n must be positive.
  std::size_t uniform_index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

/// A d x k matrix whose columns are orthonormal (to 1e-10).
class OrthonormalBasis {
 public:
  static constexpr double kTolerance = 1e-10;

  OrthonormalBasis() = default;
  /// Throws InvalidArgument when the columns are not orthonormal.
  explicit OrthonormalBasis(Mat columns);

  const Mat& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }
  Eigen::Index rank() const { return mat_.cols(); }

  /// Orthonormal factor of a thin QR; the product with the returned R
  /// reproduces `m` exactly up to rounding. Works for rank-deficient input.
  static std::pair<OrthonormalBasis, Mat> from_qr(const Mat& m);

 private:
  struct Trusted {};
  OrthonormalBasis(Mat columns, Trusted) : mat_(std::move(columns)) {}

  Mat mat_;
};

Vec sample_sphere(Eigen::Index dim, double radius, Rng& rng);
Vec sample_gaussian(const Vec& mean, const Mat& cov_chol, Rng& rng);
OrthonormalBasis sample_haar_orthonormal(Eigen::Index d, Eigen::Index k, Rng& rng);

/// argmin_w |Xw - y|^2 + ridge |w|^2, via complete orthogonal decomposition.
/// With ridge == 0 and rank-deficient X this is the minimum-norm solution.
Vec least_squares(const Mat& X, const Vec& y, double ridge = 0.0);

struct EigenPairs {
  OrthonormalBasis basis;
  Vec values;  // descending
};

EigenPairs top_k_eig(const Mat& sym, Eigen::Index k);

/// Sine of the largest principal angle between the two spans.
double subspace_distance(const OrthonormalBasis& a, const OrthonormalBasis& b);

/// Replace the system (X, y) by (R_x, r) with at most p + 1 rows such that
/// |Xw - y|^2 = |R_x w - r|^2 for every w.
std::pair<Mat, Vec> compress_system(const Mat& X, const Vec& y);

/// Least squares over a growing row set, kept in compressed form so memory
/// and refit cost stay O(p^2) regardless of how many rows have been added.
class IncrementalLeastSquares {
 public:
  explicit IncrementalLeastSquares(Eigen::Index cols);

  void add_row(const Vec& x, double y);
  Vec solve(double ridge = 0.0);
  std::size_t rows_added() const { return added_; }
  Eigen::Index cols() const { return cols_; }

 private:
  void compact();

  Eigen::Index cols_;
  Mat X_;
  Vec y_;
  Eigen::Index used_ = 0;
  std::size_t added_ = 0;
};

}  // namespace mtlb
