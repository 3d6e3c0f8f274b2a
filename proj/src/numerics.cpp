#include "mtlb/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtlb/errors.hpp"

namespace mtlb {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::derive_child(std::string_view label) const {
  return Rng(splitmix64(seed_ ^ splitmix64(fnv1a64(label))));
}

Rng Rng::derive_child(std::string_view prefix, std::uint64_t index) const {
  std::string label(prefix);
  label += ':';
  label += std::to_string(index);
  return derive_child(label);
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

OrthonormalBasis::OrthonormalBasis(Mat columns) : mat_(std::move(columns)) {
  if (!mat_.allFinite()) throw InvalidArgument("OrthonormalBasis: non-finite entries");
  const Mat gram = mat_.transpose() * mat_;
  const Mat eye = Mat::Identity(mat_.cols(), mat_.cols());
  if (mat_.cols() > mat_.rows() || (gram - eye).cwiseAbs().maxCoeff() > kTolerance) {
    throw InvalidArgument("OrthonormalBasis: columns are not orthonormal");
  }
}

std::pair<OrthonormalBasis, Mat> OrthonormalBasis::from_qr(const Mat& m) {
  const Eigen::Index d = m.rows();
  const Eigen::Index k = m.cols();
  if (k > d) throw InvalidArgument("from_qr: more columns than rows");
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ() * Mat::Identity(d, k);
  Mat r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return {OrthonormalBasis(std::move(q), Trusted{}), std::move(r)};
}

Vec sample_sphere(Eigen::Index dim, double radius, Rng& rng) {
  if (dim < 1) throw InvalidArgument("sample_sphere: dim must be >= 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("sample_sphere: radius must be positive");
  }
  Vec z(dim);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < dim; ++i) z[i] = rng.normal();
    norm = z.norm();
  } while (norm == 0.0);
  return z * (radius / norm);
}

Vec sample_gaussian(const Vec& mean, const Mat& cov_chol, Rng& rng) {
  const Eigen::Index d = mean.size();
  if (cov_chol.rows() != d || cov_chol.cols() != d) {
    throw InvalidArgument("sample_gaussian: cov_chol must be " + std::to_string(d) + "x" +
                          std::to_string(d));
  }
  Vec z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
  return mean + cov_chol.triangularView<Eigen::Lower>() * z;
}

OrthonormalBasis sample_haar_orthonormal(Eigen::Index d, Eigen::Index k, Rng& rng) {
  if (k < 1 || k > d) throw InvalidArgument("sample_haar_orthonormal: need 1 <= k <= d");
  Mat g(d, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.normal();
  auto [basis, r] = OrthonormalBasis::from_qr(g);
  // Fixing the sign of diag(R) makes the Q factor exactly Haar distributed.
  Mat q = basis.mat();
  for (Eigen::Index j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return OrthonormalBasis(std::move(q));
}

Vec least_squares(const Mat& X, const Vec& y, double ridge) {
  if (X.rows() < 1 || X.cols() < 1) throw InvalidArgument("least_squares: empty design");
  if (X.rows() != y.size()) throw InvalidArgument("least_squares: row count mismatch");
  if (!X.allFinite() || !y.allFinite() || !std::isfinite(ridge) || ridge < 0.0) {
    throw InvalidArgument("least_squares: non-finite input or negative ridge");
  }
  if (X.rows() > 2 * (X.cols() + 1)) {
    // Tall systems: a blocked QR down to p + 1 rows keeps every residual norm
    // and is much cheaper than pivoting over all rows.
    const auto [rx, ry] = compress_system(X, y);
    return least_squares(rx, ry, ridge);
  }
  if (ridge == 0.0) return Eigen::CompleteOrthogonalDecomposition<Mat>(X).solve(y);

  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < p) {
    // Wide systems: w = X^T a with (X X^T + ridge I) a = y. The QR of
    // [X^T; sqrt(ridge) I] has R^T R = X X^T + ridge I and only n columns.
    Mat aug(p + n, n);
    aug.topRows(p) = X.transpose();
    aug.bottomRows(n) = std::sqrt(ridge) * Mat::Identity(n, n);
    Eigen::HouseholderQR<Mat> qr(aug);
    const auto R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Vec a = R.transpose().solve(y);
    R.solveInPlace(a);
    return X.transpose() * a;
  }
  Mat aug(n + p, p);
  aug.topRows(n) = X;
  aug.bottomRows(p) = std::sqrt(ridge) * Mat::Identity(p, p);
  Vec rhs = Vec::Zero(n + p);
  rhs.head(n) = y;
  return Eigen::CompleteOrthogonalDecomposition<Mat>(aug).solve(rhs);
}

EigenPairs top_k_eig(const Mat& sym, Eigen::Index k) {
  const Eigen::Index d = sym.rows();
  if (sym.cols() != d) throw InvalidArgument("top_k_eig: matrix is not square");
  if (k < 1 || k > d) throw InvalidArgument("top_k_eig: need 1 <= k <= d");
  if (!sym.allFinite()) throw InvalidArgument("top_k_eig: non-finite entries");
  const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw InvalidArgument("top_k_eig: matrix is not symmetric");
  }
  const Mat s = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalFailure("top_k_eig: eigensolver failed");
  // Eigen sorts ascending.
  Mat vecs(d, k);
  Vec vals(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    vecs.col(i) = eig.eigenvectors().col(d - 1 - i);
    vals[i] = eig.eigenvalues()[d - 1 - i];
  }
  return {OrthonormalBasis(std::move(vecs)), std::move(vals)};
}

double subspace_distance(const OrthonormalBasis& a, const OrthonormalBasis& b) {
  if (a.dim() != b.dim() || a.rank() != b.rank()) {
    throw InvalidArgument("subspace_distance: bases have different shapes");
  }
  const Mat residual = b.mat() - a.mat() * (a.mat().transpose() * b.mat());
  Eigen::JacobiSVD<Mat> svd(residual);
  return std::clamp(svd.singularValues()[0], 0.0, 1.0);
}

std::pair<Mat, Vec> compress_system(const Mat& X, const Vec& y) {
  if (X.rows() != y.size()) throw InvalidArgument("compress_system: row count mismatch");
  const Eigen::Index p = X.cols();
  if (X.rows() <= p + 1) return {X, y};
  Mat aug(X.rows(), p + 1);
  aug.leftCols(p) = X;
  aug.col(p) = y;
  Eigen::HouseholderQR<Mat> qr(aug);
  Mat r = qr.matrixQR().topRows(p + 1).triangularView<Eigen::Upper>();
  return {r.leftCols(p), r.col(p)};
}

IncrementalLeastSquares::IncrementalLeastSquares(Eigen::Index cols)
    : cols_(cols), X_(4 * (cols + 1), cols), y_(4 * (cols + 1)) {
  if (cols < 1) throw InvalidArgument("IncrementalLeastSquares: need at least one column");
}

void IncrementalLeastSquares::add_row(const Vec& x, double y) {
  if (x.size() != cols_) throw InvalidArgument("IncrementalLeastSquares: row width mismatch");
  if (used_ == X_.rows()) compact();
  X_.row(used_) = x.transpose();
  y_[used_] = y;
  ++used_;
  ++added_;
}

void IncrementalLeastSquares::compact() {
  auto [xc, yc] = compress_system(X_.topRows(used_), y_.head(used_));
  used_ = xc.rows();
  X_.topRows(used_) = xc;
  y_.head(used_) = yc;
}

Vec IncrementalLeastSquares::solve(double ridge) {
  if (used_ == 0) return Vec::Zero(cols_);
  return least_squares(X_.topRows(used_), y_.head(used_), ridge);
}

}  // namespace mtlb
