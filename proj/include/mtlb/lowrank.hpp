#pragma once

#include <cstddef>
#include <vector>

#include "mtlb/numerics.hpp"

namespace mtlb {

/// Played contexts and observed rewards of one task.
struct TaskSamples {
  Mat design;  // n x d, one played context per row
  Vec rewards;  // n
};

/// Samples from T tasks sharing an ambient dimension d.
struct PooledBatch {
  Eigen::Index dim = 0;
  std::vector<TaskSamples> tasks;

  PooledBatch() = default;
  PooledBatch(Eigen::Index d, std::size_t num_tasks);

  std::size_t num_tasks() const { return tasks.size(); }
  std::size_t total_samples() const;
  /// Throws InvalidArgument on mismatched shapes or non-finite entries.
  void validate() const;
};

/// Estimated feature extractor (d x k, orthonormal) and per-task weights (k x T).
struct FactorPair {
  OrthonormalBasis basis;
  Mat weights;
};

struct FitReport {
  double loss = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective after every iteration of the winning restart, starting with
  /// the value at its initialization.
  std::vector<double> loss_history;
};

struct AlsOptions {
  int max_iters = 200;
  double tol = 1e-9;
  int restarts = 4;
  /// Applied to the inner solves only when the pooled system is
  /// under-determined (fewer samples than d*k + k*T).
  double underdetermined_ridge = 1e-8;
};

struct FitResult {
  FactorPair factors;
  FitReport report;
};

/// Sum over tasks and samples of (x^T B w_t - r)^2.
double factored_loss(const PooledBatch& batch, const Mat& B, const Mat& W);

/// Minimizes factored_loss over B (d x k) and W (k x T) by alternating least
/// squares, keeping the best of `opts.restarts` Haar-random starts. Restart i
/// draws its start from `rng.derive_child("restart", i)`.
FitResult fit_factored_erm(const PooledBatch& batch, Eigen::Index k, const Rng& rng,
                           const AlsOptions& opts = {});

struct BruteForceResult {
  FactorPair factors;
  double loss = 0.0;
};

/// Exhaustive search over unit directions for k = 1 and d <= 3. For d = 2 the
/// directions are `grid` angles in [0, pi); for d = 3 a ceil(sqrt(grid))^2
/// polar/azimuth lattice. Coarser lattices are subsets of finer ones when the
/// lattice sizes divide, so the loss is monotone along 100, 10^4, ...
BruteForceResult brute_force_factored_erm(const PooledBatch& batch, Eigen::Index k,
                                          std::size_t grid);

/// B_hat * W_hat; column t is the estimate of theta_t.
Mat coefficients(const FactorPair& fp);

}  // namespace mtlb
