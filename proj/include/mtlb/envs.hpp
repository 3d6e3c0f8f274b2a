#pragma once

// Bandit environments. A HiddenInstance is the environment's secret: the
// harness holds it, policies only ever see RoundContexts and Feedback.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mtlb/idx.hpp"
#include "mtlb/numerics.hpp"

namespace mtlb {

enum class Setting { finite, infinite, mnist };

std::string_view to_string(Setting s);

struct FiniteKind {
  std::size_t num_arms = 0;
  std::vector<Mat> cov_chol;  // per task, lower triangular
};

struct InfiniteKind {
  double lambda0 = 1.0;
  /// Per-task ellipsoid {x : x^T Q^{-1} x <= 1}. Shared so rounds can hand
  /// the descriptor to policies without copying.
  std::shared_ptr<const std::vector<Mat>> ellipsoids;
  std::vector<Eigen::LLT<Mat>> factors;
};

/// Images grouped by digit, stored as raw bytes; one row of `pixels[i]` per image.
struct DigitPools {
  Eigen::Index pixels_per_image = 0;
  std::vector<Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> pixels;
  /// Optional projection applied after scaling to [0, 1]: x -> P^T (x - mean).
  Mat projection;
  Vec mean;

  Eigen::Index feature_dim() const {
    return projection.size() ? projection.cols() : pixels_per_image;
  }
  Vec feature(int digit, Eigen::Index row) const;
};

struct MnistKind {
  std::shared_ptr<const DigitPools> pools;
  std::vector<std::pair<int, int>> task_pairs;  // (i, j) with i < j
};

struct HiddenInstance {
  OrthonormalBasis basis;  // B, d x k (empty for mnist)
  Mat weights;  // W, k x T (empty for mnist)
  Mat theta;  // B * W, d x T (empty for mnist)
  std::variant<FiniteKind, InfiniteKind, MnistKind> kind;
  /// Scales the N(0,1) reward noise; tests set it to 0.
  double noise_scale = 1.0;

  Setting setting() const;
  Eigen::Index dim() const;
  std::size_t num_tasks() const;
};

struct FiniteOptions {
  /// Sigma_t = cov_scale * I / d.
  double cov_scale = 1.0;
};

HiddenInstance gen_finite(Eigen::Index d, Eigen::Index k, std::size_t T, std::size_t K,
                          std::uint64_t seed, const FiniteOptions& opts = {});

struct InfiniteOptions {
  double nu = 0.1;
  int max_attempts = 1000;
};

/// Q_t = lambda0 * I for every task; W is redrawn until
/// lambda_min(W W^T / T) >= nu / k.
HiddenInstance gen_infinite(Eigen::Index d, Eigen::Index k, std::size_t T, double lambda0,
                            std::uint64_t seed, const InfiniteOptions& opts = {});

/// Checks the structural invariants: theta = B W (1e-12); finite covariances
/// with spectrum in [0.25/d, 4/d]; infinite ellipsoids with
/// lambda_min(Q_t) >= lambda0, |w_t| >= omega and lambda_min(W W^T / T) >= nu/k.
/// Throws InvalidArgument naming the first violation.
void validate_instance(const HiddenInstance& inst, double nu = 0.1, double omega = 0.5);

/// What a policy sees in one round.
struct RoundContexts {
  std::size_t round = 0;
  /// finite / mnist: per task a K x d matrix, one offered action per row.
  std::vector<Mat> arms;
  /// infinite: per task ellipsoid matrix Q_t.
  std::shared_ptr<const std::vector<Mat>> ellipsoids;
};

/// A drawn round: the public contexts plus environment-only bookkeeping.
struct Round {
  RoundContexts contexts;
  /// mnist: digit of each offered image, per task.
  std::vector<std::vector<int>> labels;
};

inline constexpr std::size_t kNoArm = std::numeric_limits<std::size_t>::max();

/// One task's action: an arm index for finite/mnist, a vector for infinite.
struct Action {
  std::size_t arm = kNoArm;
  Vec vector;
};

struct Feedback {
  std::vector<double> rewards;
};

Round draw_round(const HiddenInstance& inst, std::size_t n, Rng& rng);

/// Throws ConstraintViolation for an arm outside the offered set or an
/// infinite-setting action outside the ellipsoid (beyond 1e-9).
Feedback pull(const HiddenInstance& inst, const Round& round, const std::vector<Action>& actions,
              Rng& rng);

Vec instant_regret(const HiddenInstance& inst, const Round& round,
                   const std::vector<Action>& actions);

struct EllipsoidArgmax {
  Vec action;
  double value = 0.0;
  bool degenerate = false;  // theta == 0
};

/// max <a, theta> over {a : a^T Q^{-1} a <= 1}: a = Q theta / sqrt(theta^T Q theta).
EllipsoidArgmax ellipsoid_argmax(const Vec& theta, const Mat& Q);

/// Tasks are all pairs (i, j), i < j, from `digits` in lexicographic order.
/// `pca_dim` > 0 projects the [0, 1]-scaled pixels onto the top principal
/// directions of the selected digits (estimated on at most 10^4 images
/// drawn with `seed`).
HiddenInstance build_mnist_tasks(const IdxData& images, const IdxData& labels,
                                 std::vector<int> digits, std::uint64_t seed,
                                 Eigen::Index pca_dim = 0);

}  // namespace mtlb
