#pragma once

// Sequential decision policies. Policies see only what a player may see: the
// public problem shape, each round's RoundContexts, and the Feedback for
// their own actions. Nothing here can reach a HiddenInstance.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "mtlb/envs.hpp"
#include "mtlb/lowrank.hpp"
#include "mtlb/numerics.hpp"

namespace mtlb {

/// Public description of the problem a policy is asked to play.
struct ProblemShape {
  Eigen::Index d = 0;
  Eigen::Index k = 0;
  std::size_t T = 0;
  std::size_t N = 0;
  double lambda0 = 1.0;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string_view name() const = 0;
  virtual std::vector<Action> choose(const RoundContexts& contexts) = 0;
  virtual void observe(const RoundContexts& contexts, const std::vector<Action>& actions,
                       const Feedback& feedback) = 0;
};

/// Refit grid 0 = G_0 < G_1 < ... < G_M = N.
struct EpochSchedule {
  std::size_t horizon = 0;
  std::size_t epochs = 0;
  std::vector<std::size_t> bounds;
};

/// M = ceil(log2 log2 N), G_m = floor(N^(1 - 2^-m)) for 0 < m < M.
EpochSchedule epoch_schedule(std::size_t N);

/// Per task, the index of the offered context with the largest inner product
/// with the matching column of `theta_hat`; ties go to the lowest index.
std::vector<std::size_t> greedy_choose(const Mat& theta_hat, const RoundContexts& contexts);

/// Shared round loop of the two epoch-greedy policies: act greedily on the
/// previous epoch's estimate, buffer the current epoch, refit at each G_m.
class EpochGreedy : public Policy {
 public:
  EpochGreedy(const ProblemShape& shape);

  std::vector<Action> choose(const RoundContexts& contexts) override;
  void observe(const RoundContexts& contexts, const std::vector<Action>& actions,
               const Feedback& feedback) override;

  const Mat& theta_hat() const { return theta_hat_; }
  const EpochSchedule& schedule() const { return schedule_; }
  /// 1-based index of the epoch currently being played (M + 1 once done).
  std::size_t epoch() const { return epoch_; }
  std::size_t refits() const { return refits_; }
  std::size_t buffered_samples() const;
  /// Sample count of the most recent refit.
  std::size_t last_refit_size() const { return last_refit_size_; }
  /// In-sample sum of squared residuals of the most recent refit.
  double last_refit_loss() const { return last_refit_loss_; }

 protected:
  /// Returns the new d x T estimate from one epoch of data.
  virtual Mat refit(const PooledBatch& batch) = 0;

  ProblemShape shape_;

 private:
  PooledBatch take_buffer();

  EpochSchedule schedule_;
  Mat theta_hat_;
  std::size_t epoch_ = 1;
  std::size_t refits_ = 0;
  std::size_t last_refit_size_ = 0;
  double last_refit_loss_ = 0.0;
  std::vector<std::vector<double>> rows_;
  std::vector<std::vector<double>> rewards_;
};

/// Multi-task greedy with a shared rank-k representation refit per epoch.
class MLinGreedy final : public EpochGreedy {
 public:
  MLinGreedy(const ProblemShape& shape, Rng rng, AlsOptions als = {});

  std::string_view name() const override { return "mlin_greedy"; }
  const std::optional<FitReport>& last_fit() const { return last_fit_; }

 protected:
  Mat refit(const PooledBatch& batch) override;

 private:
  Rng rng_;
  AlsOptions als_;
  std::optional<FitReport> last_fit_;
};

/// Baseline: the same schedule, per-task minimum-norm least squares.
class IndependentGreedy final : public EpochGreedy {
 public:
  explicit IndependentGreedy(const ProblemShape& shape);

  std::string_view name() const override { return "independent_greedy"; }

 protected:
  Mat refit(const PooledBatch& batch) override;
};

struct E2tcBudgets {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

/// N1 = max(1, floor(c1 d^exponent k sqrt(N/T))), N2 = k ceil(c2 k sqrt(N) / k).
/// Throws InvalidArgument when N1 + N2 exceeds N.
E2tcBudgets e2tc_budgets(std::size_t N, std::size_t T, Eigen::Index d, Eigen::Index k, double c1,
                         double c2, double exponent = 1.5);

/// Explore-explore-then-commit for ellipsoid action sets.
///
/// Stage 1 (rounds 1..N1) plays uniform points of the sqrt(lambda0) sphere and
/// accumulates r^2 x x^T; its top-k eigenspace becomes B_hat. Stage 2 plays
/// sqrt(lambda0) b_i, each direction N2/k consecutive rounds, then fits w_t by
/// least squares on B_hat^T x. Stage 3 commits to the ellipsoid argmax of
/// B_hat w_t.
class E2tc final : public Policy {
 public:
  E2tc(const ProblemShape& shape, E2tcBudgets budgets, Rng rng);

  std::string_view name() const override { return "e2tc"; }
  std::vector<Action> choose(const RoundContexts& contexts) override;
  void observe(const RoundContexts& contexts, const std::vector<Action>& actions,
               const Feedback& feedback) override;

  /// 1, 2 or 3 for the stage the given round belongs to.
  int stage_of(std::size_t round) const;
  const E2tcBudgets& budgets() const { return budgets_; }
  const Mat& moment_sum() const { return moment_sum_; }
  const std::optional<OrthonormalBasis>& basis() const { return basis_; }
  const Mat& weights() const { return weights_; }
  const Mat& theta_hat() const { return theta_hat_; }
  /// Per task, how often each direction b_i was played in stage 2.
  const std::vector<std::vector<std::size_t>>& direction_counts() const { return direction_counts_; }

 private:
  std::size_t direction_of(std::size_t round) const;

  ProblemShape shape_;
  E2tcBudgets budgets_;
  Rng rng_;
  Mat moment_sum_;
  std::optional<OrthonormalBasis> basis_;
  std::vector<IncrementalLeastSquares> stage2_;
  std::vector<std::vector<std::size_t>> direction_counts_;
  Mat weights_;
  Mat theta_hat_;
};

/// Phased exploration / greedy exploitation, run independently per task.
/// Cycle c plays sqrt(lambda0) e_1..e_d once each, refits theta_t on all
/// exploration data so far, then exploits for c rounds.
class Pege final : public Policy {
 public:
  explicit Pege(const ProblemShape& shape);

  std::string_view name() const override { return "pege"; }
  std::vector<Action> choose(const RoundContexts& contexts) override;
  void observe(const RoundContexts& contexts, const std::vector<Action>& actions,
               const Feedback& feedback) override;

  const Mat& theta_hat() const { return theta_hat_; }
  std::size_t cycle() const { return cycle_; }
  bool exploring() const { return step_ < static_cast<std::size_t>(shape_.d); }

 private:
  ProblemShape shape_;
  std::size_t cycle_ = 1;
  std::size_t step_ = 0;  // position within the current cycle
  std::vector<IncrementalLeastSquares> explore_;
  Mat theta_hat_;
};

}  // namespace mtlb
