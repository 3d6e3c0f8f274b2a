#include "mtlb/policies.hpp"

#include <cmath>
#include <string>

#include "mtlb/errors.hpp"

namespace mtlb {

EpochSchedule epoch_schedule(std::size_t N) {
  if (N < 4) throw InvalidArgument("epoch_schedule: N must be >= 4");
  // Smallest M with N <= 2^(2^M), i.e. M = ceil(log2 log2 N), in integers.
  std::size_t M = 0;
  for (long double cap = 2.0L; static_cast<long double>(N) > cap; cap *= cap) ++M;

  EpochSchedule s;
  s.horizon = N;
  s.bounds.push_back(0);
  for (std::size_t m = 1; m < M; ++m) {
    const long double exponent = 1.0L - std::ldexp(1.0L, -static_cast<int>(m));
    const long double g = std::pow(static_cast<long double>(N), exponent);
    // Nudge so exact integer powers (10000^0.75 = 1000) survive rounding.
    const auto bound = static_cast<std::size_t>(std::floor(g * (1.0L + 1e-12L)));
    if (bound > s.bounds.back() && bound < N) s.bounds.push_back(bound);
  }
  s.bounds.push_back(N);
  s.epochs = s.bounds.size() - 1;
  return s;
}

std::vector<std::size_t> greedy_choose(const Mat& theta_hat, const RoundContexts& contexts) {
  const std::size_t T = contexts.arms.size();
  if (static_cast<std::size_t>(theta_hat.cols()) != T) {
    throw InvalidArgument("greedy_choose: estimate and contexts disagree on task count");
  }
  std::vector<std::size_t> picks(T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    const Vec values = contexts.arms[t] * theta_hat.col(static_cast<Eigen::Index>(t));
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < values.size(); ++a)
      if (values[a] > values[best]) best = a;
    picks[t] = static_cast<std::size_t>(best);
  }
  return picks;
}

EpochGreedy::EpochGreedy(const ProblemShape& shape)
    : shape_(shape),
      schedule_(epoch_schedule(shape.N)),
      theta_hat_(Mat::Zero(shape.d, static_cast<Eigen::Index>(shape.T))),
      rows_(shape.T),
      rewards_(shape.T) {}

std::vector<Action> EpochGreedy::choose(const RoundContexts& contexts) {
  const auto picks = greedy_choose(theta_hat_, contexts);
  std::vector<Action> actions(picks.size());
  for (std::size_t t = 0; t < picks.size(); ++t) actions[t].arm = picks[t];
  return actions;
}

void EpochGreedy::observe(const RoundContexts& contexts, const std::vector<Action>& actions,
                          const Feedback& feedback) {
  const std::size_t n = contexts.round;
  if (epoch_ > schedule_.epochs || n <= schedule_.bounds[epoch_ - 1] ||
      n > schedule_.bounds[epoch_]) {
    throw InvalidArgument("epoch greedy: round " + std::to_string(n) +
                          " does not belong to the current epoch");
  }
  if (actions.size() != shape_.T || feedback.rewards.size() != shape_.T) {
    throw InvalidArgument("epoch greedy: expected one action and reward per task");
  }
  for (std::size_t t = 0; t < shape_.T; ++t) {
    const Mat& arms = contexts.arms[t];
    if (actions[t].arm >= static_cast<std::size_t>(arms.rows())) {
      throw InvalidArgument("epoch greedy: action is not an offered arm");
    }
    const auto row = arms.row(static_cast<Eigen::Index>(actions[t].arm));
    for (Eigen::Index j = 0; j < row.size(); ++j) rows_[t].push_back(row[j]);
    rewards_[t].push_back(feedback.rewards[t]);
  }
  if (n == schedule_.bounds[epoch_]) {
    const PooledBatch batch = take_buffer();
    theta_hat_ = refit(batch);
    last_refit_size_ = batch.total_samples();
    last_refit_loss_ = 0.0;
    for (std::size_t t = 0; t < batch.num_tasks(); ++t) {
      const auto& s = batch.tasks[t];
      last_refit_loss_ +=
          (s.design * theta_hat_.col(static_cast<Eigen::Index>(t)) - s.rewards).squaredNorm();
    }
    ++refits_;
    ++epoch_;
  }
}

std::size_t EpochGreedy::buffered_samples() const {
  std::size_t n = 0;
  for (const auto& r : rewards_) n += r.size();
  return n;
}

PooledBatch EpochGreedy::take_buffer() {
  PooledBatch batch(shape_.d, shape_.T);
  for (std::size_t t = 0; t < shape_.T; ++t) {
    const auto n = static_cast<Eigen::Index>(rewards_[t].size());
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    batch.tasks[t].design = Eigen::Map<const RowMajor>(rows_[t].data(), n, shape_.d);
    batch.tasks[t].rewards = Eigen::Map<const Vec>(rewards_[t].data(), n);
    rows_[t].clear();
    rewards_[t].clear();
  }
  return batch;
}

MLinGreedy::MLinGreedy(const ProblemShape& shape, Rng rng, AlsOptions als)
    : EpochGreedy(shape), rng_(std::move(rng)), als_(als) {
  if (shape.k < 1 || shape.k > shape.d) throw InvalidArgument("mlin_greedy: need 1 <= k <= d");
}

Mat MLinGreedy::refit(const PooledBatch& batch) {
  FitResult fit = fit_factored_erm(batch, shape_.k, rng_.derive_child("refit", refits()), als_);
  last_fit_ = fit.report;
  return coefficients(fit.factors);
}

IndependentGreedy::IndependentGreedy(const ProblemShape& shape) : EpochGreedy(shape) {}

Mat IndependentGreedy::refit(const PooledBatch& batch) {
  Mat theta = Mat::Zero(shape_.d, static_cast<Eigen::Index>(shape_.T));
  for (std::size_t t = 0; t < batch.num_tasks(); ++t) {
    const auto& s = batch.tasks[t];
    if (s.rewards.size() == 0) continue;
    theta.col(static_cast<Eigen::Index>(t)) = least_squares(s.design, s.rewards);
  }
  return theta;
}

E2tcBudgets e2tc_budgets(std::size_t N, std::size_t T, Eigen::Index d, Eigen::Index k, double c1,
                         double c2, double exponent) {
  if (N == 0 || T == 0 || d < 1 || k < 1 || !(c1 > 0.0) || !(c2 > 0.0) || !std::isfinite(exponent)) {
    throw InvalidArgument("e2tc_budgets: all inputs must be positive");
  }
  const double n1 = c1 * std::pow(static_cast<double>(d), exponent) * static_cast<double>(k) *
                    std::sqrt(static_cast<double>(N) / static_cast<double>(T));
  const double n2_raw = c2 * static_cast<double>(k) * std::sqrt(static_cast<double>(N));
  E2tcBudgets b;
  b.n1 = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n1)));
  b.n2 = static_cast<std::size_t>(k) *
         static_cast<std::size_t>(std::ceil(n2_raw / static_cast<double>(k)));
  if (b.n1 > N) {
    throw InvalidArgument("e2tc_budgets: N1 = " + std::to_string(b.n1) + " exceeds N = " +
                          std::to_string(N));
  }
  if (b.n1 + b.n2 > N) {
    throw InvalidArgument("e2tc_budgets: N2 = " + std::to_string(b.n2) + " on top of N1 = " +
                          std::to_string(b.n1) + " exceeds N = " + std::to_string(N));
  }
  return b;
}

E2tc::E2tc(const ProblemShape& shape, E2tcBudgets budgets, Rng rng)
    : shape_(shape),
      budgets_(budgets),
      rng_(std::move(rng)),
      moment_sum_(Mat::Zero(shape.d, shape.d)),
      direction_counts_(shape.T, std::vector<std::size_t>(static_cast<std::size_t>(shape.k), 0)),
      weights_(Mat::Zero(shape.k, static_cast<Eigen::Index>(shape.T))),
      theta_hat_(Mat::Zero(shape.d, static_cast<Eigen::Index>(shape.T))) {
  if (shape.k < 1 || shape.k > shape.d) throw InvalidArgument("e2tc: need 1 <= k <= d");
  if (budgets.n1 < 1) throw InvalidArgument("e2tc: N1 must be positive");
  if (budgets.n2 == 0 || budgets.n2 % static_cast<std::size_t>(shape.k) != 0) {
    throw InvalidArgument("e2tc: N2 must be a positive multiple of k");
  }
  if (budgets.n1 + budgets.n2 > shape.N) throw InvalidArgument("e2tc: N1 + N2 exceeds N");
  if (!(shape.lambda0 > 0.0)) throw InvalidArgument("e2tc: lambda0 must be positive");
  stage2_.assign(shape.T, IncrementalLeastSquares(shape.k));
}

int E2tc::stage_of(std::size_t round) const {
  if (round <= budgets_.n1) return 1;
  if (round <= budgets_.n1 + budgets_.n2) return 2;
  return 3;
}

std::size_t E2tc::direction_of(std::size_t round) const {
  // i = ceil((n - N1) k / N2), 1-based; returned 0-based.
  const std::size_t offset = round - budgets_.n1;
  const std::size_t k = static_cast<std::size_t>(shape_.k);
  return (offset * k + budgets_.n2 - 1) / budgets_.n2 - 1;
}

std::vector<Action> E2tc::choose(const RoundContexts& contexts) {
  const std::size_t n = contexts.round;
  std::vector<Action> actions(shape_.T);
  const double radius = std::sqrt(shape_.lambda0);
  switch (stage_of(n)) {
    case 1:
      for (auto& a : actions) a.vector = sample_sphere(shape_.d, radius, rng_);
      break;
    case 2: {
      const Vec v = radius * basis_->mat().col(static_cast<Eigen::Index>(direction_of(n)));
      for (auto& a : actions) a.vector = v;
      break;
    }
    default:
      if (!contexts.ellipsoids) throw InvalidArgument("e2tc: round carries no ellipsoid");
      for (std::size_t t = 0; t < shape_.T; ++t) {
        actions[t].vector =
            ellipsoid_argmax(theta_hat_.col(static_cast<Eigen::Index>(t)), (*contexts.ellipsoids)[t])
                .action;
      }
  }
  return actions;
}

void E2tc::observe(const RoundContexts& contexts, const std::vector<Action>& actions,
                   const Feedback& feedback) {
  const std::size_t n = contexts.round;
  if (actions.size() != shape_.T || feedback.rewards.size() != shape_.T) {
    throw InvalidArgument("e2tc: expected one action and reward per task");
  }
  const int stage = stage_of(n);
  if (stage == 1) {
    for (std::size_t t = 0; t < shape_.T; ++t) {
      const double r = feedback.rewards[t];
      moment_sum_.selfadjointView<Eigen::Lower>().rankUpdate(actions[t].vector, r * r);
    }
    if (n == budgets_.n1) {
      moment_sum_ = moment_sum_.selfadjointView<Eigen::Lower>();
      const Mat moments =
          moment_sum_ / (static_cast<double>(budgets_.n1) * static_cast<double>(shape_.T));
      basis_ = top_k_eig(moments, shape_.k).basis;
    }
  } else if (stage == 2) {
    const std::size_t i = direction_of(n);
    for (std::size_t t = 0; t < shape_.T; ++t) {
      stage2_[t].add_row(basis_->mat().transpose() * actions[t].vector, feedback.rewards[t]);
      ++direction_counts_[t][i];
    }
    if (n == budgets_.n1 + budgets_.n2) {
      for (std::size_t t = 0; t < shape_.T; ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        weights_.col(ti) = stage2_[t].solve();
        theta_hat_.col(ti) = basis_->mat() * weights_.col(ti);
      }
    }
  }
}

Pege::Pege(const ProblemShape& shape)
    : shape_(shape),
      explore_(shape.T, IncrementalLeastSquares(shape.d)),
      theta_hat_(Mat::Zero(shape.d, static_cast<Eigen::Index>(shape.T))) {
  if (!(shape.lambda0 > 0.0)) throw InvalidArgument("pege: lambda0 must be positive");
}

std::vector<Action> Pege::choose(const RoundContexts& contexts) {
  std::vector<Action> actions(shape_.T);
  if (exploring()) {
    Vec v = Vec::Zero(shape_.d);
    v[static_cast<Eigen::Index>(step_)] = std::sqrt(shape_.lambda0);
    for (auto& a : actions) a.vector = v;
    return actions;
  }
  if (!contexts.ellipsoids) throw InvalidArgument("pege: round carries no ellipsoid");
  for (std::size_t t = 0; t < shape_.T; ++t) {
    actions[t].vector =
        ellipsoid_argmax(theta_hat_.col(static_cast<Eigen::Index>(t)), (*contexts.ellipsoids)[t])
            .action;
  }
  return actions;
}

void Pege::observe(const RoundContexts&, const std::vector<Action>& actions,
                   const Feedback& feedback) {
  if (actions.size() != shape_.T || feedback.rewards.size() != shape_.T) {
    throw InvalidArgument("pege: expected one action and reward per task");
  }
  const auto d = static_cast<std::size_t>(shape_.d);
  if (exploring()) {
    for (std::size_t t = 0; t < shape_.T; ++t) explore_[t].add_row(actions[t].vector, feedback.rewards[t]);
    if (step_ + 1 == d) {
      for (std::size_t t = 0; t < shape_.T; ++t) {
        theta_hat_.col(static_cast<Eigen::Index>(t)) = explore_[t].solve();
      }
    }
  }
  ++step_;
  if (step_ == d + cycle_) {
    ++cycle_;
    step_ = 0;
  }
}

}  // namespace mtlb
