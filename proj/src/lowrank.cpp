#include "mtlb/lowrank.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mtlb/errors.hpp"

namespace mtlb {

PooledBatch::PooledBatch(Eigen::Index d, std::size_t num_tasks) : dim(d), tasks(num_tasks) {
  for (auto& t : tasks) {
    t.design.resize(0, d);
    t.rewards.resize(0);
  }
}

std::size_t PooledBatch::total_samples() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += static_cast<std::size_t>(t.rewards.size());
  return n;
}

void PooledBatch::validate() const {
  if (dim < 1) throw InvalidArgument("PooledBatch: dimension must be positive");
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& s = tasks[t];
    if (s.design.cols() != dim || s.design.rows() != s.rewards.size()) {
      throw InvalidArgument("PooledBatch: task " + std::to_string(t) + " has inconsistent shape");
    }
    if (!s.design.allFinite() || !s.rewards.allFinite()) {
      throw InvalidArgument("PooledBatch: task " + std::to_string(t) + " has non-finite entries");
    }
  }
}

double factored_loss(const PooledBatch& batch, const Mat& B, const Mat& W) {
  double loss = 0.0;
  for (std::size_t t = 0; t < batch.tasks.size(); ++t) {
    const auto& s = batch.tasks[t];
    if (s.rewards.size() == 0) continue;
    const Vec theta = B * W.col(static_cast<Eigen::Index>(t));
    loss += (s.design * theta - s.rewards).squaredNorm();
  }
  return loss;
}

namespace {

// The ALS loop only ever needs |X_t B w - r_t|^2, which a per-task QR of
// [X_t r_t] preserves exactly; working on the (d+1)-row factors makes each
// iteration independent of the sample count.
struct CompressedTask {
  Mat design;
  Vec rewards;
};

double compressed_loss(const std::vector<CompressedTask>& tasks, const Mat& B, const Mat& W) {
  double loss = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].rewards.size() == 0) continue;
    loss += (tasks[t].design * (B * W.col(static_cast<Eigen::Index>(t))) - tasks[t].rewards)
                .squaredNorm();
  }
  return loss;
}

Mat solve_weights(const std::vector<CompressedTask>& tasks, const Mat& B, double ridge) {
  Mat W = Mat::Zero(B.cols(), static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].rewards.size() == 0) continue;
    W.col(static_cast<Eigen::Index>(t)) = least_squares(tasks[t].design * B, tasks[t].rewards, ridge);
  }
  return W;
}

Mat solve_basis(const std::vector<CompressedTask>& tasks, const Mat& W, Eigen::Index d,
                double ridge) {
  const Eigen::Index k = W.rows();
  Eigen::Index rows = 0;
  for (const auto& t : tasks) rows += t.rewards.size();
  // x^T B w = sum_{j,l} x_j w_l B(j,l); vec(B) is column-major, so the
  // coefficient of B(j,l) sits at j + l*d.
  Mat design(rows, d * k);
  Vec rhs(rows);
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    const auto n = task.rewards.size();
    for (Eigen::Index l = 0; l < k; ++l) {
      design.block(row, l * d, n, d) = W(l, static_cast<Eigen::Index>(t)) * task.design;
    }
    rhs.segment(row, n) = task.rewards;
    row += n;
  }
  const Vec vec_b = least_squares(design, rhs, ridge);
  return Eigen::Map<const Mat>(vec_b.data(), d, k);
}

struct RestartOutcome {
  Mat B;
  Mat W;
  double loss = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

RestartOutcome run_restart(const std::vector<CompressedTask>& tasks, Eigen::Index d,
                           Eigen::Index k, Rng rng, const AlsOptions& opts, double ridge,
                           double loss_floor) {
  RestartOutcome out;
  Mat B = sample_haar_orthonormal(d, k, rng).mat();
  Mat W = solve_weights(tasks, B, ridge);
  double loss = compressed_loss(tasks, B, W);
  if (!std::isfinite(loss)) throw NumericalFailure("fit_factored_erm: non-finite loss at start");
  out.B = B;
  out.W = W;
  out.loss = loss;
  out.history.push_back(loss);

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    if (loss <= loss_floor) {
      out.converged = true;
      break;
    }
    const Mat raw_b = solve_basis(tasks, W, d, ridge);
    // Re-gauge to orthonormal B; W absorbs R so B*W is unchanged.
    auto [basis, r] = OrthonormalBasis::from_qr(raw_b);
    B = basis.mat();
    W = solve_weights(tasks, B, ridge);
    const double next = compressed_loss(tasks, B, W);
    if (!std::isfinite(next)) {
      throw NumericalFailure("fit_factored_erm: non-finite loss at iteration " +
                             std::to_string(iter));
    }
    out.history.push_back(next);
    out.iterations = iter;
    if (next < out.loss) {
      out.B = B;
      out.W = W;
      out.loss = next;
    }
    const double decrease = (loss - next) / std::max(loss, std::numeric_limits<double>::min());
    loss = next;
    if (decrease < opts.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

FitResult fit_factored_erm(const PooledBatch& batch, Eigen::Index k, const Rng& rng,
                           const AlsOptions& opts) {
  batch.validate();
  const Eigen::Index d = batch.dim;
  if (batch.tasks.empty() || batch.total_samples() == 0) {
    throw InvalidArgument("fit_factored_erm: empty batch");
  }
  if (k < 1 || k > d) throw InvalidArgument("fit_factored_erm: need 1 <= k <= d");
  if (opts.restarts < 1 || opts.max_iters < 0) {
    throw InvalidArgument("fit_factored_erm: need restarts >= 1 and max_iters >= 0");
  }

  const auto T = static_cast<Eigen::Index>(batch.num_tasks());
  const auto unknowns = static_cast<std::size_t>(d * k + k * T);
  const double ridge = batch.total_samples() < unknowns ? opts.underdetermined_ridge : 0.0;

  std::vector<CompressedTask> tasks;
  tasks.reserve(batch.tasks.size());
  double reward_energy = 0.0;
  for (const auto& s : batch.tasks) {
    auto [x, r] = compress_system(s.design, s.rewards);
    tasks.push_back({std::move(x), std::move(r)});
    reward_energy += s.rewards.squaredNorm();
  }
  const double loss_floor = 1e-28 * reward_energy;

  RestartOutcome best;
  for (int i = 0; i < opts.restarts; ++i) {
    RestartOutcome cand =
        run_restart(tasks, d, k, rng.derive_child("restart", static_cast<std::uint64_t>(i)), opts,
                    ridge, loss_floor);
    if (cand.loss < best.loss) best = std::move(cand);
  }

  FitResult result{FactorPair{OrthonormalBasis(best.B), best.W}, FitReport{}};
  result.report.loss = factored_loss(batch, best.B, best.W);
  result.report.iterations = best.iterations;
  result.report.converged = best.converged;
  result.report.loss_history = std::move(best.history);
  return result;
}

namespace {

std::vector<Vec> sphere_lattice(Eigen::Index d, std::size_t grid) {
  std::vector<Vec> dirs;
  const double pi = std::numbers::pi;
  if (d == 1) {
    dirs.push_back(Vec::Ones(1));
  } else if (d == 2) {
    dirs.reserve(grid);
    for (std::size_t i = 0; i < grid; ++i) {
      const double a = pi * static_cast<double>(i) / static_cast<double>(grid);
      dirs.push_back((Vec(2) << std::cos(a), std::sin(a)).finished());
    }
  } else {
    const auto n = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(grid))));
    dirs.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double polar = pi * static_cast<double>(i) / static_cast<double>(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        const double az = 2.0 * pi * static_cast<double>(j) / static_cast<double>(n);
        dirs.push_back((Vec(3) << std::sin(polar) * std::cos(az), std::sin(polar) * std::sin(az),
                        std::cos(polar))
                           .finished());
      }
    }
  }
  return dirs;
}

}  // namespace

BruteForceResult brute_force_factored_erm(const PooledBatch& batch, Eigen::Index k,
                                          std::size_t grid) {
  batch.validate();
  if (batch.dim > 3 || k != 1) {
    throw Unsupported("brute_force_factored_erm: only d <= 3 and k = 1 are supported");
  }
  if (grid < 100) throw InvalidArgument("brute_force_factored_erm: grid must be >= 100");
  if (batch.tasks.empty() || batch.total_samples() == 0) {
    throw InvalidArgument("brute_force_factored_erm: empty batch");
  }

  const auto T = static_cast<Eigen::Index>(batch.num_tasks());
  BruteForceResult best;
  best.loss = std::numeric_limits<double>::infinity();
  Vec w(T);
  for (const Vec& b : sphere_lattice(batch.dim, grid)) {
    double loss = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto& s = batch.tasks[static_cast<std::size_t>(t)];
      if (s.rewards.size() == 0) {
        w[t] = 0.0;
        continue;
      }
      const Vec z = s.design * b;
      const double zz = z.squaredNorm();
      w[t] = zz > 0.0 ? z.dot(s.rewards) / zz : 0.0;
      loss += (z * w[t] - s.rewards).squaredNorm();
    }
    if (loss < best.loss) {
      best.loss = loss;
      best.factors = FactorPair{OrthonormalBasis(Mat(b)), w.transpose()};
    }
  }
  return best;
}

Mat coefficients(const FactorPair& fp) { return fp.basis.mat() * fp.weights; }

}  // namespace mtlb
