#include "mtlb/envs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtlb/errors.hpp"

namespace mtlb {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kFeasibilitySlack = 1e-9;

std::string task_label(std::size_t t) { return "task " + std::to_string(t); }

void check_actions(const HiddenInstance& inst, const std::vector<Action>& actions) {
  if (actions.size() != inst.num_tasks()) {
    throw ConstraintViolation("expected " + std::to_string(inst.num_tasks()) + " actions, got " +
                              std::to_string(actions.size()));
  }
}

// The played vector for task t, validated against the round's action set.
Vec played_vector(const HiddenInstance& inst, const Round& round, const Action& a, std::size_t t) {
  if (const auto* inf = std::get_if<InfiniteKind>(&inst.kind)) {
    if (a.vector.size() != inst.dim() || !a.vector.allFinite()) {
      throw ConstraintViolation(task_label(t) + ": action has wrong dimension or is non-finite");
    }
    const double q = a.vector.dot(inf->factors[t].solve(a.vector));
    if (q > 1.0 + kFeasibilitySlack) {
      throw ConstraintViolation(task_label(t) + ": action outside the ellipsoid (a^T Q^-1 a = " +
                                std::to_string(q) + ")");
    }
    return a.vector;
  }
  const Mat& arms = round.contexts.arms[t];
  if (a.arm >= static_cast<std::size_t>(arms.rows())) {
    throw ConstraintViolation(task_label(t) + ": arm index is not one of the offered contexts");
  }
  return arms.row(static_cast<Eigen::Index>(a.arm)).transpose();
}

bool picked_larger_digit(const Round& round, const Action& a, std::size_t t) {
  const auto& labels = round.labels[t];
  const int best = *std::max_element(labels.begin(), labels.end());
  return labels[a.arm] == best;
}

}  // namespace

std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::finite: return "finite";
    case Setting::infinite: return "infinite";
    case Setting::mnist: return "mnist";
  }
  return "unknown";
}

Vec DigitPools::feature(int digit, Eigen::Index row) const {
  const auto& pool = pixels[static_cast<std::size_t>(digit)];
  Vec x = pool.row(row).transpose().cast<double>() / 255.0;
  if (projection.size() == 0) return x;
  return projection.transpose() * (x - mean);
}

Setting HiddenInstance::setting() const {
  return std::visit(overloaded{[](const FiniteKind&) { return Setting::finite; },
                               [](const InfiniteKind&) { return Setting::infinite; },
                               [](const MnistKind&) { return Setting::mnist; }},
                    kind);
}

Eigen::Index HiddenInstance::dim() const {
  if (const auto* m = std::get_if<MnistKind>(&kind)) return m->pools->feature_dim();
  return theta.rows();
}

std::size_t HiddenInstance::num_tasks() const {
  if (const auto* m = std::get_if<MnistKind>(&kind)) return m->task_pairs.size();
  return static_cast<std::size_t>(theta.cols());
}

HiddenInstance gen_finite(Eigen::Index d, Eigen::Index k, std::size_t T, std::size_t K,
                          std::uint64_t seed, const FiniteOptions& opts) {
  if (k < 1 || k > d) throw InvalidArgument("gen_finite: need 1 <= k <= d");
  if (K < 2) throw InvalidArgument("gen_finite: need K >= 2");
  if (T < 1) throw InvalidArgument("gen_finite: need T >= 1");
  if (!(opts.cov_scale >= 0.25 && opts.cov_scale <= 4.0)) {
    throw InvalidArgument("gen_finite: cov_scale must lie in [0.25, 4]");
  }
  const Rng root(seed);
  Rng basis_rng = root.derive_child("basis");
  Rng weight_rng = root.derive_child("weights");

  HiddenInstance inst;
  inst.basis = sample_haar_orthonormal(d, k, basis_rng);
  inst.weights.resize(k, static_cast<Eigen::Index>(T));
  for (std::size_t t = 0; t < T; ++t) {
    inst.weights.col(static_cast<Eigen::Index>(t)) = sample_sphere(k, 1.0, weight_rng);
  }
  inst.theta = inst.basis.mat() * inst.weights;

  FiniteKind fk;
  fk.num_arms = K;
  const Mat chol = std::sqrt(opts.cov_scale / static_cast<double>(d)) * Mat::Identity(d, d);
  fk.cov_chol.assign(T, chol);
  inst.kind = std::move(fk);
  return inst;
}

HiddenInstance gen_infinite(Eigen::Index d, Eigen::Index k, std::size_t T, double lambda0,
                            std::uint64_t seed, const InfiniteOptions& opts) {
  if (k < 1 || k > d) throw InvalidArgument("gen_infinite: need 1 <= k <= d");
  if (T < static_cast<std::size_t>(k)) {
    throw InvalidArgument("gen_infinite: T < k cannot satisfy task diversity");
  }
  if (!(lambda0 > 0.0)) throw InvalidArgument("gen_infinite: lambda0 must be positive");

  const Rng root(seed);
  Rng basis_rng = root.derive_child("basis");
  HiddenInstance inst;
  inst.basis = sample_haar_orthonormal(d, k, basis_rng);

  const auto Tn = static_cast<Eigen::Index>(T);
  const double floor = opts.nu / static_cast<double>(k);
  bool ok = false;
  for (int attempt = 0; attempt < opts.max_attempts && !ok; ++attempt) {
    Rng weight_rng = root.derive_child("weights", static_cast<std::uint64_t>(attempt));
    inst.weights.resize(k, Tn);
    for (Eigen::Index t = 0; t < Tn; ++t) inst.weights.col(t) = sample_sphere(k, 1.0, weight_rng);
    const Mat gram = inst.weights * inst.weights.transpose() / static_cast<double>(T);
    ok = Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues()[0] >= floor;
  }
  if (!ok) throw NumericalFailure("gen_infinite: task diversity not reached within attempt cap");
  inst.theta = inst.basis.mat() * inst.weights;

  InfiniteKind ik;
  ik.lambda0 = lambda0;
  const Mat q = lambda0 * Mat::Identity(d, d);
  ik.ellipsoids = std::make_shared<const std::vector<Mat>>(T, q);
  ik.factors.assign(T, Eigen::LLT<Mat>(q));
  inst.kind = std::move(ik);
  return inst;
}

void validate_instance(const HiddenInstance& inst, double nu, double omega) {
  if (inst.setting() == Setting::mnist) return;
  const Mat bw = inst.basis.mat() * inst.weights;
  if (bw.rows() != inst.theta.rows() || bw.cols() != inst.theta.cols() ||
      (bw - inst.theta).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidArgument("instance: theta differs from B W");
  }
  const Eigen::Index d = inst.dim();
  const Eigen::Index k = inst.basis.rank();
  const auto T = inst.num_tasks();
  if (const auto* fk = std::get_if<FiniteKind>(&inst.kind)) {
    if (fk->num_arms < 2) throw InvalidArgument("instance: fewer than two arms");
    const double unit = 1.0 / static_cast<double>(d);
    for (std::size_t t = 0; t < T; ++t) {
      const Mat sigma = fk->cov_chol[t] * fk->cov_chol[t].transpose();
      const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(sigma, Eigen::EigenvaluesOnly).eigenvalues();
      if (ev[0] < 0.25 * unit * (1 - 1e-12) || ev[d - 1] > 4.0 * unit * (1 + 1e-12)) {
        throw InvalidArgument("instance: " + task_label(t) + " covariance spectrum outside [0.25/d, 4/d]");
      }
    }
    return;
  }
  const auto& ik = std::get<InfiniteKind>(inst.kind);
  for (std::size_t t = 0; t < T; ++t) {
    const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>((*ik.ellipsoids)[t], Eigen::EigenvaluesOnly)
                       .eigenvalues();
    if (ev[0] < ik.lambda0 * (1 - 1e-12)) {
      throw InvalidArgument("instance: " + task_label(t) + " ellipsoid below lambda0");
    }
    if (inst.weights.col(static_cast<Eigen::Index>(t)).norm() < omega) {
      throw InvalidArgument("instance: " + task_label(t) + " has |w_t| < omega");
    }
  }
  const Mat gram = inst.weights * inst.weights.transpose() / static_cast<double>(T);
  if (Eigen::SelfAdjointEigenSolver<Mat>(gram, Eigen::EigenvaluesOnly).eigenvalues()[0] <
      nu / static_cast<double>(k)) {
    throw InvalidArgument("instance: task weights are not diverse enough");
  }
}

Round draw_round(const HiddenInstance& inst, std::size_t n, Rng& rng) {
  Round round;
  round.contexts.round = n;
  const std::size_t T = inst.num_tasks();
  std::visit(
      overloaded{
          [&](const FiniteKind& fk) {
            const Eigen::Index d = inst.dim();
            const auto K = static_cast<Eigen::Index>(fk.num_arms);
            round.contexts.arms.reserve(T);
            Mat z(d, K);
            for (std::size_t t = 0; t < T; ++t) {
              for (Eigen::Index a = 0; a < K; ++a)
                for (Eigen::Index i = 0; i < d; ++i) z(i, a) = rng.normal();
              round.contexts.arms.emplace_back(
                  (fk.cov_chol[t].triangularView<Eigen::Lower>() * z).transpose());
            }
          },
          [&](const InfiniteKind& ik) { round.contexts.ellipsoids = ik.ellipsoids; },
          [&](const MnistKind& mk) {
            const DigitPools& pools = *mk.pools;
            round.contexts.arms.reserve(T);
            round.labels.reserve(T);
            for (const auto& [lo, hi] : mk.task_pairs) {
              const auto row_lo = static_cast<Eigen::Index>(
                  rng.uniform_index(static_cast<std::size_t>(pools.pixels[lo].rows())));
              const auto row_hi = static_cast<Eigen::Index>(
                  rng.uniform_index(static_cast<std::size_t>(pools.pixels[hi].rows())));
              const bool swap = rng.uniform() < 0.5;
              Mat arms(2, pools.feature_dim());
              arms.row(swap ? 1 : 0) = pools.feature(lo, row_lo).transpose();
              arms.row(swap ? 0 : 1) = pools.feature(hi, row_hi).transpose();
              round.contexts.arms.push_back(std::move(arms));
              round.labels.push_back(swap ? std::vector<int>{hi, lo} : std::vector<int>{lo, hi});
            }
          }},
      inst.kind);
  return round;
}

Feedback pull(const HiddenInstance& inst, const Round& round, const std::vector<Action>& actions,
              Rng& rng) {
  check_actions(inst, actions);
  Feedback fb;
  fb.rewards.resize(actions.size());
  const bool is_mnist = inst.setting() == Setting::mnist;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const Vec x = played_vector(inst, round, actions[t], t);
    if (is_mnist) {
      fb.rewards[t] = picked_larger_digit(round, actions[t], t) ? 1.0 : 0.0;
    } else {
      fb.rewards[t] = x.dot(inst.theta.col(static_cast<Eigen::Index>(t))) +
                      inst.noise_scale * rng.normal();
    }
  }
  return fb;
}

Vec instant_regret(const HiddenInstance& inst, const Round& round,
                   const std::vector<Action>& actions) {
  check_actions(inst, actions);
  const std::size_t T = actions.size();
  Vec regret(static_cast<Eigen::Index>(T));
  for (std::size_t t = 0; t < T; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    const Vec x = played_vector(inst, round, actions[t], t);
    double gap = 0.0;
    std::visit(overloaded{[&](const FiniteKind&) {
                            const Vec values = round.contexts.arms[t] * inst.theta.col(ti);
                            gap = values.maxCoeff() - x.dot(inst.theta.col(ti));
                          },
                          [&](const InfiniteKind& ik) {
                            const double best = ellipsoid_argmax(inst.theta.col(ti), (*ik.ellipsoids)[t]).value;
                            gap = best - x.dot(inst.theta.col(ti));
                          },
                          [&](const MnistKind&) {
                            gap = picked_larger_digit(round, actions[t], t) ? 0.0 : 1.0;
                          }},
               inst.kind);
    regret[ti] = std::max(gap, 0.0);
  }
  return regret;
}

EllipsoidArgmax ellipsoid_argmax(const Vec& theta, const Mat& Q) {
  if (Q.rows() != theta.size() || Q.cols() != theta.size()) {
    throw InvalidArgument("ellipsoid_argmax: dimension mismatch");
  }
  if (theta.isZero(0.0)) return {Vec::Zero(theta.size()), 0.0, true};
  const Vec qt = Q * theta;
  const double quad = theta.dot(qt);
  if (!(quad > 0.0) || !std::isfinite(quad)) {
    throw InvalidArgument("ellipsoid_argmax: Q is not positive definite");
  }
  const double value = std::sqrt(quad);
  return {qt / value, value, false};
}

HiddenInstance build_mnist_tasks(const IdxData& images, const IdxData& labels,
                                 std::vector<int> digits, std::uint64_t seed,
                                 Eigen::Index pca_dim) {
  if (images.dims.size() != 3) throw InvalidArgument("build_mnist_tasks: images must be 3-D");
  if (labels.dims.size() != 1) throw InvalidArgument("build_mnist_tasks: labels must be 1-D");
  if (images.dims[0] != labels.dims[0]) {
    throw InvalidArgument("build_mnist_tasks: image and label counts differ");
  }
  std::sort(digits.begin(), digits.end());
  digits.erase(std::unique(digits.begin(), digits.end()), digits.end());
  if (digits.size() < 2) throw InvalidArgument("build_mnist_tasks: need at least two digits");
  if (digits.front() < 0 || digits.back() > 9) {
    throw InvalidArgument("build_mnist_tasks: digits must lie in 0..9");
  }

  const std::size_t count = images.dims[0];
  const auto pixels = static_cast<Eigen::Index>(images.dims[1]) * images.dims[2];
  std::vector<std::vector<std::size_t>> members(10);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = labels.payload[i];
    if (label < 0 || label > 9) throw FormatError("build_mnist_tasks: label outside 0..9");
    members[static_cast<std::size_t>(label)].push_back(i);
  }

  auto pools = std::make_shared<DigitPools>();
  pools->pixels_per_image = pixels;
  pools->pixels.resize(10);
  for (int digit : digits) {
    const auto& idx = members[static_cast<std::size_t>(digit)];
    if (idx.empty()) {
      throw InvalidArgument("build_mnist_tasks: no images for digit " + std::to_string(digit));
    }
    auto& pool = pools->pixels[static_cast<std::size_t>(digit)];
    pool.resize(static_cast<Eigen::Index>(idx.size()), pixels);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto* src = images.payload.data() + idx[r] * static_cast<std::size_t>(pixels);
      pool.row(static_cast<Eigen::Index>(r)) =
          Eigen::Map<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>(src, pixels);
    }
  }

  if (pca_dim > 0) {
    if (pca_dim > pixels) throw InvalidArgument("build_mnist_tasks: pca_dim exceeds pixel count");
    Rng rng = Rng(seed).derive_child("pca");
    std::vector<std::pair<int, Eigen::Index>> all;
    for (int digit : digits)
      for (Eigen::Index r = 0; r < pools->pixels[static_cast<std::size_t>(digit)].rows(); ++r)
        all.emplace_back(digit, r);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min<std::size_t>(all.size(), 10000));
    Mat sample(static_cast<Eigen::Index>(all.size()), pixels);
    for (std::size_t i = 0; i < all.size(); ++i) {
      sample.row(static_cast<Eigen::Index>(i)) = pools->feature(all[i].first, all[i].second);
    }
    pools->mean = sample.colwise().mean().transpose();
    sample.rowwise() -= pools->mean.transpose();
    const Mat cov = sample.transpose() * sample / static_cast<double>(sample.rows());
    pools->projection = top_k_eig(cov, pca_dim).basis.mat();
  }

  MnistKind mk;
  mk.pools = std::move(pools);
  for (std::size_t a = 0; a < digits.size(); ++a)
    for (std::size_t b = a + 1; b < digits.size(); ++b) mk.task_pairs.emplace_back(digits[a], digits[b]);

  HiddenInstance inst;
  inst.kind = std::move(mk);
  inst.noise_scale = 0.0;
  return inst;
}

}  // namespace mtlb
