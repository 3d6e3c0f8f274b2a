#include <cmath>
#include <cstdio>

#include "mtlb/harness.hpp"
#include "mtlb/lowrank.hpp"

namespace mtlb {

namespace {

std::string format(const char* fmt, double a, double b, double c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b, c);
  return buf;
}

}  // namespace

std::vector<SelftestCheck> run_selftest(std::uint64_t seed) {
  std::vector<SelftestCheck> checks;
  const Rng root(seed);

  constexpr int kDraws = 1'000'000;
  for (int d : {2, 5, 10}) {
    Rng rng = root.derive_child("sphere", static_cast<std::uint64_t>(d));
    // Accumulate each power and its square for the standard error.
    double s[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
    for (int i = 0; i < kDraws; ++i) {
      const double x = sample_sphere(d, 1.0, rng)[0];
      const double p2 = x * x, p4 = p2 * p2, p6 = p4 * p2;
      const double p[3] = {p2, p4, p6};
      for (int j = 0; j < 3; ++j) {
        s[j] += p[j];
        s2[j] += p[j] * p[j];
      }
    }
    const double dd = d;
    const double expected[3] = {1.0 / dd, 3.0 / (dd * (dd + 2)), 15.0 / (dd * (dd + 2) * (dd + 4))};
    const char* names[3] = {"E[x1^2]", "E[x1^4]", "E[x1^6]"};
    for (int j = 0; j < 3; ++j) {
      const double mean = s[j] / kDraws;
      const double se = std::sqrt((s2[j] / kDraws - mean * mean) / kDraws);
      SelftestCheck c;
      c.name = std::string("sphere moment ") + names[j] + " d=" + std::to_string(d);
      c.passed = std::abs(mean - expected[j]) <= 3.0 * se;
      c.detail = format("estimate %.6g, exact %.6g, 3 SE %.3g", mean, expected[j], 3 * se);
      checks.push_back(c);
    }
  }

  int agree = 0;
  constexpr int kInstances = 50;
  double worst = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    Rng rng = root.derive_child("als", static_cast<std::uint64_t>(i));
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.uniform_index(2));
    const std::size_t T = 1 + rng.uniform_index(3);
    PooledBatch batch(d, T);
    for (auto& task : batch.tasks) {
      const auto n = static_cast<Eigen::Index>(10 + rng.uniform_index(21));
      task.design.resize(n, d);
      task.rewards.resize(n);
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) task.design(r, c) = rng.normal();
        task.rewards[r] = rng.normal();
      }
    }
    AlsOptions opts;
    opts.restarts = 8;
    const double als = fit_factored_erm(batch, 1, rng.derive_child("fit"), opts).report.loss;
    const double brute = brute_force_factored_erm(batch, 1, 10000).loss;
    const double excess = (als - brute) / (1.0 + brute);
    worst = std::max(worst, excess);
    if (excess <= 1e-4) ++agree;
  }
  SelftestCheck c;
  c.name = "ALS vs brute force (d<=3, k=1)";
  c.passed = agree == kInstances;
  c.detail = format("%.0f of %.0f instances agree; worst relative excess %.3g", agree, kInstances,
                    worst);
  checks.push_back(c);
  return checks;
}

}  // namespace mtlb
