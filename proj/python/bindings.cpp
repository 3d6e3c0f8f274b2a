#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtlb/config.hpp"
#include "mtlb/errors.hpp"
#include "mtlb/harness.hpp"
#include "mtlb/lowrank.hpp"
#include "mtlb/policies.hpp"

namespace py = pybind11;
using namespace mtlb;

namespace {

PooledBatch make_batch(const std::vector<Mat>& designs, const std::vector<Vec>& rewards) {
  if (designs.empty() || designs.size() != rewards.size()) {
    throw InvalidArgument("need one reward vector per design matrix");
  }
  PooledBatch batch(designs.front().cols(), designs.size());
  for (std::size_t t = 0; t < designs.size(); ++t) {
    batch.tasks[t].design = designs[t];
    batch.tasks[t].rewards = rewards[t];
  }
  return batch;
}

}  // namespace

PYBIND11_MODULE(_mtlb, m) {
  m.doc() = "Multi-task linear bandits with a shared low-rank representation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("epoch_schedule", [](std::size_t N) { return epoch_schedule(N).bounds; }, py::arg("N"),
        "Refit grid G_0..G_M of the epoch-greedy policies.");

  m.def(
      "sample_sphere",
      [](Eigen::Index dim, double radius, std::uint64_t seed) {
        Rng rng(seed);
        return sample_sphere(dim, radius, rng);
      },
      py::arg("dim"), py::arg("radius"), py::arg("seed"));

  m.def("least_squares", &least_squares, py::arg("X"), py::arg("y"), py::arg("ridge") = 0.0,
        "Minimum-norm least squares, optionally ridge regularized.");

  m.def(
      "top_k_eig",
      [](const Mat& sym, Eigen::Index k) {
        auto e = top_k_eig(sym, k);
        return py::make_tuple(e.values, e.basis.mat());
      },
      py::arg("sym"), py::arg("k"), "Largest k eigenvalues (descending) and their eigenvectors.");

  m.def(
      "subspace_distance",
      [](const Mat& a, const Mat& b) { return subspace_distance(OrthonormalBasis(a), OrthonormalBasis(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "ellipsoid_argmax",
      [](const Vec& theta, const Mat& Q) {
        auto r = ellipsoid_argmax(theta, Q);
        return py::make_tuple(r.action, r.value);
      },
      py::arg("theta"), py::arg("Q"));

  m.def(
      "e2tc_budgets",
      [](std::size_t N, std::size_t T, Eigen::Index d, Eigen::Index k, double c1, double c2, double exponent) {
        auto b = e2tc_budgets(N, T, d, k, c1, c2, exponent);
        return py::make_tuple(b.n1, b.n2);
      },
      py::arg("N"), py::arg("T"), py::arg("d"), py::arg("k"), py::arg("c1") = 1.0, py::arg("c2") = 1.0,
      py::arg("exponent") = 1.5);

  m.def(
      "fit_factored_erm",
      [](const std::vector<Mat>& designs, const std::vector<Vec>& rewards, Eigen::Index k, std::uint64_t seed,
         int restarts) {
        AlsOptions opts;
        opts.restarts = restarts;
        auto fit = fit_factored_erm(make_batch(designs, rewards), k, Rng(seed), opts);
        return py::make_tuple(fit.factors.basis.mat(), fit.factors.weights, fit.report.loss);
      },
      py::arg("designs"), py::arg("rewards"), py::arg("k"), py::arg("seed") = 0, py::arg("restarts") = 4,
      "Alternating least squares for min sum (x^T B w_t - r)^2; returns (B, W, loss).");

  m.def(
      "run",
      [](const std::string& config_json, std::uint64_t seed) {
        const auto config = parse_config(config_json);
        RunResult result;
        {
          py::gil_scoped_release release;
          result = run(config, seed);
        }
        py::dict out;
        out["regret_total"] = result.ledger.cumulative;
        out["final_per_task"] = result.summary.final_per_task;
        out["wall_seconds"] = result.summary.wall_seconds;
        return out;
      },
      py::arg("config_json"), py::arg("seed"),
      "Runs one experiment config for one seed; returns the cumulative regret per round.");
}
