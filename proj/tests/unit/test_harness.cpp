#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "mtlb/errors.hpp"
#include "mtlb/harness.hpp"
#include "support/stats.hpp"

using namespace mtlb;
namespace fs = std::filesystem;

namespace {

ExperimentConfig finite_config(std::size_t T = 3, std::size_t N = 64) {
  ExperimentConfig c;
  c.setting = Setting::finite;
  c.d = 5;
  c.k = 2;
  c.K = 3;
  c.T = T;
  c.N = N;
  c.algo = Algo::mlin_greedy;
  c.seeds = {0};
  return c;
}

ExperimentConfig infinite_config(Algo algo = Algo::e2tc) {
  ExperimentConfig c;
  c.setting = Setting::infinite;
  c.d = 4;
  c.k = 2;
  c.T = 5;
  c.N = 400;
  c.algo = algo;
  c.seeds = {0};
  c.e2tc.c1 = 0.5;
  c.e2tc.c2 = 1.0;
  return c;
}

std::shared_ptr<const MnistData> tiny_mnist() {
  auto data = std::make_shared<MnistData>();
  const std::uint32_t n = 40, side = 28;
  data->images.dims = {n, side, side};
  data->labels.dims = {n};
  for (std::uint32_t i = 0; i < n; ++i) {
    data->labels.payload.push_back(static_cast<std::uint8_t>(i % 10));
    for (std::uint32_t p = 0; p < side * side; ++p) {
      data->images.payload.push_back(static_cast<std::uint8_t>((i * 31 + p * 7) % 256));
    }
  }
  return data;
}

ExperimentConfig mnist_config() {
  ExperimentConfig c;
  c.setting = Setting::mnist;
  c.d = 784;
  c.k = 2;
  c.K = 2;
  c.T = 3;  // digits 0..2
  c.N = 16;
  c.algo = Algo::independent_greedy;
  c.seeds = {0};
  c.mnist = MnistPaths{"unused-images", "unused-labels", 0};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) {
    std::vector<std::string> fields;
    std::stringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mtlb_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Test-only policy that sees the hidden instance and always plays the best action.
class OraclePolicy final : public Policy {
 public:
  explicit OraclePolicy(HiddenInstance inst) : inst_(std::move(inst)) {}
  std::string_view name() const override { return "oracle"; }
  std::vector<Action> choose(const RoundContexts& c) override {
    std::vector<Action> out(inst_.num_tasks());
    for (std::size_t t = 0; t < out.size(); ++t) {
      const Vec theta = inst_.theta.col(static_cast<Eigen::Index>(t));
      if (c.ellipsoids) {
        out[t].vector = ellipsoid_argmax(theta, (*c.ellipsoids)[t]).action;
      } else {
        Eigen::Index best;
        (c.arms[t] * theta).maxCoeff(&best);
        out[t].arm = static_cast<std::size_t>(best);
      }
    }
    return out;
  }
  void observe(const RoundContexts&, const std::vector<Action>&, const Feedback&) override {}

 private:
  HiddenInstance inst_;
};

class UniformPolicy final : public Policy {
 public:
  UniformPolicy(std::size_t T, Rng rng) : T_(T), rng_(std::move(rng)) {}
  std::string_view name() const override { return "uniform"; }
  std::vector<Action> choose(const RoundContexts& c) override {
    std::vector<Action> out(T_);
    for (std::size_t t = 0; t < T_; ++t) out[t].arm = rng_.uniform_index(static_cast<std::size_t>(c.arms[t].rows()));
    return out;
  }
  void observe(const RoundContexts&, const std::vector<Action>&, const Feedback&) override {}

 private:
  std::size_t T_;
  Rng rng_;
};

// Records every offered context set; acts through a wrapped policy.
class Recorder final : public Policy {
 public:
  Recorder(std::unique_ptr<Policy> inner, std::vector<Mat>* seen) : inner_(std::move(inner)), seen_(seen) {}
  std::string_view name() const override { return inner_->name(); }
  std::vector<Action> choose(const RoundContexts& c) override {
    for (const auto& a : c.arms) seen_->push_back(a);
    return inner_->choose(c);
  }
  void observe(const RoundContexts& c, const std::vector<Action>& a, const Feedback& f) override {
    inner_->observe(c, a, f);
  }

 private:
  std::unique_ptr<Policy> inner_;
  std::vector<Mat>* seen_;
};

class BadArmPolicy final : public Policy {
 public:
  explicit BadArmPolicy(std::size_t T) : T_(T) {}
  std::string_view name() const override { return "bad"; }
  std::vector<Action> choose(const RoundContexts& c) override {
    std::vector<Action> out(T_);
    for (auto& a : out) a.arm = 0;
    if (c.round == 3) out.back().arm = 99;
    return out;
  }
  void observe(const RoundContexts&, const std::vector<Action>&, const Feedback&) override {}

 private:
  std::size_t T_;
};

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("ledger bookkeeping") {
    RegretLedger ledger;
    ledger.tasks = 4;
    for (double r : {1.0, 0.0, 2.5}) ledger.record(r);
    CHECK(ledger.cumulative == std::vector<double>{1.0, 1.0, 3.5});
    CHECK(ledger.total() == 3.5);
    CHECK(ledger.per_task(2) == 3.5 / 4);
  }

  TEST_CASE("regret is conserved against the transcript") {
    RunHooks hooks;
    hooks.record_transcript = true;
    for (const auto& config : {finite_config(), infinite_config(Algo::e2tc), infinite_config(Algo::pege)}) {
      const auto r = run(config, 7, hooks);
      REQUIRE(r.transcript.size() == config.N);
      REQUIRE(r.ledger.rounds() == config.N);
      double sum = 0.0;
      for (std::size_t n = 0; n < config.N; ++n) {
        CHECK(r.transcript[n].regret.minCoeff() >= 0.0);
        sum += r.transcript[n].regret.sum();
        CHECK(r.ledger.instantaneous[n] == r.transcript[n].regret.sum());
        if (n > 0) CHECK(r.ledger.cumulative[n] >= r.ledger.cumulative[n - 1]);
        CHECK(r.ledger.per_task(n) == r.ledger.cumulative[n] / static_cast<double>(config.T));
      }
      CHECK(std::abs(r.summary.final_regret - sum) <= 1e-9 * (1 + sum));
      CHECK(r.summary.final_regret == r.ledger.total());
      CHECK(r.summary.final_per_task == r.ledger.total() / static_cast<double>(config.T));
      CHECK(r.summary.seed == 7);
    }
  }

  TEST_CASE("an oracle policy has zero regret") {
    for (const auto& config : {finite_config(4, 200), infinite_config(Algo::pege)}) {
      RunHooks hooks;
      const std::uint64_t seed = 11;
      hooks.policy_factory = [&](const ProblemShape&, Rng) {
        return std::make_unique<OraclePolicy>(make_instance(config, Rng(seed).derive_child("env")));
      };
      const auto r = run(config, seed, hooks);
      CHECK(r.summary.final_regret <= 1e-9);
    }
  }

  TEST_CASE("a uniform policy pays half the mean gap") {
    auto config = finite_config(1, 100000);
    config.d = 4;
    config.k = 1;
    config.K = 2;
    RunHooks hooks;
    hooks.policy_factory = [](const ProblemShape& s, Rng rng) {
      return std::make_unique<UniformPolicy>(s.T, std::move(rng));
    };
    const auto r = run(config, 3, hooks);
    std::vector<double> empirical(r.ledger.instantaneous.begin(), r.ledger.instantaneous.end());
    const auto emp = testing::mean_se(empirical);

    // Monte-Carlo expectation over the context law: with two N(0, I/d) arms
    // the uniform choice loses |<x1 - x2, theta>| / 2 on average.
    const HiddenInstance inst = make_instance(config, Rng(3).derive_child("env"));
    const Vec theta = inst.theta.col(0);
    Rng mc(99);
    const double sd = 1.0 / std::sqrt(static_cast<double>(config.d));
    std::vector<double> gaps(400000);
    for (auto& g : gaps) {
      double diff = 0.0;
      for (Eigen::Index i = 0; i < config.d; ++i) diff += (mc.normal() - mc.normal()) * sd * theta[i];
      g = std::abs(diff) / 2.0;
    }
    const auto oracle = testing::mean_se(gaps);
    CHECK(std::abs(emp.mean - oracle.mean) <= 3 * std::hypot(emp.se, oracle.se));
    // Closed form for |theta| = 1: E|N(0, 2/d)| / 2 = 1 / sqrt(pi d).
    CHECK(std::abs(oracle.mean - 1.0 / std::sqrt(std::numbers::pi * config.d)) <= 3 * oracle.se);
  }

  TEST_CASE("policy seed never changes the offered contexts") {
    for (const auto& config : {finite_config(3, 32), mnist_config()}) {
      std::vector<Mat> first, second;
      RunHooks hooks;
      hooks.mnist = tiny_mnist();
      hooks.env_seed = 5;
      std::vector<Mat>* sink = &first;
      hooks.policy_factory = [&](const ProblemShape&, Rng rng) {
        return std::make_unique<Recorder>(make_policy(config, std::move(rng)), sink);
      };
      hooks.policy_seed = 1;
      run(config, 0, hooks);
      sink = &second;
      hooks.policy_seed = 2;
      run(config, 0, hooks);
      REQUIRE(first.size() == config.N * config.T);
      REQUIRE(first.size() == second.size());
      for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
    }
  }

  TEST_CASE("runs are bitwise reproducible per setting") {
    const auto dir = scratch("determinism");
    RunHooks hooks;
    hooks.mnist = tiny_mnist();
    for (const auto& config : {finite_config(), infinite_config(), mnist_config()}) {
      const auto a = dir / "a.csv", b = dir / "b.csv";
      write_csv(std::vector<RunResult>{run(config, 42, hooks)}, a);
      write_csv(std::vector<RunResult>{run(config, 42, hooks)}, b);
      CHECK(slurp(a) == slurp(b));
      write_csv(std::vector<RunResult>{run(config, 43, hooks)}, b);
      CHECK(slurp(a) != slurp(b));
    }
    fs::remove_all(dir);
  }

  TEST_CASE("mnist runs count mistakes") {
    RunHooks hooks;
    hooks.mnist = tiny_mnist();
    hooks.record_transcript = true;
    auto config = mnist_config();
    config.algo = Algo::mlin_greedy;
    const auto r = run(config, 1, hooks);
    for (const auto& entry : r.transcript)
      for (Eigen::Index t = 0; t < entry.regret.size(); ++t)
        CHECK((entry.regret[t] == 0.0 || entry.regret[t] == 1.0));
    auto wrong_d = mnist_config();
    wrong_d.d = 100;
    CHECK_THROWS_AS(run(wrong_d, 1, hooks), ConfigError);
  }

  TEST_CASE("csv format") {
    const auto dir = scratch("csv");
    auto one = infinite_config(Algo::pege);
    one.N = 1;
    const auto r1 = run(one, 0);
    write_csv(std::vector<RunResult>{r1}, dir / "one.csv");
    const auto text = slurp(dir / "one.csv");
    const auto rows = csv_rows(text);
    REQUIRE(rows.size() == 2);
    CHECK(text.substr(0, text.find('\n')) == kCsvHeader);
    CHECK(text.find('\r') == std::string::npos);
    CHECK(rows[1][0] == "infinite");
    CHECK(rows[1][1] == "pege");
    CHECK(rows[1][8] == "1");

    auto config = finite_config(3, 64);
    config.seeds = {0, 1};
    std::vector<RunResult> runs = {run(config, 0), run(config, 1)};
    write_csv(runs, dir / "two.csv");
    const auto table = csv_rows(slurp(dir / "two.csv"));
    REQUIRE(table.size() == 1 + 2 * 64);
    long prev_round = 0;
    std::string prev_seed;
    for (std::size_t i = 1; i < table.size(); ++i) {
      REQUIRE(table[i].size() == 11);
      const long round = std::stol(table[i][8]);
      if (table[i][2] == prev_seed) CHECK(round > prev_round);
      prev_round = round;
      prev_seed = table[i][2];
      const double total = std::stod(table[i][9]);
      const double per_task = std::stod(table[i][10]);
      // Both columns carry 10 significant digits.
      CHECK(std::abs(per_task - total / 3.0) <= 1e-9 * std::max(1.0, std::abs(per_task)));
    }
    // The final row matches the in-memory ledger to the printed precision.
    CHECK(std::stod(table.back()[9]) == doctest::Approx(runs[1].ledger.total()).epsilon(1e-9));

    CHECK_THROWS_AS(write_csv(runs, dir / "missing" / "x.csv"), IoError);
    fs::remove_all(dir);
  }

  TEST_CASE("logged rounds downsample long horizons") {
    const auto every = logged_rounds(10000);
    CHECK(every.size() == 10000);
    CHECK(every.front() == 1);
    CHECK(every.back() == 10000);
    const auto sparse = logged_rounds(25000);
    CHECK(sparse.front() == 3);
    CHECK(sparse[1] == 6);
    CHECK(sparse.back() == 25000);
    CHECK(sparse[sparse.size() - 2] == 24999);
    CHECK(sparse.size() == 8334);
    const auto even = logged_rounds(20000);
    CHECK(even.back() == 20000);
    CHECK(even.size() == 10000);
    CHECK(logged_rounds(1) == std::vector<std::size_t>{1});
  }

  TEST_CASE("errors name the failing round and task") {
    RunHooks hooks;
    hooks.policy_factory = [](const ProblemShape& s, Rng) { return std::make_unique<BadArmPolicy>(s.T); };
    const auto config = finite_config(3, 16);
    CHECK_THROWS_WITH_AS(run(config, 0, hooks), doctest::Contains("round 3: task 2"), ConstraintViolation);
  }

  TEST_CASE("config parsing") {
    const std::string good = R"({"setting": "finite", "d": 20, "k": 2, "K": 5, "T": 80, "N": 10000,
      "algo": "mlin_greedy", "seeds": [0, 1, 2], "out_path": "out.csv"})";
    const auto c = parse_config(good);
    CHECK(c.d == 20);
    CHECK(c.K == 5);
    CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(c.out_path == "out.csv");
    const auto again = parse_config(to_json(c));
    CHECK(to_json(again) == to_json(c));

    const std::string inf = R"({"setting": "infinite", "d": 10, "k": 2, "T": 100, "N": 10000,
      "algo": "e2tc", "seeds": [3], "e2tc": {"c1": 1, "c2": 1, "exponent_c": 1.0}})";
    const auto ci = parse_config(inf);
    CHECK(ci.e2tc.exponent() == 1.0);
    CHECK(parse_config(to_json(ci)).e2tc.exponent() == 1.0);

    const std::string mn = R"({"setting": "mnist", "d": 784, "k": 2, "T": 45, "N": 2000,
      "algo": "mlin_greedy", "seeds": [0], "mnist": {"images": "i", "labels": "l"}})";
    const auto cm = parse_config(mn);
    CHECK(cm.K == 2);
    CHECK(cm.mnist_digits().size() == 10);

    auto expect_config_error = [](const std::string& text) { CHECK_THROWS_AS(parse_config(text), ConfigError); };
    expect_config_error("{");
    expect_config_error("[]");
    expect_config_error(R"({"setting": "finite", "d": 20, "k": 2, "K": 5, "T": 8, "N": 100,
      "algo": "mlin_greedy", "seeds": [0], "extra": 1})");
    expect_config_error(R"({"setting": "finite", "d": 2, "k": 3, "K": 5, "T": 8, "N": 100,
      "algo": "mlin_greedy", "seeds": [0]})");
    expect_config_error(R"({"setting": "finite", "d": 4, "k": 2, "K": 5, "T": 8, "N": 100,
      "algo": "mlin_greedy", "seeds": []})");
    expect_config_error(R"({"setting": "finite", "d": 4, "k": 2, "K": 5, "T": 8, "N": 100,
      "algo": "e2tc", "seeds": [0]})");
    expect_config_error(R"({"setting": "finite", "d": 4, "k": 2, "K": 1, "T": 8, "N": 100,
      "algo": "mlin_greedy", "seeds": [0]})");
    expect_config_error(R"({"setting": "finite", "d": 4, "k": 2, "K": 5, "T": 8, "N": 3,
      "algo": "mlin_greedy", "seeds": [0]})");
    expect_config_error(R"({"setting": "finite", "d": -4, "k": 2, "K": 5, "T": 8, "N": 100,
      "algo": "mlin_greedy", "seeds": [0]})");
    expect_config_error(R"({"setting": "cubic", "d": 4, "k": 2, "K": 5, "T": 8, "N": 100,
      "algo": "mlin_greedy", "seeds": [0]})");
    expect_config_error(R"({"setting": "mnist", "d": 784, "k": 2, "T": 44, "N": 2000,
      "algo": "mlin_greedy", "seeds": [0], "mnist": {"images": "i", "labels": "l"}})");
    expect_config_error(R"({"setting": "infinite", "d": 10, "k": 2, "T": 100, "N": 10000,
      "algo": "e2tc", "seeds": [3], "e2tc": {"c3": 1}})");
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);
  }

  TEST_CASE("sweep counting, failures and idempotence") {
    const auto dir = scratch("sweep");
    SweepSpec spec;
    spec.base = finite_config(5, 16);
    spec.tasks = {5, 10, 25, 50, 100};
    spec.ranks = {2, 4};
    for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
    spec.out_dir = dir;
    spec.threads = 2;
    const auto cells = sweep(spec);
    CHECK(cells.size() == 200);
    std::size_t ok = 0;
    for (const auto& c : cells) ok += c.error.empty() && !c.reused;
    CHECK(ok == 200);
    const auto summary = csv_rows(slurp(dir / "summary.csv"));
    CHECK(summary.size() == 201);
    const auto files = std::distance(fs::directory_iterator(dir / "runs"), fs::directory_iterator{});
    CHECK(files == 200);
    const std::string first_summary = slurp(dir / "summary.csv");

    const auto again = sweep(spec);
    std::size_t reused = 0;
    for (const auto& c : again) reused += c.reused;
    CHECK(reused == 200);
    CHECK(std::distance(fs::directory_iterator(dir / "runs"), fs::directory_iterator{}) == 200);
    CHECK(slurp(dir / "summary.csv") == first_summary);

    // A rank above d fails per cell and the sweep carries on.
    spec.ranks = {2, 9};
    spec.tasks = {5};
    spec.seeds = {0};
    const auto mixed = sweep(spec);
    CHECK(mixed.size() == 4);
    std::size_t failed = 0;
    for (const auto& c : mixed) failed += !c.error.empty();
    CHECK(failed == 2);
    CHECK(csv_rows(slurp(dir / "failures.csv")).size() == 3);
    CHECK(csv_rows(slurp(dir / "summary.csv")).size() == 3);

    spec.tasks = {};
    CHECK(sweep(spec).empty());
    CHECK(csv_rows(slurp(dir / "summary.csv")).size() == 1);
    fs::remove_all(dir);
  }

  TEST_CASE("run keys hash the content") {
    auto a = finite_config();
    auto b = a;
    b.seeds = {5, 6};
    b.out_path = "elsewhere.csv";
    CHECK(run_key(a, 1) == run_key(b, 1));
    CHECK(run_key(a, 1) != run_key(a, 2));
    b.T += 1;
    CHECK(run_key(a, 1) != run_key(b, 1));
    CHECK(run_key(a, 1).size() == 16);
  }
}
