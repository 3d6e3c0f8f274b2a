// Command-line front end: run, sweep, mnist, selftest.
//
// Exit codes: 0 success, 2 config error, 3 runtime or numerical failure, 4 I/O.

#include <cstdint>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtlb/errors.hpp"
#include "mtlb/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitIo = 4;

std::vector<int> parse_digits(const std::string& spec) {
  std::vector<int> digits;
  const auto dash = spec.find('-');
  try {
    if (dash != std::string::npos) {
      const int lo = std::stoi(spec.substr(0, dash));
      const int hi = std::stoi(spec.substr(dash + 1));
      for (int d = lo; d <= hi; ++d) digits.push_back(d);
    } else {
      std::stringstream ss(spec);
      for (std::string part; std::getline(ss, part, ',');) digits.push_back(std::stoi(part));
    }
  } catch (const std::exception&) {
    throw mtlb::ConfigError("cannot parse digits '" + spec + "'");
  }
  return digits;
}

void print_summary(const mtlb::RunSummary& s) {
  std::cout << mtlb::to_string(s.config.algo) << " seed=" << s.seed << " regret=" << s.final_regret
            << " per_task=" << s.final_per_task << " wall=" << s.wall_seconds << "s\n";
}

int run_seeds(const mtlb::ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
              const std::string& out, const std::shared_ptr<const mtlb::MnistData>& mnist) {
  std::vector<mtlb::RunResult> runs;
  for (std::uint64_t seed : seeds) {
    mtlb::RunHooks hooks;
    hooks.mnist = mnist;
    runs.push_back(mtlb::run(config, seed, hooks));
    print_summary(runs.back().summary);
  }
  if (out.empty()) {
    std::cout << mtlb::kCsvHeader << '\n';
    for (const auto& r : runs) mtlb::write_ledger_rows(std::cout, r.summary, r.ledger);
  } else {
    mtlb::write_csv(runs, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task linear bandit simulator"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run one experiment config");
  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  run_cmd->add_option("--config", config_path, "JSON experiment config")->required();
  run_cmd->add_option("--seed", seed, "Run only this seed instead of the config's seed list");
  run_cmd->add_option("--out", out_path, "Output CSV (defaults to the config's out_path)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep tasks x ranks x {treatment, baseline} x seeds");
  std::vector<std::size_t> tasks;
  std::vector<long> ranks;
  std::optional<std::size_t> seed_count;
  std::string sweep_out;
  sweep_cmd->add_option("--config", config_path, "Base JSON config")->required();
  sweep_cmd->add_option("--tasks", tasks, "Task counts, comma separated")->delimiter(',');
  sweep_cmd->add_option("--ranks", ranks, "Representation ranks, comma separated")->delimiter(',');
  sweep_cmd->add_option("--seeds", seed_count, "Use seeds 0..n-1 (default: the config's seeds)");
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();

  auto* mnist_cmd = app.add_subcommand("mnist", "Pairwise-digit tasks on MNIST IDX files");
  std::string images, labels, digits_spec = "0-4", algo = "mlin_greedy", mnist_out;
  long k = 2;
  std::size_t horizon = 2000, mnist_seeds = 1;
  int pca_dim = 0;
  mnist_cmd->add_option("--images", images, "IDX image file")->required();
  mnist_cmd->add_option("--labels", labels, "IDX label file")->required();
  mnist_cmd->add_option("--digits", digits_spec, "Digit range, e.g. 0-4 or 0-9");
  mnist_cmd->add_option("--algo", algo, "mlin_greedy or independent_greedy");
  mnist_cmd->add_option("--out", mnist_out, "Output CSV")->required();
  mnist_cmd->add_option("--k", k, "Representation rank");
  mnist_cmd->add_option("--N", horizon, "Rounds");
  mnist_cmd->add_option("--seeds", mnist_seeds, "Number of seeds (0..n-1)");
  mnist_cmd->add_option("--pca", pca_dim, "Project pixels onto this many principal directions");

  auto* selftest_cmd = app.add_subcommand("selftest", "Sphere-moment and ALS-oracle checks");
  std::uint64_t selftest_seed = 2021;
  selftest_cmd->add_option("--seed", selftest_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) {
      const auto config = mtlb::load_config(config_path);
      const auto seeds = seed ? std::vector<std::uint64_t>{*seed} : config.seeds;
      return run_seeds(config, seeds, out_path.empty() ? config.out_path : out_path, nullptr);
    }
    if (*sweep_cmd) {
      mtlb::SweepSpec spec;
      spec.base = mtlb::load_config(config_path);
      spec.tasks = tasks;
      for (long r : ranks) spec.ranks.push_back(r);
      if (spec.ranks.empty()) spec.ranks.push_back(spec.base.k);
      if (seed_count) {
        for (std::uint64_t s = 0; s < *seed_count; ++s) spec.seeds.push_back(s);
      } else {
        spec.seeds = spec.base.seeds;
      }
      spec.out_dir = sweep_out;
      const auto cells = mtlb::sweep(spec);
      std::size_t failed = 0, reused = 0;
      for (const auto& c : cells) {
        failed += !c.error.empty();
        reused += c.reused;
      }
      std::cout << cells.size() << " cells, " << reused << " reused, " << failed << " failed\n";
      return 0;
    }
    if (*mnist_cmd) {
      auto data = std::make_shared<mtlb::MnistData>(
          mtlb::MnistData{mtlb::read_idx_file(images), mtlb::read_idx_file(labels)});
      const auto digits = parse_digits(digits_spec);
      for (std::size_t i = 0; i < digits.size(); ++i) {
        if (digits[i] != static_cast<int>(i)) {
          throw mtlb::ConfigError("--digits must be a prefix range 0-m");
        }
      }
      mtlb::ExperimentConfig config;
      config.setting = mtlb::Setting::mnist;
      config.d = pca_dim > 0 ? pca_dim : 784;
      config.k = k;
      config.K = 2;
      config.T = digits.size() * (digits.size() - 1) / 2;
      config.N = horizon;
      config.algo = mtlb::parse_algo(algo);
      for (std::uint64_t s = 0; s < mnist_seeds; ++s) config.seeds.push_back(s);
      config.mnist = mtlb::MnistPaths{images, labels, pca_dim};
      config.out_path = mnist_out;
      config.validate();
      return run_seeds(config, config.seeds, mnist_out, data);
    }
    if (*selftest_cmd) {
      bool ok = true;
      for (const auto& c : mtlb::run_selftest(selftest_seed)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        ok = ok && c.passed;
      }
      return ok ? 0 : kExitRuntime;
    }
  } catch (const mtlb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mtlb::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const mtlb::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
