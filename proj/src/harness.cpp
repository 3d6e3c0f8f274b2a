#include "mtlb/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "mtlb/errors.hpp"

namespace mtlb {

void RegretLedger::record(double round_regret) {
  instantaneous.push_back(round_regret);
  cumulative.push_back(total() + round_regret);
}

ProblemShape problem_shape(const ExperimentConfig& config) {
  return ProblemShape{config.d, config.k, config.T, config.N, 1.0};
}

HiddenInstance make_instance(const ExperimentConfig& config, const Rng& env,
                             const std::shared_ptr<const MnistData>& mnist) {
  const std::uint64_t seed = env.derive_child("instance").seed();
  switch (config.setting) {
    case Setting::finite:
      return gen_finite(config.d, config.k, config.T, config.K, seed);
    case Setting::infinite:
      return gen_infinite(config.d, config.k, config.T, 1.0, seed);
    case Setting::mnist: {
      std::shared_ptr<const MnistData> data = mnist;
      if (!data) {
        if (!config.mnist) throw ConfigError("mnist setting needs image and label paths");
        data = std::make_shared<const MnistData>(
            MnistData{read_idx_file(config.mnist->images), read_idx_file(config.mnist->labels)});
      }
      HiddenInstance inst = build_mnist_tasks(data->images, data->labels, config.mnist_digits(),
                                              seed, config.mnist ? config.mnist->pca_dim : 0);
      if (inst.dim() != config.d) {
        throw ConfigError("mnist: d = " + std::to_string(config.d) +
                          " does not match the feature dimension " + std::to_string(inst.dim()));
      }
      return inst;
    }
  }
  throw ConfigError("unknown setting");
}

std::unique_ptr<Policy> make_policy(const ExperimentConfig& config, Rng policy_rng) {
  const ProblemShape shape = problem_shape(config);
  switch (config.algo) {
    case Algo::mlin_greedy: return std::make_unique<MLinGreedy>(shape, std::move(policy_rng));
    case Algo::independent_greedy: return std::make_unique<IndependentGreedy>(shape);
    case Algo::e2tc: {
      const auto b = e2tc_budgets(config.N, config.T, config.d, config.k, config.e2tc.c1,
                                  config.e2tc.c2, config.e2tc.exponent());
      return std::make_unique<E2tc>(shape, b, std::move(policy_rng));
    }
    case Algo::pege: return std::make_unique<Pege>(shape);
  }
  throw ConfigError("unknown algo");
}

namespace {

// Keeps the error category (and so the CLI exit code) while naming the round.
[[noreturn]] void rethrow_with_round(std::size_t n) {
  const std::string prefix = "round " + std::to_string(n) + ": ";
  try {
    throw;
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(prefix + e.what());
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(prefix + e.what());
  } catch (const ConstraintViolation& e) {
    throw ConstraintViolation(prefix + e.what());
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const Unsupported& e) {
    throw Unsupported(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const std::exception& e) {
    throw NumericalFailure(prefix + e.what());
  }
}

}  // namespace

RunResult run(const ExperimentConfig& config, std::uint64_t seed, const RunHooks& hooks) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Rng root(seed);
  const Rng env = hooks.env_seed ? Rng(*hooks.env_seed) : root.derive_child("env");
  const Rng policy_rng = hooks.policy_seed ? Rng(*hooks.policy_seed) : root.derive_child("policy");

  HiddenInstance inst = make_instance(config, env, hooks.mnist);
  if (inst.setting() != Setting::mnist) inst.noise_scale = hooks.noise_scale;
  std::unique_ptr<Policy> policy = hooks.policy_factory
                                       ? hooks.policy_factory(problem_shape(config), policy_rng)
                                       : make_policy(config, policy_rng);

  RunResult result;
  result.ledger.tasks = config.T;
  result.ledger.instantaneous.reserve(config.N);
  result.ledger.cumulative.reserve(config.N);
  for (std::size_t n = 1; n <= config.N; ++n) {
    try {
      Rng round_rng = env.derive_child("round", n);
      Rng noise_rng = env.derive_child("noise", n);
      const Round round = draw_round(inst, n, round_rng);
      std::vector<Action> actions = policy->choose(round.contexts);
      const Feedback feedback = pull(inst, round, actions, noise_rng);
      policy->observe(round.contexts, actions, feedback);
      Vec regret = instant_regret(inst, round, actions);
      result.ledger.record(regret.sum());
      if (hooks.record_transcript) {
        result.transcript.push_back({std::move(actions), std::move(regret)});
      }
    } catch (...) {
      rethrow_with_round(n);
    }
  }

  result.summary.config = config;
  result.summary.seed = seed;
  result.summary.final_regret = result.ledger.total();
  result.summary.final_per_task = result.ledger.per_task(result.ledger.rounds() - 1);
  result.summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<std::size_t> logged_rounds(std::size_t N) {
  const std::size_t step = N <= 10000 ? 1 : (N + 9999) / 10000;
  std::vector<std::size_t> rounds;
  for (std::size_t n = step; n <= N; n += step) rounds.push_back(n);
  if (rounds.empty() || rounds.back() != N) rounds.push_back(N);
  return rounds;
}

namespace {

std::string fmt10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_row(std::ostream& out, const ExperimentConfig& c, std::uint64_t seed, std::size_t round,
               double total, double per_task) {
  out << to_string(c.setting) << ',' << to_string(c.algo) << ',' << seed << ',' << c.d << ','
      << c.k << ',' << c.K << ',' << c.T << ',' << c.N << ',' << round << ',' << fmt10(total) << ','
      << fmt10(per_task) << '\n';
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_ledger_rows(std::ostream& out, const RunSummary& summary, const RegretLedger& ledger) {
  for (std::size_t n : logged_rounds(ledger.rounds())) {
    write_row(out, summary.config, summary.seed, n, ledger.cumulative[n - 1], ledger.per_task(n - 1));
  }
}

void write_csv(const std::vector<RunResult>& runs, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << kCsvHeader << '\n';
  for (const auto& r : runs) write_ledger_rows(out, r.summary, r.ledger);
  finish(out, path);
}

void write_csv(const std::vector<RunSummary>& table, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << kCsvHeader << '\n';
  for (const auto& s : table) {
    write_row(out, s.config, s.seed, s.config.N, s.final_regret, s.final_per_task);
  }
  finish(out, path);
}

}  // namespace mtlb
