#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mtlb/config.hpp"
#include "mtlb/envs.hpp"
#include "mtlb/policies.hpp"

namespace mtlb {

/// Per-round regret, summed over tasks.
struct RegretLedger {
  std::size_t tasks = 1;
  std::vector<double> instantaneous;  // index n - 1 holds round n
  std::vector<double> cumulative;

  std::size_t rounds() const { return cumulative.size(); }
  double total() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
  double per_task(std::size_t i) const { return cumulative[i] / static_cast<double>(tasks); }
  void record(double round_regret);
};

struct RunSummary {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  double final_regret = 0.0;
  double final_per_task = 0.0;
  double wall_seconds = 0.0;
};

/// What each round looked like, for audits and tests.
struct TranscriptEntry {
  std::vector<Action> actions;
  Vec regret;  // per task
};

struct RunResult {
  RegretLedger ledger;
  RunSummary summary;
  std::vector<TranscriptEntry> transcript;  // empty unless requested
};

struct MnistData {
  IdxData images;
  IdxData labels;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>(const ProblemShape&, Rng)>;

/// Overrides for experiments and tests. Defaults reproduce `run(config, seed)`.
struct RunHooks {
  /// Seeds the environment and policy streams separately; by default both
  /// are derived from the run seed as children "env" and "policy".
  std::optional<std::uint64_t> env_seed;
  std::optional<std::uint64_t> policy_seed;
  /// Replaces the policy named by config.algo.
  PolicyFactory policy_factory;
  /// Preloaded MNIST files, so sweeps do not reread them per run.
  std::shared_ptr<const MnistData> mnist;
  double noise_scale = 1.0;
  bool record_transcript = false;
};

/// Builds the environment for a config from the environment stream's
/// "instance" child.
HiddenInstance make_instance(const ExperimentConfig& config, const Rng& env,
                             const std::shared_ptr<const MnistData>& mnist = nullptr);
ProblemShape problem_shape(const ExperimentConfig& config);
std::unique_ptr<Policy> make_policy(const ExperimentConfig& config, Rng policy_rng);

/// Plays config.N rounds: draw, choose, pull, observe, account regret.
/// Errors are rethrown with the failing round prefixed to the message.
RunResult run(const ExperimentConfig& config, std::uint64_t seed, const RunHooks& hooks = {});

/// Header shared by ledgers and sweep tables.
inline constexpr const char* kCsvHeader =
    "setting,algo,seed,d,k,K,T,N,round,regret_total,regret_per_task";

/// Rows logged for a horizon: every round for N <= 10^4, otherwise every
/// ceil(N / 10^4)-th round plus the final one.
std::vector<std::size_t> logged_rounds(std::size_t N);

void write_ledger_rows(std::ostream& out, const RunSummary& summary, const RegretLedger& ledger);
/// Writes header plus the ledgers of every run, in order. Throws IoError.
void write_csv(const std::vector<RunResult>& runs, const std::filesystem::path& path);
/// One row per summary, round = N. Throws IoError.
void write_csv(const std::vector<RunSummary>& table, const std::filesystem::path& path);

struct SweepSpec {
  ExperimentConfig base;
  std::vector<std::size_t> tasks;
  std::vector<Eigen::Index> ranks;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  /// 0 picks MTLB_THREADS or the hardware concurrency.
  unsigned threads = 0;
  std::shared_ptr<const MnistData> mnist;
};

struct SweepCell {
  std::size_t T = 0;
  Eigen::Index k = 0;
  Algo algo = Algo::mlin_greedy;
  std::uint64_t seed = 0;
  std::optional<RunSummary> summary;
  std::string error;  // empty on success
  bool reused = false;  // result read back from an existing run file
  std::filesystem::path run_file;
};

/// Runs the (T, k, algo pair, seed) cross product. Each run's ledger lands in
/// out_dir/runs/<content hash>.csv and is reused when already present;
/// out_dir/summary.csv holds one row per successful cell and
/// out_dir/failures.csv one row per failed cell.
std::vector<SweepCell> sweep(const SweepSpec& spec);

/// Content hash naming a run's output: the config (minus seeds and out_path) and seed.
std::string run_key(const ExperimentConfig& config, std::uint64_t seed);

unsigned sweep_threads();

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Sphere-moment Monte-Carlo checks and the ALS-vs-brute-force oracle suite.
std::vector<SelftestCheck> run_selftest(std::uint64_t seed);

}  // namespace mtlb
