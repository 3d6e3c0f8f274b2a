#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mtlb/errors.hpp"
#include "mtlb/harness.hpp"

namespace mtlb {

unsigned sweep_threads() {
  if (const char* env = std::getenv("MTLB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string run_key(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig c = config;
  c.seeds.clear();
  c.out_path.clear();
  const std::uint64_t h = splitmix64(fnv1a64(to_json(c)) ^ splitmix64(seed));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// Final (regret_total, regret_per_task) from an existing run file.
std::optional<std::pair<double, double>> read_final_row(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line, last;
  std::getline(in, line);
  if (line != kCsvHeader) return std::nullopt;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  if (last.empty()) return std::nullopt;
  std::vector<std::string> fields;
  std::stringstream ss(last);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  if (fields.size() != 11) return std::nullopt;
  return std::make_pair(std::stod(fields[9]), std::stod(fields[10]));
}

}  // namespace

std::vector<SweepCell> sweep(const SweepSpec& spec) {
  const auto [treatment, baseline] = algo_pair(spec.base.setting);
  std::vector<SweepCell> cells;
  for (std::size_t T : spec.tasks)
    for (Eigen::Index k : spec.ranks)
      for (Algo algo : {treatment, baseline})
        for (std::uint64_t seed : spec.seeds) {
          SweepCell cell;
          cell.T = T;
          cell.k = k;
          cell.algo = algo;
          cell.seed = seed;
          cells.push_back(cell);
        }

  const auto runs_dir = spec.out_dir / "runs";
  std::error_code ec;
  std::filesystem::create_directories(runs_dir, ec);
  if (ec) throw IoError("cannot create " + runs_dir.string() + ": " + ec.message());

  std::vector<std::optional<RunResult>> fresh(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& cell = cells[i];
      try {
        ExperimentConfig c = spec.base;
        c.T = cell.T;
        c.k = cell.k;
        c.algo = cell.algo;
        c.seeds = {cell.seed};
        c.out_path.clear();
        c.validate();
        cell.run_file = runs_dir / (run_key(c, cell.seed) + ".csv");
        if (auto final_row = read_final_row(cell.run_file)) {
          RunSummary s;
          s.config = c;
          s.seed = cell.seed;
          s.final_regret = final_row->first;
          s.final_per_task = final_row->second;
          cell.summary = s;
          cell.reused = true;
          continue;
        }
        RunHooks hooks;
        hooks.mnist = spec.mnist;
        fresh[i] = run(c, cell.seed, hooks);
        cell.summary = fresh[i]->summary;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const unsigned threads = std::min<std::size_t>(spec.threads ? spec.threads : sweep_threads(),
                                                 std::max<std::size_t>(cells.size(), 1));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // All file output happens here, on one thread.
  std::vector<RunSummary> table;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (fresh[i]) write_csv(std::vector<RunResult>{*fresh[i]}, cells[i].run_file);
    if (cells[i].summary) table.push_back(*cells[i].summary);
  }
  write_csv(table, spec.out_dir / "summary.csv");

  const auto failures_path = spec.out_dir / "failures.csv";
  std::ofstream failures(failures_path, std::ios::binary | std::ios::trunc);
  if (!failures) throw IoError("cannot write " + failures_path.string());
  failures << "T,k,algo,seed,error\n";
  for (const auto& cell : cells) {
    if (cell.error.empty()) continue;
    std::string msg = cell.error;
    for (char& ch : msg)
      if (ch == ',' || ch == '\n') ch = ';';
    failures << cell.T << ',' << cell.k << ',' << to_string(cell.algo) << ',' << cell.seed << ','
             << msg << '\n';
  }
  if (!failures) throw IoError("write failed: " + failures_path.string());
  return cells;
}

}  // namespace mtlb
