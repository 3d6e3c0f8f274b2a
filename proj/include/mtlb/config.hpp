#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtlb/envs.hpp"

namespace mtlb {

enum class Algo { mlin_greedy, independent_greedy, e2tc, pege };

std::string_view to_string(Algo a);
Algo parse_algo(std::string_view name);
Setting parse_setting(std::string_view name);

struct E2tcParams {
  double c1 = 1.0;
  double c2 = 1.0;
  /// Exponent of d in N1; 1.5 when absent.
  std::optional<double> exponent_c;

  double exponent() const { return exponent_c.value_or(1.5); }
};

struct MnistPaths {
  std::string images;
  std::string labels;
  /// 0 keeps raw pixels.
  int pca_dim = 0;
};

/// One declarative experiment. Serialized as a JSON object with exactly these
/// keys; unknown keys are rejected.
///
/// For the mnist setting K is 2, T must be C(m, 2) for m <= 10 (the tasks use
/// digits 0..m-1) and d must match the feature dimension (784, or pca_dim).
struct ExperimentConfig {
  Setting setting = Setting::finite;
  Eigen::Index d = 0;
  Eigen::Index k = 0;
  std::size_t K = 0;
  std::size_t T = 0;
  std::size_t N = 0;
  Algo algo = Algo::mlin_greedy;
  std::vector<std::uint64_t> seeds;
  E2tcParams e2tc;
  std::optional<MnistPaths> mnist;
  std::string out_path;

  /// Throws ConfigError when an invariant fails.
  void validate() const;
  /// Digits used by the mnist setting, derived from T.
  std::vector<int> mnist_digits() const;
};

/// Throws ConfigError on malformed JSON, unknown keys, missing or invalid fields.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);
std::string to_json(const ExperimentConfig& config);

/// The (treatment, baseline) pair compared in a sweep for this setting.
std::pair<Algo, Algo> algo_pair(Setting s);

}  // namespace mtlb
