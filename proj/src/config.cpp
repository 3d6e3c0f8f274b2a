#include "mtlb/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mtlb/errors.hpp"

namespace mtlb {

using nlohmann::json;

std::string_view to_string(Algo a) {
  switch (a) {
    case Algo::mlin_greedy: return "mlin_greedy";
    case Algo::independent_greedy: return "independent_greedy";
    case Algo::e2tc: return "e2tc";
    case Algo::pege: return "pege";
  }
  return "unknown";
}

Algo parse_algo(std::string_view name) {
  for (Algo a : {Algo::mlin_greedy, Algo::independent_greedy, Algo::e2tc, Algo::pege})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown algo '" + std::string(name) + "'");
}

Setting parse_setting(std::string_view name) {
  for (Setting s : {Setting::finite, Setting::infinite, Setting::mnist})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown setting '" + std::string(name) + "'");
}

std::pair<Algo, Algo> algo_pair(Setting s) {
  if (s == Setting::infinite) return {Algo::e2tc, Algo::pege};
  return {Algo::mlin_greedy, Algo::independent_greedy};
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T require(const json& obj, const char* key) {
  if (!obj.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
  }
}

std::size_t require_count(const json& obj, const char* key) {
  const auto& v = obj.contains(key) ? obj.at(key) : json();
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("key '") + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

std::vector<int> ExperimentConfig::mnist_digits() const {
  for (int m = 2; m <= 10; ++m) {
    if (static_cast<std::size_t>(m * (m - 1) / 2) == T) {
      std::vector<int> digits(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) digits[static_cast<std::size_t>(i)] = i;
      return digits;
    }
  }
  throw ConfigError("mnist: T must be C(m, 2) for some 2 <= m <= 10");
}

void ExperimentConfig::validate() const {
  if (d < 1 || k < 1) throw ConfigError("d and k must be positive");
  if (k > d) throw ConfigError("k must not exceed d");
  if (T < 1) throw ConfigError("T must be positive");
  if (N < 1) throw ConfigError("N must be positive");
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  const bool greedy = algo == Algo::mlin_greedy || algo == Algo::independent_greedy;
  // The epoch schedule needs log2 log2 N > 0.
  if (greedy && N < 4) throw ConfigError("N must be at least 4 for the epoch-greedy policies");
  switch (setting) {
    case Setting::finite:
      if (K < 2) throw ConfigError("finite setting needs K >= 2");
      if (!greedy) throw ConfigError("finite setting supports mlin_greedy and independent_greedy");
      break;
    case Setting::mnist:
      if (K != 2) throw ConfigError("mnist setting needs K = 2");
      if (!greedy) throw ConfigError("mnist setting supports mlin_greedy and independent_greedy");
      if (!mnist) throw ConfigError("mnist setting needs mnist.images and mnist.labels");
      if (mnist->pca_dim < 0) throw ConfigError("mnist.pca_dim must be nonnegative");
      if (d != (mnist->pca_dim > 0 ? mnist->pca_dim : 784)) {
        throw ConfigError("mnist: d must equal the feature dimension (784 or pca_dim)");
      }
      mnist_digits();
      break;
    case Setting::infinite:
      if (greedy) throw ConfigError("infinite setting supports e2tc and pege");
      if (T < static_cast<std::size_t>(k)) throw ConfigError("infinite setting needs T >= k");
      if (!(e2tc.c1 > 0.0) || !(e2tc.c2 > 0.0)) throw ConfigError("e2tc.c1 and e2tc.c2 must be positive");
      break;
  }
}

ExperimentConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc, {"setting", "d", "k", "K", "T", "N", "algo", "seeds", "e2tc", "mnist", "out_path"},
                 "config");

  ExperimentConfig c;
  c.setting = parse_setting(require<std::string>(doc, "setting"));
  c.d = static_cast<Eigen::Index>(require_count(doc, "d"));
  c.k = static_cast<Eigen::Index>(require_count(doc, "k"));
  c.K = doc.contains("K") ? require_count(doc, "K") : (c.setting == Setting::mnist ? 2 : 0);
  c.T = require_count(doc, "T");
  c.N = require_count(doc, "N");
  c.algo = parse_algo(require<std::string>(doc, "algo"));

  if (!doc.contains("seeds") || !doc["seeds"].is_array()) throw ConfigError("seeds must be an array");
  for (const auto& s : doc["seeds"]) {
    if (!s.is_number_unsigned()) throw ConfigError("seeds must be nonnegative integers");
    c.seeds.push_back(s.get<std::uint64_t>());
  }
  if (doc.contains("e2tc")) {
    const auto& e = doc["e2tc"];
    if (!e.is_object()) throw ConfigError("e2tc must be an object");
    reject_unknown(e, {"c1", "c2", "exponent_c"}, "e2tc");
    if (e.contains("c1")) c.e2tc.c1 = require<double>(e, "c1");
    if (e.contains("c2")) c.e2tc.c2 = require<double>(e, "c2");
    if (e.contains("exponent_c") && !e["exponent_c"].is_null()) {
      c.e2tc.exponent_c = require<double>(e, "exponent_c");
    }
  }
  if (doc.contains("mnist") && !doc["mnist"].is_null()) {
    const auto& m = doc["mnist"];
    if (!m.is_object()) throw ConfigError("mnist must be an object");
    reject_unknown(m, {"images", "labels", "pca_dim"}, "mnist");
    MnistPaths paths;
    paths.images = require<std::string>(m, "images");
    paths.labels = require<std::string>(m, "labels");
    if (m.contains("pca_dim")) paths.pca_dim = require<int>(m, "pca_dim");
    c.mnist = paths;
  }
  if (doc.contains("out_path")) c.out_path = require<std::string>(doc, "out_path");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_json(const ExperimentConfig& c) {
  json doc = {{"setting", to_string(c.setting)},
              {"d", c.d},
              {"k", c.k},
              {"K", c.K},
              {"T", c.T},
              {"N", c.N},
              {"algo", to_string(c.algo)},
              {"seeds", c.seeds},
              {"out_path", c.out_path}};
  json e = {{"c1", c.e2tc.c1}, {"c2", c.e2tc.c2}};
  if (c.e2tc.exponent_c) e["exponent_c"] = *c.e2tc.exponent_c;
  doc["e2tc"] = e;
  if (c.mnist) {
    doc["mnist"] = {{"images", c.mnist->images}, {"labels", c.mnist->labels}, {"pca_dim", c.mnist->pca_dim}};
  }
  return doc.dump();
}

}  // namespace mtlb
