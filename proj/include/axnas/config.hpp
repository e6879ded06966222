#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "axnas/error.hpp"
#include "axnas/genotype.hpp"
#include "axnas/moea.hpp"

namespace axnas {

// Run configuration. The experiment-parameter keys use the manifest names
// verbatim (n_r, n_c, L, pop_size, G, D_train, D_retrain, D_test, E_train,
// E_retrain, batch_size, rate, p_arch, p_mult); defaults reproduce the
// reference setup.
struct RunConfig {
  int n_r = 6;
  int n_c = 23;
  int L = 5;
  int pop_size = 8;
  int G = 10;
  int D_train = 50000;
  int D_retrain = 50000;
  int D_test = 10000;
  int E_train = 20;
  int E_retrain = 200;
  int batch_size = 32;
  double rate = 0.001;
  double p_arch = 1.0;
  double p_mult = 1.0;

  std::string scenario = "s4";
  std::string multiplier = "mul8u_85Q";  // the fixed pick for scenario s3
  std::string dataset = "micro";  // micro | idx:<dir> | cifar10:<dir>
  std::vector<std::string> lut_files;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir;
  double l2 = 1e-4;
  bool augment = true;
  int shift_px = 4;
  int retrain_top_k = 0;
  ParamPools pools;
};

namespace detail {

inline void pool_from_json(const nlohmann::json& j, const char* key,
                           std::vector<int>& into) {
  if (j.contains(key)) into = j.at(key).get<std::vector<int>>();
}

}  // namespace detail

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "n_r",        "n_c",     "L",          "pop_size",   "G",
      "D_train",    "D_retrain", "D_test",   "E_train",    "E_retrain",
      "batch_size", "rate",    "p_arch",     "p_mult",     "scenario",
      "multiplier", "dataset", "lut_files",  "seed",       "workers",
      "out_dir",    "l2",      "augment",    "shift_px",   "retrain_top_k",
      "pools"};
  return keys;
}

inline const std::set<std::string>& known_pool_keys() {
  static const std::set<std::string> keys = {
      "conv_filters",      "conv_kernels",     "conv_strides",
      "fc_widths",         "pool_kernels",     "pool_strides",
      "inception_filters", "residual_kernels", "residual_strides",
      "bottleneck_reduce"};
  return keys;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (!known_config_keys().contains(key))
      throw ConfigError("unknown configuration key '" + key + "'");
  }
  RunConfig c;
  c.n_r = j.value("n_r", c.n_r);
  c.n_c = j.value("n_c", c.n_c);
  c.L = j.value("L", c.L);
  c.pop_size = j.value("pop_size", c.pop_size);
  c.G = j.value("G", c.G);
  c.D_train = j.value("D_train", c.D_train);
  c.D_retrain = j.value("D_retrain", c.D_retrain);
  c.D_test = j.value("D_test", c.D_test);
  c.E_train = j.value("E_train", c.E_train);
  c.E_retrain = j.value("E_retrain", c.E_retrain);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.rate = j.value("rate", c.rate);
  c.p_arch = j.value("p_arch", c.p_arch);
  c.p_mult = j.value("p_mult", c.p_mult);
  c.scenario = j.value("scenario", c.scenario);
  c.multiplier = j.value("multiplier", c.multiplier);
  c.dataset = j.value("dataset", c.dataset);
  if (j.contains("lut_files"))
    c.lut_files = j.at("lut_files").get<std::vector<std::string>>();
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.l2 = j.value("l2", c.l2);
  c.augment = j.value("augment", c.augment);
  c.shift_px = j.value("shift_px", c.shift_px);
  c.retrain_top_k = j.value("retrain_top_k", c.retrain_top_k);
  if (j.contains("pools")) {
    const nlohmann::json& p = j.at("pools");
    for (const auto& [key, value] : p.items()) {
      if (!known_pool_keys().contains(key))
        throw ConfigError("unknown pools key '" + key + "'");
    }
    detail::pool_from_json(p, "conv_filters", c.pools.conv_filters);
    detail::pool_from_json(p, "conv_kernels", c.pools.conv_kernels);
    detail::pool_from_json(p, "conv_strides", c.pools.conv_strides);
    detail::pool_from_json(p, "fc_widths", c.pools.fc_widths);
    detail::pool_from_json(p, "pool_kernels", c.pools.pool_kernels);
    detail::pool_from_json(p, "pool_strides", c.pools.pool_strides);
    detail::pool_from_json(p, "inception_filters", c.pools.inception_filters);
    detail::pool_from_json(p, "residual_kernels", c.pools.residual_kernels);
    detail::pool_from_json(p, "residual_strides", c.pools.residual_strides);
    detail::pool_from_json(p, "bottleneck_reduce", c.pools.bottleneck_reduce);
  }
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  return {{"n_r", c.n_r},
          {"n_c", c.n_c},
          {"L", c.L},
          {"pop_size", c.pop_size},
          {"G", c.G},
          {"D_train", c.D_train},
          {"D_retrain", c.D_retrain},
          {"D_test", c.D_test},
          {"E_train", c.E_train},
          {"E_retrain", c.E_retrain},
          {"batch_size", c.batch_size},
          {"rate", c.rate},
          {"p_arch", c.p_arch},
          {"p_mult", c.p_mult},
          {"scenario", c.scenario},
          {"multiplier", c.multiplier},
          {"dataset", c.dataset},
          {"lut_files", c.lut_files},
          {"seed", c.seed},
          {"workers", c.workers},
          {"out_dir", c.out_dir},
          {"l2", c.l2},
          {"augment", c.augment},
          {"shift_px", c.shift_px},
          {"retrain_top_k", c.retrain_top_k},
          {"pools",
           {{"conv_filters", c.pools.conv_filters},
            {"conv_kernels", c.pools.conv_kernels},
            {"conv_strides", c.pools.conv_strides},
            {"fc_widths", c.pools.fc_widths},
            {"pool_kernels", c.pools.pool_kernels},
            {"pool_strides", c.pools.pool_strides},
            {"inception_filters", c.pools.inception_filters},
            {"residual_kernels", c.pools.residual_kernels},
            {"residual_strides", c.pools.residual_strides},
            {"bottleneck_reduce", c.pools.bottleneck_reduce}}}};
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> v;
  auto positive = [&](int value, const char* name) {
    if (value < 1)
      v.push_back(std::string(name) + " must be >= 1 (got " +
                  std::to_string(value) + ")");
  };
  positive(c.n_r, "n_r");
  positive(c.n_c, "n_c");
  positive(c.L, "L");
  positive(c.pop_size, "pop_size");
  if (c.G < 0) v.push_back("G must be >= 0");
  positive(c.D_train, "D_train");
  positive(c.D_retrain, "D_retrain");
  positive(c.D_test, "D_test");
  positive(c.E_train, "E_train");
  positive(c.E_retrain, "E_retrain");
  positive(c.batch_size, "batch_size");
  positive(c.workers, "workers");
  if (!(c.rate > 0.0)) v.push_back("rate must be > 0");
  if (c.p_arch < 0.0 || c.p_arch > 1.0) v.push_back("p_arch must be in [0,1]");
  if (c.p_mult < 0.0 || c.p_mult > 1.0) v.push_back("p_mult must be in [0,1]");
  if (c.l2 < 0.0) v.push_back("l2 must be >= 0");
  if (c.shift_px < 0) v.push_back("shift_px must be >= 0");
  try {
    scenario_from_string(c.scenario);
  } catch (const ConfigError& e) {
    v.push_back(e.what());
  }
  if (c.dataset.empty()) v.push_back("dataset must be set");
  const bool known_scheme = c.dataset == "micro" ||
                            c.dataset.rfind("micro:", 0) == 0 ||
                            c.dataset.rfind("idx:", 0) == 0 ||
                            c.dataset.rfind("cifar10:", 0) == 0;
  if (!c.dataset.empty() && !known_scheme)
    v.push_back("dataset must be 'micro[:seed]', 'idx:<dir>' or "
                "'cifar10:<dir>'");
  return v;
}

}  // namespace axnas
