#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "axnas/config.hpp"
#include "axnas/dataset.hpp"
#include "axnas/moea.hpp"
#include "axnas/multiplier.hpp"

namespace axnas {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

// Collects the per-generation CSV artifacts. All hooks run on the
// coordinating thread; files are written once at the end of the run.
class CsvLogger : public RunLogger {
 public:
  CsvLogger() {
    evals_ = "id,generation,f1,f2,f3_uj,mult_id,mult_pj,mult_count,rank,"
             "crowding,viable\n";
    plot_ = "generation,id,f1,f3_uj\n";
  }

  void set_library(const MultiplierLibrary* lib) { lib_ = lib; }

  void on_generation(int gen, const std::vector<Individual>& group) override {
    for (const Individual& ind : group) {
      const double pj =
          lib_ != nullptr ? lib_->at(ind.geno.mult_index).energy_per_op : 0.0;
      evals_ += std::to_string(ind.id) + "," + std::to_string(gen) + "," +
                detail::fmt_double(ind.fit.accuracy) + "," +
                detail::fmt_double(ind.fit.params) + "," +
                detail::fmt_double(ind.fit.energy_uj) + "," + ind.mult_id +
                "," + detail::fmt_double(pj) + "," +
                std::to_string(ind.mult_count) + "," +
                std::to_string(ind.rank) + "," +
                detail::fmt_double(ind.crowding) + "," +
                (ind.viable ? "1" : "0") + "\n";
      plot_ += std::to_string(gen) + "," + std::to_string(ind.id) + "," +
               detail::fmt_double(ind.fit.accuracy) + "," +
               detail::fmt_double(ind.fit.energy_uj) + "\n";
    }
  }

  const std::string& evaluations_csv() const { return evals_; }
  const std::string& plot_csv() const { return plot_; }

 private:
  std::string evals_;
  std::string plot_;
  const MultiplierLibrary* lib_ = nullptr;
};

inline std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg) {
  if (cfg.dataset == "micro" || cfg.dataset.rfind("micro:", 0) == 0) {
    MicroSpec spec;
    if (const auto pos = cfg.dataset.find(':'); pos != std::string::npos)
      spec.seed = std::stoull(cfg.dataset.substr(pos + 1));
    return make_micro_dataset(spec);
  }
  if (cfg.dataset.rfind("idx:", 0) == 0) {
    namespace fs = std::filesystem;
    const fs::path dir = cfg.dataset.substr(4);
    Dataset train = load_idx((dir / "train.images.idx").string(),
                             (dir / "train.labels.idx").string());
    Dataset test = load_idx((dir / "test.images.idx").string(),
                            (dir / "test.labels.idx").string());
    // A test split must not invent classes the training split lacks.
    test.num_classes = train.num_classes =
        std::max(train.num_classes, test.num_classes);
    return {std::move(train), std::move(test)};
  }
  if (cfg.dataset.rfind("cifar10:", 0) == 0) {
    Cifar10 data = load_cifar10_binary(cfg.dataset.substr(8));
    return {std::move(data.train), std::move(data.test)};
  }
  throw ConfigError("unknown dataset '" + cfg.dataset + "'");
}

// Library selection: explicit LUT files when configured (order defines the
// gene indices), the built-in set otherwise. An exact reference is appended
// when the files do not include one.
inline MultiplierLibrary build_library(const RunConfig& cfg,
                                       std::ostream& log) {
  if (cfg.lut_files.empty()) return default_library();
  std::vector<MultiplierModel> models;
  for (const std::string& path : cfg.lut_files)
    models.push_back(load_lut_file(path));
  bool any_exact = false;
  for (const auto& m : models) any_exact = any_exact || m.is_exact;
  if (!any_exact) {
    log << "note: LUT set has no exact multiplier; appending mul8u_exact\n";
    models.push_back(build_exact());
  }
  return MultiplierLibrary(std::move(models));
}

inline std::filesystem::path resolve_out_dir(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path dir = cfg.out_dir.empty()
                     ? fs::path("axnas_run_" + cfg.scenario + "_seed" +
                                std::to_string(cfg.seed))
                     : fs::path(cfg.out_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("AXNAS_OUT_ROOT"))
      dir = fs::path(root) / dir;
  }
  return dir;
}

inline nlohmann::json manifest_json(const RunConfig& cfg,
                                    const MultiplierLibrary& lib,
                                    const Dataset& train, const Dataset& test) {
  nlohmann::json mults = nlohmann::json::array();
  for (int i = 0; i < lib.size(); ++i) {
    mults.push_back({{"index", i},
                     {"id", lib.at(i).id},
                     {"energy_pj", lib.at(i).energy_per_op},
                     {"mae", lib.at(i).mae},
                     {"wce", lib.at(i).wce},
                     {"exact", lib.at(i).is_exact}});
  }
  nlohmann::json j = config_to_json(cfg);
  j["timestamp"] = detail::utc_timestamp();
  j["multiplier_library"] = mults;
  j["data"] = {{"train_size", train.size()},
               {"test_size", test.size()},
               {"image", {train.h, train.w, train.c}},
               {"num_classes", train.num_classes}};
  return j;
}

inline nlohmann::json individual_json(const Individual& ind, double pj) {
  return {{"id", ind.id},
          {"generation", ind.born_gen},
          {"viable", ind.viable},
          {"f1", ind.fit.accuracy},
          {"f2_params", ind.fit.params},
          {"f3_uj", ind.fit.energy_uj},
          {"mult_id", ind.mult_id},
          {"mult_pj", pj},
          {"mult_count", ind.mult_count},
          {"param_count", ind.param_count},
          {"rank", ind.rank},
          {"crowding", ind.crowding},
          {"final_accuracy", ind.final_accuracy},
          {"genotype", genotype_to_json(ind.geno)},
          {"graph", ind.graph_text}};
}

// Tabular summary of a final front.
inline std::string render_report(const nlohmann::json& archive) {
  std::ostringstream os;
  os << "scenario " << archive.value("scenario", std::string("?")) << ", seed "
     << archive.value("seed", 0ULL) << "\n";
  os << "Accuracy [%]         Energy   Mults    Approx.      Energy of\n";
  os << "Final    Estimated   [uJ]     [x1e6]   mult. ID     1 mult. [pJ]\n";
  char line[160];
  for (const auto& row : archive.at("final_front")) {
    const double est = row.value("f1", 0.0);
    std::string final_txt = "       -";
    if (row.contains("final_accuracy") && row.at("final_accuracy").is_number()) {
      std::snprintf(line, sizeof(line), "%8.2f",
                    row.at("final_accuracy").get<double>() * 100.0);
      final_txt = line;
    }
    const double uj = row.at("f3_uj").is_number()
                          ? row.at("f3_uj").get<double>()
                          : std::numeric_limits<double>::infinity();
    std::snprintf(line, sizeof(line), "%s %10.2f %8.2f %8.2f   %-12s %.2f\n",
                  final_txt.c_str(), est * 100.0, uj,
                  row.value("mult_count", 0LL) / 1e6,
                  row.value("mult_id", std::string("?")).c_str(),
                  row.value("mult_pj", 0.0));
    os << line;
  }
  return os.str();
}

inline std::string report_from_file(const std::string& archive_path) {
  std::ifstream f(archive_path);
  if (!f) throw FormatError("cannot open archive '" + archive_path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("archive '" + archive_path + "': " + e.what());
  }
  return render_report(j);
}

struct RunArtifacts {
  std::filesystem::path dir;
  ParetoArchive archive;
};

inline RunArtifacts run_experiment(const RunConfig& cfg, std::ostream& log) {
  const auto violations = validate_config(cfg);
  if (!violations.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }

  auto [train, test_full] = load_datasets(cfg);
  const Dataset test = test_full.take(cfg.D_test);
  const MultiplierLibrary lib = build_library(cfg, log);
  const ScenarioPolicy policy =
      ScenarioPolicy::make(scenario_from_string(cfg.scenario), lib,
                           cfg.multiplier);

  EvolveConfig ec;
  ec.pop_size = cfg.pop_size;
  ec.generations = cfg.G;
  ec.e_train = cfg.E_train;
  ec.e_retrain = cfg.E_retrain;
  ec.d_train = cfg.D_train;
  ec.d_retrain = cfg.D_retrain;
  ec.e_train_batch = cfg.batch_size;
  ec.learning_rate = cfg.rate;
  ec.l2 = cfg.l2;
  ec.augment = cfg.augment;
  ec.shift_px = cfg.shift_px;
  ec.p_arch = cfg.p_arch;
  ec.p_mult = cfg.p_mult;
  ec.workers = cfg.workers;
  ec.retrain_top_k = cfg.retrain_top_k;
  ec.num_classes = train.num_classes;
  ec.tmpl.rows = cfg.n_r;
  ec.tmpl.cols = cfg.n_c;
  ec.tmpl.lback = cfg.L;
  ec.tmpl.pools = cfg.pools;
  ec.seed = cfg.seed;

  namespace fs = std::filesystem;
  const fs::path dir = resolve_out_dir(cfg);
  fs::create_directories(dir / "weights");

  log << "run: scenario " << cfg.scenario << ", seed " << cfg.seed << ", "
      << train.size() << " train / " << test.size() << " test images, "
      << lib.size() << " multipliers\n";

  CsvLogger csv;
  csv.set_library(&lib);
  const ParetoArchive archive =
      evolve(ec, policy, train.view(), test.view(), lib, &csv);

  {
    std::ofstream f(dir / "manifest.json");
    f << manifest_json(cfg, lib, train, test).dump(2) << "\n";
  }
  {
    std::ofstream f(dir / "evaluations.csv", std::ios::binary);
    f << csv.evaluations_csv();
  }
  {
    std::ofstream f(dir / "plot.csv", std::ios::binary);
    f << csv.plot_csv();
  }

  nlohmann::json archive_json;
  archive_json["scenario"] = cfg.scenario;
  archive_json["seed"] = cfg.seed;
  nlohmann::json entries = nlohmann::json::array();
  for (const Individual& ind : archive.entries)
    entries.push_back(
        individual_json(ind, lib.at(ind.geno.mult_index).energy_per_op));
  archive_json["entries"] = entries;
  nlohmann::json front = nlohmann::json::array();
  for (const Individual& ind : archive.final_front) {
    nlohmann::json row =
        individual_json(ind, lib.at(ind.geno.mult_index).energy_per_op);
    if (ind.viable) {
      const std::string ckpt = "weights/ind_" + std::to_string(ind.id) +
                               ".ckpt";
      save_checkpoint(ind.weights, (dir / ckpt).string());
      row["weights"] = ckpt;
    }
    front.push_back(std::move(row));
  }
  archive_json["final_front"] = front;
  {
    std::ofstream f(dir / "archive.json", std::ios::binary);
    f << archive_json.dump(2) << "\n";
  }
  const std::string report = render_report(archive_json);
  {
    std::ofstream f(dir / "report.txt", std::ios::binary);
    f << report;
  }
  log << report;
  log << "artifacts written to " << dir.string() << "\n";
  return RunArtifacts{dir, archive};
}

}  // namespace axnas
