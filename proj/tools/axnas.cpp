// Command-line surface: run experiments, inspect multipliers, render
// reports, validate configurations, and generate the micro benchmark.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "axnas/config.hpp"
#include "axnas/dataset.hpp"
#include "axnas/multiplier.hpp"
#include "axnas/runner.hpp"

namespace fs = std::filesystem;
using namespace axnas;

namespace {

int cmd_run(const std::string& config_path, const nlohmann::json& overrides) {
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : load_config_file(config_path);
  if (!overrides.empty()) {
    nlohmann::json merged = config_to_json(cfg);
    merged.update(overrides);
    cfg = config_from_json(merged);
  }
  run_experiment(cfg, std::cout);
  return 0;
}

int cmd_report(const std::string& archive_path) {
  std::cout << report_from_file(archive_path);
  return 0;
}

int cmd_mult_info(const std::string& id, const std::string& lut_path) {
  MultiplierModel model;
  if (!lut_path.empty()) {
    model = load_lut_file(lut_path);
  } else {
    const MultiplierLibrary lib = default_library();
    const int idx = lib.index_of(id);
    if (idx < 0) {
      std::cerr << "unknown multiplier '" << id << "'; built-ins:";
      for (int i = 0; i < lib.size(); ++i) std::cerr << " " << lib.at(i).id;
      std::cerr << "\n";
      return 1;
    }
    model = lib.at(idx);
  }
  const auto [mae, wce] = error_metrics(model);
  std::cout << "id:            " << model.id << "\n"
            << "energy_per_op: " << model.energy_per_op << " pJ\n"
            << "exact:         " << (model.is_exact ? "yes" : "no") << "\n"
            << "mae:           " << mae << "\n"
            << "wce:           " << wce << "\n";
  return 0;
}

int cmd_validate_config(const std::string& path) {
  const RunConfig cfg = load_config_file(path);
  const auto violations = validate_config(cfg);
  if (violations.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& v : violations) std::cout << "violation: " << v << "\n";
  return 1;
}

int cmd_gen_dataset(const std::string& dir, const MicroSpec& spec) {
  fs::create_directories(dir);
  const auto [train, test] = make_micro_dataset(spec);
  save_idx(train, (fs::path(dir) / "train.images.idx").string(),
           (fs::path(dir) / "train.labels.idx").string());
  save_idx(test, (fs::path(dir) / "test.images.idx").string(),
           (fs::path(dir) / "test.labels.idx").string());
  std::cout << "wrote " << train.size() << " train / " << test.size()
            << " test images (" << spec.hw << "x" << spec.hw << ") to " << dir
            << "\n";
  return 0;
}

int cmd_mult_export(const std::string& out_path, const std::string& id,
                    std::optional<int> trunc, std::optional<int> ptrunc,
                    double energy) {
  MultiplierModel model;
  if (trunc.has_value()) {
    model = build_truncated(*trunc, energy, id);
  } else if (ptrunc.has_value()) {
    model = build_product_truncated(*ptrunc, energy, id);
  } else if (!id.empty()) {
    const MultiplierLibrary lib = default_library();
    const int idx = lib.index_of(id);
    if (idx < 0) {
      std::cerr << "unknown built-in multiplier '" << id << "'\n";
      return 1;
    }
    model = lib.at(idx);
  } else {
    model = build_exact();
  }
  save_lut_file(model, out_path);
  std::cout << "wrote " << model.id << " (" << model.energy_per_op
            << " pJ, mae " << model.mae << ") to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neuroevolution of CNNs with approximate multipliers"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute a search run");
  std::string config_path;
  run->add_option("--config", config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  std::optional<std::string> scenario, dataset, multiplier, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> generations, pop_size, e_train, e_retrain, workers,
      batch_size, d_train, d_test, d_retrain;
  std::optional<double> rate;
  std::optional<bool> augment;
  run->add_option("--scenario", scenario, "s1|s2|s3|s4");
  run->add_option("--dataset", dataset,
                  "micro[:seed] | idx:<dir> | cifar10:<dir>");
  run->add_option("--multiplier", multiplier, "fixed multiplier id for s3");
  run->add_option("--seed", seed, "master random seed");
  run->add_option("--generations", generations, "generation count G");
  run->add_option("--pop-size", pop_size, "population size");
  run->add_option("--e-train", e_train, "epochs during evolution");
  run->add_option("--e-retrain", e_retrain, "epochs for final re-training");
  run->add_option("--batch-size", batch_size, "training batch size");
  run->add_option("--rate", rate, "initial learning rate");
  run->add_option("--d-train", d_train, "training subset size per generation");
  run->add_option("--d-test", d_test, "test set size");
  run->add_option("--d-retrain", d_retrain, "re-training set size");
  run->add_option("--workers", workers, "parallel evaluation workers");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--augment", augment, "enable data augmentation");

  // report
  auto* report = app.add_subcommand("report", "summarize a run archive");
  std::string archive_path;
  report->add_option("archive", archive_path, "archive.json path")
      ->required()
      ->check(CLI::ExistingFile);

  // mult-info
  auto* info =
      app.add_subcommand("mult-info", "print multiplier metadata and metrics");
  std::string mult_id, lut_path;
  info->add_option("id", mult_id, "built-in multiplier id");
  info->add_option("--lut", lut_path, "read the model from a LUT file")
      ->check(CLI::ExistingFile);

  // validate-config
  auto* validate =
      app.add_subcommand("validate-config", "check a configuration file");
  std::string validate_path;
  validate->add_option("config", validate_path, "JSON configuration file")
      ->required()
      ->check(CLI::ExistingFile);

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset",
                                 "write the bundled micro benchmark as IDX");
  std::string gen_dir;
  MicroSpec spec;
  gen->add_option("dir", gen_dir, "output directory")->required();
  gen->add_option("--train-per-class", spec.train_per_class);
  gen->add_option("--test-per-class", spec.test_per_class);
  gen->add_option("--hw", spec.hw, "image height/width");
  gen->add_option("--seed", spec.seed);

  // mult-export
  auto* mexp =
      app.add_subcommand("mult-export", "write a multiplier as a LUT file");
  std::string export_path, export_id;
  std::optional<int> trunc, ptrunc;
  double export_energy = 1.0;
  mexp->add_option("out", export_path, "output .axm path")->required();
  mexp->add_option("--id", export_id, "built-in id, or id for a new table");
  mexp->add_option("--trunc", trunc, "operand truncation bits");
  mexp->add_option("--ptrunc", ptrunc, "product truncation bits");
  mexp->add_option("--energy", export_energy, "energy per op [pJ]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      nlohmann::json overrides = nlohmann::json::object();
      if (scenario) overrides["scenario"] = *scenario;
      if (dataset) overrides["dataset"] = *dataset;
      if (multiplier) overrides["multiplier"] = *multiplier;
      if (seed) overrides["seed"] = *seed;
      if (generations) overrides["G"] = *generations;
      if (pop_size) overrides["pop_size"] = *pop_size;
      if (e_train) overrides["E_train"] = *e_train;
      if (e_retrain) overrides["E_retrain"] = *e_retrain;
      if (batch_size) overrides["batch_size"] = *batch_size;
      if (rate) overrides["rate"] = *rate;
      if (d_train) overrides["D_train"] = *d_train;
      if (d_test) overrides["D_test"] = *d_test;
      if (d_retrain) overrides["D_retrain"] = *d_retrain;
      if (workers) overrides["workers"] = *workers;
      if (out_dir) overrides["out_dir"] = *out_dir;
      if (augment) overrides["augment"] = *augment;
      return cmd_run(config_path, overrides);
    }
    if (report->parsed()) return cmd_report(archive_path);
    if (info->parsed()) return cmd_mult_info(mult_id, lut_path);
    if (validate->parsed()) return cmd_validate_config(validate_path);
    if (gen->parsed()) return cmd_gen_dataset(gen_dir, spec);
    if (mexp->parsed())
      return cmd_mult_export(export_path, export_id, trunc, ptrunc,
                             export_energy);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
