#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "axnas/engine.hpp"
#include "axnas/genotype.hpp"
#include "axnas/layer_graph.hpp"
#include "axnas/multiplier.hpp"
#include "axnas/rng.hpp"

namespace axnas {

enum class Objective { Accuracy, Params, Energy };

// Accuracy is maximized; parameter count and multiplication energy are
// minimized. Energy is reported in microjoules.
struct Fitness {
  double accuracy = 0.0;
  double params = std::numeric_limits<double>::infinity();
  double energy_uj = std::numeric_limits<double>::infinity();

  double get(Objective o) const {
    switch (o) {
      case Objective::Accuracy: return accuracy;
      case Objective::Params: return params;
      case Objective::Energy: return energy_uj;
    }
    return 0.0;
  }

  // Orientation-normalized value: smaller is always better.
  double cost(Objective o) const {
    return o == Objective::Accuracy ? -accuracy : get(o);
  }
};

inline double fitness_f3_uj(std::int64_t mult_count, double energy_pj) {
  return static_cast<double>(mult_count) * energy_pj * 1e-6;
}

inline bool dominates(const Fitness& a, const Fitness& b,
                      std::span<const Objective> objectives) {
  bool strictly_better = false;
  for (Objective o : objectives) {
    if (a.cost(o) > b.cost(o)) return false;
    if (a.cost(o) < b.cost(o)) strictly_better = true;
  }
  return strictly_better;
}

struct Individual {
  Genotype geno;
  Fitness fit;
  bool evaluated = false;
  bool viable = false;  // compiled and trained without failure
  int id = -1;
  int born_gen = -1;
  int rank = -1;
  double crowding = 0.0;
  std::string mult_id;
  std::int64_t mult_count = 0;
  std::int64_t param_count = 0;
  double final_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::string graph_text;
  WeightStore weights;
};

inline bool dominates(const Individual& a, const Individual& b,
                      std::span<const Objective> objectives) {
  if (!a.evaluated || !b.evaluated)
    throw StateError("dominance requires evaluated individuals");
  return dominates(a.fit, b.fit, objectives);
}

// Deb-style fast non-dominated sorting; fronts keep insertion order.
inline std::vector<std::vector<std::size_t>> non_dominated_sort(
    const std::vector<Fitness>& fits, std::span<const Objective> objectives) {
  const std::size_t n = fits.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> dominators(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dominates(fits[i], fits[j], objectives)) {
        dominated[i].push_back(j);
        ++dominators[j];
      } else if (dominates(fits[j], fits[i], objectives)) {
        dominated[j].push_back(i);
        ++dominators[i];
      }
    }
  }
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<std::size_t> current;
  for (std::size_t i = 0; i < n; ++i)
    if (dominators[i] == 0) current.push_back(i);
  while (!current.empty()) {
    fronts.push_back(current);
    std::vector<std::size_t> next;
    for (std::size_t i : current) {
      for (std::size_t j : dominated[i]) {
        if (--dominators[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

// NSGA-II crowding distance with min-max normalization inside the front.
// Boundary individuals get +inf; for an objective with zero spread the
// interior contributions are skipped.
inline std::vector<double> crowding_distances(
    const std::vector<Fitness>& fits, const std::vector<std::size_t>& front,
    std::span<const Objective> objectives) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(),
              std::numeric_limits<double>::infinity());
    return dist;
  }
  std::vector<std::size_t> order(n);
  for (Objective o : objectives) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return fits[front[a]].cost(o) < fits[front[b]].cost(o);
                     });
    dist[order.front()] = std::numeric_limits<double>::infinity();
    dist[order.back()] = std::numeric_limits<double>::infinity();
    const double span = fits[front[order.back()]].cost(o) -
                        fits[front[order.front()]].cost(o);
    if (!std::isfinite(span) || span <= 0.0) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      dist[order[k]] += (fits[front[order[k + 1]]].cost(o) -
                         fits[front[order[k - 1]]].cost(o)) /
                        span;
    }
  }
  return dist;
}

// Removes the n_remove smallest-distance members; among equal distances the
// later-inserted individual is removed first. Survivors keep front order.
inline std::vector<std::size_t> crowding_reduce(
    const std::vector<Fitness>& fits, const std::vector<std::size_t>& front,
    std::size_t n_remove, std::span<const Objective> objectives) {
  if (n_remove >= front.size())
    throw ConfigError("crowding_reduce: cannot remove " +
                      std::to_string(n_remove) + " of " +
                      std::to_string(front.size()) + " individuals");
  const std::vector<double> dist = crowding_distances(fits, front, objectives);
  std::vector<std::size_t> by_distance(front.size());
  std::iota(by_distance.begin(), by_distance.end(), std::size_t{0});
  std::sort(by_distance.begin(), by_distance.end(),
            [&](std::size_t a, std::size_t b) {
              if (dist[a] != dist[b]) return dist[a] < dist[b];
              return a > b;
            });
  std::vector<char> removed(front.size(), 0);
  for (std::size_t k = 0; k < n_remove; ++k) removed[by_distance[k]] = 1;
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < front.size(); ++k)
    if (!removed[k]) kept.push_back(front[k]);
  return kept;
}

// --- Scenarios ----------------------------------------------------------------

enum class Scenario { S1, S2, S3, S4 };

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "s1" || s == "S1") return Scenario::S1;
  if (s == "s2" || s == "S2") return Scenario::S2;
  if (s == "s3" || s == "S3") return Scenario::S3;
  if (s == "s4" || s == "S4") return Scenario::S4;
  throw ConfigError("unknown scenario '" + s + "' (expected s1..s4)");
}

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::S1: return "s1";
    case Scenario::S2: return "s2";
    case Scenario::S3: return "s3";
    case Scenario::S4: return "s4";
  }
  return "?";
}

// S1: free multiplier gene, objectives (f1, f3). S2: adds f2. S3: multiplier
// fixed to a configured id. S4: multiplier fixed to the exact one.
struct ScenarioPolicy {
  Scenario mode = Scenario::S4;
  std::vector<Objective> objectives{Objective::Accuracy, Objective::Energy};
  std::optional<int> fixed_mult;

  double effective_p_mult(double configured) const {
    return fixed_mult.has_value() ? 0.0 : configured;
  }

  static ScenarioPolicy make(Scenario mode, const MultiplierLibrary& lib,
                             const std::string& s3_multiplier_id) {
    ScenarioPolicy p;
    p.mode = mode;
    switch (mode) {
      case Scenario::S1:
        break;
      case Scenario::S2:
        p.objectives = {Objective::Accuracy, Objective::Params,
                        Objective::Energy};
        break;
      case Scenario::S3: {
        const int idx = lib.index_of(s3_multiplier_id);
        if (idx < 0)
          throw ConfigError("scenario s3: multiplier '" + s3_multiplier_id +
                            "' is not in the library");
        p.fixed_mult = idx;
        break;
      }
      case Scenario::S4: {
        const int idx = lib.exact_index();
        if (idx < 0) throw ConfigError("library has no exact multiplier");
        p.fixed_mult = idx;
        break;
      }
    }
    return p;
  }
};

// --- Search -------------------------------------------------------------------

struct EvolveConfig {
  int pop_size = 8;
  int generations = 10;
  int e_train = 20;
  int e_retrain = 200;
  int d_train = 50000;
  int d_retrain = 50000;
  int e_train_batch = 32;  // batch size for both training phases
  double learning_rate = 0.001;
  double l2 = 1e-4;
  bool augment = true;
  int shift_px = 4;
  double p_arch = 1.0;
  double p_mult = 1.0;
  int workers = 1;
  int retrain_top_k = 0;  // 0: retrain the whole final front
  int num_classes = 10;
  TemplateSpec tmpl;
  std::uint64_t seed = 1;
};

// Observer hooks for artifact emission and property checks. All callbacks
// run on the coordinating thread.
class RunLogger {
 public:
  virtual ~RunLogger() = default;
  // Individuals evaluated in `gen`, with rank/crowding already assigned.
  virtual void on_generation(int /*gen*/,
                             const std::vector<Individual>& /*evaluated*/) {}
  // Merged parent+offspring pool and the indices kept for the next
  // generation (only called for gen >= 1).
  virtual void on_selection(int /*gen*/,
                            const std::vector<Individual>& /*merged*/,
                            const std::vector<std::size_t>& /*kept*/) {}
  virtual void on_retrained(const Individual& /*ind*/) {}
};

struct ParetoArchive {
  std::vector<Individual> entries;      // every evaluated candidate
  std::vector<Individual> final_front;  // non-dominated set, retrained
};

namespace detail {

// seed-stream tags
inline constexpr std::uint64_t kStreamTemplate = 1;
inline constexpr std::uint64_t kStreamSeeding = 2;
inline constexpr std::uint64_t kStreamSubset = 3;
inline constexpr std::uint64_t kStreamMutation = 4;
inline constexpr std::uint64_t kStreamEvaluation = 5;
inline constexpr std::uint64_t kStreamRetrain = 6;

inline std::vector<int> draw_subset(int total, int want, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  if (want >= total) return idx;
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(want));
  return idx;
}

inline void parallel_for(int count, int workers, const auto& fn) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int spawn = std::min(workers, count);
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

class Evolver {
 public:
  Evolver(EvolveConfig cfg, ScenarioPolicy policy, DataView train,
          DataView test, const MultiplierLibrary& library,
          RunLogger* logger = nullptr)
      : cfg_(std::move(cfg)),
        policy_(std::move(policy)),
        train_(train),
        test_(test),
        lib_(library),
        logger_(logger) {
    if (cfg_.pop_size < 1) throw ConfigError("pop_size must be >= 1");
    if (cfg_.generations < 0) throw ConfigError("generations must be >= 0");
    input_shape_ = TensorShape{train_.h, train_.w, train_.c};
  }

  ParetoArchive run() {
    ParetoArchive archive;
    Rng trng(derive_seed(cfg_.seed, detail::kStreamTemplate));
    const Template tmpl =
        materialize_template(cfg_.tmpl, cfg_.num_classes, trng);

    std::vector<Individual> population(
        static_cast<std::size_t>(cfg_.pop_size));
    for (int i = 0; i < cfg_.pop_size; ++i) {
      Rng srng(derive_seed(cfg_.seed, detail::kStreamSeeding, 0,
                           static_cast<std::uint64_t>(i)));
      Individual& ind = population[static_cast<std::size_t>(i)];
      ind.geno = seed_from_template(tmpl, lib_.size(), policy_.fixed_mult,
                                    srng);
      ind.born_gen = 0;
      ind.id = next_id_++;
    }
    evaluate_generation(population, 0);
    rank_population(population);
    if (logger_ != nullptr) logger_->on_generation(0, population);
    append_entries(archive, population);

    for (int gen = 1; gen <= cfg_.generations; ++gen) {
      std::vector<Individual> offspring;
      offspring.reserve(population.size());
      const double p_mult = policy_.effective_p_mult(cfg_.p_mult);
      for (int i = 0; i < cfg_.pop_size; ++i) {
        const Individual& parent = population[static_cast<std::size_t>(i)];
        Rng mrng(derive_seed(cfg_.seed, detail::kStreamMutation,
                             static_cast<std::uint64_t>(gen),
                             static_cast<std::uint64_t>(i)));
        Individual child;
        if (mrng.next_bool(cfg_.p_arch)) {
          child.geno = mutate(parent.geno, p_mult, lib_.size(), mrng);
        } else {
          child.geno = parent.geno;
          child.geno.pending_reinit.clear();
          if (mrng.next_bool(p_mult)) {
            child.geno.mult_index =
                static_cast<int>(mrng.next_below(lib_.size()));
          }
        }
        child.weights = parent.weights;  // inherit, minus reinit flags
        child.born_gen = gen;
        child.id = next_id_++;
        offspring.push_back(std::move(child));
      }
      evaluate_generation(offspring, gen);

      std::vector<Individual> merged;
      merged.reserve(population.size() + offspring.size());
      for (Individual& p : population) merged.push_back(std::move(p));
      std::vector<Individual> offspring_snapshot = offspring;
      for (Individual& o : offspring) merged.push_back(std::move(o));

      const std::vector<std::size_t> kept = select(merged);
      // Propagate assigned rank/crowding onto the offspring records kept in
      // the archive and logs.
      for (Individual& snap : offspring_snapshot) {
        for (const Individual& m : merged) {
          if (m.id == snap.id) {
            snap.rank = m.rank;
            snap.crowding = m.crowding;
            break;
          }
        }
      }
      if (logger_ != nullptr) {
        logger_->on_selection(gen, merged, kept);
        logger_->on_generation(gen, offspring_snapshot);
      }
      append_entries(archive, offspring_snapshot);

      std::vector<Individual> next;
      next.reserve(static_cast<std::size_t>(cfg_.pop_size));
      for (std::size_t k : kept)
        next.push_back(std::move(merged[k]));
      population = std::move(next);
    }

    archive.final_front = retrain_final(population);
    if (logger_ != nullptr) {
      for (const Individual& ind : archive.final_front)
        logger_->on_retrained(ind);
    }
    return archive;
  }

 private:
  void evaluate_generation(std::vector<Individual>& group, int gen) {
    Rng sub_rng(derive_seed(cfg_.seed, detail::kStreamSubset,
                            static_cast<std::uint64_t>(gen)));
    // The same training subset serves every individual of the generation.
    const std::vector<int> subset =
        detail::draw_subset(train_.n, cfg_.d_train, sub_rng);
    detail::parallel_for(
        static_cast<int>(group.size()), cfg_.workers, [&](int i) {
          evaluate_one(group[static_cast<std::size_t>(i)], gen, i, subset);
        });
  }

  void evaluate_one(Individual& ind, int gen, int slot,
                    std::span<const int> subset) {
    Rng rng(derive_seed(cfg_.seed, detail::kStreamEvaluation,
                        static_cast<std::uint64_t>(gen),
                        static_cast<std::uint64_t>(slot)));
    ind.mult_id = lib_.at(ind.geno.mult_index).id;
    try {
      const LayerGraph graph =
          compile(extract_active(ind.geno), input_shape_, cfg_.num_classes);
      Engine engine(graph, lib_.share(ind.geno.mult_index));
      engine.init_weights(ind.weights, ind.geno.pending_reinit, rng);
      ind.geno.pending_reinit.clear();
      TrainConfig tc;
      tc.epochs = cfg_.e_train;
      tc.batch_size = cfg_.e_train_batch;
      tc.learning_rate = cfg_.learning_rate;
      tc.l2 = cfg_.l2;
      tc.augment = cfg_.augment;
      tc.shift_px = cfg_.shift_px;
      engine.train(ind.weights, train_, subset, tc, rng);
      ind.fit.accuracy = engine.evaluate_accuracy(ind.weights, test_);
      ind.param_count = count_params(graph);
      ind.mult_count = count_mults(graph);
      ind.fit.params = static_cast<double>(ind.param_count);
      ind.fit.energy_uj =
          fitness_f3_uj(ind.mult_count, engine.model().energy_per_op);
      ind.graph_text = pretty_print(graph);
      ind.viable = true;
    } catch (const CompileError& e) {
      assign_worst(ind, e.what());
    } catch (const TrainError& e) {
      assign_worst(ind, e.what());
    } catch (const IntegrityError& e) {
      assign_worst(ind, e.what());
    }
    ind.evaluated = true;
  }

  static void assign_worst(Individual& ind, const std::string& reason) {
    ind.fit = Fitness{};  // accuracy 0, params/energy +inf
    ind.viable = false;
    ind.weights = WeightStore{};
    ind.graph_text = "unevaluable: " + reason + "\n";
  }

  // Assign ranks/crowding across the whole group (used for generation 0).
  void rank_population(std::vector<Individual>& group) const {
    std::vector<Fitness> fits;
    fits.reserve(group.size());
    for (const Individual& ind : group) fits.push_back(ind.fit);
    const auto fronts = non_dominated_sort(fits, policy_.objectives);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      const auto dist = crowding_distances(fits, fronts[f], policy_.objectives);
      for (std::size_t k = 0; k < fronts[f].size(); ++k) {
        group[fronts[f][k]].rank = static_cast<int>(f);
        group[fronts[f][k]].crowding = dist[k];
      }
    }
  }

  // NSGA-II style refill: whole fronts while they fit, crowding reduction on
  // the split front.
  std::vector<std::size_t> select(std::vector<Individual>& merged) const {
    std::vector<Fitness> fits;
    fits.reserve(merged.size());
    for (const Individual& ind : merged) fits.push_back(ind.fit);
    const auto fronts = non_dominated_sort(fits, policy_.objectives);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      const auto dist = crowding_distances(fits, fronts[f], policy_.objectives);
      for (std::size_t k = 0; k < fronts[f].size(); ++k) {
        merged[fronts[f][k]].rank = static_cast<int>(f);
        merged[fronts[f][k]].crowding = dist[k];
      }
    }
    std::vector<std::size_t> kept;
    const std::size_t target = static_cast<std::size_t>(cfg_.pop_size);
    for (const auto& front : fronts) {
      if (kept.size() == target) break;
      if (kept.size() + front.size() <= target) {
        kept.insert(kept.end(), front.begin(), front.end());
      } else {
        const std::size_t n_remove = kept.size() + front.size() - target;
        const auto survivors =
            crowding_reduce(fits, front, n_remove, policy_.objectives);
        kept.insert(kept.end(), survivors.begin(), survivors.end());
      }
    }
    return kept;
  }

  std::vector<Individual> retrain_final(std::vector<Individual>& population) {
    std::vector<Fitness> fits;
    fits.reserve(population.size());
    for (const Individual& ind : population) fits.push_back(ind.fit);
    const auto fronts = non_dominated_sort(fits, policy_.objectives);
    std::vector<Individual> front;
    if (!fronts.empty()) {
      for (std::size_t k : fronts[0])
        front.push_back(std::move(population[k]));
    }
    // "Best-performing" first: retrain the top-k by estimated accuracy.
    std::stable_sort(front.begin(), front.end(),
                     [](const Individual& a, const Individual& b) {
                       return a.fit.accuracy > b.fit.accuracy;
                     });
    const std::size_t k =
        cfg_.retrain_top_k <= 0
            ? front.size()
            : std::min(front.size(),
                       static_cast<std::size_t>(cfg_.retrain_top_k));
    Rng sub_rng(derive_seed(cfg_.seed, detail::kStreamSubset,
                            static_cast<std::uint64_t>(cfg_.generations + 1)));
    const std::vector<int> subset =
        detail::draw_subset(train_.n, cfg_.d_retrain, sub_rng);
    detail::parallel_for(
        static_cast<int>(k), cfg_.workers, [&](int i) {
          Individual& ind = front[static_cast<std::size_t>(i)];
          if (!ind.viable) return;
          Rng rng(derive_seed(cfg_.seed, detail::kStreamRetrain,
                              static_cast<std::uint64_t>(i)));
          try {
            const LayerGraph graph = compile(extract_active(ind.geno),
                                             input_shape_, cfg_.num_classes);
            Engine engine(graph, lib_.share(ind.geno.mult_index));
            TrainConfig tc;
            tc.epochs = cfg_.e_retrain;
            tc.batch_size = cfg_.e_train_batch;
            tc.learning_rate = cfg_.learning_rate;
            tc.l2 = cfg_.l2;
            tc.augment = cfg_.augment;
            tc.shift_px = cfg_.shift_px;
            engine.train(ind.weights, train_, subset, tc, rng);
            ind.final_accuracy =
                engine.evaluate_accuracy(ind.weights, test_);
          } catch (const TrainError&) {
            // fine-tuning diverged; the estimated fitness stands
          }
        });
    return front;
  }

  void append_entries(ParetoArchive& archive,
                      const std::vector<Individual>& group) const {
    for (const Individual& ind : group) {
      Individual copy = ind;
      copy.weights = WeightStore{};  // archive keeps genotypes, not weights
      archive.entries.push_back(std::move(copy));
    }
  }

  EvolveConfig cfg_;
  ScenarioPolicy policy_;
  DataView train_;
  DataView test_;
  const MultiplierLibrary& lib_;
  RunLogger* logger_ = nullptr;
  TensorShape input_shape_;
  int next_id_ = 0;
};

inline ParetoArchive evolve(const EvolveConfig& cfg,
                            const ScenarioPolicy& policy, DataView train,
                            DataView test, const MultiplierLibrary& library,
                            RunLogger* logger = nullptr) {
  Evolver e(cfg, policy, train, test, library, logger);
  return e.run();
}

}  // namespace axnas
