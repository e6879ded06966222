#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "axnas/error.hpp"
#include "axnas/rng.hpp"

namespace axnas {

enum class NodeKind {
  Input,
  Conv,
  Fc,
  MaxPool,
  AvgPool,
  Sum,
  Inception,
  Residual,
  Bottleneck,
  Output,
};

inline int arity(NodeKind k) {
  switch (k) {
    case NodeKind::Input:
      return 0;
    case NodeKind::Sum:
      return 2;
    default:
      return 1;
  }
}

inline const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "input";
    case NodeKind::Conv: return "conv";
    case NodeKind::Fc: return "fc";
    case NodeKind::MaxPool: return "max";
    case NodeKind::AvgPool: return "avg";
    case NodeKind::Sum: return "sum";
    case NodeKind::Inception: return "inc";
    case NodeKind::Residual: return "res";
    case NodeKind::Bottleneck: return "res_b";
    case NodeKind::Output: return "output";
  }
  return "?";
}

inline NodeKind kind_from_name(const std::string& s) {
  for (NodeKind k : {NodeKind::Input, NodeKind::Conv, NodeKind::Fc,
                     NodeKind::MaxPool, NodeKind::AvgPool, NodeKind::Sum,
                     NodeKind::Inception, NodeKind::Residual,
                     NodeKind::Bottleneck, NodeKind::Output}) {
    if (s == kind_name(k)) return k;
  }
  throw FormatError("unknown node kind '" + s + "'");
}

struct ConvParams {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  bool operator==(const ConvParams&) const = default;
};

struct FcParams {
  int width = 0;
  bool operator==(const FcParams&) const = default;
};

struct PoolParams {
  int kernel = 2;
  int stride = 2;
  bool operator==(const PoolParams&) const = default;
};

struct InceptionParams {
  int c1 = 0, c2 = 0, c3 = 0;  // filters of the 5x5, 3x3, 1x1 branches
  int r1 = 0, r2 = 0, r3 = 0;  // 1x1 reduction filters
  bool operator==(const InceptionParams&) const = default;
};

struct ResidualParams {
  int kernel_a = 3;  // NxN, strided
  int kernel_b = 3;  // MxM, stride 1
  int stride = 1;
  int filters = 0;
  bool operator==(const ResidualParams&) const = default;
};

struct BottleneckParams {
  int kernel = 3;  // NxN inner conv
  int stride = 1;
  int filters = 0;
  int reduce = 0;  // channels inside the 1x1 -> NxN -> 1x1 path
  bool operator==(const BottleneckParams&) const = default;
};

using NodeParams =
    std::variant<std::monostate, ConvParams, FcParams, PoolParams,
                 InceptionParams, ResidualParams, BottleneckParams>;

// Grid coordinate. Column 0 is the input node (row 0 only); grid nodes live
// in columns 1..cols.
struct Coord {
  int col = 0;
  int row = 0;
  bool operator==(const Coord&) const = default;
  auto operator<=>(const Coord&) const = default;
};

struct NodeGene {
  NodeKind kind = NodeKind::Conv;
  NodeParams params;
  std::vector<Coord> inputs;  // length == arity(kind)
};

// CGP genotype: fixed grid of typed nodes plus connection genes, the output
// gene and the multiplier-index gene.
struct Genotype {
  int rows = 0;
  int cols = 0;
  int lback = 1;
  std::vector<NodeGene> grid;  // (col-1)*rows + row
  Coord output_gene;
  int mult_index = 0;
  std::uint64_t seed_tag = 0;  // rng lineage for reproducibility
  // Coordinates whose weights must be re-initialized before the next
  // training round (nodes newly activated by mutation).
  std::vector<Coord> pending_reinit;

  bool in_grid(Coord c) const {
    return c.col >= 1 && c.col <= cols && c.row >= 0 && c.row < rows;
  }

  const NodeGene& at(Coord c) const {
    return grid[static_cast<std::size_t>((c.col - 1) * rows + c.row)];
  }
  NodeGene& at(Coord c) {
    return grid[static_cast<std::size_t>((c.col - 1) * rows + c.row)];
  }

  // Highest column index containing an FC node; -1 when absent.
  int last_fc_col() const {
    for (int col = cols; col >= 1; --col)
      for (int row = 0; row < rows; ++row)
        if (at({col, row}).kind == NodeKind::Fc) return col;
    return -1;
  }
};

// --- Template ---------------------------------------------------------------

struct ParamPools {
  std::vector<int> conv_filters{16, 32, 64};
  std::vector<int> conv_kernels{1, 3, 5};
  std::vector<int> conv_strides{1, 2};
  std::vector<int> fc_widths{64, 128, 256};
  std::vector<int> pool_kernels{2};
  std::vector<int> pool_strides{2};
  std::vector<int> inception_filters{8, 16, 32};
  std::vector<int> residual_kernels{3, 5};
  std::vector<int> residual_strides{1, 2};
  std::vector<int> bottleneck_reduce{8, 16, 32};
};

struct TemplateSpec {
  int rows = 6;
  int cols = 23;
  int lback = 5;
  ParamPools pools;
  // Per-column candidate kinds; empty means the built-in layout
  // (conv head, mixed middle band, FC tail).
  std::vector<std::vector<NodeKind>> column_kinds;
};

inline std::vector<std::vector<NodeKind>> default_column_kinds(int cols) {
  const int fc_cols = cols >= 4 ? 2 : 1;
  const int conv_cols = std::min(2, std::max(0, cols - fc_cols));
  std::vector<std::vector<NodeKind>> out;
  const std::vector<NodeKind> middle = {
      NodeKind::Conv,     NodeKind::Conv, NodeKind::MaxPool, NodeKind::AvgPool,
      NodeKind::Sum,      NodeKind::Residual, NodeKind::Bottleneck,
      NodeKind::Inception};
  for (int col = 1; col <= cols; ++col) {
    if (col <= conv_cols) {
      out.push_back({NodeKind::Conv});
    } else if (col > cols - fc_cols) {
      out.push_back({NodeKind::Fc});
    } else {
      out.push_back(middle);
    }
  }
  return out;
}

// A materialized template: node kinds and parameters fixed for the whole
// run. Individuals differ only in connection genes, the output gene and the
// multiplier gene.
struct Template {
  int rows = 0;
  int cols = 0;
  int lback = 1;
  std::vector<NodeGene> cells;  // inputs left empty
  int last_fc_col = -1;

  const NodeGene& cell(Coord c) const {
    return cells[static_cast<std::size_t>((c.col - 1) * rows + c.row)];
  }
};

namespace detail {

inline int pick_pool(const std::vector<int>& pool, const char* what,
                     Rng& rng) {
  if (pool.empty())
    throw ConfigError(std::string("empty parameter pool: ") + what);
  return pool[rng.next_below(pool.size())];
}

inline NodeParams draw_params(NodeKind kind, const ParamPools& p,
                              int num_classes, Rng& rng) {
  switch (kind) {
    case NodeKind::Conv:
      return ConvParams{pick_pool(p.conv_filters, "conv_filters", rng),
                        pick_pool(p.conv_kernels, "conv_kernels", rng),
                        pick_pool(p.conv_strides, "conv_strides", rng)};
    case NodeKind::Fc: {
      std::vector<int> widths = p.fc_widths;
      widths.push_back(num_classes);
      return FcParams{pick_pool(widths, "fc_widths", rng)};
    }
    case NodeKind::MaxPool:
    case NodeKind::AvgPool:
      return PoolParams{pick_pool(p.pool_kernels, "pool_kernels", rng),
                        pick_pool(p.pool_strides, "pool_strides", rng)};
    case NodeKind::Inception:
      return InceptionParams{
          pick_pool(p.inception_filters, "inception_filters", rng),
          pick_pool(p.inception_filters, "inception_filters", rng),
          pick_pool(p.inception_filters, "inception_filters", rng),
          pick_pool(p.inception_filters, "inception_filters", rng),
          pick_pool(p.inception_filters, "inception_filters", rng),
          pick_pool(p.inception_filters, "inception_filters", rng)};
    case NodeKind::Residual:
      return ResidualParams{
          pick_pool(p.residual_kernels, "residual_kernels", rng),
          pick_pool(p.residual_kernels, "residual_kernels", rng),
          pick_pool(p.residual_strides, "residual_strides", rng),
          pick_pool(p.conv_filters, "conv_filters", rng)};
    case NodeKind::Bottleneck:
      return BottleneckParams{
          pick_pool(p.residual_kernels, "residual_kernels", rng),
          pick_pool(p.residual_strides, "residual_strides", rng),
          pick_pool(p.conv_filters, "conv_filters", rng),
          pick_pool(p.bottleneck_reduce, "bottleneck_reduce", rng)};
    case NodeKind::Sum:
      return std::monostate{};
    default:
      throw ConfigError(std::string("kind '") + kind_name(kind) +
                        "' not allowed in a template");
  }
}

}  // namespace detail

inline Template materialize_template(const TemplateSpec& spec, int num_classes,
                                     Rng& rng) {
  if (spec.rows < 1 || spec.cols < 1)
    throw ConfigError("template grid must be at least 1x1");
  if (spec.lback < 1) throw ConfigError("L-back must be >= 1");
  auto kinds = spec.column_kinds.empty() ? default_column_kinds(spec.cols)
                                         : spec.column_kinds;
  if (static_cast<int>(kinds.size()) != spec.cols)
    throw ConfigError("column_kinds must list every grid column");

  Template t;
  t.rows = spec.rows;
  t.cols = spec.cols;
  t.lback = spec.lback;
  for (int col = 1; col <= spec.cols; ++col) {
    const auto& pool = kinds[static_cast<std::size_t>(col - 1)];
    if (pool.empty())
      throw ConfigError("column " + std::to_string(col) + " has no kinds");
    for (int row = 0; row < spec.rows; ++row) {
      NodeGene gene;
      gene.kind = pool[rng.next_below(pool.size())];
      gene.params = detail::draw_params(gene.kind, spec.pools, num_classes, rng);
      t.cells.push_back(std::move(gene));
    }
  }
  for (int col = spec.cols; col >= 1; --col) {
    bool any_fc = false, all_fc = true;
    for (int row = 0; row < spec.rows; ++row) {
      const bool fc = t.cell({col, row}).kind == NodeKind::Fc;
      any_fc = any_fc || fc;
      all_fc = all_fc && fc;
    }
    if (any_fc) {
      if (!all_fc)
        throw ConfigError("the last FC column (column " + std::to_string(col) +
                          ") must contain only FC nodes");
      t.last_fc_col = col;
      break;
    }
  }
  if (t.last_fc_col < 0)
    throw ConfigError("template has no FC column for the output gene");
  return t;
}

// --- Seeding, extraction, mutation ------------------------------------------

namespace detail {

// All legal sources for a node in `col`: nodes at most L columns back,
// column 0 being the single input node.
inline std::vector<Coord> eligible_sources(int col, int rows, int lback) {
  std::vector<Coord> out;
  for (int src = std::max(0, col - lback); src <= col - 1; ++src) {
    if (src == 0) {
      out.push_back({0, 0});
    } else {
      for (int row = 0; row < rows; ++row) out.push_back({src, row});
    }
  }
  return out;
}

inline Coord draw_source(int col, int rows, int lback, Rng& rng) {
  const auto sources = eligible_sources(col, rows, lback);
  return sources[rng.next_below(sources.size())];
}

}  // namespace detail

inline Genotype seed_from_template(const Template& t, int library_size,
                                   std::optional<int> fixed_mult, Rng& rng) {
  Genotype g;
  g.rows = t.rows;
  g.cols = t.cols;
  g.lback = t.lback;
  g.grid = t.cells;
  g.seed_tag = rng.next_u64();
  for (int col = 1; col <= t.cols; ++col) {
    for (int row = 0; row < t.rows; ++row) {
      NodeGene& gene = g.at({col, row});
      gene.inputs.clear();
      for (int k = 0; k < arity(gene.kind); ++k)
        gene.inputs.push_back(detail::draw_source(col, t.rows, t.lback, rng));
    }
  }
  g.output_gene = {t.last_fc_col,
                   static_cast<int>(rng.next_below(t.rows))};
  if (fixed_mult.has_value()) {
    if (*fixed_mult < 0 || *fixed_mult >= library_size)
      throw ConfigError("fixed multiplier index out of range");
    g.mult_index = *fixed_mult;
  } else {
    g.mult_index = static_cast<int>(rng.next_below(library_size));
  }
  return g;
}

struct ActiveNode {
  Coord coord;
  NodeGene gene;
};

// Active nodes in topological (column-major) order, including the input
// pseudo-node at column 0 and the output pseudo-node at column cols+1.
struct ActiveSubgraph {
  std::vector<ActiveNode> nodes;

  const ActiveNode& output() const { return nodes.back(); }
};

inline ActiveSubgraph extract_active(const Genotype& g) {
  if (!g.in_grid(g.output_gene))
    throw IntegrityError("output gene points outside the grid");
  std::vector<char> mark(static_cast<std::size_t>(g.rows * g.cols), 0);
  bool input_reached = false;
  std::vector<Coord> stack = {g.output_gene};
  while (!stack.empty()) {
    const Coord c = stack.back();
    stack.pop_back();
    if (c.col == 0) {
      input_reached = true;
      continue;
    }
    char& m = mark[static_cast<std::size_t>((c.col - 1) * g.rows + c.row)];
    if (m) continue;
    m = 1;
    const NodeGene& gene = g.at(c);
    for (const Coord& src : gene.inputs) {
      const bool in_range =
          src.col >= 0 && src.col < c.col &&
          ((src.col == 0 && src.row == 0) || g.in_grid(src));
      if (!in_range) {
        throw IntegrityError("node (" + std::to_string(c.col) + "," +
                             std::to_string(c.row) +
                             ") has a corrupted connection gene");
      }
      stack.push_back(src);
    }
  }
  if (!input_reached)
    throw IntegrityError("input node unreachable from the output gene");

  ActiveSubgraph out;
  out.nodes.push_back({{0, 0}, NodeGene{NodeKind::Input, std::monostate{}, {}}});
  for (int col = 1; col <= g.cols; ++col)
    for (int row = 0; row < g.rows; ++row)
      if (mark[static_cast<std::size_t>((col - 1) * g.rows + row)])
        out.nodes.push_back({{col, row}, g.at({col, row})});
  out.nodes.push_back({{g.cols + 1, 0},
                       NodeGene{NodeKind::Output, std::monostate{},
                                {g.output_gene}}});
  return out;
}

// Edge multiset of the active subgraph (destination, source pairs, the
// output link included). Two genotypes encode the same wiring iff equal.
inline std::vector<std::array<int, 4>> active_edge_set(
    const ActiveSubgraph& a) {
  std::vector<std::array<int, 4>> edges;
  for (const auto& node : a.nodes)
    for (const Coord& src : node.gene.inputs)
      edges.push_back({node.coord.col, node.coord.row, src.col, src.row});
  std::sort(edges.begin(), edges.end());
  return edges;
}

inline Genotype mutate(const Genotype& g, double p_mult, int library_size,
                       Rng& rng) {
  Genotype child = g;
  child.pending_reinit.clear();

  const auto parent_edges = active_edge_set(extract_active(g));
  const int slots = g.rows * g.cols;
  const int cap = 10 * slots;
  bool changed = false;
  for (int attempt = 0; attempt < cap && !changed; ++attempt) {
    const int slot = static_cast<int>(rng.next_below(
        static_cast<std::uint64_t>(slots) + 1));
    if (slot == slots) {
      child.output_gene = {child.last_fc_col(),
                           static_cast<int>(rng.next_below(child.rows))};
    } else {
      const Coord c{slot / g.rows + 1, slot % g.rows};
      NodeGene& gene = child.at(c);
      for (Coord& input : gene.inputs)
        input = detail::draw_source(c.col, g.rows, g.lback, rng);
    }
    changed = active_edge_set(extract_active(child)) != parent_edges;
  }
  if (!changed) {
    // Cap exhausted: mutate the output gene directly, then fall back to a
    // deterministic scan for any single-edge change.
    const int fc_col = child.last_fc_col();
    if (child.rows >= 2) {
      int row = static_cast<int>(rng.next_below(child.rows));
      if (Coord{fc_col, row} == child.output_gene) row = (row + 1) % child.rows;
      child.output_gene = {fc_col, row};
      changed = active_edge_set(extract_active(child)) != parent_edges;
    }
    if (!changed) {
      for (const auto& node : extract_active(child).nodes) {
        if (node.coord.col == 0 || node.coord.col > child.cols) continue;
        NodeGene& gene = child.at(node.coord);
        for (Coord& input : gene.inputs) {
          for (const Coord& alt : detail::eligible_sources(
                   node.coord.col, child.rows, child.lback)) {
            if (alt == input) continue;
            const Coord saved = input;
            input = alt;
            if (active_edge_set(extract_active(child)) != parent_edges) {
              changed = true;
              break;
            }
            input = saved;
          }
          if (changed) break;
        }
        if (changed) break;
      }
    }
    if (!changed)
      throw IntegrityError("grid admits no alternative active wiring");
  }

  // Flag nodes that just became active; their weights must not be inherited.
  std::set<Coord> parent_active;
  for (const auto& n : extract_active(g).nodes) parent_active.insert(n.coord);
  for (const auto& n : extract_active(child).nodes) {
    if (n.coord.col >= 1 && n.coord.col <= g.cols &&
        !parent_active.contains(n.coord)) {
      child.pending_reinit.push_back(n.coord);
    }
  }

  if (rng.next_bool(p_mult)) {
    child.mult_index = static_cast<int>(rng.next_below(library_size));
  }
  return child;
}

// --- Validation --------------------------------------------------------------

namespace detail {

inline bool params_match_kind(const NodeGene& g) {
  switch (g.kind) {
    case NodeKind::Conv:
      return std::holds_alternative<ConvParams>(g.params);
    case NodeKind::Fc:
      return std::holds_alternative<FcParams>(g.params);
    case NodeKind::MaxPool:
    case NodeKind::AvgPool:
      return std::holds_alternative<PoolParams>(g.params);
    case NodeKind::Inception:
      return std::holds_alternative<InceptionParams>(g.params);
    case NodeKind::Residual:
      return std::holds_alternative<ResidualParams>(g.params);
    case NodeKind::Bottleneck:
      return std::holds_alternative<BottleneckParams>(g.params);
    default:
      return std::holds_alternative<std::monostate>(g.params);
  }
}

}  // namespace detail

// Collects every invariant violation instead of stopping at the first.
inline std::vector<std::string> validate(const Genotype& g, int library_size) {
  std::vector<std::string> v;
  if (g.rows < 1 || g.cols < 1) {
    v.push_back("grid dimensions must be positive");
    return v;
  }
  if (g.lback < 1) v.push_back("L-back must be >= 1");
  if (g.grid.size() != static_cast<std::size_t>(g.rows * g.cols))
    v.push_back("grid storage does not match declared dimensions");
  if (v.empty()) {
    for (int col = 1; col <= g.cols; ++col) {
      for (int row = 0; row < g.rows; ++row) {
        const Coord c{col, row};
        const NodeGene& gene = g.at(c);
        const std::string tag = "node (" + std::to_string(col) + "," +
                                std::to_string(row) + ")";
        if (gene.kind == NodeKind::Input || gene.kind == NodeKind::Output)
          v.push_back(tag + ": reserved kind in grid");
        if (!detail::params_match_kind(gene))
          v.push_back(tag + ": parameter record does not match kind");
        if (static_cast<int>(gene.inputs.size()) != arity(gene.kind)) {
          v.push_back(tag + ": arity " + std::to_string(gene.inputs.size()) +
                      " != " + std::to_string(arity(gene.kind)));
          continue;
        }
        for (const Coord& src : gene.inputs) {
          const bool valid_target =
              (src.col == 0 && src.row == 0) || g.in_grid(src);
          if (!valid_target || src.col >= col) {
            v.push_back(tag + ": connection to invalid coordinate (" +
                        std::to_string(src.col) + "," +
                        std::to_string(src.row) + ")");
          } else if (src.col < col - g.lback) {
            v.push_back(tag + ": connection reaches " +
                        std::to_string(col - src.col) +
                        " columns back, beyond L=" + std::to_string(g.lback));
          }
        }
      }
    }
    const int fc_col = g.last_fc_col();
    if (fc_col < 0) {
      v.push_back("no FC column exists for the output gene");
    } else if (!g.in_grid(g.output_gene)) {
      v.push_back("output gene outside the grid");
    } else if (g.output_gene.col != fc_col ||
               g.at(g.output_gene).kind != NodeKind::Fc) {
      v.push_back("output gene must target an FC node in column " +
                  std::to_string(fc_col));
    }
  }
  if (g.mult_index < 0 || g.mult_index >= library_size)
    v.push_back("multiplier index " + std::to_string(g.mult_index) +
                " out of range (library size " + std::to_string(library_size) +
                ")");
  return v;
}

// --- Serialization -----------------------------------------------------------

inline nlohmann::json params_to_json(const NodeParams& p) {
  nlohmann::json j = nlohmann::json::object();
  if (const auto* c = std::get_if<ConvParams>(&p)) {
    j = {{"filters", c->filters}, {"kernel", c->kernel}, {"stride", c->stride}};
  } else if (const auto* f = std::get_if<FcParams>(&p)) {
    j = {{"width", f->width}};
  } else if (const auto* pp = std::get_if<PoolParams>(&p)) {
    j = {{"kernel", pp->kernel}, {"stride", pp->stride}};
  } else if (const auto* i = std::get_if<InceptionParams>(&p)) {
    j = {{"c1", i->c1}, {"c2", i->c2}, {"c3", i->c3},
         {"r1", i->r1}, {"r2", i->r2}, {"r3", i->r3}};
  } else if (const auto* r = std::get_if<ResidualParams>(&p)) {
    j = {{"kernel_a", r->kernel_a},
         {"kernel_b", r->kernel_b},
         {"stride", r->stride},
         {"filters", r->filters}};
  } else if (const auto* b = std::get_if<BottleneckParams>(&p)) {
    j = {{"kernel", b->kernel},
         {"stride", b->stride},
         {"filters", b->filters},
         {"reduce", b->reduce}};
  }
  return j;
}

inline NodeParams params_from_json(NodeKind kind, const nlohmann::json& j) {
  switch (kind) {
    case NodeKind::Conv:
      return ConvParams{j.at("filters"), j.at("kernel"), j.at("stride")};
    case NodeKind::Fc:
      return FcParams{j.at("width")};
    case NodeKind::MaxPool:
    case NodeKind::AvgPool:
      return PoolParams{j.at("kernel"), j.at("stride")};
    case NodeKind::Inception:
      return InceptionParams{j.at("c1"), j.at("c2"), j.at("c3"),
                             j.at("r1"), j.at("r2"), j.at("r3")};
    case NodeKind::Residual:
      return ResidualParams{j.at("kernel_a"), j.at("kernel_b"), j.at("stride"),
                            j.at("filters")};
    case NodeKind::Bottleneck:
      return BottleneckParams{j.at("kernel"), j.at("stride"), j.at("filters"),
                              j.at("reduce")};
    default:
      return std::monostate{};
  }
}

inline nlohmann::json genotype_to_json(const Genotype& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int col = 1; col <= g.cols; ++col) {
    for (int row = 0; row < g.rows; ++row) {
      const NodeGene& gene = g.at({col, row});
      nlohmann::json inputs = nlohmann::json::array();
      for (const Coord& s : gene.inputs)
        inputs.push_back({{"col", s.col}, {"row", s.row}});
      nodes.push_back({{"col", col},
                       {"row", row},
                       {"kind", kind_name(gene.kind)},
                       {"params", params_to_json(gene.params)},
                       {"inputs", inputs}});
    }
  }
  nlohmann::json reinit = nlohmann::json::array();
  for (const Coord& c : g.pending_reinit)
    reinit.push_back({{"col", c.col}, {"row", c.row}});
  return {{"rows", g.rows},
          {"cols", g.cols},
          {"lback", g.lback},
          {"nodes", nodes},
          {"output_gene", {{"col", g.output_gene.col},
                           {"row", g.output_gene.row}}},
          {"mult_index", g.mult_index},
          {"seed_tag", g.seed_tag},
          {"pending_reinit", reinit}};
}

inline Genotype genotype_from_json(const nlohmann::json& j) {
  Genotype g;
  g.rows = j.at("rows");
  g.cols = j.at("cols");
  g.lback = j.at("lback");
  if (g.rows < 1 || g.cols < 1)
    throw FormatError("genotype document has invalid grid dimensions");
  g.grid.resize(static_cast<std::size_t>(g.rows * g.cols));
  for (const auto& n : j.at("nodes")) {
    const Coord c{n.at("col"), n.at("row")};
    if (!g.in_grid(c)) throw FormatError("genotype node outside grid");
    NodeGene gene;
    gene.kind = kind_from_name(n.at("kind"));
    gene.params = params_from_json(gene.kind, n.at("params"));
    for (const auto& s : n.at("inputs"))
      gene.inputs.push_back({s.at("col"), s.at("row")});
    g.at(c) = std::move(gene);
  }
  g.output_gene = {j.at("output_gene").at("col"),
                   j.at("output_gene").at("row")};
  g.mult_index = j.at("mult_index");
  g.seed_tag = j.at("seed_tag");
  for (const auto& s : j.at("pending_reinit"))
    g.pending_reinit.push_back({s.at("col"), s.at("row")});
  return g;
}

}  // namespace axnas
