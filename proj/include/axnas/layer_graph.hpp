#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "axnas/error.hpp"
#include "axnas/genotype.hpp"

namespace axnas {

struct TensorShape {
  int h = 0;
  int w = 0;
  int c = 0;
  bool operator==(const TensorShape&) const = default;
};

// Summation-layer shape rule: pool the spatially bigger tensor, zero-pad the
// channel-smaller one, so the result is (min h, min w, max c).
inline TensorShape sum_output_shape(TensorShape a, TensorShape b) {
  return {std::min(a.h, b.h), std::min(a.w, b.w), std::max(a.c, b.c)};
}

enum class LayerKind {
  Input,
  Conv,
  Relu,
  MaxPool,
  AvgPool,
  Add,
  ChannelPad,
  BatchNorm,
  Flatten,
  Dense,
  Softmax,
  Concat,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Add: return "add";
    case LayerKind::ChannelPad: return "chpad";
    case LayerKind::BatchNorm: return "bnorm";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Concat: return "concat";
  }
  return "?";
}

struct Layer {
  LayerKind kind = LayerKind::Input;
  std::string name;          // stable weight-store key for conv/dense/bnorm
  Coord node;                // originating CGP node
  std::vector<int> inputs;   // indices of producer layers
  TensorShape in_shape;      // primary input shape
  TensorShape out_shape;
  int kh = 0, kw = 0;        // conv/pool kernel
  int sh = 1, sw = 1;        // conv/pool stride
  int units = 0;             // conv filters / dense width / pad target
  std::int64_t params = 0;   // weights + biases (BN: scale + shift)
  std::int64_t mults = 0;    // multiplications per single inference
};

struct LayerGraph {
  TensorShape input_shape;
  int num_classes = 0;
  int output_layer = -1;
  std::vector<Layer> layers;  // topological order, layers[0] is the input
};

inline std::int64_t count_params(const LayerGraph& g) {
  std::int64_t total = 0;
  for (const Layer& l : g.layers) total += l.params;
  return total;
}

inline std::int64_t count_mults(const LayerGraph& g) {
  std::int64_t total = 0;
  for (const Layer& l : g.layers) total += l.mults;
  return total;
}

class CompileError : public Error {
 public:
  CompileError(Coord node, const std::string& msg)
      : Error("node (" + std::to_string(node.col) + "," +
              std::to_string(node.row) + "): " + msg),
        node_(node) {}
  Coord node() const { return node_; }

 private:
  Coord node_;
};

namespace detail {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace detail

// Incremental graph assembly with shape inference. compile() drives it; the
// lower_* entry points are also usable directly on synthetic inputs.
class LayerGraphBuilder {
 public:
  explicit LayerGraphBuilder(TensorShape input) {
    Layer in;
    in.kind = LayerKind::Input;
    in.name = "input";
    in.out_shape = input;
    in.in_shape = input;
    layers_.push_back(std::move(in));
  }

  int input_index() const { return 0; }
  const Layer& layer(int i) const {
    return layers_[static_cast<std::size_t>(i)];
  }
  const std::vector<Layer>& layers() const { return layers_; }

  int add_conv(Coord node, const std::string& name, int in, int kernel,
               int stride, int filters) {
    const TensorShape s = out(in);
    Layer l;
    l.kind = LayerKind::Conv;
    l.name = name;
    l.node = node;
    l.inputs = {in};
    l.in_shape = s;
    l.kh = l.kw = kernel;
    l.sh = l.sw = stride;
    l.units = filters;
    l.out_shape = {detail::ceil_div(s.h, stride), detail::ceil_div(s.w, stride),
                   filters};
    l.params = static_cast<std::int64_t>(kernel) * kernel * s.c * filters +
               filters;
    l.mults = static_cast<std::int64_t>(l.out_shape.h) * l.out_shape.w *
              kernel * kernel * s.c * filters;
    return push(std::move(l));
  }

  int add_relu(Coord node, int in) {
    Layer l;
    l.kind = LayerKind::Relu;
    l.node = node;
    l.inputs = {in};
    l.in_shape = l.out_shape = out(in);
    return push(std::move(l));
  }

  int add_pool(LayerKind kind, Coord node, int in, int kh, int kw, int sh,
               int sw) {
    const TensorShape s = out(in);
    Layer l;
    l.kind = kind;
    l.node = node;
    l.inputs = {in};
    l.in_shape = s;
    l.kh = kh;
    l.kw = kw;
    l.sh = sh;
    l.sw = sw;
    l.out_shape = {detail::ceil_div(s.h, sh), detail::ceil_div(s.w, sw), s.c};
    return push(std::move(l));
  }

  int add_batchnorm(Coord node, const std::string& name, int in) {
    const TensorShape s = out(in);
    Layer l;
    l.kind = LayerKind::BatchNorm;
    l.name = name;
    l.node = node;
    l.inputs = {in};
    l.in_shape = l.out_shape = s;
    l.units = s.c;
    l.params = 2 * static_cast<std::int64_t>(s.c);
    return push(std::move(l));
  }

  int add_add(Coord node, int a, int b) {
    if (!(out(a) == out(b)))
      throw ShapeError("elementwise add requires equal shapes");
    Layer l;
    l.kind = LayerKind::Add;
    l.node = node;
    l.inputs = {a, b};
    l.in_shape = l.out_shape = out(a);
    return push(std::move(l));
  }

  int add_channel_pad(Coord node, int in, int target_c) {
    const TensorShape s = out(in);
    Layer l;
    l.kind = LayerKind::ChannelPad;
    l.node = node;
    l.inputs = {in};
    l.in_shape = s;
    l.units = target_c;
    l.out_shape = {s.h, s.w, target_c};
    return push(std::move(l));
  }

  int add_flatten(Coord node, int in) {
    const TensorShape s = out(in);
    Layer l;
    l.kind = LayerKind::Flatten;
    l.node = node;
    l.inputs = {in};
    l.in_shape = s;
    l.out_shape = {1, 1, s.h * s.w * s.c};
    return push(std::move(l));
  }

  int add_dense(Coord node, const std::string& name, int in, int width) {
    TensorShape s = out(in);
    int src = in;
    if (s.h != 1 || s.w != 1) {
      src = add_flatten(node, in);
      s = out(src);
    }
    Layer l;
    l.kind = LayerKind::Dense;
    l.name = name;
    l.node = node;
    l.inputs = {src};
    l.in_shape = s;
    l.units = width;
    l.out_shape = {1, 1, width};
    l.params = static_cast<std::int64_t>(s.c) * width + width;
    return push(std::move(l));
  }

  int add_softmax(Coord node, int in) {
    Layer l;
    l.kind = LayerKind::Softmax;
    l.node = node;
    l.inputs = {in};
    l.in_shape = l.out_shape = out(in);
    return push(std::move(l));
  }

  int add_concat(Coord node, const std::vector<int>& ins) {
    Layer l;
    l.kind = LayerKind::Concat;
    l.node = node;
    l.inputs = ins;
    const TensorShape first = out(ins.front());
    int channels = 0;
    for (int i : ins) {
      const TensorShape s = out(i);
      if (s.h != first.h || s.w != first.w)
        throw ShapeError("concat requires equal spatial dimensions");
      channels += s.c;
    }
    l.in_shape = first;
    l.out_shape = {first.h, first.w, channels};
    return push(std::move(l));
  }

  // SUM node: unify spatial dims by max-pooling the bigger tensor (kernel =
  // stride = ratio, which must be integral) and channel dims by zero-padding
  // the smaller one, then add elementwise.
  int lower_sum(Coord node, int a, int b) {
    const TensorShape target = sum_output_shape(out(a), out(b));
    int lhs = unify(node, a, target);
    int rhs = unify(node, b, target);
    return add_add(node, lhs, rhs);
  }

  // Inception: 1x1-reduced 5x5 and 3x3 branches, a plain 1x1 branch, and a
  // 3x3 max-pool branch with 1x1 reduction; concatenated along channels.
  int lower_inception(Coord node, const InceptionParams& p, int in) {
    const std::string base = node_name(node);
    int b1 = add_relu(node, add_conv(node, base + "/reduce5", in, 1, 1, p.r1));
    b1 = add_relu(node, add_conv(node, base + "/conv5", b1, 5, 1, p.c1));
    int b2 = add_relu(node, add_conv(node, base + "/reduce3", in, 1, 1, p.r2));
    b2 = add_relu(node, add_conv(node, base + "/conv3", b2, 3, 1, p.c2));
    int b3 = add_relu(node, add_conv(node, base + "/conv1", in, 1, 1, p.c3));
    int b4 = add_pool(LayerKind::MaxPool, node, in, 3, 3, 1, 1);
    b4 = add_relu(node, add_conv(node, base + "/reducep", b4, 1, 1, p.r3));
    return add_concat(node, {b1, b2, b3, b4});
  }

  // Residual: NxN (stride n) + MxM main path, 1x1 (stride n) skip path, both
  // batch-normalized, added, ReLU.
  int lower_residual(Coord node, const ResidualParams& p, int in) {
    const std::string base = node_name(node);
    int main = add_conv(node, base + "/convA", in, p.kernel_a, p.stride,
                        p.filters);
    main = add_batchnorm(node, base + "/bnA", main);
    main = add_relu(node, main);
    main = add_conv(node, base + "/convB", main, p.kernel_b, 1, p.filters);
    main = add_batchnorm(node, base + "/bnB", main);
    int skip = add_conv(node, base + "/convS", in, 1, p.stride, p.filters);
    skip = add_batchnorm(node, base + "/bnS", skip);
    return add_relu(node, add_add(node, main, skip));
  }

  // Bottleneck residual: 1x1 (stride n, reduce) -> BN -> ReLU -> NxN -> BN ->
  // ReLU -> 1x1 (filters) -> BN, with a 1x1 (stride n) + BN skip path.
  int lower_bottleneck(Coord node, const BottleneckParams& p, int in) {
    const std::string base = node_name(node);
    int main = add_conv(node, base + "/convIn", in, 1, p.stride, p.reduce);
    main = add_batchnorm(node, base + "/bnIn", main);
    main = add_relu(node, main);
    main = add_conv(node, base + "/convMid", main, p.kernel, 1, p.reduce);
    main = add_batchnorm(node, base + "/bnMid", main);
    main = add_relu(node, main);
    main = add_conv(node, base + "/convOut", main, 1, 1, p.filters);
    main = add_batchnorm(node, base + "/bnOut", main);
    int skip = add_conv(node, base + "/convS", in, 1, p.stride, p.filters);
    skip = add_batchnorm(node, base + "/bnS", skip);
    return add_relu(node, add_add(node, main, skip));
  }

  LayerGraph take(TensorShape input_shape, int num_classes, int output_layer) {
    LayerGraph g;
    g.input_shape = input_shape;
    g.num_classes = num_classes;
    g.output_layer = output_layer;
    g.layers = std::move(layers_);
    return g;
  }

 private:
  TensorShape out(int i) const {
    return layers_[static_cast<std::size_t>(i)].out_shape;
  }

  int push(Layer l) {
    layers_.push_back(std::move(l));
    return static_cast<int>(layers_.size()) - 1;
  }

  static std::string node_name(Coord c) {
    return "n" + std::to_string(c.col) + "x" + std::to_string(c.row);
  }

  int unify(Coord node, int in, TensorShape target) {
    TensorShape s = out(in);
    int idx = in;
    if (s.h != target.h || s.w != target.w) {
      if (s.h % target.h != 0 || s.w % target.w != 0) {
        throw CompileError(
            node, "summation cannot unify (" + std::to_string(s.h) + "," +
                      std::to_string(s.w) + ") with (" +
                      std::to_string(target.h) + "," +
                      std::to_string(target.w) + "): non-integral ratio");
      }
      idx = add_pool(LayerKind::MaxPool, node, idx, s.h / target.h,
                     s.w / target.w, s.h / target.h, s.w / target.w);
      s = out(idx);
    }
    if (s.c != target.c) idx = add_channel_pad(node, idx, target.c);
    return idx;
  }

  std::vector<Layer> layers_;
};

// Lowers an active subgraph to a concrete layer graph with full shape
// inference. CONV nodes become conv+ReLU, FC nodes dense+ReLU except the
// output-feeding one, which becomes dense(num_classes)+softmax.
inline LayerGraph compile(const ActiveSubgraph& active, TensorShape input_shape,
                          int num_classes) {
  LayerGraphBuilder b(input_shape);
  std::map<Coord, int> produced;
  const Coord terminal = active.output().gene.inputs.at(0);

  for (const ActiveNode& n : active.nodes) {
    if (n.gene.kind == NodeKind::Input) {
      produced[n.coord] = b.input_index();
      continue;
    }
    if (n.gene.kind == NodeKind::Output) continue;
    std::vector<int> ins;
    for (const Coord& src : n.gene.inputs) ins.push_back(produced.at(src));
    const std::string base =
        "n" + std::to_string(n.coord.col) + "x" + std::to_string(n.coord.row);
    int idx = -1;
    switch (n.gene.kind) {
      case NodeKind::Conv: {
        const auto& p = std::get<ConvParams>(n.gene.params);
        idx = b.add_conv(n.coord, base + "/conv", ins[0], p.kernel, p.stride,
                         p.filters);
        idx = b.add_relu(n.coord, idx);
        break;
      }
      case NodeKind::MaxPool:
      case NodeKind::AvgPool: {
        const auto& p = std::get<PoolParams>(n.gene.params);
        idx = b.add_pool(n.gene.kind == NodeKind::MaxPool ? LayerKind::MaxPool
                                                          : LayerKind::AvgPool,
                         n.coord, ins[0], p.kernel, p.kernel, p.stride,
                         p.stride);
        break;
      }
      case NodeKind::Sum:
        idx = b.lower_sum(n.coord, ins[0], ins[1]);
        break;
      case NodeKind::Inception:
        idx = b.lower_inception(n.coord,
                                std::get<InceptionParams>(n.gene.params),
                                ins[0]);
        break;
      case NodeKind::Residual:
        idx = b.lower_residual(n.coord, std::get<ResidualParams>(n.gene.params),
                               ins[0]);
        break;
      case NodeKind::Bottleneck:
        idx = b.lower_bottleneck(n.coord,
                                 std::get<BottleneckParams>(n.gene.params),
                                 ins[0]);
        break;
      case NodeKind::Fc: {
        const auto& p = std::get<FcParams>(n.gene.params);
        if (n.coord == terminal) {
          idx = b.add_dense(n.coord, base + "/fc", ins[0], num_classes);
          idx = b.add_softmax(n.coord, idx);
        } else {
          idx = b.add_dense(n.coord, base + "/fc", ins[0], p.width);
          idx = b.add_relu(n.coord, idx);
        }
        break;
      }
      default:
        throw CompileError(n.coord, "unexpected node kind in active graph");
    }
    produced[n.coord] = idx;
  }

  const int out_idx = produced.at(terminal);
  LayerGraph g = b.take(input_shape, num_classes, out_idx);
  const TensorShape out_shape =
      g.layers[static_cast<std::size_t>(out_idx)].out_shape;
  if (!(out_shape == TensorShape{1, 1, num_classes}))
    throw CompileError(terminal, "output is not a class-probability vector");
  return g;
}

inline std::string shape_str(TensorShape s) {
  return "(" + std::to_string(s.h) + "," + std::to_string(s.w) + "," +
         std::to_string(s.c) + ")";
}

// One layer per line; used in archive dumps and reports.
inline std::string pretty_print(const LayerGraph& g) {
  std::ostringstream os;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Layer& l = g.layers[i];
    os << "[" << i << "] " << layer_kind_name(l.kind);
    if (!l.name.empty()) os << " " << l.name;
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool ||
        l.kind == LayerKind::AvgPool) {
      os << " " << l.kh << "x" << l.kw << "/" << l.sh;
      if (l.kind == LayerKind::Conv) os << " f=" << l.units;
    } else if (l.kind == LayerKind::Dense) {
      os << " w=" << l.units;
    }
    os << " " << shape_str(l.in_shape) << "->" << shape_str(l.out_shape);
    os << " params=" << l.params << " mults=" << l.mults << "\n";
  }
  os << "total params=" << count_params(g) << " mults=" << count_mults(g)
     << "\n";
  return os.str();
}

}  // namespace axnas
