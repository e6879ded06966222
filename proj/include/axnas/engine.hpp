#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "axnas/error.hpp"
#include "axnas/layer_graph.hpp"
#include "axnas/multiplier.hpp"
#include "axnas/rng.hpp"
#include "axnas/tensor.hpp"

namespace axnas {

// Parameter tensors of one layer. Conv/dense use w and b; batch-norm uses
// gamma/beta plus running statistics (state, not parameters).
struct LayerTensors {
  Tensor w;
  Tensor b;
  Tensor gamma;
  Tensor beta;
  Tensor run_mean;
  Tensor run_var;
};

struct WeightStore {
  std::map<std::string, LayerTensors> at;
};

using GradMap = std::map<std::string, LayerTensors>;

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.001;
  double l2 = 1e-4;
  bool augment = false;
  int shift_px = 4;
};

// Read-only view of an image classification dataset (u8 pixels, NHWC).
struct DataView {
  const std::uint8_t* pixels = nullptr;
  const int* labels = nullptr;
  int n = 0, h = 0, w = 0, c = 0;
  int num_classes = 0;
};

inline Tensor make_batch(const DataView& data, std::span<const int> indices) {
  Tensor batch(static_cast<int>(indices.size()), data.h, data.w, data.c);
  const std::size_t stride =
      static_cast<std::size_t>(data.h) * data.w * data.c;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint8_t* src = data.pixels + indices[i] * stride;
    double* dst = batch.v.data() + i * stride;
    for (std::size_t k = 0; k < stride; ++k) dst[k] = src[k] / 255.0;
  }
  return batch;
}

// Random horizontal flip plus a random shift of up to shift_px pixels with
// zero padding.
inline void augment_batch(Tensor& batch, int shift_px, Rng& rng) {
  Tensor src = batch;
  for (int i = 0; i < batch.n; ++i) {
    const bool flip = rng.next_bool(0.5);
    const int dy = rng.next_int(-shift_px, shift_px);
    const int dx = rng.next_int(-shift_px, shift_px);
    for (int y = 0; y < batch.h; ++y) {
      for (int x = 0; x < batch.w; ++x) {
        const int sy = y - dy;
        int sx = x - dx;
        if (flip) sx = batch.w - 1 - sx;
        for (int ch = 0; ch < batch.c; ++ch) {
          batch.at(i, y, x, ch) =
              (sy >= 0 && sy < batch.h && sx >= 0 && sx < batch.w)
                  ? src.at(i, sy, sx, ch)
                  : 0.0;
        }
      }
    }
  }
}

enum class ArithMode {
  ApproxQuant,  // convolutions via the 8-bit multiplier table
  FloatExact,   // reference float path, also the backward's model
};

struct Tape {
  std::vector<Tensor> act;                  // per-layer outputs
  std::vector<std::vector<double>> bn_mean;  // per-layer batch stats
  std::vector<std::vector<double>> bn_var;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  int steps = 0;
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

class Engine {
 public:
  Engine(LayerGraph graph, MultiplierPtr model)
      : graph_(std::move(graph)), model_(std::move(model)) {}

  const LayerGraph& graph() const { return graph_; }
  const MultiplierModel& model() const { return *model_; }

  // Creates entries that are missing or whose dimensions changed, and
  // re-initializes layers whose CGP node is listed in `reinit`.
  void init_weights(WeightStore& store, const std::vector<Coord>& reinit,
                    Rng& rng) const {
    const std::set<Coord> reset(reinit.begin(), reinit.end());
    for (const Layer& l : graph_.layers) {
      if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) {
        const Tensor dims = l.kind == LayerKind::Conv
                                ? Tensor(l.kh, l.kw, l.in_shape.c, l.units)
                                : Tensor(1, 1, l.in_shape.c, l.units);
        LayerTensors& t = store.at[l.name];
        const bool fresh = !t.w.same_dims(dims) || reset.contains(l.node);
        if (!fresh) continue;
        t = LayerTensors{};
        t.w = dims;
        const int fan_in = l.kind == LayerKind::Conv
                               ? l.kh * l.kw * l.in_shape.c
                               : l.in_shape.c;
        const double limit = std::sqrt(6.0 / fan_in);
        for (double& v : t.w.v) v = rng.next_real(-limit, limit);
        t.b = Tensor(1, 1, 1, l.units);
      } else if (l.kind == LayerKind::BatchNorm) {
        LayerTensors& t = store.at[l.name];
        const Tensor dims(1, 1, 1, l.units);
        const bool fresh = !t.gamma.same_dims(dims) || reset.contains(l.node);
        if (!fresh) continue;
        t = LayerTensors{};
        t.gamma = dims;
        std::fill(t.gamma.v.begin(), t.gamma.v.end(), 1.0);
        t.beta = dims;
        t.run_mean = dims;
        t.run_var = dims;
        std::fill(t.run_var.v.begin(), t.run_var.v.end(), 1.0);
      }
    }
  }

  // Inference-mode forward pass; batch-norm uses running statistics.
  Tensor forward(const WeightStore& store, const Tensor& batch, ArithMode mode,
                 Tape* tape = nullptr) const {
    Tape local;
    Tape& t = tape != nullptr ? *tape : local;
    run_forward(store, batch, mode, /*train_phase=*/false, t, nullptr);
    return t.act[static_cast<std::size_t>(graph_.output_layer)];
  }

  // Training-mode forward pass; batch-norm normalizes by batch statistics
  // and updates the running estimates in `store`.
  Tensor forward_train(WeightStore& store, const Tensor& batch, ArithMode mode,
                       Tape& tape) const {
    run_forward(store, batch, mode, /*train_phase=*/true, tape, &store);
    return tape.act[static_cast<std::size_t>(graph_.output_layer)];
  }

  double loss(const Tensor& probs, std::span<const int> labels,
              const WeightStore& store, double l2) const {
    double nll = 0.0;
    for (int i = 0; i < probs.n; ++i) {
      const double p = std::max(probs.at(i, 0, 0, labels[i]), 1e-12);
      nll -= std::log(p);
    }
    nll /= probs.n;
    double reg = 0.0;
    for (const Layer& l : graph_.layers) {
      if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense) continue;
      for (double v : store.at.at(l.name).w.v) reg += v * v;
    }
    return nll + 0.5 * l2 * reg;
  }

  // Reverse pass of the cross-entropy loss. Convolutions are differentiated
  // as exact float operations on the recorded activations, regardless of the
  // multiplier used in the forward pass.
  GradMap backward(const Tape& tape, const WeightStore& store,
                   std::span<const int> labels, double l2) const {
    const auto& layers = graph_.layers;
    std::vector<Tensor> d(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Tensor& a = tape.act[i];
      d[i] = Tensor(a.n, a.h, a.w, a.c);
    }
    GradMap grads;

    {  // seed: dL/dp of the mean negative log-likelihood
      const std::size_t out = static_cast<std::size_t>(graph_.output_layer);
      const Tensor& p = tape.act[out];
      for (int i = 0; i < p.n; ++i) {
        const double pi = std::max(p.at(i, 0, 0, labels[i]), 1e-12);
        d[out].at(i, 0, 0, labels[i]) = -1.0 / (pi * p.n);
      }
    }

    for (std::size_t li = layers.size(); li-- > 0;) {
      const Layer& l = layers[li];
      const Tensor& dout = d[li];
      switch (l.kind) {
        case LayerKind::Input:
          break;
        case LayerKind::Conv: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          const LayerTensors& wt = store.at.at(l.name);
          const ConvGeom g = same_geom(l.in_shape.h, l.in_shape.w, l.kh, l.kw,
                                       l.sh, l.sw);
          ConvGrads cg = conv_backward_float(dout, tape.act[in], wt.w, g);
          accumulate(d[in], cg.d_input);
          LayerTensors& gr = grads[l.name];
          ensure_like(gr.w, wt.w);
          ensure_like(gr.b, wt.b);
          accumulate(gr.w, cg.d_weights);
          for (int co = 0; co < l.units; ++co) gr.b.v[co] += cg.d_bias[co];
          break;
        }
        case LayerKind::Relu: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          for (std::size_t k = 0; k < dout.size(); ++k)
            if (tape.act[in].v[k] > 0.0) d[in].v[k] += dout.v[k];
          break;
        }
        case LayerKind::MaxPool: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          pool_backward_max(dout, tape.act[in], l, d[in]);
          break;
        }
        case LayerKind::AvgPool: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          pool_backward_avg(dout, tape.act[in], l, d[in]);
          break;
        }
        case LayerKind::Add: {
          accumulate(d[static_cast<std::size_t>(l.inputs[0])], dout);
          accumulate(d[static_cast<std::size_t>(l.inputs[1])], dout);
          break;
        }
        case LayerKind::ChannelPad: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          Tensor& din = d[in];
          for (int i = 0; i < din.n; ++i)
            for (int y = 0; y < din.h; ++y)
              for (int x = 0; x < din.w; ++x)
                for (int ch = 0; ch < din.c; ++ch)
                  din.at(i, y, x, ch) += dout.at(i, y, x, ch);
          break;
        }
        case LayerKind::BatchNorm: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          bn_backward(dout, tape, li, store.at.at(l.name), d[in],
                      grads[l.name]);
          break;
        }
        case LayerKind::Flatten: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          for (std::size_t k = 0; k < dout.size(); ++k)
            d[in].v[k] += dout.v[k];
          break;
        }
        case LayerKind::Dense: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          const LayerTensors& wt = store.at.at(l.name);
          LayerTensors& gr = grads[l.name];
          ensure_like(gr.w, wt.w);
          ensure_like(gr.b, wt.b);
          const int cin = l.in_shape.c;
          const int cout = l.units;
          for (int i = 0; i < dout.n; ++i) {
            const double* dr = dout.v.data() + dout.idx(i, 0, 0, 0);
            const double* xr =
                tape.act[in].v.data() + tape.act[in].idx(i, 0, 0, 0);
            double* dxr = d[in].v.data() + d[in].idx(i, 0, 0, 0);
            for (int ci = 0; ci < cin; ++ci) {
              const double* wr = wt.w.v.data() +
                                 static_cast<std::size_t>(ci) * cout;
              double* gwr = gr.w.v.data() + static_cast<std::size_t>(ci) * cout;
              double acc = 0.0;
              for (int co = 0; co < cout; ++co) {
                acc += wr[co] * dr[co];
                gwr[co] += xr[ci] * dr[co];
              }
              dxr[ci] += acc;
            }
            for (int co = 0; co < cout; ++co) gr.b.v[co] += dr[co];
          }
          break;
        }
        case LayerKind::Softmax: {
          const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
          const Tensor& p = tape.act[li];
          for (int i = 0; i < p.n; ++i) {
            double dot = 0.0;
            for (int ch = 0; ch < p.c; ++ch)
              dot += dout.at(i, 0, 0, ch) * p.at(i, 0, 0, ch);
            for (int ch = 0; ch < p.c; ++ch)
              d[in].at(i, 0, 0, ch) +=
                  p.at(i, 0, 0, ch) * (dout.at(i, 0, 0, ch) - dot);
          }
          break;
        }
        case LayerKind::Concat: {
          int offset = 0;
          for (int src : l.inputs) {
            Tensor& din = d[static_cast<std::size_t>(src)];
            for (int i = 0; i < din.n; ++i)
              for (int y = 0; y < din.h; ++y)
                for (int x = 0; x < din.w; ++x)
                  for (int ch = 0; ch < din.c; ++ch)
                    din.at(i, y, x, ch) += dout.at(i, y, x, offset + ch);
            offset += din.c;
          }
          break;
        }
      }
    }

    for (const Layer& l : graph_.layers) {
      if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense) continue;
      LayerTensors& gr = grads[l.name];
      const Tensor& w = store.at.at(l.name).w;
      ensure_like(gr.w, w);
      ensure_like(gr.b, store.at.at(l.name).b);
      for (std::size_t k = 0; k < w.size(); ++k) gr.w.v[k] += l2 * w.v[k];
    }
    return grads;
  }

  TrainResult train(WeightStore& store, const DataView& data,
                    std::span<const int> subset, const TrainConfig& cfg,
                    Rng& rng) const {
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.learning_rate < 0.0)
      throw ConfigError("learning_rate must be >= 0");

    AdamState adam;
    TrainResult result;
    std::vector<int> order(subset.begin(), subset.end());
    std::vector<int> labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      double epoch_loss = 0.0;
      int batches = 0;
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(
            order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::span<const int> idx(order.data() + start, end - start);
        Tensor batch = make_batch(data, idx);
        if (cfg.augment) augment_batch(batch, cfg.shift_px, rng);
        labels.assign(idx.size(), 0);
        for (std::size_t k = 0; k < idx.size(); ++k)
          labels[k] = data.labels[idx[k]];

        Tape tape;
        double batch_loss = 0.0;
        try {
          const Tensor probs =
              forward_train(store, batch, ArithMode::ApproxQuant, tape);
          batch_loss = loss(probs, labels, store, cfg.l2);
          if (!std::isfinite(batch_loss))
            throw TrainError("training diverged (non-finite loss)");
          const GradMap grads = backward(tape, store, labels, cfg.l2);
          adam_step(store, grads, adam, cfg.learning_rate);
        } catch (const NumericError& e) {
          throw TrainError(std::string("training diverged: ") + e.what());
        }
        epoch_loss += batch_loss;
        ++batches;
        ++result.steps;
      }
      result.epoch_loss.push_back(batches > 0 ? epoch_loss / batches : 0.0);
    }
    return result;
  }

  double evaluate_accuracy(const WeightStore& store, const DataView& data,
                           int batch_size = 64) const {
    if (data.n == 0) return 0.0;
    int correct = 0;
    std::vector<int> idx;
    for (int start = 0; start < data.n; start += batch_size) {
      const int end = std::min(data.n, start + batch_size);
      idx.clear();
      for (int i = start; i < end; ++i) idx.push_back(i);
      const Tensor batch = make_batch(data, idx);
      const Tensor probs = forward(store, batch, ArithMode::ApproxQuant);
      for (int i = 0; i < probs.n; ++i) {
        int best = 0;
        for (int ch = 1; ch < probs.c; ++ch)
          if (probs.at(i, 0, 0, ch) > probs.at(i, 0, 0, best)) best = ch;
        correct += best == data.labels[idx[static_cast<std::size_t>(i)]];
      }
    }
    return static_cast<double>(correct) / data.n;
  }

 private:
  struct AdamState {
    GradMap m;
    GradMap v;
    int t = 0;
  };

  static void ensure_like(Tensor& t, const Tensor& like) {
    if (!t.same_dims(like)) t = Tensor(like.n, like.h, like.w, like.c);
  }

  static void accumulate(Tensor& into, const Tensor& from) {
    for (std::size_t k = 0; k < into.size(); ++k) into.v[k] += from.v[k];
  }

  void run_forward(const WeightStore& store, const Tensor& batch,
                   ArithMode mode, bool train_phase, Tape& tape,
                   WeightStore* bn_sink) const {
    const auto& layers = graph_.layers;
    if (!(TensorShape{batch.h, batch.w, batch.c} == graph_.input_shape))
      throw ShapeError("batch shape does not match the compiled graph");
    tape.act.assign(layers.size(), Tensor{});
    tape.bn_mean.assign(layers.size(), {});
    tape.bn_var.assign(layers.size(), {});
    tape.act[0] = batch;
    for (std::size_t li = 1; li < layers.size(); ++li) {
      const Layer& l = layers[li];
      const Tensor& in = tape.act[static_cast<std::size_t>(l.inputs[0])];
      switch (l.kind) {
        case LayerKind::Conv: {
          const LayerTensors& wt = store.at.at(l.name);
          const ConvGeom g = same_geom(l.in_shape.h, l.in_shape.w, l.kh, l.kw,
                                       l.sh, l.sw);
          if (mode == ArithMode::ApproxQuant) {
            const QuantTensor qin = quantize_per_sample(in, true);
            const QuantTensor qw = quantize(wt.w, false);
            tape.act[li] = conv_forward_approx(qin, qw, *model_, g, wt.b.v);
          } else {
            tape.act[li] = conv_forward_float(in, wt.w, g, wt.b.v);
          }
          break;
        }
        case LayerKind::Relu: {
          Tensor out = in;
          for (double& v : out.v) v = v > 0.0 ? v : 0.0;
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
          tape.act[li] = pool_forward(in, l);
          break;
        case LayerKind::Add: {
          Tensor out = in;
          accumulate(out, tape.act[static_cast<std::size_t>(l.inputs[1])]);
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::ChannelPad: {
          Tensor out(in.n, in.h, in.w, l.units);
          for (int i = 0; i < in.n; ++i)
            for (int y = 0; y < in.h; ++y)
              for (int x = 0; x < in.w; ++x)
                for (int ch = 0; ch < in.c; ++ch)
                  out.at(i, y, x, ch) = in.at(i, y, x, ch);
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::BatchNorm:
          tape.act[li] = bn_forward(in, l, store.at.at(l.name), train_phase,
                                    tape, li, bn_sink);
          break;
        case LayerKind::Flatten: {
          Tensor out(in.n, 1, 1, in.h * in.w * in.c);
          out.v = in.v;
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::Dense: {
          const LayerTensors& wt = store.at.at(l.name);
          const int cin = l.in_shape.c;
          const int cout = l.units;
          Tensor out(in.n, 1, 1, cout);
          for (int i = 0; i < in.n; ++i) {
            double* o = out.v.data() + out.idx(i, 0, 0, 0);
            for (int co = 0; co < cout; ++co) o[co] = wt.b.v[co];
            const double* xr = in.v.data() + in.idx(i, 0, 0, 0);
            for (int ci = 0; ci < cin; ++ci) {
              const double x = xr[ci];
              const double* wr =
                  wt.w.v.data() + static_cast<std::size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) o[co] += x * wr[co];
            }
          }
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::Softmax: {
          Tensor out = in;
          for (int i = 0; i < out.n; ++i) {
            double mx = out.at(i, 0, 0, 0);
            for (int ch = 1; ch < out.c; ++ch)
              mx = std::max(mx, out.at(i, 0, 0, ch));
            double sum = 0.0;
            for (int ch = 0; ch < out.c; ++ch) {
              double& v = out.v[out.idx(i, 0, 0, ch)];
              v = std::exp(v - mx);
              sum += v;
            }
            for (int ch = 0; ch < out.c; ++ch)
              out.v[out.idx(i, 0, 0, ch)] /= sum;
          }
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::Concat: {
          int channels = 0;
          for (int src : l.inputs)
            channels += tape.act[static_cast<std::size_t>(src)].c;
          Tensor out(in.n, in.h, in.w, channels);
          int offset = 0;
          for (int src : l.inputs) {
            const Tensor& s = tape.act[static_cast<std::size_t>(src)];
            for (int i = 0; i < s.n; ++i)
              for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                  for (int ch = 0; ch < s.c; ++ch)
                    out.at(i, y, x, offset + ch) = s.at(i, y, x, ch);
            offset += s.c;
          }
          tape.act[li] = std::move(out);
          break;
        }
        case LayerKind::Input:
          throw ShapeError("input layer may only appear first");
      }
    }
  }

  static Tensor pool_forward(const Tensor& in, const Layer& l) {
    const ConvGeom g =
        same_geom(in.h, in.w, l.kh, l.kw, l.sh, l.sw);
    Tensor out(in.n, g.out_h, g.out_w, in.c);
    const bool is_max = l.kind == LayerKind::MaxPool;
    for (int i = 0; i < in.n; ++i)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox)
          for (int ch = 0; ch < in.c; ++ch) {
            double best = -std::numeric_limits<double>::infinity();
            double sum = 0.0;
            int count = 0;
            for (int ky = 0; ky < l.kh; ++ky) {
              const int iy = oy * g.sh - g.pad_top + ky;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < l.kw; ++kx) {
                const int ix = ox * g.sw - g.pad_left + kx;
                if (ix < 0 || ix >= in.w) continue;
                const double v = in.at(i, iy, ix, ch);
                best = std::max(best, v);
                sum += v;
                ++count;
              }
            }
            out.at(i, oy, ox, ch) = is_max ? best : sum / count;
          }
    return out;
  }

  static void pool_backward_max(const Tensor& dout, const Tensor& in,
                                const Layer& l, Tensor& din) {
    const ConvGeom g = same_geom(in.h, in.w, l.kh, l.kw, l.sh, l.sw);
    for (int i = 0; i < in.n; ++i)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox)
          for (int ch = 0; ch < in.c; ++ch) {
            int by = -1, bx = -1;
            double best = -std::numeric_limits<double>::infinity();
            for (int ky = 0; ky < l.kh; ++ky) {
              const int iy = oy * g.sh - g.pad_top + ky;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < l.kw; ++kx) {
                const int ix = ox * g.sw - g.pad_left + kx;
                if (ix < 0 || ix >= in.w) continue;
                const double v = in.at(i, iy, ix, ch);
                if (v > best) {  // first maximum wins
                  best = v;
                  by = iy;
                  bx = ix;
                }
              }
            }
            din.at(i, by, bx, ch) += dout.at(i, oy, ox, ch);
          }
  }

  static void pool_backward_avg(const Tensor& dout, const Tensor& in,
                                const Layer& l, Tensor& din) {
    const ConvGeom g = same_geom(in.h, in.w, l.kh, l.kw, l.sh, l.sw);
    for (int i = 0; i < in.n; ++i)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox)
          for (int ch = 0; ch < in.c; ++ch) {
            int count = 0;
            for (int ky = 0; ky < l.kh; ++ky) {
              const int iy = oy * g.sh - g.pad_top + ky;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < l.kw; ++kx) {
                const int ix = ox * g.sw - g.pad_left + kx;
                if (ix < 0 || ix >= in.w) continue;
                ++count;
              }
            }
            const double share = dout.at(i, oy, ox, ch) / count;
            for (int ky = 0; ky < l.kh; ++ky) {
              const int iy = oy * g.sh - g.pad_top + ky;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < l.kw; ++kx) {
                const int ix = ox * g.sw - g.pad_left + kx;
                if (ix < 0 || ix >= in.w) continue;
                din.at(i, iy, ix, ch) += share;
              }
            }
          }
  }

  Tensor bn_forward(const Tensor& in, const Layer& l, const LayerTensors& wt,
                    bool train_phase, Tape& tape, std::size_t li,
                    WeightStore* bn_sink) const {
    const int channels = in.c;
    const std::size_t m =
        static_cast<std::size_t>(in.n) * in.h * in.w;
    Tensor out = in;
    if (!train_phase) {
      for (int ch = 0; ch < channels; ++ch) {
        const double scale =
            wt.gamma.v[ch] / std::sqrt(wt.run_var.v[ch] + kBnEpsilon);
        const double shift = wt.beta.v[ch] - scale * wt.run_mean.v[ch];
        for (std::size_t k = ch; k < in.size();
             k += static_cast<std::size_t>(channels))
          out.v[k] = in.v[k] * scale + shift;
      }
      return out;
    }
    std::vector<double> mean(channels, 0.0), var(channels, 0.0);
    for (std::size_t k = 0; k < in.size(); ++k) mean[k % channels] += in.v[k];
    for (double& v : mean) v /= static_cast<double>(m);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const double dlt = in.v[k] - mean[k % channels];
      var[k % channels] += dlt * dlt;
    }
    for (double& v : var) v /= static_cast<double>(m);
    for (int ch = 0; ch < channels; ++ch) {
      const double inv = 1.0 / std::sqrt(var[ch] + kBnEpsilon);
      for (std::size_t k = ch; k < in.size();
           k += static_cast<std::size_t>(channels))
        out.v[k] = (in.v[k] - mean[ch]) * inv * wt.gamma.v[ch] +
                   wt.beta.v[ch];
    }
    tape.bn_mean[li] = mean;
    tape.bn_var[li] = var;
    if (bn_sink != nullptr) {
      LayerTensors& t = bn_sink->at.at(l.name);
      for (int ch = 0; ch < channels; ++ch) {
        t.run_mean.v[ch] =
            kBnMomentum * t.run_mean.v[ch] + (1.0 - kBnMomentum) * mean[ch];
        t.run_var.v[ch] =
            kBnMomentum * t.run_var.v[ch] + (1.0 - kBnMomentum) * var[ch];
      }
    }
    return out;
  }

  void bn_backward(const Tensor& dout, const Tape& tape, std::size_t li,
                   const LayerTensors& wt, Tensor& din,
                   LayerTensors& gr) const {
    const Layer& l = graph_.layers[li];
    const std::size_t in = static_cast<std::size_t>(l.inputs[0]);
    const Tensor& x = tape.act[in];
    const int channels = x.c;
    const double m = static_cast<double>(x.size()) / channels;
    const std::vector<double>& mean = tape.bn_mean[li];
    const std::vector<double>& var = tape.bn_var[li];
    if (mean.empty())
      throw ShapeError("batch-norm backward requires a training-mode tape");
    ensure_like(gr.gamma, wt.gamma);
    ensure_like(gr.beta, wt.beta);

    std::vector<double> dgamma(channels, 0.0), dbeta(channels, 0.0);
    std::vector<double> sum_dxhat(channels, 0.0), sum_dxhat_xc(channels, 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const int ch = static_cast<int>(k % channels);
      const double inv = 1.0 / std::sqrt(var[ch] + kBnEpsilon);
      const double xc = x.v[k] - mean[ch];
      const double dxhat = dout.v[k] * wt.gamma.v[ch];
      dgamma[ch] += dout.v[k] * xc * inv;
      dbeta[ch] += dout.v[k];
      sum_dxhat[ch] += dxhat;
      sum_dxhat_xc[ch] += dxhat * xc;
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      const int ch = static_cast<int>(k % channels);
      const double inv = 1.0 / std::sqrt(var[ch] + kBnEpsilon);
      const double xc = x.v[k] - mean[ch];
      const double dxhat = dout.v[k] * wt.gamma.v[ch];
      // d/dx of batch normalization through the batch statistics
      din.v[k] += inv * (dxhat - sum_dxhat[ch] / m -
                         xc * inv * inv * sum_dxhat_xc[ch] / m);
    }
    for (int ch = 0; ch < channels; ++ch) {
      gr.gamma.v[ch] += dgamma[ch];
      gr.beta.v[ch] += dbeta[ch];
    }
  }

  static void adam_tensor(Tensor& w, const Tensor& g, Tensor& m, Tensor& v,
                          double lr, int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ensure_like(m, w);
    ensure_like(v, w);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t k = 0; k < w.size(); ++k) {
      m.v[k] = b1 * m.v[k] + (1.0 - b1) * g.v[k];
      v.v[k] = b2 * v.v[k] + (1.0 - b2) * g.v[k] * g.v[k];
      w.v[k] -= lr * (m.v[k] / c1) / (std::sqrt(v.v[k] / c2) + eps);
    }
  }

  static void adam_step(WeightStore& store, const GradMap& grads,
                        AdamState& adam, double lr) {
    ++adam.t;
    for (const auto& [name, g] : grads) {
      LayerTensors& w = store.at.at(name);
      LayerTensors& m = adam.m[name];
      LayerTensors& v = adam.v[name];
      if (g.w.size() > 0) adam_tensor(w.w, g.w, m.w, v.w, lr, adam.t);
      if (g.b.size() > 0) adam_tensor(w.b, g.b, m.b, v.b, lr, adam.t);
      if (g.gamma.size() > 0)
        adam_tensor(w.gamma, g.gamma, m.gamma, v.gamma, lr, adam.t);
      if (g.beta.size() > 0)
        adam_tensor(w.beta, g.beta, m.beta, v.beta, lr, adam.t);
    }
  }

  LayerGraph graph_;
  MultiplierPtr model_;
};

// --- Weight checkpoints -------------------------------------------------------
// Layout: "AXCKPT1 <manifest_bytes>\n", a JSON manifest listing layer order
// and tensor dims, then all values as little-endian 32-bit floats.

namespace detail {

inline const std::array<std::pair<const char*, Tensor LayerTensors::*>, 6>&
tensor_fields() {
  static const std::array<std::pair<const char*, Tensor LayerTensors::*>, 6>
      fields = {{{"w", &LayerTensors::w},
                 {"b", &LayerTensors::b},
                 {"gamma", &LayerTensors::gamma},
                 {"beta", &LayerTensors::beta},
                 {"run_mean", &LayerTensors::run_mean},
                 {"run_var", &LayerTensors::run_var}}};
  return fields;
}

}  // namespace detail

inline void save_checkpoint(const WeightStore& store, const std::string& path) {
  nlohmann::json layers = nlohmann::json::array();
  std::vector<float> data;
  for (const auto& [name, t] : store.at) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [key, member] : detail::tensor_fields()) {
      const Tensor& ten = t.*member;
      if (ten.size() == 0) continue;
      tensors.push_back({{"key", key}, {"dims", {ten.n, ten.h, ten.w, ten.c}}});
      for (double v : ten.v) data.push_back(static_cast<float>(v));
    }
    layers.push_back({{"name", name}, {"tensors", tensors}});
  }
  const std::string manifest = nlohmann::json{{"layers", layers}}.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open checkpoint '" + path + "'");
  f << "AXCKPT1 " << manifest.size() << "\n" << manifest;
  static_assert(sizeof(float) == 4);
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!f) throw FormatError("short write to checkpoint '" + path + "'");
}

inline WeightStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint '" + path + "'");
  std::string header;
  std::getline(f, header);
  if (header.rfind("AXCKPT1 ", 0) != 0)
    throw FormatError("checkpoint '" + path + "': bad header");
  const std::size_t manifest_size = std::stoul(header.substr(8));
  std::string manifest(manifest_size, '\0');
  f.read(manifest.data(), static_cast<std::streamsize>(manifest_size));
  if (!f) throw FormatError("checkpoint '" + path + "': truncated manifest");
  const nlohmann::json doc = nlohmann::json::parse(manifest);

  WeightStore store;
  for (const auto& layer : doc.at("layers")) {
    LayerTensors& t = store.at[layer.at("name")];
    for (const auto& entry : layer.at("tensors")) {
      const auto dims = entry.at("dims");
      Tensor ten(dims[0], dims[1], dims[2], dims[3]);
      std::vector<float> raw(ten.size());
      f.read(reinterpret_cast<char*>(raw.data()),
             static_cast<std::streamsize>(raw.size() * sizeof(float)));
      if (!f) throw FormatError("checkpoint '" + path + "': truncated data");
      for (std::size_t k = 0; k < raw.size(); ++k) ten.v[k] = raw[k];
      const std::string key = entry.at("key");
      for (const auto& [name, member] : detail::tensor_fields()) {
        if (key == name) t.*member = std::move(ten);
      }
    }
  }
  return store;
}

}  // namespace axnas
