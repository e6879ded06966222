#include "axnas/layer_graph.hpp"

#include <gtest/gtest.h>

#include "axnas/rng.hpp"

using namespace axnas;

namespace {

Coord kNode{1, 0};

// Second-pass shape oracle, independent of the builder's bookkeeping.
TensorShape rederive_shape(const Layer& l, const std::vector<Layer>& all) {
  auto in = [&](int i) { return all[static_cast<std::size_t>(i)].out_shape; };
  auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
  switch (l.kind) {
    case LayerKind::Input:
      return l.out_shape;
    case LayerKind::Conv: {
      const TensorShape s = in(l.inputs[0]);
      return {ceil_div(s.h, l.sh), ceil_div(s.w, l.sw), l.units};
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: {
      const TensorShape s = in(l.inputs[0]);
      return {ceil_div(s.h, l.sh), ceil_div(s.w, l.sw), s.c};
    }
    case LayerKind::Relu:
    case LayerKind::BatchNorm:
    case LayerKind::Softmax:
    case LayerKind::Add:
      return in(l.inputs[0]);
    case LayerKind::ChannelPad: {
      const TensorShape s = in(l.inputs[0]);
      return {s.h, s.w, l.units};
    }
    case LayerKind::Flatten: {
      const TensorShape s = in(l.inputs[0]);
      return {1, 1, s.h * s.w * s.c};
    }
    case LayerKind::Dense:
      return {1, 1, l.units};
    case LayerKind::Concat: {
      int c = 0;
      for (int i : l.inputs) c += in(i).c;
      const TensorShape s = in(l.inputs[0]);
      return {s.h, s.w, c};
    }
  }
  return {};
}

}  // namespace

TEST(SumShape, PaperFormulaExamples) {
  EXPECT_EQ(sum_output_shape({32, 32, 16}, {32, 32, 16}),
            (TensorShape{32, 32, 16}));
  EXPECT_EQ(sum_output_shape({32, 32, 16}, {16, 16, 32}),
            (TensorShape{16, 16, 32}));
  EXPECT_EQ(sum_output_shape({8, 16, 4}, {16, 8, 8}), (TensorShape{8, 8, 8}));
}

TEST(SumShape, ExhaustiveMinMinMaxAndCommutative) {
  for (int h1 = 1; h1 <= 8; ++h1)
    for (int w1 = 1; w1 <= 8; ++w1)
      for (int c1 = 1; c1 <= 8; ++c1)
        for (int h2 = 1; h2 <= 8; ++h2)
          for (int w2 = 1; w2 <= 8; ++w2)
            for (int c2 = 1; c2 <= 8; ++c2) {
              const TensorShape a{h1, w1, c1}, b{h2, w2, c2};
              const TensorShape got = sum_output_shape(a, b);
              ASSERT_EQ(got.h, std::min(h1, h2));
              ASSERT_EQ(got.w, std::min(w1, w2));
              ASSERT_EQ(got.c, std::max(c1, c2));
              ASSERT_EQ(got, sum_output_shape(b, a));
            }
}

TEST(Builder, SamePaddingConvAndPoolShapes) {
  LayerGraphBuilder b({32, 32, 3});
  const int conv = b.add_conv(kNode, "c", b.input_index(), 3, 1, 16);
  EXPECT_EQ(b.layer(conv).out_shape, (TensorShape{32, 32, 16}));
  const int pool =
      b.add_pool(LayerKind::MaxPool, kNode, b.input_index(), 2, 2, 2, 2);
  EXPECT_EQ(b.layer(pool).out_shape, (TensorShape{16, 16, 3}));
  const int strided = b.add_conv(kNode, "c2", b.input_index(), 5, 2, 8);
  EXPECT_EQ(b.layer(strided).out_shape, (TensorShape{16, 16, 8}));
}

TEST(Builder, ConvCountsClosedForm) {
  LayerGraphBuilder b({32, 32, 3});
  const int conv = b.add_conv(kNode, "c", b.input_index(), 3, 1, 16);
  EXPECT_EQ(b.layer(conv).params, 3 * 3 * 3 * 16 + 16);  // 448
  EXPECT_EQ(b.layer(conv).mults, 32LL * 32 * 9 * 3 * 16);  // 442368
}

TEST(Builder, DenseCountsAndNoMults) {
  LayerGraphBuilder b({1, 1, 128});
  const int fc = b.add_dense(kNode, "fc", b.input_index(), 10);
  EXPECT_EQ(b.layer(fc).params, 128 * 10 + 10);  // 1290
  EXPECT_EQ(b.layer(fc).mults, 0);
}

TEST(Inception, ChannelSumAndSpatialPreserved) {
  LayerGraphBuilder b({16, 16, 32});
  const InceptionParams p{8, 8, 8, 4, 4, 4};
  const int out = b.lower_inception(kNode, p, b.input_index());
  EXPECT_EQ(b.layer(out).out_shape, (TensorShape{16, 16, 8 + 8 + 8 + 4}));
}

TEST(Inception, MultCountMatchesPerConvOracle) {
  const TensorShape in{16, 16, 32};
  LayerGraphBuilder b(in);
  const InceptionParams p{8, 16, 32, 4, 8, 16};
  const int out = b.lower_inception(kNode, p, b.input_index());
  // Six convolutions: two 1x1 reductions feeding 5x5 and 3x3, a plain 1x1,
  // and the post-pool 1x1; all stride-1 same-padding at 16x16.
  const std::int64_t hw = 16 * 16;
  const std::int64_t expect = hw * 1 * 1 * 32 * p.r1 + hw * 5 * 5 * p.r1 * p.c1 +
                              hw * 1 * 1 * 32 * p.r2 + hw * 3 * 3 * p.r2 * p.c2 +
                              hw * 1 * 1 * 32 * p.c3 + hw * 1 * 1 * 32 * p.r3;
  std::int64_t got = 0;
  for (int i = b.input_index() + 1; i <= out; ++i) got += b.layer(i).mults;
  EXPECT_EQ(got, expect);
}

TEST(Residual, StrideArithmeticAndEqualAddShapes) {
  LayerGraphBuilder b1({16, 16, 32});
  const int o1 = b1.lower_residual(kNode, {3, 3, 1, 32}, b1.input_index());
  EXPECT_EQ(b1.layer(o1).out_shape, (TensorShape{16, 16, 32}));

  LayerGraphBuilder b2({32, 32, 16});
  const int o2 = b2.lower_residual(kNode, {3, 5, 2, 32}, b2.input_index());
  EXPECT_EQ(b2.layer(o2).out_shape, (TensorShape{16, 16, 32}));
  for (const Layer& l : b2.layers()) {
    if (l.kind == LayerKind::Add) {
      EXPECT_EQ(b2.layer(l.inputs[0]).out_shape,
                b2.layer(l.inputs[1]).out_shape);
    }
  }
}

TEST(Bottleneck, ChannelTraceAndSpatial) {
  LayerGraphBuilder b({16, 16, 64});
  const int out = b.lower_bottleneck(kNode, {3, 1, 32, 8}, b.input_index());
  EXPECT_EQ(b.layer(out).out_shape, (TensorShape{16, 16, 32}));
  // Main path channel trace 64 -> 8 -> 8 -> 32.
  std::vector<int> conv_channels;
  for (const Layer& l : b.layers())
    if (l.kind == LayerKind::Conv && l.name.find("/convS") == std::string::npos)
      conv_channels.push_back(l.units);
  ASSERT_EQ(conv_channels.size(), 3u);
  EXPECT_EQ(conv_channels[0], 8);
  EXPECT_EQ(conv_channels[1], 8);
  EXPECT_EQ(conv_channels[2], 32);
}

TEST(Bottleneck, OutputChannelsIndependentOfInput) {
  for (int cin : {8, 24, 64}) {
    LayerGraphBuilder b({8, 8, cin});
    const int out = b.lower_bottleneck(kNode, {3, 1, 16, 8}, b.input_index());
    EXPECT_EQ(b.layer(out).out_shape.c, 16);
  }
}

TEST(ModuleLowering, PureAcrossInvocations) {
  const ResidualParams p{5, 3, 2, 16};
  LayerGraphBuilder a({12, 12, 8}), b({12, 12, 8});
  a.lower_residual(kNode, p, a.input_index());
  b.lower_residual(kNode, p, b.input_index());
  ASSERT_EQ(a.layers().size(), b.layers().size());
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    EXPECT_EQ(a.layers()[i].kind, b.layers()[i].kind);
    EXPECT_EQ(a.layers()[i].out_shape, b.layers()[i].out_shape);
    EXPECT_EQ(a.layers()[i].params, b.layers()[i].params);
  }
}

TEST(Sum, InsertsPoolingAndChannelPad) {
  LayerGraphBuilder b({32, 32, 16});
  const int small = b.add_conv(kNode, "c", b.input_index(), 3, 2, 32);
  // input (32,32,16) + conv out (16,16,32): pool the input, pad its channels.
  const int sum = b.lower_sum(kNode, b.input_index(), small);
  EXPECT_EQ(b.layer(sum).out_shape, (TensorShape{16, 16, 32}));
  bool saw_pool = false, saw_pad = false;
  for (const Layer& l : b.layers()) {
    saw_pool = saw_pool || (l.kind == LayerKind::MaxPool && l.kh == 2);
    saw_pad = saw_pad || l.kind == LayerKind::ChannelPad;
  }
  EXPECT_TRUE(saw_pool);
  EXPECT_TRUE(saw_pad);
}

TEST(Sum, NonIntegralRatioIsACompileError) {
  // (7,7) vs (4,4): ratio 7/4 is not integral.
  LayerGraphBuilder b({7, 7, 4});
  const int strided = b.add_conv(Coord{3, 1}, "c", b.input_index(), 3, 2, 4);
  ASSERT_EQ(b.layer(strided).out_shape, (TensorShape{4, 4, 4}));
  try {
    b.lower_sum(Coord{3, 1}, b.input_index(), strided);
    FAIL() << "expected CompileError";
  } catch (const CompileError& e) {
    EXPECT_EQ(e.node(), (Coord{3, 1}));
    EXPECT_NE(std::string(e.what()).find("node (3,1)"), std::string::npos);
  }
}

TEST(Compile, ThreeNodeGenotypeMatchesHandLowering) {
  Genotype g;
  g.rows = 1;
  g.cols = 2;
  g.lback = 2;
  g.grid.resize(2);
  g.at({1, 0}) = {NodeKind::Conv, ConvParams{16, 3, 1}, {{0, 0}}};
  g.at({2, 0}) = {NodeKind::Fc, FcParams{64}, {{1, 0}}};
  g.output_gene = {2, 0};

  const LayerGraph lg = compile(extract_active(g), {32, 32, 3}, 10);
  // Hand lowering: input, conv, relu, flatten, dense(10), softmax.
  ASSERT_EQ(lg.layers.size(), 6u);
  EXPECT_EQ(lg.layers[0].kind, LayerKind::Input);
  EXPECT_EQ(lg.layers[1].kind, LayerKind::Conv);
  EXPECT_EQ(lg.layers[2].kind, LayerKind::Relu);
  EXPECT_EQ(lg.layers[3].kind, LayerKind::Flatten);
  EXPECT_EQ(lg.layers[4].kind, LayerKind::Dense);
  EXPECT_EQ(lg.layers[5].kind, LayerKind::Softmax);
  // Terminal FC ignores its template width and emits class probabilities.
  EXPECT_EQ(lg.layers[4].units, 10);
  EXPECT_EQ(lg.layers[lg.output_layer].out_shape, (TensorShape{1, 1, 10}));
  EXPECT_EQ(count_mults(lg), 32LL * 32 * 9 * 3 * 16);
  EXPECT_EQ(count_params(lg),
            (3LL * 3 * 3 * 16 + 16) + (32LL * 32 * 16 * 10 + 10));
}

TEST(Compile, InputDirectToFcHasNoMults) {
  Genotype g;
  g.rows = 1;
  g.cols = 1;
  g.lback = 1;
  g.grid.resize(1);
  g.at({1, 0}) = {NodeKind::Fc, FcParams{10}, {{0, 0}}};
  g.output_gene = {1, 0};
  const LayerGraph lg = compile(extract_active(g), {8, 8, 1}, 10);
  EXPECT_EQ(count_mults(lg), 0);
}

TEST(Compile, RandomGenotypesSoundOrLocatedError) {
  TemplateSpec spec;
  spec.rows = 4;
  spec.cols = 10;
  spec.lback = 4;
  Template tmpl;
  Rng rng(18);
  int compiled = 0, failed = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    if (trial % 100 == 0) {
      Rng trng(static_cast<std::uint64_t>(trial) + 17);
      tmpl = materialize_template(spec, 10, trng);
    }
    const Genotype g = seed_from_template(tmpl, 9, std::nullopt, rng);
    try {
      const LayerGraph lg = compile(extract_active(g), {14, 14, 3}, 10);
      ++compiled;
      std::int64_t mult_sum = 0;
      for (const Layer& l : lg.layers) {
        ASSERT_EQ(l.out_shape, rederive_shape(l, lg.layers));
        ASSERT_GE(l.out_shape.h, 1);
        ASSERT_GE(l.out_shape.w, 1);
        ASSERT_GE(l.out_shape.c, 1);
        mult_sum += l.mults;
      }
      ASSERT_EQ(mult_sum, count_mults(lg));  // additivity
    } catch (const CompileError& e) {
      ++failed;
      ASSERT_GE(e.node().col, 1);
      ASSERT_LE(e.node().col, spec.cols);
    }
  }
  EXPECT_GT(compiled, 0);
  EXPECT_GT(failed, 0);  // 14x14 inputs produce non-integral pooling ratios
}

TEST(PrettyPrint, OneLinePerLayer) {
  LayerGraphBuilder b({8, 8, 1});
  const int conv = b.add_conv(kNode, "n1x0/conv", b.input_index(), 3, 1, 4);
  const int relu = b.add_relu(kNode, conv);
  const int dense = b.add_dense(kNode, "n2x0/fc", relu, 10);
  const int sm = b.add_softmax(kNode, dense);
  const LayerGraph g = b.take({8, 8, 1}, 10, sm);
  const std::string text = pretty_print(g);
  // input, conv, relu, flatten, dense, softmax, totals line
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_NE(text.find("conv n1x0/conv 3x3/1 f=4"), std::string::npos);
  EXPECT_NE(text.find("total params="), std::string::npos);
}
