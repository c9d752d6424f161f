#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lutnet/compiler.hpp"
#include "lutnet/costs.hpp"
#include "lutnet/engine.hpp"
#include "lutnet/errors.hpp"
#include "lutnet/rounding.hpp"
#include "reference.hpp"

using namespace lutnet;

TEST(Costs, DescribeChunks) {
  EXPECT_EQ(describe_chunks(std::vector<std::size_t>(56, 14)), "56x14");
  EXPECT_EQ(describe_chunks({14, 14, 10}), "2x14+1x10");
  EXPECT_EQ(describe_chunks({784}), "1x784");
}

TEST(Costs, ElementIndexing) {
  const auto u3 = element_indexing(parse_format("u3"), BitMode::bitplane, 1, true);
  EXPECT_EQ(u3.bits_per_element, 1u);
  EXPECT_EQ(u3.passes, 3u);
  const auto s4 = element_indexing(parse_format("s4"), BitMode::whole_word, 1, false);
  EXPECT_EQ(s4.bits_per_element, 3u);
  EXPECT_EQ(s4.passes, 2u);
  const auto h = element_indexing(FloatFormat::binary16(), BitMode::bitplane, 1, true);
  EXPECT_EQ(h.bits_per_element, 6u);  // one mantissa plane plus the 5-bit exponent
  EXPECT_EQ(h.passes, 11u);
  EXPECT_EQ(element_indexing(FloatFormat::binary16(), BitMode::whole_word, 1, false).bits_per_element, 16u);
  EXPECT_THROW(element_indexing(parse_format("u3"), BitMode::bitplane_group, 2, true), CompileError);
}

TEST(Costs, DenseModelMatchesCompiledPlans) {
  std::mt19937_64 rng(41);
  const std::vector<Format> formats = {parse_format("u3@-3"), parse_format("s4@-2"), parse_format("u4"),
                                       FloatFormat::binary16()};
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t p = 1 + rng() % 6, q = 1 + rng() % 9, m = 1 + rng() % 3;
    const Format in = formats[trial % formats.size()];
    const BitMode mode = trial % 3 == 0 ? BitMode::whole_word : BitMode::bitplane;
    if (is_float(in) && mode == BitMode::whole_word && m > 1) continue;  // index too wide to build
    const DenseWeights dw{p, q, ref::dyadic_weights(p * q, rng), ref::dyadic_weights(p, rng)};
    PartitionConfig pc = PartitionConfig::uniform(q, m, mode, in);
    pc.nonnegative_input = true;
    const Format out = parse_format("s16@-12");
    const LayerPlan plan = compile_dense(dw, pc, out);
    const CostReport c = cost_dense(p, q, in, 16, DenseCostConfig{pc.chunk_sizes(), mode, 1, true});
    EXPECT_EQ(c.total_lut_bits, plan.nominal_size_bits()) << trial;
    EXPECT_EQ(c.physical_table_count, plan.bank.physical_count()) << trial;
    EXPECT_EQ(c.logical_table_count, plan.bank.logical_count()) << trial;
    const OpTally ops = scheduled_ops(plan);
    EXPECT_EQ(c.lut_evals, ops.lut_evals) << trial;
    EXPECT_EQ(c.shift_adds_c1, ops.shift_adds_c1) << trial;
    EXPECT_EQ(c.shift_adds_c2, ops.shift_adds_c2) << trial;
  }
}

TEST(Costs, ConvModelMatchesCompiledPlans) {
  std::mt19937_64 rng(42);
  for (const std::size_t block : {1, 2, 3})
    for (const std::size_t r : {1, 2}) {
      const std::size_t K = 2 * r + 1, cin = 2, cout = 3, H = 7, W = 5;
      const ConvWeights cw{r, cin, cout, ref::dyadic_weights(K * K * cin * cout, rng), ref::dyadic_weights(cout, rng)};
      const Format in = parse_format("u2@-2");
      const LayerPlan plan = compile_conv2d(cw, ConvConfig{H, W, block, BitMode::bitplane, 1, in, true},
                                            parse_format("s16@-10"));
      const CostReport c = cost_conv(r, cin, cout, H, W, in, 16, ConvCostConfig{block, BitMode::bitplane, 1, true});
      EXPECT_EQ(c.total_lut_bits, plan.nominal_size_bits());
      const OpTally ops = scheduled_ops(plan);
      EXPECT_EQ(c.lut_evals, ops.lut_evals);
      EXPECT_EQ(c.shift_adds_c1, ops.shift_adds_c1);
      EXPECT_EQ(c.shift_adds_c2, ops.shift_adds_c2);
      EXPECT_EQ(c.reference_macs, H * W * cout * K * K * cin);
    }
}

TEST(Costs, LeNetMacs) {
  // conv1 28x28x32 with 5x5x1 kernels, conv2 14x14x64 with 5x5x32, then 3136x1024 and 1024x10.
  const std::uint64_t expect = 28ull * 28 * 32 * 25 + 14ull * 14 * 64 * 25 * 32 + 3136ull * 1024 + 1024ull * 10;
  const SweepPoint pt = cost_network(builtin_architecture("lenet"), 1, BitMode::bitplane, 1);
  EXPECT_EQ(pt.total.reference_macs, expect);
  EXPECT_EQ(pt.layers.size(), 4u);
  EXPECT_THROW(builtin_architecture("resnet"), CompileError);
}

TEST(Costs, StochasticRounderSize) {
  for (const std::size_t R : {8, 64})
    for (unsigned bi = 4; bi <= 10; bi += 3) {
      const unsigned bo = bi - 2;
      const RoundingTable t(FixedFormat{bi, false, -static_cast<int>(bi)}, FixedFormat{bo, false, 2 - static_cast<int>(bi)},
                            dither_sequence(R));
      EXPECT_EQ(cost_stochastic_rounder(R, bi, bo), t.size_bits());
      EXPECT_EQ(t.size_bits(), UWide{R} * (UWide{1} << bi) * bo);
    }
}

TEST(Costs, SweepIsSortedWithParetoFlags) {
  const auto points = sweep(builtin_architecture("linear"), default_grid("linear"));
  ASSERT_FALSE(points.empty());
  for (std::size_t i = 1; i < points.size(); ++i)
    EXPECT_LE(points[i - 1].total.total_lut_bits, points[i].total.total_lut_bits);
  // Brute-force dominance on (size, C1 adds).
  for (const auto& a : points) {
    bool dominated = false;
    for (const auto& b : points) {
      const bool no_worse = b.total.total_lut_bits <= a.total.total_lut_bits &&
                            b.total.shift_adds_c1 <= a.total.shift_adds_c1;
      const bool better = b.total.total_lut_bits < a.total.total_lut_bits ||
                          b.total.shift_adds_c1 < a.total.shift_adds_c1;
      dominated = dominated || (no_worse && better);
    }
    EXPECT_EQ(a.dominated, dominated) << a.config_id;
  }
  const std::string csv = sweep_csv(points);
  EXPECT_NE(csv.find("30.6 KiB"), std::string::npos);
  EXPECT_NE(csv.find("56x14"), std::string::npos);
  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header,
            "config_id,layer,chunk_sizes,bit_mode,total_lut_bits,lut_evals,shift_adds_c1,shift_adds_c2,reference_macs,"
            "materializable,dominated,total_lut_size");
}

TEST(Costs, RaggedChunksAndBadPartitions) {
  const Format u3 = parse_format("u3");
  const CostReport c = cost_dense(2, 5, u3, 8, DenseCostConfig{{2, 3}, BitMode::whole_word, 1, true});
  EXPECT_EQ(c.total_lut_bits, UWide{(64 + 512) * 2 * 8});
  EXPECT_THROW(cost_dense(2, 5, u3, 8, DenseCostConfig{{2, 2}, BitMode::whole_word, 1, true}), CompileError);
  EXPECT_THROW(cost_dense(2, 5, u3, 8, DenseCostConfig{{5, 0}, BitMode::whole_word, 1, true}), CompileError);
}
