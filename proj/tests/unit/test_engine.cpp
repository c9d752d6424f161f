#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "lutnet/compiler.hpp"
#include "lutnet/engine.hpp"
#include "lutnet/errors.hpp"
#include "reference.hpp"

using namespace lutnet;

namespace {

WeightContainer small_cnn(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightContainer c;
  c.input_shape = {6, 6, 1};
  LayerRecord pool;
  pool.name = "pool";
  pool.kind = RecordKind::maxpool;
  pool.shape = {2};
  c.layers = {fx::conv_record("conv", 3, 1, 2, rng, "relu"), pool, fx::dense_record("fc", 4, 18, rng, "sigmoid"),
              fx::argmax_record()};
  c.metadata["input_format"] = "u2@-2";
  c.metadata["input_nonnegative"] = "true";
  return c;
}

NetworkConfig small_cnn_config() {
  NetworkConfig cfg;
  LayerConfig conv;
  conv.output_format = parse_format("s8@-5");
  conv.block = 2;
  LayerConfig fc;
  fc.output_format = parse_format("s8@-4");
  fc.input_format = parse_format("u6@-4");
  fc.rounding_length = 16;
  cfg.layers = {conv, fc};
  return cfg;
}

}  // namespace

TEST(Engine, RunLayerRejectsMismatches) {
  std::mt19937_64 rng(21);
  const DenseWeights dw{2, 3, ref::dyadic_weights(6, rng), {}};
  const Format u3 = parse_format("u3");
  const LayerPlan plan = compile_dense(dw, PartitionConfig::uniform(3, 1, BitMode::bitplane, u3), parse_format("s16"));
  EXPECT_THROW(run_layer(plan, fx::tensor({4}, u3, {0, 0, 0, 0})), RunError);
  EXPECT_THROW(run_layer(plan, fx::tensor({3}, parse_format("u4"), {0, 0, 0})), RunError);
  EXPECT_THROW(run_layer(plan, fx::tensor({3}, u3, {0, 9, 0})), RunError);  // code wider than 3 bits
  EXPECT_NO_THROW(run_layer(plan, fx::tensor({3}, u3, {7, 0, 1})));
}

TEST(Engine, NegativeFloatIntoSignlessTableIsARunError) {
  std::mt19937_64 rng(22);
  const DenseWeights dw{1, 2, ref::dyadic_weights(2, rng), {}};
  const Format h = FloatFormat::binary16();
  PartitionConfig pc = PartitionConfig::uniform(2, 1, BitMode::bitplane, h);
  pc.nonnegative_input = true;
  const LayerPlan plan = compile_dense(dw, pc, h);
  EXPECT_NO_THROW(run_layer(plan, fx::tensor({2}, h, {0x3c00, 0x0000})));
  EXPECT_THROW(run_layer(plan, fx::tensor({2}, h, {0xbc00, 0x0000})), RunError);
  EXPECT_THROW(run_layer(plan, fx::tensor({2}, h, {0x7c00, 0x0000})), RunError);  // +Inf
}

TEST(Engine, ScheduledOpsMatchExecutedOps) {
  const WeightContainer c = small_cnn(23);
  const NetworkPlan plan = compile_network(c, small_cnn_config());
  std::mt19937_64 rng(23);
  const auto x = fx::random_tensor({6, 6, 1}, parse_format("u2@-2"), rng);
  const OpTally measured = count_runtime_ops(plan, x);
  EXPECT_EQ(measured, scheduled_ops(plan));
  EXPECT_EQ(measured.multiplies, 0u);
  EXPECT_GT(measured.lut_evals, 0u);
  EXPECT_GT(measured.compares, 0u);
}

TEST(Engine, VocabularyHasNoMultiply) {
  const NetworkPlan plan = compile_network(small_cnn(24), small_cnn_config());
  const auto v = step_vocabulary(plan);
  EXPECT_TRUE(v.count(MicroOp::lookup));
  EXPECT_TRUE(v.count(MicroOp::add));
  EXPECT_TRUE(v.count(MicroOp::compare));
  for (const auto op : v) EXPECT_NE(to_string(op), "multiply");
  EXPECT_EQ(v.size(), std::set<MicroOp>(v.begin(), v.end()).size());
}

TEST(Engine, PredictedClassBreaksTiesLow) {
  const Format s8 = parse_format("s8");
  EXPECT_EQ(predicted_class(fx::tensor({4}, s8, {3, 7, 7, 1})), 1u);
  EXPECT_EQ(predicted_class(fx::tensor({3}, s8, {0xff, 0xfe, 0xff})), 0u);  // -1, -2, -1
  const Format h = FloatFormat::binary16();
  EXPECT_EQ(predicted_class(fx::tensor({3}, h, {0xbc00, 0x8000, 0x0000})), 1u);  // -1, -0, +0 tie
  EXPECT_THROW(predicted_class(fx::tensor({0}, s8, {})), RunError);
}

TEST(Engine, ZeroInputGivesTheBias) {
  std::mt19937_64 rng(25);
  const DenseWeights dw{3, 5, ref::dyadic_weights(15, rng), ref::dyadic_weights(3, rng)};
  const Format in = parse_format("s4@-2");
  const Format out = parse_format("s16@-8");
  const LayerPlan plan = compile_dense(dw, PartitionConfig::uniform(5, 2, BitMode::bitplane, in), out);
  const auto y = run_layer(plan, fx::tensor({5}, in, std::vector<Code>(5, 0)));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(dequantize(y.codes[j], out), dw.bias[j]);
}

TEST(Engine, AdditiveOverDisjointSupports) {
  // W(a + b) = Wa + Wb when a and b touch different elements and nothing rounds.
  std::mt19937_64 rng(26);
  const std::size_t q = 6;
  const DenseWeights dw{2, q, ref::dyadic_weights(2 * q, rng), {}};
  const Format in = parse_format("u3");
  const Format out = parse_format("s24@-8");
  const LayerPlan plan = compile_dense(dw, PartitionConfig::uniform(q, 2, BitMode::bitplane, in), out);
  const auto fo = std::get<FixedFormat>(out);
  for (int s = 0; s < 100; ++s) {
    auto a = fx::random_tensor({q}, in, rng), b = a, sum = a;
    for (std::size_t i = 0; i < q; ++i) (i % 2 == 0 ? a : b).codes[i] = 0;
    const auto ya = run_layer(plan, a), yb = run_layer(plan, b), ys = run_layer(plan, sum);
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_EQ(fo.integer(ys.codes[j]), fo.integer(ya.codes[j]) + fo.integer(yb.codes[j]));
  }
}

TEST(Engine, ResetMakesRoundingRepeatable) {
  const NetworkPlan plan = compile_network(small_cnn(27), small_cnn_config());
  std::mt19937_64 rng(27);
  const auto x = fx::random_tensor({6, 6, 1}, parse_format("u2@-2"), rng);
  Engine e(plan, 3);
  const auto first = e.run(x);
  e.reset(3);
  EXPECT_EQ(e.run(x).codes, first.codes);
  EXPECT_EQ(run(plan, x, 3).codes, first.codes);
}

TEST(Engine, EvaluationCountsAndErrors) {
  const IdxDataset d = fx::stripe_dataset(20);
  EXPECT_THROW(score_predictions({}, d), RunError);
  const Evaluation ev = score_predictions(std::vector<std::uint32_t>(d.labels.begin(), d.labels.end()), d);
  EXPECT_EQ(ev.correct, 20u);
  EXPECT_DOUBLE_EQ(ev.accuracy(), 1.0);
  EXPECT_EQ(ev.confusion[3][3], 2u);
  IdxDataset empty;
  EXPECT_THROW(evaluate_plan(compile_network(fx::linear_container(), NetworkConfig{}), empty), RunError);
}
