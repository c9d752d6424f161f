// Throughput of the compiler, the table engine, the reference evaluator and
// the cost sweep on small fixed networks.

#include <benchmark/benchmark.h>

#include <random>

#include "fixtures.hpp"
#include "lutnet/compiler.hpp"
#include "lutnet/costs.hpp"
#include "lutnet/engine.hpp"
#include "lutnet/oracle.hpp"

using namespace lutnet;

namespace {

NetworkConfig linear_config(std::size_t chunk, BitMode mode) {
  NetworkConfig cfg;
  LayerConfig l;
  l.chunk_size = chunk;
  l.bit_mode = mode;
  l.output_format = parse_format("s16@-8");
  cfg.defaults = l;
  return cfg;
}

BitMode mode_arg(std::int64_t v) { return v == 0 ? BitMode::whole_word : BitMode::bitplane; }

WeightContainer small_cnn() {
  std::mt19937_64 rng(7);
  WeightContainer c;
  c.input_shape = {12, 12, 1};
  LayerRecord pool;
  pool.name = "pool";
  pool.kind = RecordKind::maxpool;
  pool.shape = {2};
  c.layers = {fx::conv_record("conv", 3, 1, 4, rng, "relu"), pool, fx::dense_record("fc", 10, 144, rng),
              fx::argmax_record()};
  c.metadata["input_format"] = "u2@-2";
  c.metadata["input_nonnegative"] = "true";
  return c;
}

NetworkConfig small_cnn_config(std::size_t block) {
  NetworkConfig cfg;
  LayerConfig conv;
  conv.output_format = parse_format("s8@-5");
  conv.block = block;
  LayerConfig fc;
  fc.output_format = parse_format("s12@-6");
  fc.input_format = parse_format("u6@-4");
  cfg.layers = {conv, fc};
  return cfg;
}

void BM_CompileLinear(benchmark::State& state) {
  const WeightContainer w = fx::linear_container();
  const NetworkConfig cfg = linear_config(static_cast<std::size_t>(state.range(0)), mode_arg(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(compile_network(w, cfg));
}
BENCHMARK(BM_CompileLinear)->Args({1, 1})->Args({1, 0})->Args({2, 0})->Args({4, 1})->Unit(benchmark::kMillisecond);

void BM_RunLinear(benchmark::State& state) {
  const WeightContainer w = fx::linear_container();
  const NetworkPlan plan = compile_network(w, linear_config(static_cast<std::size_t>(state.range(0)),
                                                            mode_arg(state.range(1))));
  std::mt19937_64 rng(3);
  const QuantizedTensor x = fx::random_tensor({784}, parse_format("u3@-3"), rng);
  for (auto _ : state) benchmark::DoNotOptimize(run(plan, x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RunLinear)->Args({1, 1})->Args({1, 0})->Args({2, 0})->Args({4, 1})->Args({7, 1});

void BM_OracleLinear(benchmark::State& state) {
  const WeightContainer w = fx::linear_container();
  const QuantSpec spec = QuantSpec::from_config(w, linear_config(1, BitMode::bitplane));
  std::mt19937_64 rng(3);
  const QuantizedTensor x = fx::random_tensor({784}, parse_format("u3@-3"), rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(w, spec, x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_OracleLinear);

void BM_RunConv(benchmark::State& state) {
  const WeightContainer w = small_cnn();
  const NetworkPlan plan = compile_network(w, small_cnn_config(static_cast<std::size_t>(state.range(0))));
  std::mt19937_64 rng(4);
  const QuantizedTensor x = fx::random_tensor({12, 12, 1}, parse_format("u2@-2"), rng);
  for (auto _ : state) benchmark::DoNotOptimize(run(plan, x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RunConv)->Arg(1)->Arg(2)->Arg(3);

void BM_CostSweep(benchmark::State& state) {
  const Architecture arch = builtin_architecture("lenet");
  const SweepGrid grid = default_grid("lenet");
  for (auto _ : state) benchmark::DoNotOptimize(sweep(arch, grid));
}
BENCHMARK(BM_CostSweep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
