// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.
//
//   acceptance [--only 1,2,...] [--data-dir DIR] [--work-dir DIR]
//
// Criteria 5 and 6 need the MNIST and Fashion-MNIST IDX files; when only
// those are selected and the files are missing the binary exits with 77.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cli/cli.hpp"
#include "lutnet/compiler.hpp"
#include "lutnet/costs.hpp"
#include "lutnet/engine.hpp"
#include "lutnet/errors.hpp"
#include "lutnet/modelio.hpp"
#include "lutnet/rounding.hpp"
#include "reference.hpp"

namespace fs = std::filesystem;
using namespace lutnet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Every plan built here is recorded for the multiplier audit.
struct Audit {
  std::set<MicroOp> vocabulary;
  std::size_t plans = 0;
  std::uint64_t runtime_multiplies = 0;

  void add(const LayerPlan& l) {
    const auto v = step_vocabulary(l);
    vocabulary.insert(v.begin(), v.end());
    ++plans;
  }
  void add(const NetworkPlan& p) {
    for (const auto& l : p.layers) add(l);
  }
} audit;

QuantizedTensor tensor(std::vector<std::size_t> shape, const Format& f, std::vector<Code> codes) {
  QuantizedTensor t;
  t.shape = std::move(shape);
  t.format = f;
  t.codes = std::move(codes);
  return t;
}

// ---- 1: dense fixed-point equivalence ---------------------------------------------

Outcome dense_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(0x1a2b3c4d);
  std::size_t layers = 0, configs = 0, cases = 0, mismatches = 0;
  std::set<std::string> modes_seen;
  std::set<bool> signs_seen;
  std::string first_failure;
  for (int n = 0; n < 50; ++n) {
    // Cycle (q, r) so every combination up to 4 x 4 appears; p is random.
    const std::size_t q = 1 + n % 4;
    const unsigned r = 1 + (n / 4) % 4;
    const std::size_t p = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    DenseWeights dw{p, q, ref::dyadic_weights(p * q, rng), n % 3 == 0 ? std::vector<float>{} : ref::dyadic_weights(p, rng)};
    const auto partitions = ref::set_partitions(static_cast<std::uint32_t>(q));
    ++layers;
    for (const bool is_signed : {false, true}) {
      signs_seen.insert(is_signed);
      const int x_scale = std::uniform_int_distribution<int>(-4, 0)(rng);
      const FixedFormat in{r, is_signed, x_scale};
      const ref::Fixed rin{r, is_signed, x_scale};
      const unsigned out_bits = std::uniform_int_distribution<unsigned>(6, 16)(rng);
      const int out_scale = x_scale - ref::kWeightShift + std::uniform_int_distribution<int>(0, 6)(rng);
      const FixedFormat out{out_bits, true, out_scale};
      const ref::Fixed rout{out_bits, true, out_scale};

      // Reference outputs for every input word.
      const std::size_t total = std::size_t{1} << (q * r);
      std::vector<std::vector<Code>> expect(total, std::vector<Code>(p));
      std::vector<std::vector<Code>> inputs(total, std::vector<Code>(q));
      for (std::size_t word = 0; word < total; ++word) {
        std::vector<std::int64_t> xi(q);
        for (std::size_t i = 0; i < q; ++i) {
          inputs[word][i] = static_cast<Code>((word >> (i * r)) & ((1u << r) - 1));
          xi[i] = rin.decode(inputs[word][i]);
        }
        const auto acc = ref::dense_exact(dw.weights, dw.bias, p, q, xi, x_scale);
        for (std::size_t j = 0; j < p; ++j) expect[word][j] = rout.round(acc[j], x_scale - ref::kWeightShift);
      }

      std::vector<std::pair<BitMode, unsigned>> modes = {{BitMode::whole_word, 1}, {BitMode::bitplane, 1}};
      if (!is_signed && r == 4) modes.push_back({BitMode::bitplane_group, 2});
      for (const auto& chunks : partitions)
        for (const auto& [mode, group] : modes) {
          PartitionConfig pc{chunks, mode, group, in, false};
          const LayerPlan plan = compile_dense(dw, pc, out);
          audit.add(plan);
          modes_seen.insert(to_string(mode));
          ++configs;
          OpTally tally;
          for (std::size_t word = 0; word < total; ++word) {
            const auto y = run_layer(plan, tensor({q}, in, inputs[word]), &tally);
            ++cases;
            if (y.codes != expect[word]) {
              if (mismatches++ == 0)
                first_failure = fmt("layer %d (p=%zu q=%zu r=%u %s, %s) input word %zu", n, p, q, r,
                                    is_signed ? "signed" : "unsigned", to_string(mode).c_str(), word);
            }
          }
          audit.runtime_multiplies += tally.multiplies;
        }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && secs < 60.0 && signs_seen.size() == 2 && modes_seen.size() >= 2;
  o.detail = fmt("%zu layers, %zu partition/mode configs, %zu inputs, %zu mismatches, %.1f s", layers, configs, cases,
                 mismatches, secs);
  if (!first_failure.empty()) o.detail += "; first mismatch: " + first_failure;
  return o;
}

// ---- 2: binary16 bitplane vs whole-word ----------------------------------------------

/// Round-to-nearest-even into binary16, saturating at the largest finite value.
std::uint16_t half_from_double(double v) {
  const std::uint16_t sign = std::signbit(v) ? 0x8000 : 0;
  v = std::fabs(v);
  if (v == 0) return sign;
  int e = 0;
  std::frexp(v, &e);
  e -= 1;  // v in [2^e, 2^(e+1))
  if (e < -14) {
    const double m = std::nearbyint(std::ldexp(v, 24));
    return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(m));  // 1024 lands on the smallest normal
  }
  double m = std::nearbyint(std::ldexp(v, 10 - e));
  if (m == 2048) {
    m = 1024;
    ++e;
  }
  if (e > 15) return sign | ref::kHalfMaxNormal;
  return static_cast<std::uint16_t>(sign | ((e + 15) << 10) | (static_cast<int>(m) - 1024));
}

Outcome float_recombination() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(0x5eedf00d);
  const std::size_t p = 3, q = 4;
  DenseWeights dw{p, q, ref::dyadic_weights(p * q, rng), ref::dyadic_weights(p, rng)};
  const Format half = FloatFormat::binary16();
  auto plan_for = [&](BitMode mode) {
    PartitionConfig pc = PartitionConfig::uniform(q, 1, mode, half);
    pc.nonnegative_input = true;
    return compile_dense(dw, pc, half);
  };
  const LayerPlan bitplane = plan_for(BitMode::bitplane);
  const LayerPlan whole = plan_for(BitMode::whole_word);
  audit.add(bitplane);
  audit.add(whole);

  std::vector<std::vector<Code>> inputs;
  const std::vector<Code> edges = {0, ref::kHalfMinSubnormal, ref::kHalfMaxNormal};
  for (std::size_t combo = 0; combo < 81; ++combo) {
    std::vector<Code> x(q);
    for (std::size_t i = 0, c = combo; i < q; ++i, c /= 3) x[i] = edges[c % 3];
    inputs.push_back(x);
  }
  const std::size_t edge_count = inputs.size();
  std::uniform_int_distribution<Code> code(0, ref::kHalfMaxNormal);
  for (std::size_t s = 0; s < 1'000'000; ++s) inputs.push_back({code(rng), code(rng), code(rng), code(rng)});

  std::size_t plan_mismatch = 0, ref_mismatch = 0;
  OpTally tally;
  for (const auto& x : inputs) {
    const auto t = tensor({q}, half, x);
    const auto a = run_layer(bitplane, t, &tally);
    const auto b = run_layer(whole, t, &tally);
    if (a.codes != b.codes) ++plan_mismatch;
    // Independent check: these sums are exact in double (at most 50 significant bits).
    for (std::size_t j = 0; j < p; ++j) {
      double acc = dw.bias[j];
      for (std::size_t i = 0; i < q; ++i)
        acc += static_cast<double>(dw.weights[j * q + i]) * ref::half_to_double(static_cast<std::uint16_t>(x[i]));
      if (a.codes[j] != half_from_double(acc)) {
        ++ref_mismatch;
        break;
      }
    }
  }
  audit.runtime_multiplies += tally.multiplies;
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = plan_mismatch == 0 && ref_mismatch == 0 && secs < 60.0;
  o.detail = fmt("%zu random + %zu edge vectors, bitplane/whole-word mismatches %zu, reference mismatches %zu, %.1f s",
                 inputs.size() - edge_count, edge_count, plan_mismatch, ref_mismatch, secs);
  return o;
}

// ---- 3: conv equivalence --------------------------------------------------------------

Outcome conv_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(0xc0ffee);
  std::size_t images = 0, mismatches = 0, plans = 0;
  std::string first_failure;
  std::string per_case;
  for (const std::size_t radius : {1, 2}) {
    for (const std::size_t m : {1, 2, 4}) {
      std::size_t case_images = 0;
      // Four geometries of 250 images each; the first is the full 8 x 8.
      for (int g = 0; g < 4; ++g) {
        std::uniform_int_distribution<std::size_t> side(1, 8), chans(1, 3);
        const std::size_t H = g == 0 ? 8 : side(rng), W = g == 0 ? 8 : side(rng);
        const std::size_t cin = chans(rng), cout = chans(rng);
        const std::size_t K = 2 * radius + 1;
        ConvWeights cw{radius, cin, cout, ref::dyadic_weights(K * K * cin * cout, rng), ref::dyadic_weights(cout, rng)};
        const int x_scale = -2;
        const FixedFormat in{2, false, x_scale};
        const FixedFormat out{16, true, x_scale - ref::kWeightShift + 2};
        const ref::Fixed rout{16, true, out.scale};
        const BitMode mode = (m <= 2 && g % 2 == 1) ? BitMode::whole_word : BitMode::bitplane;
        ConvConfig cc{H, W, m, mode, 1, in, true};
        const LayerPlan plan = compile_conv2d(cw, cc, out);
        audit.add(plan);
        ++plans;
        OpTally tally;
        std::uniform_int_distribution<Code> pix(0, 3);
        for (int s = 0; s < 250; ++s) {
          std::vector<Code> codes(H * W * cin);
          std::vector<std::int64_t> xi(codes.size());
          for (std::size_t i = 0; i < codes.size(); ++i) xi[i] = codes[i] = pix(rng);
          const auto y = run_layer(plan, tensor({H, W, cin}, in, codes), &tally);
          const auto acc = ref::conv_exact(cw.kernel, cw.bias, radius, cin, cout, H, W, xi, x_scale);
          bool same = y.codes.size() == acc.size();
          for (std::size_t i = 0; same && i < acc.size(); ++i)
            same = y.codes[i] == rout.round(acc[i], x_scale - ref::kWeightShift);
          if (!same && mismatches++ == 0)
            first_failure = fmt("%zux%zu kernel, m=%zu, %zux%zux%zu->%zu, image %d", K, K, m, H, W, cin, cout, s);
          ++images;
          ++case_images;
        }
        audit.runtime_multiplies += tally.multiplies;
      }
      per_case += fmt("%s%zux%zu/m=%zu:%zu", per_case.empty() ? "" : " ", 2 * radius + 1, 2 * radius + 1, m, case_images);
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mismatches == 0 && secs < 120.0;
  o.detail = fmt("%zu images over %zu plans (%s), %zu mismatches, %.1f s", images, plans, per_case.c_str(), mismatches,
                 secs);
  if (!first_failure.empty()) o.detail += "; first mismatch: " + first_failure;
  return o;
}

// ---- 4: cost model numbers --------------------------------------------------------------

Outcome cost_numbers() {
  const auto t0 = Clock::now();
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const double kib = 8.0 * 1024, mib = kib * 1024, gib = mib * 1024;

  const Format u3 = parse_format("u3@-3");
  DenseCostConfig per_pixel{std::vector<std::size_t>(784, 1), BitMode::bitplane, 1, true};
  const CostReport linear = cost_dense(10, 784, u3, 16, per_pixel);
  check(linear.reference_macs == 7840, "linear MACs " + std::to_string(linear.reference_macs));
  check(linear.input_bits == 2352, "input bits " + std::to_string(linear.input_bits));
  check(linear.total_lut_bits == 250880, "784-chunk bits " + to_string(linear.total_lut_bits));
  check(std::fabs(static_cast<double>(linear.total_lut_bits) / (30.6 * kib) - 1) <= 0.01, "784-chunk size vs 30.6 KiB");

  DenseCostConfig chunk14{std::vector<std::size_t>(56, 14), BitMode::bitplane, 1, true};
  const CostReport c56 = cost_dense(10, 784, u3, 16, chunk14);
  check(static_cast<double>(c56.total_lut_bits) == 17.5 * mib, "56-chunk size " + format_bits(c56.total_lut_bits));
  check(c56.lut_evals == 168, "56-chunk evals " + std::to_string(c56.lut_evals));
  check(c56.shift_adds_c1 == 1650, "56-chunk C1 adds " + std::to_string(c56.shift_adds_c1));

  const SweepPoint mlp = cost_network(builtin_architecture("mlp"), 1, BitMode::whole_word, 1);
  check(mlp.total.reference_macs == 1'332'224, "MLP MACs " + std::to_string(mlp.total.reference_macs));
  check(mlp.total.shift_adds_c1 == 1'330'678, "MLP additions " + std::to_string(mlp.total.shift_adds_c1));
  check(mlp.total.logical_table_count == 2320, "MLP tables " + std::to_string(mlp.total.logical_table_count));
  const double mlp_gib = static_cast<double>(mlp.total.total_lut_bits) / gib;
  check(std::fabs(mlp_gib / 32.7 - 1) <= 0.02, fmt("MLP whole-word size %.2f GiB", mlp_gib));

  bool rounder_ok = true;
  for (const std::size_t R : {16, 64, 256})
    for (const auto& [bi, bo] : std::vector<std::pair<unsigned, unsigned>>{{8, 4}, {6, 3}, {10, 5}}) {
      const FixedFormat in{bi, false, -static_cast<int>(bi)}, out{bo, false, -static_cast<int>(bo) + 1};
      const RoundingTable table(in, out, xorshift_sequence(R, kDefaultRounderSeed));
      const UWide expect = static_cast<UWide>(R) * (UWide{1} << bi) * bo;
      rounder_ok = rounder_ok && table.size_bits() == expect && cost_stochastic_rounder(R, bi, bo) == expect;
    }
  check(rounder_ok, "rounder size");

  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failed.empty() && secs < 5.0;
  o.detail = fmt("linear %s (%llu bits, %llu MACs, %llu input bits); 56x14 %s, %llu evals, %llu C1; MLP %llu MACs, %llu adds, "
                 "%llu tables, %s; %.2f s",
                 format_bits(linear.total_lut_bits).c_str(), static_cast<unsigned long long>(linear.total_lut_bits),
                 static_cast<unsigned long long>(linear.reference_macs),
                 static_cast<unsigned long long>(linear.input_bits), format_bits(c56.total_lut_bits).c_str(),
                 static_cast<unsigned long long>(c56.lut_evals), static_cast<unsigned long long>(c56.shift_adds_c1),
                 static_cast<unsigned long long>(mlp.total.reference_macs),
                 static_cast<unsigned long long>(mlp.total.shift_adds_c1),
                 static_cast<unsigned long long>(mlp.total.logical_table_count),
                 format_bits(mlp.total.total_lut_bits).c_str(), secs);
  for (const auto& f : failed) o.detail += "; wrong: " + f;
  return o;
}

// ---- 5 and 6: trained classifiers ----------------------------------------------------------

struct Cli {
  int code = 0;
  std::string out, err;
};

Cli cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Cli r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::map<std::string, std::string>> parse_csv(const std::string& text) {
  std::vector<std::map<std::string, std::string>> rows;
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::string cur;
    for (const char c : s) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    return f;
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (header.empty()) {
      header = split(line);
      continue;
    }
    const auto f = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < f.size(); ++i) row[header[i]] = f[i];
    rows.push_back(row);
  }
  return rows;
}

struct Trained {
  bool ok = false;
  std::string error;
  double plan_accuracy = 0, oracle_accuracy = 0, agreement = 0;
  double seconds = 0;
};

std::map<std::tuple<std::string, unsigned, bool>, Trained> trained;

// `salvage` keeps the complete records of truncated data files; used only for
// diagnostics, never to decide a criterion.
const Trained& train_and_eval(const std::string& dataset, unsigned bits, const fs::path& data_dir,
                              const fs::path& work, bool salvage = false) {
  const auto key = std::make_tuple(dataset, bits, salvage);
  if (auto it = trained.find(key); it != trained.end()) return it->second;
  Trained t;
  const auto t0 = Clock::now();
  const fs::path weights =
      work / (dataset + "-" + std::to_string(bits) + "bit" + (salvage ? "-salvaged" : "") + ".lnw");
  std::vector<std::string> train_args = {"train", "--dataset", dataset, "--bits", std::to_string(bits),
                                         "--episodes", "50000", "--minibatch", "100", "--seed", "1",
                                         "--out", weights.string(), "--data-dir", data_dir.string()};
  if (salvage) train_args.push_back("--salvage-truncated");
  const Cli tr = cli_run(train_args);
  if (tr.code != 0) {
    t.error = "train exited " + std::to_string(tr.code) + ": " + tr.err;
  } else {
    std::vector<std::string> eval_args = {"eval", "--weights", weights.string(), "--dataset", dataset, "--via",
                                          "both", "--seed", "0", "--data-dir", data_dir.string()};
    if (salvage) eval_args.push_back("--salvage-truncated");
    const Cli ev = cli_run(eval_args);
    if (ev.code != 0) {
      t.error = "eval exited " + std::to_string(ev.code) + ": " + ev.err;
    } else {
      for (const auto& row : parse_csv(ev.out)) {
        if (row.at("label") != "0") continue;
        (row.at("via") == "plan" ? t.plan_accuracy : t.oracle_accuracy) = std::stod(row.at("accuracy"));
        t.agreement = std::stod(row.at("agreement"));
      }
      // Record the compiled plan for the audit.
      audit.add(compile_network(load_container(weights), NetworkConfig{}));
      t.ok = true;
    }
  }
  t.seconds = seconds_since(t0);
  return trained[key] = t;
}

bool datasets_present(const fs::path& root) {
  for (const char* name : {"mnist", "fashion"})
    for (const char* file : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                             "t10k-labels-idx1-ubyte"})
      if (!fs::exists(root / name / file)) return false;
  return true;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string describe(const char* name, const Trained& t) {
  if (!t.ok) return fmt("%s failed (%s)", name, trim(t.error).c_str());
  return fmt("%s %.2f%% (oracle %.2f%%, agreement %.4f, %.0f s)", name, 100 * t.plan_accuracy, 100 * t.oracle_accuracy,
             t.agreement, t.seconds);
}

Outcome end_to_end(const fs::path& data_dir, const fs::path& work) {
  const auto t0 = Clock::now();
  const Trained& mnist = train_and_eval("mnist", 3, data_dir, work);
  const Trained& fashion = train_and_eval("fashion", 3, data_dir, work);
  const double secs = seconds_since(t0);
  const auto good = [](const Trained& t, double floor) {
    return t.ok && t.plan_accuracy >= floor && t.agreement == 1.0 && t.plan_accuracy == t.oracle_accuracy;
  };
  Outcome o;
  o.pass = good(mnist, 0.900) && good(fashion, 0.780) && secs < 15 * 60;
  o.detail = describe("MNIST", mnist) + ", " + describe("Fashion-MNIST", fashion) + fmt(", %.0f s", secs);
  if (!fashion.ok) {
    // Diagnostic only: what the strict run would have seen without the damaged records.
    const Trained& salvaged = train_and_eval("fashion", 3, data_dir, work, true);
    o.detail += "; diagnostic on complete records only: " + describe("Fashion-MNIST", salvaged);
  }
  return o;
}

Outcome bit_sensitivity(const fs::path& data_dir, const fs::path& work) {
  const auto t0 = Clock::now();
  std::map<unsigned, double> acc;
  for (const unsigned bits : {1u, 3u, 8u}) {
    const Trained& t = train_and_eval("mnist", bits, data_dir, work);
    if (!t.ok) return {false, t.error};
    acc[bits] = t.plan_accuracy;
  }
  Outcome o;
  o.pass = acc[1] < acc[3] && acc[3] >= acc[8] - 0.005;
  o.detail = fmt("MNIST accuracy 1 bit %.2f%%, 3 bits %.2f%%, 8 bits %.2f%%, %.0f s (3-bit run shared)", 100 * acc[1],
                 100 * acc[3], 100 * acc[8], seconds_since(t0));
  return o;
}

// ---- 7: stochastic rounding -----------------------------------------------------------------

Outcome stochastic_rounding() {
  const auto t0 = Clock::now();
  const FixedFormat in{8, false, -8};
  const FixedFormat out{5, false, -4};  // range [0, 2) so the upper neighbour always exists
  const std::size_t R = kDefaultRounderLength;
  const RoundingTable table(in, out, xorshift_sequence(R, kDefaultRounderSeed));
  const double eps = std::ldexp(1.0, out.scale);
  const std::int64_t ratio = std::int64_t{1} << (out.scale - in.scale);

  // Bracketing and fixed points, every code at every counter position.
  std::size_t outside = 0, moved = 0;
  StochasticRounder unit(table);
  for (Code x = 0; x < 256; ++x) {
    const std::int64_t lower = static_cast<std::int64_t>(x) / ratio;
    for (std::size_t i = 0; i < R; ++i) {
      const std::int64_t y = unit.round(x);
      if (y != lower && y != lower + 1) ++outside;
      if (static_cast<std::int64_t>(x) % ratio == 0 && y != lower) ++moved;
    }
  }

  // The engine's rounding layer must reproduce the unit call for call.
  const LayerPlan layer = compile_round(table, {1});
  audit.add(layer);
  StochasticRounder a(table, 5), b(table, 5);
  std::size_t engine_diff = 0;
  for (Code x = 0; x < 256; ++x) {
    const auto y = run_layer(layer, tensor({1}, in, {x}), nullptr, &a);
    if (y.codes[0] != b.round(x)) ++engine_diff;
  }

  // Bias over one full counter cycle for 1000 random inputs.
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<Code> code(0, 255);
  double sum_abs = 0, worst = 0, sum = 0;
  for (int s = 0; s < 1000; ++s) {
    const Code x = code(rng);
    StochasticRounder u(table, static_cast<std::uint64_t>(s));
    double total = 0;
    for (std::size_t i = 0; i < R; ++i) total += static_cast<double>(u.round(x)) * eps;
    const double bias = total / static_cast<double>(R) - std::ldexp(static_cast<double>(x), in.scale);
    sum_abs += std::fabs(bias);
    sum += bias;
    worst = std::max(worst, std::fabs(bias));
  }
  const double mean_abs = sum_abs / 1000, bound = 2 * eps / std::sqrt(static_cast<double>(R));
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = outside == 0 && moved == 0 && engine_diff == 0 && mean_abs <= bound && secs < 10.0;
  o.detail = fmt("R=%zu eps=2^%d: %zu outputs off the bracket, %zu on-grid inputs moved, engine diffs %zu; "
                 "mean |bias| %.4f eps (mean bias %.4f eps, worst %.4f eps) vs bound %.4f eps; %.2f s",
                 R, out.scale, outside, moved, engine_diff, mean_abs / eps, sum / 1000 / eps, worst / eps, bound / eps,
                 secs);
  return o;
}

// ---- 8: multiplier-free audit ----------------------------------------------------------------

/// Plans of every other layer kind, so the audit covers them even when run alone.
void compile_audit_suite() {
  std::mt19937_64 rng(8);
  DenseWeights dw{4, 6, ref::dyadic_weights(24, rng), ref::dyadic_weights(4, rng)};
  const FixedFormat s4{4, true, -2};
  audit.add(compile_dense(dw, PartitionConfig::uniform(6, 2, BitMode::bitplane, s4), FixedFormat{16, true, -8}));
  audit.add(compile_dense(dw, PartitionConfig::uniform(6, 3, BitMode::whole_word, s4), FloatFormat::binary16()));
  const Format half = FloatFormat::binary16();
  audit.add(compile_dense(dw, PartitionConfig::uniform(6, 1, BitMode::bitplane, half), half));
  ConvWeights cw{1, 2, 2, ref::dyadic_weights(36, rng), ref::dyadic_weights(2, rng)};
  audit.add(compile_conv2d(cw, ConvConfig{6, 6, 2, BitMode::bitplane, 1, s4, false}, FixedFormat{16, true, -6}));
  audit.add(compile_activation(ActivationKind::relu, "relu", half, half, {8}));
  audit.add(compile_activation(ActivationKind::table, "sigmoid", FixedFormat{6, true, -3}, FixedFormat{8, false, -8}, {8}));
  audit.add(compile_pool({4, 4, 2}, 2, half));
  audit.add(compile_argmax({10}, half));

  // A small network through the full compiler, with a stochastic requantizer.
  WeightContainer c;
  c.input_shape = {6, 6, 1};
  c.layers.push_back({"conv", RecordKind::conv2d, {3, 3, 1, 2}, ref::dyadic_weights(18, rng), ref::dyadic_weights(2, rng), "relu", ""});
  c.layers.push_back({"pool", RecordKind::maxpool, {2}, {}, {}, "none", ""});
  c.layers.push_back({"fc", RecordKind::dense, {3, 18}, ref::dyadic_weights(54, rng), ref::dyadic_weights(3, rng), "none", ""});
  c.layers.push_back({"argmax", RecordKind::argmax, {}, {}, {}, "none", ""});
  NetworkConfig cfg;
  cfg.input_format = parse_format("u4@-4");
  LayerConfig first;
  first.output_format = parse_format("s12@-6");
  LayerConfig second;
  second.input_format = parse_format("s6@-2");
  second.output_format = half;
  second.rounding_length = 64;
  cfg.layers = {first, second};
  const NetworkPlan net = compile_network(c, cfg);
  audit.add(net);
  OpTally tally;
  std::vector<Code> img(36);
  for (auto& v : img) v = static_cast<Code>(rng() % 16);
  run(net, tensor({6, 6, 1}, net.input_format, img), 0, &tally);
  audit.runtime_multiplies += tally.multiplies;
}

Outcome multiplier_audit() {
  compile_audit_suite();
  const std::set<MicroOp> allowed = {MicroOp::lookup, MicroOp::shift, MicroOp::add, MicroOp::subtract,
                                     MicroOp::compare, MicroOp::select};
  std::string vocab;
  bool only_allowed = true;
  for (const auto op : audit.vocabulary) {
    vocab += (vocab.empty() ? "" : " ") + to_string(op);
    only_allowed = only_allowed && allowed.count(op) == 1;
  }
  Outcome o;
  o.pass = only_allowed && audit.runtime_multiplies == 0 && audit.plans > 0;
  o.detail = fmt("%zu layer plans audited, vocabulary {%s}, multiplies executed %llu", audit.plans, vocab.c_str(),
                 static_cast<unsigned long long>(audit.runtime_multiplies));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path data_dir, work = fs::temp_directory_path() / "lutnet-acceptance";
  if (const char* env = std::getenv("LUTNET_DATA_DIR"); env != nullptr) data_dir = env;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--data-dir" && i + 1 < argc) {
      data_dir = argv[++i];
    } else if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--data-dir DIR] [--work-dir DIR]\n";
      return 1;
    }
  }
  fs::create_directories(work);
  const bool have_data = !data_dir.empty() && datasets_present(data_dir);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
    bool needs_data;
  };
  const std::vector<Criterion> criteria = {
      {1, "dense fixed-point equivalence (exhaustive)", dense_equivalence, false},
      {2, "binary16 bitplane recombination", float_recombination, false},
      {3, "conv equivalence", conv_equivalence, false},
      {4, "cost model numbers", cost_numbers, false},
      {5, "end-to-end linear classifier", [&] { return end_to_end(data_dir, work); }, true},
      {6, "input bit-width sensitivity", [&] { return bit_sensitivity(data_dir, work); }, true},
      {7, "stochastic rounding", stochastic_rounding, false},
      {8, "multiplier-free audit", multiplier_audit, false},
  };

  bool all = true, ran_any = false;
  for (const auto& c : criteria) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    Outcome o;
    if (c.needs_data && !have_data) {
      o = {false, "datasets not found (set LUTNET_DATA_DIR or pass --data-dir)"};
    } else {
      ran_any = true;
      try {
        o = c.fn();
      } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
      }
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  if (!ran_any && !have_data) return 77;
  return all ? 0 : 1;
}
