// Microbenchmarks for the analysis passes and the simulator core.

#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "scratchshare/normalize.hpp"
#include "scratchshare/parse.hpp"
#include "scratchshare/relssp.hpp"
#include "scratchshare/sim.hpp"

namespace ss = scratchshare;

namespace {

// Chain of diamonds with loop latches: m blocks, n variables round-robined
// over the arms.
std::string synthetic_kernel(int diamonds, int vars) {
  std::ostringstream os;
  for (int v = 0; v < vars; ++v) os << ".shared V" << v << " 4\n";
  os << "Entry:\n  add r1, r1, r1\n  bra D0\n";
  for (int d = 0; d < diamonds; ++d) {
    std::string next = d + 1 == diamonds ? "Exit" : "D" + std::to_string(d + 1);
    os << "D" << d << ":\n  bra.cond r2, L" << d << ", R" << d << "\n";
    os << "L" << d << ": @loopdepth 1\n  st.shared V" << (d % vars) << "[0], r1\n  bra J" << d
       << "\n";
    os << "R" << d << ":\n  ld.shared r3, V" << ((d + 1) % vars) << "[0]\n  bra J" << d << "\n";
    os << "J" << d << ":\n  bra.cond r4, D" << d << ", " << next << "\n";
  }
  os << "Exit:\n  exit\n";
  return os.str();
}

void bench_parse(benchmark::State& state) {
  std::string text = synthetic_kernel(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(ss::parse_kernel(text));
  state.SetBytesProcessed(static_cast<int64_t>(text.size()) * state.iterations());
}

void bench_access_facts(benchmark::State& state) {
  ss::KernelCFG cfg =
      ss::normalize(ss::parse_kernel(synthetic_kernel(static_cast<int>(state.range(0)), 8)));
  for (auto _ : state) benchmark::DoNotOptimize(ss::compute_access_facts(cfg));
  state.counters["blocks"] = static_cast<double>(cfg.blocks.size());
}

void bench_select_shared_set(benchmark::State& state) {
  int vars = static_cast<int>(state.range(0));
  ss::KernelCFG cfg = ss::normalize(ss::parse_kernel(synthetic_kernel(12, vars)));
  ss::AccessFacts facts = ss::compute_access_facts(cfg);
  ss::SharingConfig scfg = ss::SharingConfig::make(
      1 << 20, cfg.scratchpad_demand(), ss::Fraction{static_cast<uint64_t>(vars) / 2,
                                                     static_cast<uint64_t>(vars)});
  for (auto _ : state) benchmark::DoNotOptimize(ss::select_shared_set(cfg, facts, scfg));
}

void bench_place_opt(benchmark::State& state) {
  ss::KernelCFG cfg = ss::parse_kernel(synthetic_kernel(static_cast<int>(state.range(0)), 4));
  ss::AccessFacts facts = ss::compute_access_facts(cfg);
  ss::SharingConfig scfg = ss::SharingConfig::make(1 << 20, cfg.scratchpad_demand(),
                                                   ss::Fraction{1, 2});
  ss::SharingPlan plan = ss::select_shared_set(cfg, facts, scfg);
  for (auto _ : state) benchmark::DoNotOptimize(ss::place_relssp(cfg, plan, ss::Placement::Opt));
}

void bench_simulator(benchmark::State& state) {
  ss::KernelCFG cfg = ss::parse_kernel(synthetic_kernel(6, 4));
  ss::SharingConfig scfg =
      ss::SharingConfig::make(16384, cfg.scratchpad_demand(), ss::Fraction{1, 2});
  ss::SharingPlan layout = ss::layout_declaration_order(cfg, scfg);

  ss::HardwareConfig hw;
  hw.schedulers_per_sm = 4;
  ss::BlockPlan plan;
  plan.pairs = 2;
  plan.unshared = 2;
  plan.default_count = 4;
  plan.r_tb = scfg.block_demand_bytes;
  plan.boundary_bytes = scfg.boundary_bytes;

  ss::SimOptions opt;
  opt.policy = ss::Policy::Owf;
  opt.kernel_blocks = 32;
  opt.block_size = 128;
  opt.branches.taken_prob = 0.3;
  opt.seed = 7;

  uint64_t cycles = 0;
  for (auto _ : state) {
    ss::SimResult r = ss::run_kernel(cfg, layout, plan, hw, ss::LatencyModel{}, opt);
    cycles += r.cycles;
    benchmark::DoNotOptimize(r);
  }
  state.counters["cycles/s"] =
      benchmark::Counter(static_cast<double>(cycles), benchmark::Counter::kIsRate);
}

}  // namespace

BENCHMARK(bench_parse)->Arg(8)->Arg(64);
BENCHMARK(bench_access_facts)->Arg(16)->Arg(64);
BENCHMARK(bench_select_shared_set)->Arg(8)->Arg(12);
BENCHMARK(bench_place_opt)->Arg(16)->Arg(64);
BENCHMARK(bench_simulator);

BENCHMARK_MAIN();
