// Acceptance suite: one pass/fail line per criterion. Run with no arguments
// for the full gate or with a criterion number (1..8) for a single check.

#include <chrono>
#include <cstring>
#include <iostream>
#include <map>
#include <sstream>

#include "scratchshare/normalize.hpp"
#include "scratchshare/parse.hpp"
#include "scratchshare/report.hpp"
#include "test_support.hpp"

using namespace scratchshare;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

template <typename T, typename U>
void expect_eq(const T& got, const U& want, const std::string& what) {
  if (!(got == static_cast<T>(want))) {
    std::ostringstream os;
    os << what << ": got " << got << ", want " << want;
    throw Failure(os.str());
  }
}

// ---- criterion 1: the 8x12 access-range golden table ----

const char* kGoldenTable =
    "block|in:A|in:B|in:C|out:A|out:B|out:C|in:AB|in:BC|in:CA|out:AB|out:BC|out:CA\n"
    "Entry|f|f|f|f|f|f|f|f|f|f|f|f\n"
    "BB1|f|f|f|t|f|f|f|f|f|t|f|t\n"
    "BB2|t|t|f|t|t|f|t|t|t|t|t|t\n"
    "BB3|t|t|f|t|t|f|t|t|t|t|t|t\n"
    "BB4|t|f|f|f|f|f|t|t|t|f|t|t\n"
    "BB5|f|f|f|f|f|t|f|t|t|f|t|t\n"
    "BB6|f|f|t|f|f|f|f|t|t|f|f|f\n"
    "Exit|f|f|f|f|f|f|f|f|f|f|f|f\n";

void criterion_access_table() {
  KernelCFG cfg = normalize(parse_kernel_file(support::fixture("accessrange.ir")));
  AccessFacts facts = compute_access_facts(cfg);
  std::vector<std::pair<std::string, VarMask>> sets = {
      {"AB", mask_of(cfg, {"A", "B"})},
      {"BC", mask_of(cfg, {"B", "C"})},
      {"CA", mask_of(cfg, {"C", "A"})},
  };
  std::string table = access_table(cfg, facts, sets);
  if (table != kGoldenTable) {
    // pin down the first differing cell for the failure message
    std::istringstream got(table), want(kGoldenTable);
    std::string g, w;
    int line = 0;
    while (std::getline(got, g) && std::getline(want, w)) {
      ++line;
      if (g != w) throw Failure("table row " + std::to_string(line) + ": got '" + g +
                                "', want '" + w + "'");
    }
    throw Failure("table shape mismatch");
  }
  // 8 blocks x 12 boolean columns
  expect_eq(std::count(table.begin(), table.end(), '\n'), 9, "row count (header + 8 blocks)");
}

// ---- criterion 2: the warp-scheduling micro-trace ----

std::map<int64_t, uint64_t> microtrace_finishes(Policy policy) {
  KernelCFG cfg;
  cfg.vars.push_back({"V", 4});
  cfg.blocks.push_back(support::block(
      "entry", {support::add(1, 0, 0), support::ld_shared(2, "V", 0), support::mov(3, 2)}, {}));
  cfg.entry = "entry";
  cfg.exit = "entry";

  SharingPlan layout;
  layout.shared_set = 1;
  layout.var_offset = {0};
  layout.boundary_bytes = 0;
  layout.address_space = 4;

  BlockPlan plan;
  plan.default_count = 2;
  plan.pairs = 1;
  plan.unshared = 1;
  plan.r_tb = 4;
  plan.boundary_bytes = 0;

  HardwareConfig hw;
  hw.num_sms = 1;
  hw.schedulers_per_sm = 1;

  LatencyModel lat;
  lat.ld_shared = 5;

  SimOptions opt;
  opt.policy = policy;
  opt.kernel_blocks = 3;
  opt.block_size = 32;
  opt.pregrant_lock = true;
  opt.check_invariants = true;

  SimResult r = run_kernel(cfg, layout, plan, hw, lat, opt);
  std::map<int64_t, uint64_t> out;
  for (const auto& b : r.blocks) out[b.block_id] = b.finish_cycle;
  return out;
}

void criterion_microtrace() {
  // block 0 = owner, block 1 = unshared, block 2 = non-owner
  auto uwf = microtrace_finishes(Policy::Uwf);
  expect_eq(uwf[2], 15, "UWF non-owner finish cycle");
  auto owf = microtrace_finishes(Policy::Owf);
  expect_eq(owf[1], 9, "OWF unshared finish cycle");
  expect_eq(owf[2], 13, "OWF non-owner finish cycle");
}

// ---- criterion 3: resident-block golden plans ----

void criterion_block_plans() {
  HardwareConfig hw;
  hw.num_sms = 1;
  hw.scratchpad_per_sm = 16384;
  hw.max_blocks_per_sm = 16;
  hw.max_threads_per_sm = 3072;
  auto plan = [&](uint64_t r_tb, int block_size) {
    return compute_block_plan(hw, SharingConfig::make(16384, r_tb, Fraction{1, 10}), block_size);
  };
  BlockPlan dct1 = plan(2112, 64);
  expect_eq(dct1.total(), 14, "R_tb=2112 resident blocks");
  BlockPlan dct3 = plan(2176, 128);
  expect_eq(dct3.total(), 12, "R_tb=2176 resident blocks");
  expect_eq(dct3.pairs, 5, "R_tb=2176 pairs");
  expect_eq(dct3.unshared, 2, "R_tb=2176 unshared blocks");
  BlockPlan backprop = plan(9408, 256);
  expect_eq(backprop.total(), 2, "R_tb=9408 resident blocks");
  BlockPlan fdtd = plan(3840, 128);
  expect_eq(fdtd.total(), 6, "R_tb=3840 resident blocks");
}

// ---- criterion 4: hardware overhead bits ----

void criterion_overhead() { expect_eq(overhead_bits_per_sm(16, 96), 209, "overhead bits per SM"); }

// ---- criterion 5: placement properties over 500 random CFGs ----

void criterion_placement() {
  std::mt19937_64 rng(20260810);
  for (int trial = 0; trial < 500; ++trial) {
    KernelCFG cfg = support::random_cfg(rng, {.min_blocks = 4, .max_blocks = 12, .max_vars = 4});
    int n = static_cast<int>(cfg.vars.size());
    SharingConfig scfg = support::sharing_for(cfg, 1 + static_cast<int>(rng() % n));
    AccessFacts facts = compute_access_facts(cfg);
    SharingPlan plan = select_shared_set(cfg, facts, scfg);

    PlacementResult opt = place_relssp(cfg, plan, Placement::Opt);
    PlacementResult postdom = place_relssp(cfg, plan, Placement::Postdom);

    auto decisions = support::enumerate_decisions(cfg, 2);
    expect(!decisions.empty(), "trial " + std::to_string(trial) + ": no walks enumerated");
    for (const auto& d : decisions) {
      auto o = support::replay_decisions(opt.cfg, plan.shared_set, d);
      auto p = support::replay_decisions(postdom.cfg, plan.shared_set, d);
      expect(o.completed, "trial " + std::to_string(trial) + ": replay did not finish");
      expect_eq(o.relssp_count, 1, "trial " + std::to_string(trial) + ": relssp per path (opt)");
      expect(!o.shared_access_after_relssp,
             "trial " + std::to_string(trial) + ": shared access after relssp (opt)");
      expect_eq(p.relssp_count, 1,
                "trial " + std::to_string(trial) + ": relssp per path (postdom)");
      expect(!p.shared_access_after_relssp,
             "trial " + std::to_string(trial) + ": shared access after relssp (postdom)");
      expect(o.first_relssp_pos <= p.first_relssp_pos,
             "trial " + std::to_string(trial) + ": optimal release later than post-dominator");
    }
  }
}

// ---- criterion 6: fixed points vs oracles, selection vs brute force ----

void criterion_oracles() {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    KernelCFG cfg = support::random_cfg(rng, {.min_blocks = 3, .max_blocks = 10, .max_vars = 8});
    AccessFacts facts = compute_access_facts(cfg);
    auto oracle = support::oracle_access_facts(cfg);
    expect(oracle.pre_in == facts.pre_in && oracle.pre_out == facts.pre_out &&
               oracle.post_in == facts.post_in && oracle.post_out == facts.post_out,
           "trial " + std::to_string(trial) + ": fixed point disagrees with the walk oracle");

    int n = static_cast<int>(cfg.vars.size());
    SharingConfig scfg = support::sharing_for(cfg, 1 + static_cast<int>(rng() % n));
    SharingPlan plan = select_shared_set(cfg, facts, scfg);
    VarMask brute = support::oracle_select(cfg, oracle, scfg, 10);
    expect_eq(plan.shared_set, brute,
              "trial " + std::to_string(trial) + ": subset choice vs 2^n brute force");
    expect(plan.audit.size() == (size_t{1} << n),
           "trial " + std::to_string(trial) + ": selection must visit every subset once");
  }
}

// ---- criterion 7: deadlock freedom under barriers + sharing ----

void criterion_deadlock() {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 1000; ++trial) {
    KernelCFG cfg = support::random_cfg(
        rng, {.min_blocks = 3, .max_blocks = 8, .max_vars = 3, .barriers = true});
    int n = static_cast<int>(cfg.vars.size());
    SharingConfig scfg = support::sharing_for(cfg, 1 + static_cast<int>(rng() % n));
    AccessFacts facts = compute_access_facts(cfg);
    SharingPlan layout = select_shared_set(cfg, facts, scfg);

    HardwareConfig hw;
    hw.num_sms = 1;
    hw.schedulers_per_sm = 1 + static_cast<int>(rng() % 2);

    BlockPlan plan;
    plan.pairs = 1;
    plan.unshared = static_cast<int>(rng() % 2);
    plan.default_count = 1 + plan.unshared;
    plan.r_tb = scfg.block_demand_bytes;
    plan.boundary_bytes = scfg.boundary_bytes;

    LatencyModel lat;
    lat.ld_global = 5 + rng() % 400;

    SimOptions opt;
    opt.policy = Policy::Owf;
    opt.seed = rng();
    opt.kernel_blocks = 1 + static_cast<int>(rng() % 4);   // <= 4 blocks
    opt.block_size = 32 * (1 + static_cast<int>(rng() % 4));  // <= 4 warps each
    opt.branches.taken_prob = 0.4;
    opt.max_cycles = 500000;
    opt.check_invariants = true;  // lock exclusivity + active-block guarantee

    try {
      run_kernel(cfg, layout, plan, hw, lat, opt);
    } catch (const Error& e) {
      throw Failure("trial " + std::to_string(trial) + ": " + e.what());
    }
  }
}

// ---- criterion 8: directional performance ----

void criterion_directional() {
  RunConfig config = default_run_config();
  config.sim.kernel_blocks = 6;
  config.sim.block_size = 32;
  config.sim.branches.mode = BranchModel::Mode::Trips;
  config.sim.branches.trips["warm"] = 8;
  config.sim.branches.trips["cool"] = 8;
  config.sim.check_invariants = true;
  std::string kernel = support::fixture("phased.ir");

  RunReport lrr = run_pipeline(kernel, config, Mode::UnsharedLrr);
  RunReport owf = run_pipeline(kernel, config, Mode::SharedOwf);
  RunReport opt = run_pipeline(kernel, config, Mode::SharedOwfOpt);
  expect(opt.sim.cycles <= owf.sim.cycles,
         "Shared-OWF-OPT cycles (" + std::to_string(opt.sim.cycles) + ") exceed Shared-OWF (" +
             std::to_string(owf.sim.cycles) + ")");
  expect(owf.sim.cycles <= lrr.sim.cycles,
         "Shared-OWF cycles (" + std::to_string(owf.sim.cycles) + ") exceed Unshared-LRR (" +
             std::to_string(lrr.sim.cycles) + ")");
  expect(opt.sim.lock_wait_warp_cycles < owf.sim.lock_wait_warp_cycles,
         "optimal placement must strictly reduce non-owner lock waiting (opt " +
             std::to_string(opt.sim.lock_wait_warp_cycles) + ", none " +
             std::to_string(owf.sim.lock_wait_warp_cycles) + ")");

  RunConfig limits = default_run_config();
  limits.sim.kernel_blocks = 8;
  limits.sim.block_size = 768;  // thread-limited occupancy
  limits.sim.branches.mode = BranchModel::Mode::Trips;
  limits.sim.branches.trips["body"] = 5;
  std::string set3 = support::fixture("set3.ir");
  RunReport base = run_pipeline(set3, limits, Mode::UnsharedLrr);
  RunReport shared = run_pipeline(set3, limits, Mode::SharedNoopt);
  expect_eq(shared.sim.cycles, base.sim.cycles,
            "non-scratchpad-limited kernel must run in identical cycles");
  expect_eq(shared.plan.total(), base.plan.total(),
            "non-scratchpad-limited kernel must keep its resident block count");
}

struct Criterion {
  int id;
  const char* label;
  void (*fn)();
};

const Criterion kCriteria[] = {
    {1, "access-range golden table (8 blocks x 12 columns, exact)", criterion_access_table},
    {2, "scheduler micro-trace (UWF 15; OWF 9 and 13, exact)", criterion_microtrace},
    {3, "resident-block plans (14, 12=5P+2U, 2, 6, exact)", criterion_block_plans},
    {4, "hardware overhead bits (209 per SM, exact)", criterion_overhead},
    {5, "relssp placement properties on 500 random CFGs", criterion_placement},
    {6, "dataflow/selection oracle equivalence", criterion_oracles},
    {7, "deadlock freedom across 1000 seeded simulations", criterion_deadlock},
    {8, "directional performance ordering", criterion_directional},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failures = 0;
  for (const auto& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    auto start = std::chrono::steady_clock::now();
    try {
      c.fn();
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - start)
                    .count();
      std::cout << "PASS  criterion " << c.id << "  " << c.label << "  (" << ms << " ms)\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "FAIL  criterion " << c.id << "  " << c.label << "\n      " << e.what() << "\n";
    }
  }
  return failures;
}
