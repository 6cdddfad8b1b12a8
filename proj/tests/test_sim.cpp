#include <map>

#include "doctest.h"
#include "scratchshare/parse.hpp"
#include "scratchshare/sim.hpp"
#include "test_support.hpp"

using namespace scratchshare;

namespace {

HardwareConfig one_sm(int schedulers = 1) {
  HardwareConfig hw;
  hw.num_sms = 1;
  hw.scratchpad_per_sm = 16384;
  hw.max_blocks_per_sm = 16;
  hw.max_threads_per_sm = 3072;
  hw.schedulers_per_sm = schedulers;
  return hw;
}

// The three-warp scheduling scenario: I1 = add, I2 = load from a shared
// scratchpad address, I3 = mov depending on I2. One unshared block and one
// pair whose original slot starts as the owner; streams end without exit.
struct MicroTrace {
  KernelCFG cfg;
  SharingPlan layout;
  BlockPlan plan;
  LatencyModel lat;
  SimOptions opt;

  MicroTrace(Policy policy) {
    cfg.vars.push_back({"V", 4});
    cfg.blocks.push_back(support::block(
        "entry",
        {support::add(1, 0, 0), support::ld_shared(2, "V", 0), support::mov(3, 2)}, {}));
    cfg.entry = "entry";
    cfg.exit = "entry";

    layout.shared_set = 1;  // V lives in the shared region
    layout.var_offset = {0};
    layout.boundary_bytes = 0;
    layout.address_space = 4;

    plan.default_count = 2;
    plan.pairs = 1;
    plan.unshared = 1;
    plan.r_tb = 4;
    plan.boundary_bytes = 0;

    lat.add = 1;
    lat.mov = 1;
    lat.ld_shared = 5;  // the figure's 5-cycle load

    opt.policy = policy;
    opt.kernel_blocks = 3;
    opt.block_size = 32;
    opt.pregrant_lock = true;  // the scenario starts with an owner
    opt.check_invariants = true;
    opt.record_issues = true;
  }

  std::map<int64_t, uint64_t> finishes() {
    SimResult r = run_kernel(cfg, layout, plan, one_sm(), lat, opt);
    std::map<int64_t, uint64_t> by_block;
    for (const auto& b : r.blocks) by_block[b.block_id] = b.finish_cycle;
    return by_block;
  }
};

}  // namespace

TEST_SUITE("sim") {

// Slot order: B0 = owner (shared original), B1 = unshared, B2 = non-owner.
TEST_CASE("unshared-warp-first finishes the non-owner in cycle 15") {
  MicroTrace scenario(Policy::Uwf);
  auto finish = scenario.finishes();
  CHECK(finish[2] == 15);  // non-owner
  CHECK(finish[0] == 9);   // owner completes I2/I3 in cycles 8 and 9
  CHECK(finish[1] == 7);   // unshared
}

TEST_CASE("owner-warp-first finishes unshared in 9 and non-owner in 13") {
  MicroTrace scenario(Policy::Owf);
  auto finish = scenario.finishes();
  CHECK(finish[1] == 9);   // unshared warp
  CHECK(finish[2] == 13);  // non-owner warp
  CHECK(finish[0] == 7);   // owner drains first
}

TEST_CASE("owner warps outrank older unshared warps") {
  // Once ownership transfers to the additional block (dyn 2), it must issue
  // ahead of the older unshared warp (dyn 1) that has been ready all along.
  KernelCFG cfg = parse_kernel(
      ".shared W 256\n"
      "entry:\n"
      "  st.shared W[128], r1\n"
      "  add r2, r1, r1\n"
      "  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 256, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);

  BlockPlan plan;
  plan.default_count = 2;
  plan.pairs = 1;
  plan.unshared = 1;
  plan.r_tb = 256;
  plan.boundary_bytes = 128;

  SimOptions opt;
  opt.policy = Policy::Owf;
  opt.kernel_blocks = 3;
  opt.block_size = 32;
  opt.record_issues = true;

  LatencyModel lat;
  SimResult r = run_kernel(cfg, layout, plan, one_sm(), lat, opt);
  REQUIRE(r.issues.size() >= 4);
  // The original slot wins the same-cycle FCFS tie and drains while the
  // unshared warp sits at rank 1; on its finish the lock moves to dyn 2,
  // which then beats the older unshared warp.
  CHECK(r.issues[0].dyn_warp == 0);
  CHECK(r.issues[0].op == Opcode::StShared);
  CHECK(r.issues[1].dyn_warp == 0);
  CHECK(r.issues[2].dyn_warp == 0);
  CHECK(r.issues[3].dyn_warp == 2);
  CHECK(r.issues[3].cycle == 4);
  CHECK(r.issues[3].op == Opcode::StShared);
}

TEST_CASE("same-cycle shared requests: lower slot wins, partner retries") {
  KernelCFG cfg = parse_kernel(
      ".shared W 64\nentry:\n  st.shared W[32], r1\n  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 64, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);

  BlockPlan plan;
  plan.default_count = 1;
  plan.pairs = 1;
  plan.unshared = 0;
  plan.r_tb = 64;
  plan.boundary_bytes = 32;

  SimOptions opt;
  opt.policy = Policy::Owf;
  opt.kernel_blocks = 2;
  opt.block_size = 32;
  opt.check_invariants = true;

  SimResult r = run_kernel(cfg, layout, plan, one_sm(), LatencyModel{}, opt);
  std::map<int64_t, BlockTrace> by_block;
  for (const auto& b : r.blocks) by_block[b.block_id] = b;
  CHECK(by_block[0].acquire_cycle == 1);
  CHECK(by_block[1].acquire_cycle > by_block[0].finish_cycle);
  CHECK(r.lock_wait_warp_cycles > 0);
}

TEST_CASE("unshared blocks never touch the lock") {
  KernelCFG cfg = parse_kernel(
      ".shared W 64\nentry:\n  st.shared W[63], r1\n  ld.shared r2, W[0]\n  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 64, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 64, 32);

  SimOptions opt;
  opt.policy = Policy::Lrr;
  opt.kernel_blocks = 4;
  opt.block_size = 32;
  SimResult r = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);
  CHECK(r.lock_wait_warp_cycles == 0);
  CHECK(r.unlock_events == 0);
}

TEST_CASE("release unit: one warp, all threads active") {
  KernelCFG cfg = parse_kernel(
      ".shared W 8\nentry:\n  st.shared W[4], r1\n  relssp\n  add r2, r1, r1\n  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 8, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);

  BlockPlan plan;
  plan.default_count = 1;
  plan.pairs = 1;
  plan.unshared = 0;
  plan.r_tb = 8;
  plan.boundary_bytes = 4;

  SimOptions opt;
  opt.policy = Policy::Owf;
  opt.kernel_blocks = 2;
  opt.block_size = 32;
  opt.record_issues = true;
  SimResult r = run_kernel(cfg, layout, plan, one_sm(), LatencyModel{}, opt);
  CHECK(r.unlock_events == 2);  // one per block residency, at most one each

  // the owner released before finishing, so the partner acquired while the
  // owner was still running its tail
  std::map<int64_t, BlockTrace> by_block;
  for (const auto& b : r.blocks) by_block[b.block_id] = b;
  CHECK(by_block[0].released_by_relssp);
  CHECK(by_block[0].release_cycle < by_block[0].finish_cycle);
  CHECK(by_block[1].acquire_cycle <= by_block[0].finish_cycle);
}

TEST_CASE("release unit: two warps unlock only after the second relssp") {
  KernelCFG cfg = parse_kernel(
      ".shared W 8\nentry:\n  st.shared W[4], r1\n  relssp\n  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 8, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);

  BlockPlan plan;
  plan.default_count = 1;
  plan.pairs = 1;
  plan.unshared = 0;
  plan.r_tb = 8;
  plan.boundary_bytes = 4;

  SimOptions opt;
  opt.policy = Policy::Owf;
  opt.kernel_blocks = 1;
  opt.block_size = 64;  // two warps
  opt.record_issues = true;
  SimResult r = run_kernel(cfg, layout, plan, one_sm(), LatencyModel{}, opt);
  CHECK(r.unlock_events == 1);

  uint64_t second_relssp = 0;
  for (const auto& e : r.issues)
    if (e.op == Opcode::Relssp) second_relssp = e.cycle;
  REQUIRE(!r.blocks.empty());
  CHECK(r.blocks[0].release_cycle == second_relssp);
}

TEST_CASE("release unit honors the active mask") {
  KernelCFG cfg = parse_kernel(
      ".shared W 8\nentry:\n  st.shared W[4], r1\n  relssp\n  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 8, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);

  BlockPlan plan;
  plan.default_count = 1;
  plan.pairs = 1;
  plan.unshared = 0;
  plan.r_tb = 8;
  plan.boundary_bytes = 4;

  SimOptions opt;
  opt.policy = Policy::Owf;
  opt.kernel_blocks = 1;
  opt.block_size = 64;      // two warps wide...
  opt.active_threads = 16;  // ...but only half a warp is live
  SimResult r = run_kernel(cfg, layout, plan, one_sm(), LatencyModel{}, opt);
  CHECK(r.unlock_events == 1);
  CHECK(r.executed_relssp == 16);  // inactive threads contribute nothing
}

TEST_CASE("lrr rotates through always-ready warps") {
  KernelCFG cfg = parse_kernel(
      "entry:\n  add r1, r1, r1\n  add r2, r2, r2\n  add r3, r3, r3\n  exit\n");
  SharingPlan layout;
  layout.address_space = 0;
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 0, 32);
  plan.unshared = 3;  // three resident single-warp blocks

  SimOptions opt;
  opt.policy = Policy::Lrr;
  opt.kernel_blocks = 3;
  opt.block_size = 32;
  opt.record_issues = true;
  SimResult r = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);
  std::vector<int64_t> order;
  for (const auto& e : r.issues) order.push_back(e.dyn_warp);
  std::vector<int64_t> expect = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  REQUIRE(order.size() == expect.size());
  CHECK(order == expect);
}

TEST_CASE("gto sticks with the greedy warp until it stalls") {
  KernelCFG cfg = parse_kernel(
      "entry:\n  add r1, r1, r1\n  ld.global r2, [r1]\n  mov r3, r2\n  exit\n");
  SharingPlan layout;
  layout.address_space = 0;
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 0, 32);
  plan.unshared = 2;

  LatencyModel lat;
  lat.ld_global = 50;
  SimOptions opt;
  opt.policy = Policy::Gto;
  opt.kernel_blocks = 2;
  opt.block_size = 32;
  opt.record_issues = true;
  SimResult r = run_kernel(cfg, layout, plan, hw, lat, opt);
  std::vector<int64_t> order;
  for (const auto& e : r.issues) order.push_back(e.dyn_warp);
  // warp 0 issues add+load, stalls on the load, then the oldest ready (warp 1)
  REQUIRE(order.size() >= 4);
  CHECK(order[0] == 0);
  CHECK(order[1] == 0);
  CHECK(order[2] == 1);
  CHECK(order[3] == 1);
}

TEST_CASE("a single warp runs identically under every policy") {
  KernelCFG cfg = parse_kernel(
      "entry:\n  add r1, r1, r1\n  ld.global r2, [r1]\n  mov r3, r2\n  exit\n");
  SharingPlan layout;
  layout.address_space = 0;
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 0, 32);

  std::vector<uint64_t> cycles;
  for (Policy p : {Policy::Lrr, Policy::Gto, Policy::Owf, Policy::Uwf}) {
    SimOptions opt;
    opt.policy = p;
    opt.kernel_blocks = 1;
    opt.block_size = 32;
    cycles.push_back(run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt).cycles);
  }
  CHECK(cycles[0] == cycles[1]);
  CHECK(cycles[0] == cycles[2]);
  CHECK(cycles[0] == cycles[3]);
}

TEST_CASE("one exit per warp costs one cycle each under a single scheduler") {
  KernelCFG cfg = parse_kernel("entry:\n  exit\n");
  SharingPlan layout;
  layout.address_space = 0;
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 0, 32);
  plan.unshared = 4;

  SimOptions opt;
  opt.policy = Policy::Lrr;
  opt.kernel_blocks = 4;
  opt.block_size = 32;
  SimResult r = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);
  CHECK(r.cycles == 4);
  CHECK(r.issued_warp_instrs == 4);
}

TEST_CASE("conservation: issues add up and cycles split into busy plus stall") {
  KernelCFG cfg = parse_kernel_file(support::fixture("set3.ir"));
  SharingConfig scfg = SharingConfig::make(16384, 64, Fraction{1, 10});
  SharingPlan layout = layout_declaration_order(cfg, scfg);
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 64, 64);

  SimOptions opt;
  opt.policy = Policy::Lrr;
  opt.kernel_blocks = 6;
  opt.block_size = 64;
  opt.branches.mode = BranchModel::Mode::Trips;
  opt.branches.trips["body"] = 4;
  SimResult r = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);

  // every issue carries a full warp of 32 threads here
  CHECK(r.executed_total() == r.issued_warp_instrs * 32);
  CHECK(r.per_sm[0].busy + r.per_sm[0].stall == r.cycles);
  CHECK(r.per_sm[0].idle == 0);
  CHECK(r.stall_cycles == r.per_sm[0].stall);
}

TEST_CASE("identical runs produce identical results") {
  KernelCFG cfg = parse_kernel_file(support::fixture("set3.ir"));
  SharingConfig scfg = SharingConfig::make(16384, 64, Fraction{1, 10});
  SharingPlan layout = layout_declaration_order(cfg, scfg);
  HardwareConfig hw = one_sm(2);
  BlockPlan plan = unshared_block_plan(hw, 64, 64);

  SimOptions opt;
  opt.policy = Policy::Gto;
  opt.kernel_blocks = 9;
  opt.block_size = 64;
  opt.seed = 123;
  opt.branches.taken_prob = 0.7;

  SimResult a = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);
  SimResult b = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);
  CHECK(a.cycles == b.cycles);
  CHECK(a.executed_total() == b.executed_total());
  CHECK(a.stall_cycles == b.stall_cycles);
  CHECK(a.lock_wait_warp_cycles == b.lock_wait_warp_cycles);
}

TEST_CASE("barrier keeps warps together") {
  KernelCFG cfg = parse_kernel(
      "entry:\n  add r1, r1, r1\n  bar.sync\n  add r2, r2, r2\n  exit\n");
  SharingPlan layout;
  layout.address_space = 0;
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 0, 64);

  SimOptions opt;
  opt.policy = Policy::Lrr;
  opt.kernel_blocks = 1;
  opt.block_size = 64;  // two warps
  opt.record_issues = true;
  SimResult r = run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt);

  uint64_t last_bar = 0, first_after = UINT64_MAX;
  for (const auto& e : r.issues) {
    if (e.op == Opcode::BarSync) last_bar = std::max(last_bar, e.cycle);
    if (e.op == Opcode::Add && e.cycle > 2) first_after = std::min(first_after, e.cycle);
  }
  CHECK(first_after > last_bar);
}

TEST_CASE("sharing plus barriers stays deadlock-free on random kernels") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    KernelCFG cfg = support::random_cfg(
        rng, {.min_blocks = 3, .max_blocks = 8, .max_vars = 3, .barriers = true});
    int n = static_cast<int>(cfg.vars.size());
    SharingConfig scfg = support::sharing_for(cfg, 1 + static_cast<int>(rng() % n));
    AccessFacts facts = compute_access_facts(cfg);
    SharingPlan layout = select_shared_set(cfg, facts, scfg);

    HardwareConfig hw = one_sm(1 + static_cast<int>(rng() % 2));
    BlockPlan plan;
    plan.pairs = 1;
    plan.unshared = static_cast<int>(rng() % 2);
    plan.default_count = 1 + plan.unshared;  // active-block guarantee baseline
    plan.r_tb = scfg.block_demand_bytes;
    plan.boundary_bytes = scfg.boundary_bytes;

    LatencyModel lat;
    lat.ld_global = 5 + rng() % 400;  // randomized latency per trial
    SimOptions opt;
    opt.policy = Policy::Owf;
    opt.seed = rng();
    opt.kernel_blocks = 1 + static_cast<int>(rng() % 4);
    opt.block_size = 32 * (1 + static_cast<int>(rng() % 4));
    opt.branches.taken_prob = 0.4;
    opt.max_cycles = 300000;
    opt.check_invariants = true;
    CHECK_NOTHROW(run_kernel(cfg, layout, plan, hw, lat, opt));
  }
}

TEST_CASE("shared pair that never touches the shared region runs fully parallel") {
  KernelCFG cfg = parse_kernel(
      ".shared W 64\nentry:\n  st.shared W[0], r1\n  ld.global r2, [r1]\n  mov r3, r2\n  exit\n");
  SharingConfig scfg = SharingConfig::make(16384, 64, Fraction{1, 2});
  SharingPlan layout = layout_declaration_order(cfg, scfg);  // W[0] is private

  BlockPlan plan;
  plan.default_count = 1;
  plan.pairs = 1;
  plan.unshared = 0;
  plan.r_tb = 64;
  plan.boundary_bytes = 32;

  SimOptions opt;
  opt.policy = Policy::Owf;
  opt.kernel_blocks = 2;
  opt.block_size = 32;
  SimResult r = run_kernel(cfg, layout, plan, one_sm(), LatencyModel{}, opt);
  CHECK(r.lock_wait_warp_cycles == 0);
  CHECK(r.phase_shared == 0);
  CHECK(r.phase_post == 0);
  CHECK(r.phase_pre > 0);  // everything is pre-shared progress
}

TEST_CASE("cycle guard reports the blocked state") {
  KernelCFG cfg = parse_kernel(
      "entry:\n  add r1, r1, r1\n  bra.cond r2, entry2, done\n"
      "entry2:\n  bra entry\n"
      "done:\n  exit\n");
  SharingPlan layout;
  layout.address_space = 0;
  HardwareConfig hw = one_sm();
  BlockPlan plan = unshared_block_plan(hw, 0, 32);

  SimOptions opt;
  opt.policy = Policy::Lrr;
  opt.kernel_blocks = 1;
  opt.block_size = 32;
  opt.branches.taken_prob = 1.0;  // never leaves the loop
  opt.max_cycles = 2000;
  CHECK_THROWS_WITH_AS(run_kernel(cfg, layout, plan, hw, LatencyModel{}, opt),
                       doctest::Contains("cycle guard"), SimError);
}

}  // TEST_SUITE
