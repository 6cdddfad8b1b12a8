#include "scratchshare/launch.hpp"

#include <algorithm>
#include <bit>

namespace scratchshare {

int BlockPlan::partner_slot(int slot) const {
  if (slot < pairs) return pairs + unshared + slot;
  if (slot >= pairs + unshared) return slot - (pairs + unshared);
  return -1;
}

int BlockPlan::pair_of(int slot) const {
  if (slot < pairs) return slot;
  if (slot >= pairs + unshared) return slot - (pairs + unshared);
  return -1;
}

namespace {

int baseline_resident_blocks(const HardwareConfig& hw, uint64_t r_tb, int block_size) {
  if (block_size <= 0) throw Error("block size must be positive");
  if (block_size > hw.max_threads_per_sm)
    throw Error("kernel unlaunchable: block size " + std::to_string(block_size) +
                " exceeds max threads per SM");
  if (r_tb > hw.scratchpad_per_sm)
    throw Error("kernel unlaunchable: R_tb " + std::to_string(r_tb) +
                " exceeds scratchpad per SM " + std::to_string(hw.scratchpad_per_sm));
  int by_mem = r_tb == 0 ? hw.max_blocks_per_sm
                         : static_cast<int>(hw.scratchpad_per_sm / r_tb);
  int by_threads = hw.max_threads_per_sm / block_size;
  return std::min({by_mem, hw.max_blocks_per_sm, by_threads});
}

}  // namespace

BlockPlan compute_block_plan(const HardwareConfig& hw, const SharingConfig& sharing,
                             int block_size, bool fill_boundary) {
  const uint64_t r = hw.scratchpad_per_sm;
  const uint64_t r_tb = sharing.block_demand_bytes;
  const uint64_t boundary = sharing.boundary_bytes;
  const int t_cap = hw.max_blocks_per_sm;

  BlockPlan plan;
  plan.r_tb = r_tb;
  plan.boundary_bytes = boundary;
  plan.default_count = baseline_resident_blocks(hw, r_tb, block_size);
  if (plan.default_count < 1) throw Error("kernel unlaunchable: zero resident blocks");

  int best_total = -1, best_p = 0, best_u = 0;
  for (int p = 0; p <= t_cap; ++p) {
    for (int u = 0; u + 2 * p <= t_cap; ++u) {
      int total = 2 * p + u;
      if (p + u < plan.default_count) continue;
      if (static_cast<int64_t>(total) * block_size > hw.max_threads_per_sm) continue;
      uint64_t mem = static_cast<uint64_t>(p) * (r_tb + boundary) + static_cast<uint64_t>(u) * r_tb;
      if (mem > r) continue;
      if (total > best_total || (total == best_total && p > best_p)) {
        best_total = total;
        best_p = p;
        best_u = u;
      }
    }
  }
  if (best_total < 0) throw Error("kernel unlaunchable: no feasible (P,U) split");
  plan.pairs = best_p;
  plan.unshared = best_u;

  if (fill_boundary && plan.pairs > 0) {
    // Spread leftover memory across the pairs' private portions.
    uint64_t used_blocks = static_cast<uint64_t>(plan.pairs + plan.unshared) * r_tb;
    uint64_t widened = (r - used_blocks) / static_cast<uint64_t>(plan.pairs);
    widened = std::min(widened, r_tb == 0 ? 0 : r_tb - 1);
    plan.boundary_bytes = std::max(plan.boundary_bytes, widened);
  }
  return plan;
}

BlockPlan unshared_block_plan(const HardwareConfig& hw, uint64_t r_tb, int block_size) {
  BlockPlan plan;
  plan.r_tb = r_tb;
  plan.boundary_bytes = r_tb;  // every address below R_tb is private
  plan.default_count = baseline_resident_blocks(hw, r_tb, block_size);
  plan.pairs = 0;
  plan.unshared = plan.default_count;
  return plan;
}

LaunchSchedule assign_blocks_to_sms(int64_t kernel_blocks, const BlockPlan& plan,
                                    const HardwareConfig& hw) {
  if (kernel_blocks < 1) throw Error("kernel must launch at least one block");
  const int p = hw.num_sms;
  const int slots = plan.total();

  LaunchSchedule sched;
  sched.initial.assign(p, std::vector<int64_t>(slots, -1));
  // SM i starts with blocks B_i, B_{p+i}, B_{2p+i}, ...: slot j of SM i holds
  // block j*p + i. Everything past the initial wave is dispatched in id
  // order as slots free up.
  for (int j = 0; j < slots; ++j)
    for (int i = 0; i < p; ++i) {
      int64_t id = static_cast<int64_t>(j) * p + i;
      if (id < kernel_blocks) sched.initial[i][j] = id;
    }
  for (int64_t id = static_cast<int64_t>(slots) * p; id < kernel_blocks; ++id)
    sched.pending.push_back(id);
  return sched;
}

uint64_t overhead_bits_per_sm(int max_blocks, int max_warps) {
  if (max_blocks < 1 || max_warps < 1) throw Error("overhead_bits needs T >= 1 and W >= 1");
  auto ceil_log2 = [](uint64_t x) -> uint64_t {
    return x <= 1 ? 0 : static_cast<uint64_t>(std::bit_width(x - 1));
  };
  uint64_t t = static_cast<uint64_t>(max_blocks);
  uint64_t w = static_cast<uint64_t>(max_warps);
  return 1 + t * ceil_log2(t + 1) + w + (t / 2) * ceil_log2(t);
}

uint64_t overhead_bits(const HardwareConfig& hw) {
  return overhead_bits_per_sm(hw.max_blocks_per_sm, hw.max_warps_per_sm()) *
         static_cast<uint64_t>(hw.num_sms);
}

}  // namespace scratchshare
