#pragma once
// Occupancy planning: how many shared pairs and unshared blocks fit per SM,
// the round-robin block assignment across SMs, and the hardware bit cost of
// the sharing machinery.

#include "scratchshare/alloc.hpp"

namespace scratchshare {

struct HardwareConfig {
  int num_sms = 1;
  int sms_per_cluster = 1;  // reporting only
  uint64_t scratchpad_per_sm = 16384;
  int max_blocks_per_sm = 16;  // T
  int max_threads_per_sm = 3072;
  int warp_size = 32;
  int schedulers_per_sm = 1;

  int max_warps_per_sm() const { return max_threads_per_sm / warp_size; }  // W
};

// Resident-block layout of one SM. Slot order: the P shared originals, then
// the U unshared blocks, then the P shared additionals; additional slot k is
// paired with original slot k.
struct BlockPlan {
  int default_count = 0;  // baseline (unshared) resident blocks
  int pairs = 0;          // P
  int unshared = 0;       // U
  uint64_t r_tb = 0;
  uint64_t boundary_bytes = 0;  // effective boundary; fill mode may raise it

  int total() const { return 2 * pairs + unshared; }
  bool shared_slot(int slot) const { return slot < pairs || slot >= pairs + unshared; }
  int partner_slot(int slot) const;
  int pair_of(int slot) const;  // -1 for unshared slots
};

// Maximizes 2P+U subject to memory, the per-SM block/thread caps, and the
// active-block guarantee P+U >= default_count; ties prefer more pairs. With
// fill enabled, leftover memory widens each pair's unshared portion.
BlockPlan compute_block_plan(const HardwareConfig& hw, const SharingConfig& sharing,
                             int block_size, bool fill_boundary = false);

// Baseline plan: default_count unshared blocks, nothing paired.
BlockPlan unshared_block_plan(const HardwareConfig& hw, uint64_t r_tb, int block_size);

struct LaunchSchedule {
  std::vector<std::vector<int64_t>> initial;  // [sm][slot] -> block id, -1 if empty
  std::vector<int64_t> pending;               // ascending ids, dispatched to freed slots
};

LaunchSchedule assign_blocks_to_sms(int64_t kernel_blocks, const BlockPlan& plan,
                                    const HardwareConfig& hw);

uint64_t overhead_bits_per_sm(int max_blocks, int max_warps);
uint64_t overhead_bits(const HardwareConfig& hw);

}  // namespace scratchshare
