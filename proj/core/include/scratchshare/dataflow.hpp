#pragma once
// Access-range analysis: forward/backward bit-vector fixed points giving,
// per block and variable, whether an access exists before/after the block
// boundaries, plus the derived access range of a variable set and its
// weighted instruction count.

#include "scratchshare/ir.hpp"

#include <utility>

namespace scratchshare {

using VarMask = uint64_t;  // bit i = cfg.vars[i]

VarMask var_bit(int index);
VarMask mask_of(const KernelCFG& cfg, const std::vector<std::string>& ids);

struct AccessFacts {
  int num_vars = 0;
  std::vector<VarMask> access;  // variables accessed inside each block
  std::vector<VarMask> pre_in, pre_out;    // access on some entry->point path
  std::vector<VarMask> post_in, post_out;  // access on some point->exit path
  int forward_sweeps = 0;  // round-robin sweeps to reach each fixed point
  int backward_sweeps = 0;
};

AccessFacts compute_access_facts(const KernelCFG& cfg);

struct SetAccessRange {
  VarMask set = 0;
  std::vector<bool> acc_in;   // IN(BB) lies in the access range of the set
  std::vector<bool> acc_out;  // OUT(BB) likewise
  std::vector<bool> in_range; // counting rule: acc_in | acc_out | own access
  uint64_t weighted_count = 0;
};

// weight(BB) = loop_weight ^ loop_depth(BB), saturating.
uint64_t block_weight(int loop_depth, uint64_t loop_weight);

SetAccessRange access_range_of_set(const KernelCFG& cfg, const AccessFacts& facts, VarMask set,
                                   uint64_t loop_weight = 10);

// Debug table over non-synthetic blocks: one row per block, t/f cells for
// AccIN/AccOUT of every single variable and of each requested set.
std::string access_table(const KernelCFG& cfg, const AccessFacts& facts,
                         const std::vector<std::pair<std::string, VarMask>>& sets);

}  // namespace scratchshare
