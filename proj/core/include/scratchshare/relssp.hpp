#pragma once
// Placement of the shared-scratchpad release instruction: the backward
// safety analysis with its two insertion equations, plus the post-dominator
// and end-of-kernel baselines.

#include "scratchshare/alloc.hpp"

namespace scratchshare {

struct SafetyFacts {
  std::vector<uint8_t> safe_in;   // relssp may sit at IN(BB)
  std::vector<uint8_t> safe_out;  // relssp may sit at OUT(BB)
  std::vector<uint8_t> ins_in;    // insertion flags from the two equations
  std::vector<uint8_t> ins_out;
  bool any_shared_access = false;
};

// Greatest fixed point of the backward-AND system. An access counts as
// shared when it touches a variable of the plan's shared set.
SafetyFacts compute_safety(const KernelCFG& cfg, const SharingPlan& plan);

enum class Placement : uint8_t { Opt, Postdom, Exit, None };
Placement placement_from_name(const std::string& name);
const char* placement_name(Placement p);

struct Insertion {
  std::string block;
  bool at_in = false;  // false: at OUT, i.e. just before the terminator
};

struct PlacementResult {
  KernelCFG cfg;
  std::vector<Insertion> insertions;
};

// Optimal insertion. Requires a normalized CFG and facts computed on it;
// verifies the exactly-once/safety contract on bounded walks afterwards.
PlacementResult insert_relssp(const KernelCFG& cfg, const SafetyFacts& facts);

// Baseline: one relssp at the nearest common post-dominator of the shared
// access blocks that also dominates Exit and sits on no cycle.
PlacementResult place_at_postdominator(const KernelCFG& cfg, const SharingPlan& plan);

// Baseline: release at the end of the kernel.
PlacementResult place_at_exit(const KernelCFG& cfg);

// Strategy dispatcher; Opt normalizes the CFG itself.
PlacementResult place_relssp(const KernelCFG& cfg, const SharingPlan& plan, Placement strategy);

}  // namespace scratchshare
