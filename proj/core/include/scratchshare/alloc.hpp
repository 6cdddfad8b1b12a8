#pragma once
// Scratchpad layout: pick the shared variable set with the smallest weighted
// access range and assign byte offsets so the address test at the
// unshared/shared boundary agrees with set membership.

#include "scratchshare/dataflow.hpp"

namespace scratchshare {

// Exact sharing threshold t in (0,1); parsed from "0.1" or "1/3" style text
// so boundary arithmetic never goes through floating point.
struct Fraction {
  uint64_t num = 1;
  uint64_t den = 10;

  static Fraction parse(const std::string& text);
  uint64_t floor_mul(uint64_t x) const;  // floor(num * x / den)
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

struct SharingConfig {
  uint64_t sm_scratchpad_bytes = 16384;  // R
  uint64_t block_demand_bytes = 0;       // R_tb
  Fraction threshold;                    // t
  uint64_t boundary_bytes = 0;           // floor(t*R_tb); unshared [0,B), shared [B,R_tb)

  static SharingConfig make(uint64_t r, uint64_t r_tb, Fraction t);
  uint64_t unshared_capacity() const { return boundary_bytes; }
  uint64_t shared_capacity() const { return block_demand_bytes - boundary_bytes; }
};

enum class Region : uint8_t { Unshared, Shared };

// Address test of the scratchpad access mechanism; throws on addr >= R_tb.
Region classify_address(uint64_t addr, const SharingConfig& config);

struct SubsetAudit {
  VarMask set = 0;
  bool feasible = false;
  uint64_t weighted_count = 0;
};

struct SharingPlan {
  VarMask shared_set = 0;
  std::vector<uint64_t> var_offset;  // by variable index
  uint64_t boundary_bytes = 0;
  uint64_t address_space = 0;  // per-block byte span (R_tb unless fill-extended)
  uint64_t weighted_count = 0;
  std::vector<SubsetAudit> audit;  // every subset visited by the selection

  bool shared(int var_index) const { return (shared_set >> var_index) & 1; }
  uint64_t resolve(const KernelCFG& cfg, const SharedOperand& mem) const;
};

// Exhaustive subset selection per the dual-capacity feasibility test; the
// chosen set minimizes the weighted count, then size, then sorted ids.
SharingPlan select_shared_set(const KernelCFG& cfg, const AccessFacts& facts,
                              const SharingConfig& config, uint64_t loop_weight = 10);

// No-reorder layout: variables packed in declaration order; the shared set is
// whatever falls entirely above the boundary.
SharingPlan layout_declaration_order(const KernelCFG& cfg, const SharingConfig& config);

std::string plan_json(const KernelCFG& cfg, const SharingPlan& plan);

}  // namespace scratchshare
