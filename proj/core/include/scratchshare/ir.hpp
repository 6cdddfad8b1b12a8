#pragma once
// Mini-IR for scratchpad kernels: a label-addressed CFG of basic blocks over
// a small PTX-like instruction set, with per-block loop-depth annotations.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scratchshare {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Opcode : uint8_t {
  Add,
  Mov,
  LdGlobal,
  StGlobal,
  LdShared,
  StShared,
  BarSync,
  Bra,
  BraCond,
  Relssp,
  Exit,
};

const char* opcode_name(Opcode op);
bool is_terminator(Opcode op);
bool is_shared_mem(Opcode op);

// Origin of an instruction; drives the user/relssp/goto split in run reports.
enum class InstrTag : uint8_t { User, Relssp, Goto };

struct ScratchpadVar {
  std::string id;
  uint32_t size_bytes = 0;
};

// Scratchpad operand of ld.shared/st.shared: byte addresses are assigned
// later by the allocator, the IR only names (variable, constant offset).
struct SharedOperand {
  std::string var;
  uint32_t offset = 0;
};

struct Instruction {
  Opcode op;
  int dest = -1;  // destination register, -1 if none
  int src0 = -1;  // source registers
  int src1 = -1;
  std::optional<SharedOperand> mem;  // ld.shared / st.shared only
  std::string target0;               // bra target / bra.cond taken target
  std::string target1;               // bra.cond fall-through target
  InstrTag tag = InstrTag::User;
};

struct BasicBlock {
  std::string label;
  int loop_depth = 0;
  bool synthetic = false;  // inserted by normalization ($entry/$exit/$split)
  std::vector<Instruction> instrs;
  std::vector<std::string> succs;  // 0, 1 or 2 successor labels

  const Instruction* terminator() const;
};

struct Diagnostic {
  std::string block;  // offending block label, empty for kernel-wide issues
  std::string message;
};

struct KernelCFG {
  std::vector<ScratchpadVar> vars;
  std::vector<BasicBlock> blocks;  // program order
  std::string entry;
  std::string exit;  // unique EXIT-terminated block; empty if absent/ambiguous

  int block_index(const std::string& label) const;  // -1 if unknown
  int var_index(const std::string& id) const;       // -1 if unknown
  uint64_t scratchpad_demand() const;               // R_tb = sum of var sizes
  std::vector<std::vector<int>> successors() const;
  std::vector<std::vector<int>> predecessors() const;
};

// Structural checks behind the KernelCFG invariants. Returns one diagnostic
// per violation; an empty list means the CFG is well-formed.
std::vector<Diagnostic> validate_cfg(const KernelCFG& cfg);

// Canonical text form; parse(pretty_print(cfg)) is a fixed point.
std::string pretty_print(const KernelCFG& cfg);

// FNV-1a over the canonical text; used to pair reports of the same kernel.
uint64_t kernel_hash(const KernelCFG& cfg);

}  // namespace scratchshare
