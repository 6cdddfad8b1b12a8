#include "scratchshare/ir.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace scratchshare {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Add: return "add";
    case Opcode::Mov: return "mov";
    case Opcode::LdGlobal: return "ld.global";
    case Opcode::StGlobal: return "st.global";
    case Opcode::LdShared: return "ld.shared";
    case Opcode::StShared: return "st.shared";
    case Opcode::BarSync: return "bar.sync";
    case Opcode::Bra: return "bra";
    case Opcode::BraCond: return "bra.cond";
    case Opcode::Relssp: return "relssp";
    case Opcode::Exit: return "exit";
  }
  return "?";
}

bool is_terminator(Opcode op) {
  return op == Opcode::Bra || op == Opcode::BraCond || op == Opcode::Exit;
}

bool is_shared_mem(Opcode op) {
  return op == Opcode::LdShared || op == Opcode::StShared;
}

const Instruction* BasicBlock::terminator() const {
  if (!instrs.empty() && is_terminator(instrs.back().op)) return &instrs.back();
  return nullptr;
}

int KernelCFG::block_index(const std::string& label) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label) return static_cast<int>(i);
  return -1;
}

int KernelCFG::var_index(const std::string& id) const {
  for (size_t i = 0; i < vars.size(); ++i)
    if (vars[i].id == id) return static_cast<int>(i);
  return -1;
}

uint64_t KernelCFG::scratchpad_demand() const {
  uint64_t total = 0;
  for (const auto& v : vars) total += v.size_bytes;
  return total;
}

std::vector<std::vector<int>> KernelCFG::successors() const {
  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < blocks.size(); ++i) index.emplace(blocks[i].label, static_cast<int>(i));
  std::vector<std::vector<int>> succ(blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) {
    for (const auto& label : blocks[i].succs) {
      auto it = index.find(label);
      succ[i].push_back(it == index.end() ? -1 : it->second);
    }
  }
  return succ;
}

std::vector<std::vector<int>> KernelCFG::predecessors() const {
  auto succ = successors();
  std::vector<std::vector<int>> pred(blocks.size());
  for (size_t i = 0; i < succ.size(); ++i)
    for (int s : succ[i])
      if (s >= 0) pred[s].push_back(static_cast<int>(i));
  return pred;
}

namespace {

std::vector<bool> reachable_from(const std::vector<std::vector<int>>& adj, int start) {
  std::vector<bool> seen(adj.size(), false);
  if (start < 0 || start >= static_cast<int>(adj.size())) return seen;
  std::deque<int> work{start};
  seen[start] = true;
  while (!work.empty()) {
    int b = work.front();
    work.pop_front();
    for (int s : adj[b])
      if (s >= 0 && !seen[s]) {
        seen[s] = true;
        work.push_back(s);
      }
  }
  return seen;
}

}  // namespace

std::vector<Diagnostic> validate_cfg(const KernelCFG& cfg) {
  std::vector<Diagnostic> out;
  auto add = [&out](const std::string& block, std::string msg) {
    out.push_back({block, std::move(msg)});
  };

  if (cfg.blocks.empty()) {
    add("", "kernel has no basic blocks");
    return out;
  }

  std::unordered_set<std::string> labels;
  for (const auto& b : cfg.blocks)
    if (!labels.insert(b.label).second) add(b.label, "duplicate label");

  std::unordered_set<std::string> var_ids;
  for (const auto& v : cfg.vars) {
    if (!var_ids.insert(v.id).second) add("", "duplicate scratchpad variable '" + v.id + "'");
    if (v.size_bytes == 0) add("", "scratchpad variable '" + v.id + "' has zero size");
  }

  int entry = cfg.block_index(cfg.entry);
  if (entry < 0) add("", "entry label '" + cfg.entry + "' does not name a block");

  // Per-block shape: operands refer to declared state, terminators sit last,
  // and the successor list matches the terminator kind.
  for (const auto& b : cfg.blocks) {
    for (size_t i = 0; i < b.instrs.size(); ++i) {
      const Instruction& ins = b.instrs[i];
      if (is_terminator(ins.op) && i + 1 != b.instrs.size())
        add(b.label, "terminator in the middle of the block");
      if (ins.mem) {
        int v = cfg.var_index(ins.mem->var);
        if (v < 0)
          add(b.label, "undeclared scratchpad variable '" + ins.mem->var + "'");
        else if (ins.mem->offset >= cfg.vars[v].size_bytes)
          add(b.label, "offset " + std::to_string(ins.mem->offset) + " out of range for '" +
                           ins.mem->var + "'");
      }
    }
    const Instruction* term = b.terminator();
    if (term) {
      if (term->op == Opcode::Bra) {
        if (b.succs.size() != 1 || b.succs[0] != term->target0)
          add(b.label, "successor list does not match bra target");
      } else if (term->op == Opcode::BraCond) {
        if (b.succs.size() != 2 || b.succs[0] != term->target0 || b.succs[1] != term->target1)
          add(b.label, "successor list does not match bra.cond targets");
        else if (term->target0 == term->target1)
          add(b.label, "bra.cond targets must be distinct");
      } else if (term->op == Opcode::Exit) {
        if (!b.succs.empty()) add(b.label, "exit block has successors");
      }
    } else {
      // fallthrough block
      if (b.succs.size() != 1) add(b.label, "missing terminator (fallthrough needs a successor)");
    }
    for (const auto& s : b.succs)
      if (cfg.block_index(s) < 0) add(b.label, "unknown successor label '" + s + "'");
  }
  if (!out.empty()) return out;  // structural errors make graph checks noise

  auto succ = cfg.successors();
  auto reach = reachable_from(succ, entry);
  for (size_t i = 0; i < cfg.blocks.size(); ++i)
    if (!reach[i]) add(cfg.blocks[i].label, "unreachable block");

  std::vector<int> exits;
  for (size_t i = 0; i < cfg.blocks.size(); ++i) {
    const Instruction* term = cfg.blocks[i].terminator();
    if (term && term->op == Opcode::Exit) exits.push_back(static_cast<int>(i));
  }
  if (exits.empty()) {
    add("", "no exit block");
  } else if (exits.size() > 1) {
    add("", "multiple exits");
  } else {
    int exit = exits[0];
    if (!cfg.exit.empty() && cfg.block_index(cfg.exit) != exit)
      add(cfg.blocks[exit].label, "exit label field does not name the EXIT block");
    auto rev = reachable_from(cfg.predecessors(), exit);
    for (size_t i = 0; i < cfg.blocks.size(); ++i)
      if (reach[i] && !rev[i]) add(cfg.blocks[i].label, "exit not reachable from block");
  }
  return out;
}

namespace {

void print_instr(std::ostringstream& os, const Instruction& ins) {
  os << "  " << opcode_name(ins.op);
  switch (ins.op) {
    case Opcode::Add:
      os << " r" << ins.dest << ", r" << ins.src0 << ", r" << ins.src1;
      break;
    case Opcode::Mov:
      os << " r" << ins.dest << ", r" << ins.src0;
      break;
    case Opcode::LdGlobal:
      os << " r" << ins.dest << ", [r" << ins.src0 << "]";
      break;
    case Opcode::StGlobal:
      os << " [r" << ins.src0 << "], r" << ins.src1;
      break;
    case Opcode::LdShared:
      os << " r" << ins.dest << ", " << ins.mem->var << "[" << ins.mem->offset << "]";
      break;
    case Opcode::StShared:
      os << " " << ins.mem->var << "[" << ins.mem->offset << "], r" << ins.src0;
      break;
    case Opcode::Bra:
      os << " " << ins.target0;
      break;
    case Opcode::BraCond:
      os << " r" << ins.src0 << ", " << ins.target0 << ", " << ins.target1;
      break;
    case Opcode::BarSync:
    case Opcode::Relssp:
    case Opcode::Exit:
      break;
  }
  os << "\n";
}

}  // namespace

std::string pretty_print(const KernelCFG& cfg) {
  std::ostringstream os;
  for (const auto& v : cfg.vars) os << ".shared " << v.id << " " << v.size_bytes << "\n";
  if (!cfg.vars.empty()) os << "\n";
  for (const auto& b : cfg.blocks) {
    os << b.label << ":";
    if (b.loop_depth > 0) os << " @loopdepth " << b.loop_depth;
    os << "\n";
    for (const auto& ins : b.instrs) print_instr(os, ins);
  }
  return os.str();
}

uint64_t kernel_hash(const KernelCFG& cfg) {
  uint64_t h = 1469598103934665603ull;
  for (char c : pretty_print(cfg)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace scratchshare
