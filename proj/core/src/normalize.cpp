#include "scratchshare/normalize.hpp"

#include <algorithm>

namespace scratchshare {

namespace {

Instruction make_goto(const std::string& target) {
  Instruction ins;
  ins.op = Opcode::Bra;
  ins.target0 = target;
  ins.tag = InstrTag::Goto;
  return ins;
}

std::string fresh_label(const KernelCFG& cfg, const std::string& base) {
  if (cfg.block_index(base) < 0) return base;
  for (int k = 0;; ++k) {
    std::string name = base + "_" + std::to_string(k);
    if (cfg.block_index(name) < 0) return name;
  }
}

}  // namespace

KernelCFG ensure_unique_entry_exit(const KernelCFG& cfg) {
  KernelCFG out = cfg;

  // Entry must have no predecessors; a branch back to the first block gets a
  // fresh launch pad in front.
  auto preds = out.predecessors();
  int entry = out.block_index(out.entry);
  if (entry >= 0 && !preds[entry].empty()) {
    BasicBlock pad;
    pad.label = fresh_label(out, "$entry");
    pad.synthetic = true;
    pad.loop_depth = 0;
    pad.instrs.push_back(make_goto(out.entry));
    pad.succs = {out.entry};
    out.blocks.insert(out.blocks.begin(), std::move(pad));
    out.entry = out.blocks.front().label;
  }

  // Collapse multiple EXIT blocks (and terminator-less dead ends) onto one
  // synthetic exit.
  std::vector<int> ends;
  for (size_t i = 0; i < out.blocks.size(); ++i) {
    const Instruction* term = out.blocks[i].terminator();
    bool exits = term ? term->op == Opcode::Exit : out.blocks[i].succs.empty();
    if (exits) ends.push_back(static_cast<int>(i));
  }
  if (ends.empty()) throw Error("CFG has no exit block to normalize");
  if (ends.size() > 1) {
    std::string exit_label = fresh_label(out, "$exit");
    for (int i : ends) {
      BasicBlock& b = out.blocks[i];
      if (b.terminator()) b.instrs.pop_back();
      b.instrs.push_back(make_goto(exit_label));
      b.succs = {exit_label};
    }
    BasicBlock sink;
    sink.label = exit_label;
    sink.synthetic = true;
    // The unified exit stands in for each path's original exit instruction,
    // so it keeps the user tag; only the rebranches count as gotos.
    Instruction ex;
    ex.op = Opcode::Exit;
    sink.instrs.push_back(ex);
    out.blocks.push_back(std::move(sink));
    out.exit = exit_label;
  } else {
    out.exit = out.blocks[ends[0]].label;
  }
  return out;
}

int count_critical_edges(const KernelCFG& cfg) {
  auto succ = cfg.successors();
  auto pred = cfg.predecessors();
  int n = 0;
  for (size_t u = 0; u < succ.size(); ++u)
    for (int v : succ[u])
      if (v >= 0 && succ[u].size() > 1 && pred[v].size() > 1) ++n;
  return n;
}

KernelCFG split_critical_edges(const KernelCFG& cfg) {
  KernelCFG out = cfg;
  int counter = 0;
  while (true) {
    auto succ = out.successors();
    auto pred = out.predecessors();
    int src = -1, si = -1;
    for (size_t u = 0; u < succ.size() && src < 0; ++u)
      for (size_t k = 0; k < succ[u].size(); ++k) {
        int v = succ[u][k];
        if (v >= 0 && succ[u].size() > 1 && pred[v].size() > 1) {
          src = static_cast<int>(u);
          si = static_cast<int>(k);
          break;
        }
      }
    if (src < 0) return out;

    BasicBlock& from = out.blocks[src];
    std::string dest = from.succs[si];
    std::string label;
    do {
      label = "$split" + std::to_string(counter++);
    } while (out.block_index(label) >= 0);

    BasicBlock mid;
    mid.label = label;
    mid.synthetic = true;
    mid.loop_depth = from.loop_depth;  // conservative weighting
    mid.instrs.push_back(make_goto(dest));
    mid.succs = {dest};

    from.succs[si] = label;
    Instruction* term = from.instrs.empty() ? nullptr : &from.instrs.back();
    if (term && term->op == Opcode::BraCond) {
      if (si == 0)
        term->target0 = label;
      else
        term->target1 = label;
    } else if (term && term->op == Opcode::Bra) {
      term->target0 = label;
    }
    out.blocks.push_back(std::move(mid));
  }
}

KernelCFG normalize(const KernelCFG& cfg) {
  return split_critical_edges(ensure_unique_entry_exit(cfg));
}

}  // namespace scratchshare
