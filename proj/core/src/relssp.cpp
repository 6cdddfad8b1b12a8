#include "scratchshare/relssp.hpp"

#include <algorithm>
#include <deque>
#include <functional>

#include "scratchshare/normalize.hpp"

namespace scratchshare {

Placement placement_from_name(const std::string& name) {
  if (name == "opt") return Placement::Opt;
  if (name == "postdom") return Placement::Postdom;
  if (name == "exit") return Placement::Exit;
  if (name == "none") return Placement::None;
  throw Error("unknown placement '" + name + "' (opt|postdom|exit|none)");
}

const char* placement_name(Placement p) {
  switch (p) {
    case Placement::Opt: return "opt";
    case Placement::Postdom: return "postdom";
    case Placement::Exit: return "exit";
    case Placement::None: return "none";
  }
  return "?";
}

namespace {

bool touches_shared_set(const KernelCFG& cfg, const SharingPlan& plan, const Instruction& ins) {
  return is_shared_mem(ins.op) && ins.mem && plan.shared(cfg.var_index(ins.mem->var));
}

std::vector<uint8_t> shared_access_blocks(const KernelCFG& cfg, const SharingPlan& plan) {
  std::vector<uint8_t> has(cfg.blocks.size(), 0);
  for (size_t b = 0; b < cfg.blocks.size(); ++b)
    for (const auto& ins : cfg.blocks[b].instrs)
      if (touches_shared_set(cfg, plan, ins)) has[b] = 1;
  return has;
}

Instruction make_relssp() {
  Instruction ins;
  ins.op = Opcode::Relssp;
  ins.tag = InstrTag::Relssp;
  return ins;
}

void apply_insertion(KernelCFG& cfg, const Insertion& where) {
  BasicBlock& b = cfg.blocks[cfg.block_index(where.block)];
  if (where.at_in) {
    b.instrs.insert(b.instrs.begin(), make_relssp());
  } else if (b.terminator()) {
    b.instrs.insert(b.instrs.end() - 1, make_relssp());
  } else {
    b.instrs.push_back(make_relssp());
  }
}

// Guard for the loop-annotated IR: enumerate entry->exit walks with every
// edge taken at most `edge_limit` times and check that relssp runs exactly
// once per walk and never before a later shared access. Hard error on
// violation; CFGs too large to enumerate are skipped.
void verify_placement(const KernelCFG& cfg, const SharingPlan& plan, int edge_limit) {
  const size_t m = cfg.blocks.size();
  if (m > 26) return;
  auto succ = cfg.successors();
  int entry = cfg.block_index(cfg.entry);
  int exit = cfg.block_index(cfg.exit);
  if (entry < 0 || exit < 0) return;

  std::vector<size_t> edge_base(m + 1, 0);
  for (size_t b = 0; b < m; ++b) edge_base[b + 1] = edge_base[b] + succ[b].size();
  std::vector<int> edge_count(edge_base[m], 0);

  long walks = 0;
  const long max_walks = 200000;

  std::function<void(int, int, bool)> walk = [&](int b, int relssps, bool after_relssp) {
    if (walks > max_walks) return;
    for (const auto& ins : cfg.blocks[b].instrs) {
      if (ins.op == Opcode::Relssp) {
        ++relssps;
        after_relssp = true;
      } else if (after_relssp && touches_shared_set(cfg, plan, ins)) {
        throw Error("relssp placement violates safety: shared access after release in '" +
                    cfg.blocks[b].label + "'");
      }
    }
    if (relssps > 1)
      throw Error("relssp executed twice on a path through '" + cfg.blocks[b].label + "'");
    if (b == exit) {
      ++walks;
      if (relssps != 1)
        throw Error("a path reaches exit executing relssp " + std::to_string(relssps) + " times");
      return;
    }
    for (size_t k = 0; k < succ[b].size(); ++k) {
      int s = succ[b][k];
      if (s < 0) continue;
      size_t e = edge_base[b] + k;
      if (edge_count[e] >= edge_limit) continue;
      ++edge_count[e];
      walk(s, relssps, after_relssp);
      --edge_count[e];
    }
  };
  walk(entry, 0, false);
}

}  // namespace

SafetyFacts compute_safety(const KernelCFG& cfg, const SharingPlan& plan) {
  const size_t m = cfg.blocks.size();
  auto access = shared_access_blocks(cfg, plan);
  auto succ = cfg.successors();
  auto pred = cfg.predecessors();
  int exit = cfg.block_index(cfg.exit);
  if (exit < 0) throw Error("safety analysis needs a unique exit block");

  SafetyFacts f;
  f.safe_in.assign(m, 1);
  f.safe_out.assign(m, 1);
  f.ins_in.assign(m, 0);
  f.ins_out.assign(m, 0);
  for (uint8_t a : access) f.any_shared_access |= (a != 0);

  // Greatest fixed point: start all-safe, knock points down until stable.
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t b = 0; b < m; ++b) {
      uint8_t out = 1;
      if (static_cast<int>(b) != exit)
        for (int s : succ[b])
          if (s >= 0) out &= f.safe_in[s];
      uint8_t in = access[b] ? 0 : out;
      if (out != f.safe_out[b] || in != f.safe_in[b]) {
        f.safe_out[b] = out;
        f.safe_in[b] = in;
        changed = true;
      }
    }
  }

  for (size_t b = 0; b < m; ++b) {
    f.ins_out[b] = f.safe_out[b] && !f.safe_in[b];
    uint8_t preds_safe = 1;
    for (int p : pred[b]) preds_safe &= f.safe_out[p];
    f.ins_in[b] = !preds_safe && f.safe_in[b];
    if (f.ins_in[b] && f.ins_out[b])
      throw Error("insertion at both IN and OUT of '" + cfg.blocks[b].label +
                  "' should be unreachable");
  }
  return f;
}

PlacementResult insert_relssp(const KernelCFG& cfg, const SafetyFacts& facts) {
  PlacementResult res;
  res.cfg = cfg;

  if (!facts.any_shared_access) {
    // Uniform simulator contract: still release once, at kernel entry, so
    // the release unit runs even when the shared set is never touched.
    res.insertions.push_back({cfg.entry, true});
  } else {
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
      if (facts.ins_in[b]) res.insertions.push_back({cfg.blocks[b].label, true});
      if (facts.ins_out[b]) res.insertions.push_back({cfg.blocks[b].label, false});
    }
  }
  if (res.insertions.size() > cfg.blocks.size())
    throw Error("relssp insertion count exceeds the block count");
  for (const auto& ins : res.insertions) apply_insertion(res.cfg, ins);
  return res;
}

PlacementResult place_at_exit(const KernelCFG& cfg) {
  if (cfg.exit.empty()) throw Error("exit placement needs a unique exit block");
  PlacementResult res;
  res.cfg = cfg;
  res.insertions.push_back({cfg.exit, false});
  apply_insertion(res.cfg, res.insertions.back());
  return res;
}

namespace {

// Root-initialized intersection solver; with edges_in = predecessors it
// yields dominators, with successors it yields post-dominators.
std::vector<std::vector<uint8_t>> solve_dominators(size_t m, int root,
                                                   const std::vector<std::vector<int>>& edges_in) {
  std::vector<std::vector<uint8_t>> dom(m, std::vector<uint8_t>(m, 1));
  std::fill(dom[root].begin(), dom[root].end(), 0);
  dom[root][root] = 1;
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t b = 0; b < m; ++b) {
      if (static_cast<int>(b) == root) continue;
      std::vector<uint8_t> next(m, edges_in[b].empty() ? 0 : 1);
      for (int p : edges_in[b])
        if (p >= 0)
          for (size_t i = 0; i < m; ++i) next[i] &= dom[p][i];
      next[b] = 1;
      if (next != dom[b]) {
        dom[b] = std::move(next);
        changed = true;
      }
    }
  }
  return dom;
}

bool on_cycle(const KernelCFG& cfg, int b) {
  auto succ = cfg.successors();
  std::deque<int> work(succ[b].begin(), succ[b].end());
  std::vector<uint8_t> seen(cfg.blocks.size(), 0);
  while (!work.empty()) {
    int x = work.front();
    work.pop_front();
    if (x < 0 || seen[x]) continue;
    if (x == b) return true;
    seen[x] = 1;
    for (int s : succ[x]) work.push_back(s);
  }
  return false;
}

}  // namespace

PlacementResult place_at_postdominator(const KernelCFG& cfg, const SharingPlan& plan) {
  int exit = cfg.block_index(cfg.exit);
  int entry = cfg.block_index(cfg.entry);
  if (exit < 0 || entry < 0) throw Error("post-dominator placement needs unique entry/exit");
  const size_t m = cfg.blocks.size();

  auto access = shared_access_blocks(cfg, plan);
  std::vector<int> access_blocks;
  for (size_t b = 0; b < m; ++b)
    if (access[b]) access_blocks.push_back(static_cast<int>(b));
  if (access_blocks.empty()) return place_at_exit(cfg);

  auto pdom = solve_dominators(m, exit, cfg.successors());
  auto dom = solve_dominators(m, entry, cfg.predecessors());
  auto depth_of = [&](int c) {
    size_t d = 0;
    for (size_t i = 0; i < m; ++i) d += pdom[c][i];
    return d;
  };

  // Nearest common post-dominator = deepest block on the intersection of the
  // access blocks' post-dominator chains.
  std::vector<uint8_t> common(m, 1);
  for (int b : access_blocks)
    for (size_t i = 0; i < m; ++i) common[i] &= pdom[b][i];
  int best = exit;
  size_t best_depth = depth_of(exit);
  for (size_t c = 0; c < m; ++c)
    if (common[c] && depth_of(static_cast<int>(c)) > best_depth) {
      best = static_cast<int>(c);
      best_depth = depth_of(best);
    }

  // The release block must run on every path (dominate Exit) and must not
  // repeat (sit on no cycle); otherwise fall back up the chain toward Exit.
  while (best != exit && (!dom[exit][best] || on_cycle(cfg, best))) {
    int next = -1;
    size_t next_depth = 0;
    for (size_t c = 0; c < m; ++c) {
      if (static_cast<int>(c) == best || !pdom[best][c]) continue;
      size_t d = depth_of(static_cast<int>(c));
      if (d > next_depth) {
        next_depth = d;
        next = static_cast<int>(c);
      }
    }
    if (next < 0) break;
    best = next;
  }

  PlacementResult res;
  res.cfg = cfg;
  res.insertions.push_back({cfg.blocks[best].label, access[best] == 0});
  apply_insertion(res.cfg, res.insertions.back());
  return res;
}

PlacementResult place_relssp(const KernelCFG& cfg, const SharingPlan& plan, Placement strategy) {
  switch (strategy) {
    case Placement::None: {
      PlacementResult res;
      res.cfg = cfg;
      return res;
    }
    case Placement::Exit:
      return place_at_exit(ensure_unique_entry_exit(cfg));
    case Placement::Postdom:
      return place_at_postdominator(ensure_unique_entry_exit(cfg), plan);
    case Placement::Opt: {
      KernelCFG normal = normalize(cfg);
      SafetyFacts facts = compute_safety(normal, plan);
      PlacementResult res = insert_relssp(normal, facts);
      verify_placement(res.cfg, plan, 2);
      return res;
    }
  }
  throw Error("unknown placement strategy");
}

}  // namespace scratchshare
