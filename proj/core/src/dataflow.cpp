#include "scratchshare/dataflow.hpp"

#include <algorithm>
#include <sstream>

namespace scratchshare {

VarMask var_bit(int index) { return index < 0 ? 0 : (VarMask{1} << index); }

VarMask mask_of(const KernelCFG& cfg, const std::vector<std::string>& ids) {
  VarMask m = 0;
  for (const auto& id : ids) {
    int v = cfg.var_index(id);
    if (v < 0) throw Error("unknown scratchpad variable '" + id + "'");
    m |= var_bit(v);
  }
  return m;
}

namespace {

// Reverse postorder over successors from the entry block.
std::vector<int> rpo_order(const KernelCFG& cfg) {
  auto succ = cfg.successors();
  std::vector<int> order;
  std::vector<uint8_t> state(cfg.blocks.size(), 0);
  int entry = cfg.block_index(cfg.entry);
  if (entry < 0) entry = 0;

  std::vector<std::pair<int, size_t>> stack{{entry, 0}};
  state[entry] = 1;
  while (!stack.empty()) {
    auto& [b, next] = stack.back();
    if (next < succ[b].size()) {
      int s = succ[b][next++];
      if (s >= 0 && !state[s]) {
        state[s] = 1;
        stack.push_back({s, 0});
      }
    } else {
      order.push_back(b);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  for (size_t i = 0; i < cfg.blocks.size(); ++i)  // keep unreachable blocks addressable
    if (!state[i]) order.push_back(static_cast<int>(i));
  return order;
}

}  // namespace

AccessFacts compute_access_facts(const KernelCFG& cfg) {
  const size_t m = cfg.blocks.size();
  if (cfg.vars.size() > 64) throw Error("more than 64 scratchpad variables");

  AccessFacts f;
  f.num_vars = static_cast<int>(cfg.vars.size());
  f.access.assign(m, 0);
  f.pre_in.assign(m, 0);
  f.pre_out.assign(m, 0);
  f.post_in.assign(m, 0);
  f.post_out.assign(m, 0);

  for (size_t b = 0; b < m; ++b)
    for (const auto& ins : cfg.blocks[b].instrs)
      if (is_shared_mem(ins.op) && ins.mem) f.access[b] |= var_bit(cfg.var_index(ins.mem->var));

  auto succ = cfg.successors();
  auto pred = cfg.predecessors();
  auto rpo = rpo_order(cfg);
  int entry = cfg.block_index(cfg.entry);
  int exit = cfg.block_index(cfg.exit);

  // Forward system: PreIN(BB) = OR of predecessors' PreOUT (false at Entry),
  // PreOUT(BB) = access(BB) | PreIN(BB).
  for (bool changed = true; changed; ++f.forward_sweeps) {
    changed = false;
    for (int b : rpo) {
      VarMask in = 0;
      if (b != entry)
        for (int p : pred[b]) in |= f.pre_out[p];
      VarMask out = f.access[b] | in;
      if (in != f.pre_in[b] || out != f.pre_out[b]) {
        f.pre_in[b] = in;
        f.pre_out[b] = out;
        changed = true;
      }
    }
  }

  // Backward system: PostOUT(BB) = OR of successors' PostIN (false at Exit),
  // PostIN(BB) = access(BB) | PostOUT(BB).
  for (bool changed = true; changed; ++f.backward_sweeps) {
    changed = false;
    for (auto it = rpo.rbegin(); it != rpo.rend(); ++it) {
      int b = *it;
      VarMask out = 0;
      if (b != exit)
        for (int s : succ[b])
          if (s >= 0) out |= f.post_in[s];
      VarMask in = f.access[b] | out;
      if (in != f.post_in[b] || out != f.post_out[b]) {
        f.post_in[b] = in;
        f.post_out[b] = out;
        changed = true;
      }
    }
  }
  return f;
}

uint64_t block_weight(int loop_depth, uint64_t loop_weight) {
  uint64_t w = 1;
  for (int i = 0; i < loop_depth; ++i) {
    if (loop_weight != 0 && w > UINT64_MAX / loop_weight) return UINT64_MAX;
    w *= loop_weight;
  }
  return w;
}

SetAccessRange access_range_of_set(const KernelCFG& cfg, const AccessFacts& facts, VarMask set,
                                   uint64_t loop_weight) {
  if (set == 0) throw Error("access range of the empty variable set");
  const size_t m = cfg.blocks.size();
  SetAccessRange r;
  r.set = set;
  r.acc_in.assign(m, false);
  r.acc_out.assign(m, false);
  r.in_range.assign(m, false);

  for (size_t b = 0; b < m; ++b) {
    r.acc_in[b] = (facts.pre_in[b] & set) && (facts.post_in[b] & set);
    r.acc_out[b] = (facts.pre_out[b] & set) && (facts.post_out[b] & set);
    r.in_range[b] = r.acc_in[b] || r.acc_out[b] || (facts.access[b] & set);
    if (r.in_range[b]) {
      uint64_t add = block_weight(cfg.blocks[b].loop_depth, loop_weight) *
                     static_cast<uint64_t>(cfg.blocks[b].instrs.size());
      r.weighted_count = (r.weighted_count > UINT64_MAX - add) ? UINT64_MAX : r.weighted_count + add;
    }
  }
  return r;
}

std::string access_table(const KernelCFG& cfg, const AccessFacts& facts,
                         const std::vector<std::pair<std::string, VarMask>>& sets) {
  // Column layout mirrors the golden table: IN then OUT for the single
  // variables, followed by IN then OUT for the requested sets.
  std::vector<std::pair<std::string, SetAccessRange>> vars, groups;
  for (size_t v = 0; v < cfg.vars.size(); ++v)
    vars.emplace_back(cfg.vars[v].id, access_range_of_set(cfg, facts, var_bit(static_cast<int>(v))));
  for (const auto& [label, set] : sets)
    groups.emplace_back(label, access_range_of_set(cfg, facts, set));

  std::ostringstream os;
  os << "block";
  for (const auto& [label, range] : vars) os << "|in:" << label;
  for (const auto& [label, range] : vars) os << "|out:" << label;
  for (const auto& [label, range] : groups) os << "|in:" << label;
  for (const auto& [label, range] : groups) os << "|out:" << label;
  os << "\n";
  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    if (cfg.blocks[b].synthetic) continue;
    os << cfg.blocks[b].label;
    for (const auto& [label, range] : vars) os << "|" << (range.acc_in[b] ? 't' : 'f');
    for (const auto& [label, range] : vars) os << "|" << (range.acc_out[b] ? 't' : 'f');
    for (const auto& [label, range] : groups) os << "|" << (range.acc_in[b] ? 't' : 'f');
    for (const auto& [label, range] : groups) os << "|" << (range.acc_out[b] ? 't' : 'f');
    os << "\n";
  }
  return os.str();
}

}  // namespace scratchshare
