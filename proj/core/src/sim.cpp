#include "scratchshare/sim.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace scratchshare {

Policy policy_from_name(const std::string& name) {
  if (name == "lrr") return Policy::Lrr;
  if (name == "gto") return Policy::Gto;
  if (name == "owf") return Policy::Owf;
  if (name == "uwf") return Policy::Uwf;
  throw Error("unknown policy '" + name + "' (lrr|gto|owf|uwf)");
}

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::Lrr: return "lrr";
    case Policy::Gto: return "gto";
    case Policy::Owf: return "owf";
    case Policy::Uwf: return "uwf";
  }
  return "?";
}

uint32_t LatencyModel::of(Opcode op) const {
  switch (op) {
    case Opcode::Add: return add;
    case Opcode::Mov: return mov;
    case Opcode::LdShared: return ld_shared;
    case Opcode::StShared: return st_shared;
    case Opcode::LdGlobal: return ld_global;
    case Opcode::StGlobal: return st_global;
    case Opcode::BarSync: return bar_sync;
    case Opcode::Bra:
    case Opcode::BraCond: return bra;
    case Opcode::Relssp: return relssp;
    case Opcode::Exit: return exit;
  }
  return 1;
}

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

bool Simulator::Sm::any_resident() const {
  for (const auto& s : slots)
    if (s.valid) return true;
  return false;
}

Simulator::Simulator(const KernelCFG& cfg, const SharingPlan& layout, const BlockPlan& plan,
                     const HardwareConfig& hw, const LatencyModel& lat, const SimOptions& opt)
    : plan_(plan), hw_(hw), lat_(lat), opt_(opt), boundary_(plan.boundary_bytes) {
  if (opt.block_size < 1) throw Error("block size must be at least 1");
  if (opt.kernel_blocks < 1) throw Error("kernel must launch at least one block");
  active_threads_ = opt.active_threads.value_or(opt.block_size);
  if (active_threads_ < 1 || active_threads_ > opt.block_size)
    throw Error("active thread count must lie in [1, block_size]");
  warps_per_block_ = (opt.block_size + hw.warp_size - 1) / hw.warp_size;

  compile(cfg, layout);

  total_blocks_ = opt.kernel_blocks;
  LaunchSchedule sched = assign_blocks_to_sms(opt.kernel_blocks, plan, hw);
  pending_ = sched.pending;

  sms_.resize(hw.num_sms);
  for (int i = 0; i < hw.num_sms; ++i) {
    Sm& sm = sms_[i];
    sm.slots.resize(plan.total());
    sm.pairs.resize(plan.pairs);
    sm.scheds.resize(hw.schedulers_per_sm);
    sm.initial = sched.initial[i];
  }
  pending_unlock_.assign(static_cast<size_t>(hw.num_sms) * std::max(plan.pairs, 1), false);
  result_.per_sm.resize(hw.num_sms);
}

void Simulator::compile(const KernelCFG& cfg, const SharingPlan& layout) {
  int entry = cfg.block_index(cfg.entry);
  if (entry < 0) throw Error("kernel entry block not found");
  entry_block_ = entry;

  auto succ = cfg.successors();
  cblocks_.resize(cfg.blocks.size());
  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    cblocks_[b].first = static_cast<int>(instrs_.size());
    cblocks_[b].count = static_cast<int>(cfg.blocks[b].instrs.size());
    cblocks_[b].label = cfg.blocks[b].label;
    const Instruction* term = cfg.blocks[b].terminator();
    cblocks_[b].fallthrough = (!term && !succ[b].empty()) ? succ[b][0] : -1;

    for (const auto& ins : cfg.blocks[b].instrs) {
      CompiledInstr ci;
      ci.op = ins.op;
      ci.tag = ins.tag;
      ci.dest = ins.dest;
      ci.src0 = ins.src0;
      ci.src1 = ins.src1;
      ci.latency = lat_.of(ins.op);
      if (ins.mem) {
        ci.shared_addr = static_cast<int64_t>(layout.resolve(cfg, *ins.mem));
        if (ci.shared_addr >= static_cast<int64_t>(layout.address_space))
          throw Error("resolved scratchpad address out of range in block '" + cfg.blocks[b].label +
                      "'");
      }
      if (!ins.target0.empty()) ci.target0 = cfg.block_index(ins.target0);
      if (!ins.target1.empty()) ci.target1 = cfg.block_index(ins.target1);
      num_regs_ = std::max({num_regs_, ci.dest + 1, ci.src0 + 1, ci.src1 + 1});
      instrs_.push_back(ci);
    }
  }
}

void Simulator::launch_block(int sm_id, int slot, int64_t id) {
  Sm& sm = sms_[sm_id];
  Resident& res = sm.slots[slot];
  res = Resident{};
  res.valid = true;
  res.id = id;
  res.launch_cycle = cycle_;
  res.r_bits.assign(warps_per_block_, 0);

  for (int w = 0; w < warps_per_block_; ++w) {
    Warp warp;
    warp.dyn_id = sm.next_dyn++;
    warp.slot = slot;
    warp.index_in_block = w;
    warp.scheduler = static_cast<int>(warp.dyn_id % hw_.schedulers_per_sm);
    int lo = w * hw_.warp_size;
    int hi = std::min(active_threads_, lo + hw_.warp_size);
    warp.active_mask = hi > lo ? (hi - lo >= 32 ? 0xffffffffu : ((1u << (hi - lo)) - 1)) : 0;
    warp.pc_block = entry_block_;
    warp.pc_idx = cblocks_[entry_block_].first;
    warp.reg_ready.assign(num_regs_, 0);
    warp.rng.seed(mix64(opt_.seed ^ mix64(static_cast<uint64_t>(id) + 1) ^
                        (opt_.branches.per_warp ? mix64(w + 1) : 0)));
    warp.site_count.assign(cblocks_.size(), 0);
    warp.done = warp.active_mask == 0;

    int idx = static_cast<int>(sm.warps.size());
    sm.warps.push_back(std::move(warp));
    res.warps.push_back(idx);
    if (!sm.warps.back().done) {
      res.live_warps++;
      sm.scheds[sm.warps.back().scheduler].warps.push_back(idx);
    }
  }

  // Empty entry blocks cascade immediately.
  for (int idx : res.warps) {
    Warp& w = sm.warps[idx];
    while (!w.done && w.pc_idx == cblocks_[w.pc_block].first + cblocks_[w.pc_block].count) {
      int ft = cblocks_[w.pc_block].fallthrough;
      if (ft < 0) {
        finish_warp(sm, w);
      } else {
        w.pc_block = ft;
        w.pc_idx = cblocks_[ft].first;
      }
    }
  }

  if (opt_.pregrant_lock && plan_.shared_slot(slot) && slot < plan_.pairs) {
    Pair& pair = sm.pairs[plan_.pair_of(slot)];
    if (pair.holder < 0) pair.holder = slot;
  }
}

void Simulator::fill_free_slots(int sm_id) {
  Sm& sm = sms_[sm_id];
  if (!sm.initial.empty()) {
    for (int s = 0; s < static_cast<int>(sm.initial.size()); ++s)
      if (sm.initial[s] >= 0) launch_block(sm_id, s, sm.initial[s]);
    sm.initial.clear();
  }
  for (int s = 0; s < static_cast<int>(sm.slots.size()); ++s) {
    if (sm.slots[s].valid || pending_next_ >= pending_.size()) continue;
    launch_block(sm_id, s, pending_[pending_next_++]);
  }
}

bool Simulator::operands_ready(const Warp& w, const CompiledInstr& ins) const {
  auto ready = [&](int r) { return r < 0 || w.reg_ready[r] <= cycle_; };
  return ready(ins.src0) && ready(ins.src1) && ready(ins.dest);
}

bool Simulator::wants_shared_lock(const Warp& w, const CompiledInstr& ins) const {
  return ins.shared_addr >= 0 && static_cast<uint64_t>(ins.shared_addr) >= boundary_ &&
         plan_.shared_slot(w.slot);
}

void Simulator::grant_locks(int sm_id) {
  Sm& sm = sms_[sm_id];
  for (int q = 0; q < plan_.pairs; ++q) {
    Pair& pair = sm.pairs[q];
    int members[2] = {q, plan_.partner_slot(q)};
    bool requests[2] = {false, false};
    for (int pos = 0; pos < 2; ++pos) {
      const Resident& res = sm.slots[members[pos]];
      if (!res.valid || pair.holder == members[pos]) continue;
      for (int idx : res.warps) {
        const Warp& w = sm.warps[idx];
        if (w.done || w.at_barrier) continue;
        const CompiledInstr& ins = instrs_[w.pc_idx];
        if (wants_shared_lock(w, ins) && operands_ready(w, ins)) {
          requests[pos] = true;
          break;
        }
      }
    }
    // FCFS: longest-waiting request wins, the original slot on a tie.
    int grant = -1;
    for (int pos = 0; pos < 2; ++pos) {
      if (!requests[pos]) continue;
      uint64_t since = pair.waiting[pos] ? pair.waiting_since[pos] : cycle_;
      if (grant < 0) {
        grant = pos;
      } else {
        uint64_t best = pair.waiting[grant] ? pair.waiting_since[grant] : cycle_;
        if (since < best) grant = pos;
      }
    }
    for (int pos = 0; pos < 2; ++pos) {
      if (!requests[pos]) continue;
      if (pair.holder < 0 && pos == grant) {
        pair.holder = members[pos];
        pair.waiting[pos] = false;
      } else if (!pair.waiting[pos]) {
        pair.waiting[pos] = true;
        pair.waiting_since[pos] = cycle_;
      }
    }
  }
}

// OWF rank: owner 0, unshared 1, non-owner 2. UWF swaps the first two.
int Simulator::classify_rank(const Sm& sm, const Warp& w) const {
  bool shared = plan_.shared_slot(w.slot);
  bool owner = shared && sm.pairs[plan_.pair_of(w.slot)].holder == w.slot;
  int rank;
  if (!shared)
    rank = 1;
  else if (owner)
    rank = 0;
  else
    rank = 2;
  if (opt_.policy == Policy::Uwf && rank < 2) rank = 1 - rank;
  return rank;
}

void Simulator::issue(int sm_id, int sched_id, int warp_idx) {
  Sm& sm = sms_[sm_id];
  Warp& w = sm.warps[warp_idx];
  const CompiledInstr& ins = instrs_[w.pc_idx];
  Resident& res = sm.slots[w.slot];

  if (ins.dest >= 0) w.reg_ready[ins.dest] = cycle_ + ins.latency;
  w.max_completion = std::max(w.max_completion, cycle_ + ins.latency - 1);
  w.stall = StallReason::None;

  uint64_t threads = std::popcount(w.active_mask);
  switch (ins.tag) {
    case InstrTag::User: result_.executed_user += threads; break;
    case InstrTag::Relssp: result_.executed_relssp += threads; break;
    case InstrTag::Goto: result_.executed_goto += threads; break;
  }
  result_.issued_warp_instrs++;
  if (opt_.record_issues)
    result_.issues.push_back({cycle_, sm_id, sched_id, w.dyn_id, res.id, ins.op});

  if (ins.op == Opcode::BarSync) {
    w.at_barrier = true;
  } else if (ins.op == Opcode::Relssp) {
    release_unit_update(sm_id, w.slot, w);
  } else if (ins.shared_addr >= 0 && plan_.shared_slot(w.slot) &&
             static_cast<uint64_t>(ins.shared_addr) >= boundary_ && !res.acquired) {
    res.acquired = true;
    res.acquire_cycle = cycle_;
  }

  advance_pc(w, ins, sm_id);
}

bool Simulator::branch_taken(Warp& w, int block) {
  if (opt_.branches.mode == BranchModel::Mode::Trips) {
    auto it = opt_.branches.trips.find(cblocks_[block].label);
    uint32_t k = it == opt_.branches.trips.end() ? opt_.branches.default_trips : it->second;
    uint32_t c = w.site_count[block]++;
    return (c % (k + 1)) < k;
  }
  double u = static_cast<double>(w.rng() >> 11) * 0x1.0p-53;
  return u < opt_.branches.taken_prob;
}

void Simulator::advance_pc(Warp& w, const CompiledInstr& ins, int sm_id) {
  Sm& sm = sms_[sm_id];
  if (ins.op == Opcode::Exit) {
    finish_warp(sm, w);
    return;
  }
  if (ins.op == Opcode::Bra) {
    w.pc_block = ins.target0;
    w.pc_idx = cblocks_[ins.target0].first;
  } else if (ins.op == Opcode::BraCond) {
    int t = branch_taken(w, w.pc_block) ? ins.target0 : ins.target1;
    w.pc_block = t;
    w.pc_idx = cblocks_[t].first;
  } else {
    ++w.pc_idx;
  }
  while (!w.done && w.pc_idx == cblocks_[w.pc_block].first + cblocks_[w.pc_block].count) {
    int ft = cblocks_[w.pc_block].fallthrough;
    if (ft < 0) {
      finish_warp(sm, w);
    } else {
      w.pc_block = ft;
      w.pc_idx = cblocks_[ft].first;
    }
  }
}

void Simulator::finish_warp(Sm& sm, Warp& w) {
  if (w.done) return;
  w.done = true;
  sm.slots[w.slot].live_warps--;
}

void Simulator::release_unit_update(int sm_id, int slot, Warp& w) {
  Sm& sm = sms_[sm_id];
  Resident& res = sm.slots[slot];
  res.r_bits[w.index_in_block] |= w.active_mask;

  if (res.relssp_fired) return;
  // Unlock gate: every active thread of the block has its release bit set.
  for (int idx : res.warps) {
    const Warp& bw = sm.warps[idx];
    if ((res.r_bits[bw.index_in_block] & bw.active_mask) != bw.active_mask) return;
  }
  res.relssp_fired = true;
  if (plan_.shared_slot(slot) && sm.pairs[plan_.pair_of(slot)].holder == slot)
    pending_unlock_[static_cast<size_t>(sm_id) * std::max(plan_.pairs, 1) + plan_.pair_of(slot)] =
        true;
}

void Simulator::end_of_cycle(int sm_id) {
  Sm& sm = sms_[sm_id];

  // Barriers release once every live warp of the block has arrived.
  for (auto& res : sm.slots) {
    if (!res.valid || res.live_warps == 0) continue;
    bool all = true;
    for (int idx : res.warps) {
      const Warp& w = sm.warps[idx];
      if (!w.done && !w.at_barrier) {
        all = false;
        break;
      }
    }
    if (all)
      for (int idx : res.warps) sm.warps[idx].at_barrier = false;
  }

  // relssp unlocks become visible to the partner next cycle.
  for (int q = 0; q < plan_.pairs; ++q) {
    size_t key = static_cast<size_t>(sm_id) * std::max(plan_.pairs, 1) + q;
    if (!pending_unlock_[key]) continue;
    pending_unlock_[key] = false;
    Pair& pair = sm.pairs[q];
    if (pair.holder >= 0) {
      Resident& res = sm.slots[pair.holder];
      res.released = true;
      res.released_by_relssp = true;
      res.release_cycle = cycle_;
      pair.holder = -1;
      result_.unlock_events++;
    }
  }

  for (int s = 0; s < static_cast<int>(sm.slots.size()); ++s) {
    Resident& res = sm.slots[s];
    if (!res.valid || res.live_warps > 0) continue;
    uint64_t completion = 0;
    for (int idx : res.warps) completion = std::max(completion, sm.warps[idx].max_completion);
    if (completion <= cycle_) finish_block(sm_id, s);
  }
}

void Simulator::finish_block(int sm_id, int slot) {
  Sm& sm = sms_[sm_id];
  Resident& res = sm.slots[slot];
  uint64_t finish = cycle_;

  if (plan_.shared_slot(slot)) {
    Pair& pair = sm.pairs[plan_.pair_of(slot)];
    if (pair.holder == slot) {
      // Ownership moves to the partner; a partner whose release unit already
      // fired lets go of the region immediately.
      int partner = plan_.partner_slot(slot);
      if (sm.slots[partner].valid && !sm.slots[partner].relssp_fired) {
        pair.holder = partner;
        pair.waiting[partner == plan_.pair_of(slot) ? 0 : 1] = false;
      } else {
        pair.holder = -1;
      }
    }
    if (!res.released) res.release_cycle = finish;

    uint64_t acquire = res.acquired ? res.acquire_cycle : finish;
    uint64_t release = res.acquired ? std::max(res.release_cycle, acquire) : finish;
    result_.phase_pre += acquire - res.launch_cycle;
    result_.phase_shared += release - acquire;
    result_.phase_post += finish - release;
  }

  BlockTrace trace;
  trace.block_id = res.id;
  trace.sm = sm_id;
  trace.slot = slot;
  trace.shared_slot = plan_.shared_slot(slot);
  trace.launch_cycle = res.launch_cycle;
  trace.acquired = res.acquired;
  trace.acquire_cycle = res.acquire_cycle;
  trace.release_cycle = res.released ? res.release_cycle : finish;
  trace.released_by_relssp = res.released_by_relssp;
  trace.finish_cycle = finish;
  result_.blocks.push_back(trace);

  for (auto& sched : sm.scheds)
    sched.warps.erase(std::remove_if(sched.warps.begin(), sched.warps.end(),
                                     [&](int idx) { return sm.warps[idx].slot == slot; }),
                      sched.warps.end());
  res.valid = false;
  finished_blocks_++;
}

void Simulator::assert_invariants(int sm_id) const {
  const Sm& sm = sms_[sm_id];
  for (int q = 0; q < plan_.pairs; ++q) {
    int holder = sm.pairs[q].holder;
    if (holder >= 0) {
      if (!plan_.shared_slot(holder) || plan_.pair_of(holder) != q)
        throw SimError("lock holder is not a member of its pair");
      if (!sm.slots[holder].valid) throw SimError("lock held by an empty slot");
    }
  }
  int resident = 0, lock_blocked = 0;
  for (const auto& res : sm.slots) {
    if (!res.valid) continue;
    ++resident;
    bool blocked = false;
    for (int idx : res.warps) {
      const Warp& w = sm.warps[idx];
      if (w.done) continue;
      if (w.stall == StallReason::SharedLock) {
        blocked = true;
        if (plan_.shared_slot(w.slot) && sm.pairs[plan_.pair_of(w.slot)].holder == w.slot)
          throw SimError("owner warp stalled on its own shared lock");
      }
    }
    if (blocked) ++lock_blocked;
  }
  int empty = static_cast<int>(sm.slots.size()) - resident;
  if (resident - lock_blocked < plan_.default_count - empty)
    throw SimError("active-block guarantee violated: " + std::to_string(resident - lock_blocked) +
                   " active < " + std::to_string(plan_.default_count - empty));
}

bool Simulator::done() const { return finished_blocks_ >= total_blocks_; }

bool Simulator::step() {
  if (done()) return false;
  ++cycle_;

  for (int i = 0; i < hw_.num_sms; ++i) fill_free_slots(i);
  for (int i = 0; i < hw_.num_sms; ++i) grant_locks(i);

  for (int i = 0; i < hw_.num_sms; ++i) {
    Sm& sm = sms_[i];
    bool issued_any = false;

    for (int sc = 0; sc < static_cast<int>(sm.scheds.size()); ++sc) {
      Scheduler& sched = sm.scheds[sc];
      // Classify this scheduler's warps, then pick one per the policy.
      std::vector<int> ready;
      for (int idx : sched.warps) {
        Warp& w = sm.warps[idx];
        if (w.done) continue;
        if (w.at_barrier) {
          w.stall = StallReason::Barrier;
          continue;
        }
        const CompiledInstr& ins = instrs_[w.pc_idx];
        if (!operands_ready(w, ins)) {
          w.stall = StallReason::DataDep;
          continue;
        }
        if (wants_shared_lock(w, ins) &&
            sm.pairs[plan_.pair_of(w.slot)].holder != w.slot) {
          w.stall = StallReason::SharedLock;  // retry next cycle
          result_.lock_wait_warp_cycles++;
          continue;
        }
        w.stall = StallReason::None;
        ready.push_back(idx);
      }
      if (ready.empty()) continue;

      int pick = -1;
      switch (opt_.policy) {
        case Policy::Lrr: {
          for (int idx : ready)
            if (sm.warps[idx].dyn_id > sched.last_issued) {
              pick = idx;
              break;
            }
          if (pick < 0) pick = ready.front();
          break;
        }
        case Policy::Gto: {
          for (int idx : ready)
            if (sm.warps[idx].dyn_id == sched.last_issued) pick = idx;
          if (pick < 0) pick = ready.front();  // oldest = smallest dynamic id
          break;
        }
        case Policy::Owf:
        case Policy::Uwf: {
          int best_rank = 4;
          for (int idx : ready) {
            int rank = classify_rank(sm, sm.warps[idx]);
            if (rank < best_rank) {
              best_rank = rank;
              pick = idx;
            }
          }
          break;
        }
      }
      issue(i, sc, pick);
      sched.last_issued = sm.warps[pick].dyn_id;
      issued_any = true;
    }

    if (issued_any)
      result_.per_sm[i].busy++;
    else if (sm.any_resident())
      result_.per_sm[i].stall++;
    else
      result_.per_sm[i].idle++;
  }

  // Invariants describe the scheduling-time state, before end-of-cycle
  // releases and ownership transfers retire this cycle's stall flags.
  if (opt_.check_invariants)
    for (int i = 0; i < hw_.num_sms; ++i) assert_invariants(i);
  for (int i = 0; i < hw_.num_sms; ++i) end_of_cycle(i);
  return !done();
}

SimResult Simulator::run() {
  while (!done()) {
    if (cycle_ >= opt_.max_cycles)
      throw SimError("cycle guard exceeded after " + std::to_string(cycle_) + " cycles\n" +
                     blocked_state_dump());
    step();
  }
  result_.cycles = cycle_;
  result_.stall_cycles = 0;
  for (const auto& c : result_.per_sm) result_.stall_cycles += c.stall;
  return result_;
}

std::string Simulator::blocked_state_dump() const {
  std::ostringstream os;
  os << "cycle " << cycle_ << ", finished " << finished_blocks_ << "/" << total_blocks_ << "\n";
  for (size_t i = 0; i < sms_.size(); ++i) {
    const Sm& sm = sms_[i];
    os << "sm" << i << ":";
    for (int q = 0; q < plan_.pairs; ++q) os << " pair" << q << ".holder=" << sm.pairs[q].holder;
    os << "\n";
    for (size_t s = 0; s < sm.slots.size(); ++s) {
      const Resident& res = sm.slots[s];
      if (!res.valid) continue;
      os << "  slot" << s << " block " << res.id << (plan_.shared_slot(static_cast<int>(s)) ? " (shared)" : "")
         << "\n";
      for (int idx : res.warps) {
        const Warp& w = sm.warps[idx];
        os << "    warp " << w.dyn_id << " " << (w.done ? "done" : cblocks_[w.pc_block].label)
           << " stall=";
        switch (w.stall) {
          case StallReason::None: os << "none"; break;
          case StallReason::DataDep: os << "data-dep"; break;
          case StallReason::SharedLock: os << "shared-lock"; break;
          case StallReason::Barrier: os << "barrier"; break;
        }
        os << "\n";
      }
    }
  }
  return os.str();
}

SimResult run_kernel(const KernelCFG& cfg, const SharingPlan& layout, const BlockPlan& plan,
                     const HardwareConfig& hw, const LatencyModel& lat, const SimOptions& opt) {
  Simulator sim(cfg, layout, plan, hw, lat, opt);
  return sim.run();
}

}  // namespace scratchshare
