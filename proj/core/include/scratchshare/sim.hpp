#pragma once
// Cycle-level SM model: in-order scoreboarded warps over the mini-IR, the
// shared-region access mechanism with FCFS locks and relssp release units,
// block replacement with status inheritance, and pluggable warp schedulers.

#include <map>
#include <optional>
#include <random>

#include "scratchshare/launch.hpp"

namespace scratchshare {

enum class Policy : uint8_t { Lrr, Gto, Owf, Uwf };
Policy policy_from_name(const std::string& name);
const char* policy_name(Policy p);

struct LatencyModel {
  uint32_t add = 1, mov = 1;
  uint32_t ld_shared = 1, st_shared = 1;
  uint32_t ld_global = 400, st_global = 400;
  uint32_t bar_sync = 1, bra = 1, relssp = 1, exit = 1;

  uint32_t of(Opcode op) const;
};

// How bra.cond resolves. Random mode draws per warp from a seeded stream;
// trips mode runs each loop header a fixed number of iterations. Streams are
// per-block unless per_warp is set, so barrier kernels stay convergent.
struct BranchModel {
  enum class Mode : uint8_t { Random, Trips } mode = Mode::Random;
  double taken_prob = 0.5;
  bool per_warp = false;
  std::map<std::string, uint32_t> trips;  // block label -> taken count
  uint32_t default_trips = 1;
};

struct SimOptions {
  Policy policy = Policy::Owf;
  uint64_t seed = 1;
  int64_t kernel_blocks = 1;
  int block_size = 32;
  std::optional<int> active_threads;  // per block; default block_size
  BranchModel branches;
  uint64_t max_cycles = 10'000'000;
  bool check_invariants = false;
  bool record_issues = false;
  // Start each pair with its lock already granted to the original slot
  // (owner-from-launch scenarios).
  bool pregrant_lock = false;
};

enum class StallReason : uint8_t { None, DataDep, SharedLock, Barrier };

struct BlockTrace {
  int64_t block_id = -1;
  int sm = 0;
  int slot = 0;
  bool shared_slot = false;
  uint64_t launch_cycle = 0;
  uint64_t acquire_cycle = 0;  // first granted shared-region access
  uint64_t release_cycle = 0;  // relssp unlock, else finish
  uint64_t finish_cycle = 0;
  bool acquired = false;
  bool released_by_relssp = false;
};

struct SmCounters {
  uint64_t busy = 0;   // cycles with at least one issue
  uint64_t stall = 0;  // cycles with residents but no issue
  uint64_t idle = 0;   // cycles with nothing resident
};

struct IssueEvent {
  uint64_t cycle;
  int sm;
  int scheduler;
  int64_t dyn_warp;
  int64_t block_id;
  Opcode op;
};

struct SimResult {
  uint64_t cycles = 0;
  std::vector<SmCounters> per_sm;
  uint64_t executed_user = 0;  // thread-level counts
  uint64_t executed_relssp = 0;
  uint64_t executed_goto = 0;
  uint64_t issued_warp_instrs = 0;
  uint64_t stall_cycles = 0;           // sum of per-SM stalls
  uint64_t lock_wait_warp_cycles = 0;  // warp-cycles denied on the shared lock
  uint64_t unlock_events = 0;          // relssp-driven unlocks
  uint64_t phase_pre = 0, phase_shared = 0, phase_post = 0;  // shared blocks only
  std::vector<BlockTrace> blocks;
  std::vector<IssueEvent> issues;  // only when record_issues is set

  uint64_t executed_total() const { return executed_user + executed_relssp + executed_goto; }
};

struct SimError : Error {
  using Error::Error;
};

class Simulator {
 public:
  Simulator(const KernelCFG& cfg, const SharingPlan& layout, const BlockPlan& plan,
            const HardwareConfig& hw, const LatencyModel& lat, const SimOptions& opt);

  bool step();      // advance one cycle; false once all blocks finished
  SimResult run();  // step to completion or throw SimError past max_cycles

  uint64_t cycle() const { return cycle_; }
  bool done() const;
  std::string blocked_state_dump() const;

 private:
  struct CompiledInstr {
    Opcode op = Opcode::Exit;
    InstrTag tag = InstrTag::User;
    int dest = -1, src0 = -1, src1 = -1;
    int64_t shared_addr = -1;
    int target0 = -1, target1 = -1;
    uint32_t latency = 1;
  };
  struct CompiledBlock {
    int first = 0, count = 0;
    int fallthrough = -1;
    std::string label;
  };

  struct Warp {
    int64_t dyn_id = 0;
    int slot = 0;
    int index_in_block = 0;
    int scheduler = 0;
    uint32_t active_mask = 0;
    int pc_block = 0;
    int pc_idx = 0;  // index into the flat instruction array
    bool done = false;
    bool at_barrier = false;
    StallReason stall = StallReason::None;
    uint64_t max_completion = 0;
    std::vector<uint64_t> reg_ready;
    std::mt19937_64 rng;
    std::vector<uint32_t> site_count;  // per block: bra.cond executions
  };

  struct Resident {
    bool valid = false;
    int64_t id = -1;
    std::vector<int> warps;
    int live_warps = 0;
    // release unit
    std::vector<uint32_t> r_bits;  // per warp-in-block
    bool relssp_fired = false;
    // phase bookkeeping
    uint64_t launch_cycle = 0;
    bool acquired = false;
    uint64_t acquire_cycle = 0;
    bool released = false;
    uint64_t release_cycle = 0;
    bool released_by_relssp = false;
  };

  struct Pair {
    int holder = -1;  // slot index, -1 free
    uint64_t waiting_since[2] = {0, 0};
    bool waiting[2] = {false, false};
  };

  struct Scheduler {
    std::vector<int> warps;  // indices into sm.warps, ascending dyn order
    int64_t last_issued = -1;
  };

  struct Sm {
    std::vector<Resident> slots;
    std::vector<Pair> pairs;
    std::vector<Warp> warps;
    std::vector<Scheduler> scheds;
    std::vector<int64_t> initial;  // launch ids per slot for cycle 1
    int64_t next_dyn = 0;
    bool any_resident() const;
  };

  void compile(const KernelCFG& cfg, const SharingPlan& layout);
  void launch_block(int sm, int slot, int64_t id);
  void fill_free_slots(int sm);
  void grant_locks(int sm);
  int classify_rank(const Sm& sm, const Warp& w) const;
  bool operands_ready(const Warp& w, const CompiledInstr& ins) const;
  bool wants_shared_lock(const Warp& w, const CompiledInstr& ins) const;
  void issue(int sm_id, int sched_id, int warp_id);
  bool branch_taken(Warp& w, int block);
  void advance_pc(Warp& w, const CompiledInstr& ins, int sm_id);
  void finish_warp(Sm& sm, Warp& w);
  void release_unit_update(int sm_id, int slot, Warp& w);
  void end_of_cycle(int sm_id);
  void finish_block(int sm_id, int slot);
  void assert_invariants(int sm_id) const;

  // compiled kernel
  std::vector<CompiledInstr> instrs_;
  std::vector<CompiledBlock> cblocks_;
  int entry_block_ = 0;
  int num_regs_ = 1;
  int warps_per_block_ = 0;
  int active_threads_ = 0;

  BlockPlan plan_;
  HardwareConfig hw_;
  LatencyModel lat_;
  SimOptions opt_;
  uint64_t boundary_ = 0;

  std::vector<Sm> sms_;
  std::vector<int64_t> pending_;
  size_t pending_next_ = 0;
  int64_t total_blocks_ = 0;
  int64_t finished_blocks_ = 0;
  uint64_t cycle_ = 0;
  std::vector<bool> pending_unlock_;  // per (sm, pair), processed end of cycle

  SimResult result_;
};

SimResult run_kernel(const KernelCFG& cfg, const SharingPlan& layout, const BlockPlan& plan,
                     const HardwareConfig& hw, const LatencyModel& lat, const SimOptions& opt);

}  // namespace scratchshare
