#include "scratchshare/report.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "scratchshare/normalize.hpp"
#include "scratchshare/parse.hpp"

using nlohmann::ordered_json;

namespace scratchshare {

Mode mode_from_name(const std::string& name) {
  if (name == "unshared-lrr") return Mode::UnsharedLrr;
  if (name == "unshared-gto") return Mode::UnsharedGto;
  if (name == "shared-noopt") return Mode::SharedNoopt;
  if (name == "shared-owf") return Mode::SharedOwf;
  if (name == "shared-owf-postdom") return Mode::SharedOwfPostdom;
  if (name == "shared-owf-opt") return Mode::SharedOwfOpt;
  throw Error("unknown mode '" + name +
              "' (unshared-lrr|unshared-gto|shared-noopt|shared-owf|shared-owf-postdom|shared-owf-"
              "opt)");
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::UnsharedLrr: return "unshared-lrr";
    case Mode::UnsharedGto: return "unshared-gto";
    case Mode::SharedNoopt: return "shared-noopt";
    case Mode::SharedOwf: return "shared-owf";
    case Mode::SharedOwfPostdom: return "shared-owf-postdom";
    case Mode::SharedOwfOpt: return "shared-owf-opt";
  }
  return "?";
}

RunConfig default_run_config() {
  RunConfig c;
  c.t = Fraction{1, 10};
  return c;
}

namespace {

Fraction fraction_from_json(const ordered_json& j) {
  if (j.is_string()) return Fraction::parse(j.get<std::string>());
  // Numbers go through the shortest round-trip decimal text.
  return Fraction::parse(j.dump());
}

void env_seed_override(RunConfig& c) {
  if (const char* env = std::getenv("SCRATCHSHARE_SEED")) {
    try {
      c.sim.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw Error("SCRATCHSHARE_SEED is not an integer: '" + std::string(env) + "'");
    }
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("config parse error in " + path + ": " + e.what());
  }

  RunConfig c = default_run_config();
  if (j.contains("hardware")) {
    const auto& h = j["hardware"];
    if (h.contains("num_sms")) c.hw.num_sms = h["num_sms"];
    if (h.contains("sms_per_cluster")) c.hw.sms_per_cluster = h["sms_per_cluster"];
    if (h.contains("scratchpad_per_sm")) c.hw.scratchpad_per_sm = h["scratchpad_per_sm"];
    if (h.contains("max_blocks_per_sm")) c.hw.max_blocks_per_sm = h["max_blocks_per_sm"];
    if (h.contains("max_threads_per_sm")) c.hw.max_threads_per_sm = h["max_threads_per_sm"];
    if (h.contains("warp_size")) c.hw.warp_size = h["warp_size"];
    if (h.contains("schedulers_per_sm")) c.hw.schedulers_per_sm = h["schedulers_per_sm"];
  }
  if (j.contains("t")) c.t = fraction_from_json(j["t"]);
  if (j.contains("latency")) {
    const auto& l = j["latency"];
    if (l.contains("add")) c.lat.add = l["add"];
    if (l.contains("mov")) c.lat.mov = l["mov"];
    if (l.contains("ld_shared")) c.lat.ld_shared = l["ld_shared"];
    if (l.contains("st_shared")) c.lat.st_shared = l["st_shared"];
    if (l.contains("ld_global")) c.lat.ld_global = l["ld_global"];
    if (l.contains("st_global")) c.lat.st_global = l["st_global"];
    if (l.contains("bar_sync")) c.lat.bar_sync = l["bar_sync"];
    if (l.contains("bra")) c.lat.bra = l["bra"];
    if (l.contains("relssp")) c.lat.relssp = l["relssp"];
    if (l.contains("exit")) c.lat.exit = l["exit"];
  }
  if (j.contains("seed")) c.sim.seed = j["seed"];
  if (j.contains("kernel_blocks")) c.sim.kernel_blocks = j["kernel_blocks"];
  if (j.contains("block_size")) c.sim.block_size = j["block_size"];
  if (j.contains("active_threads") && !j["active_threads"].is_null())
    c.sim.active_threads = j["active_threads"].get<int>();
  if (j.contains("max_cycles")) c.sim.max_cycles = j["max_cycles"];
  if (j.contains("check_invariants")) c.sim.check_invariants = j["check_invariants"];
  if (j.contains("pregrant_lock")) c.sim.pregrant_lock = j["pregrant_lock"];
  if (j.contains("branches")) {
    const auto& b = j["branches"];
    if (b.contains("mode"))
      c.sim.branches.mode = b["mode"] == "trips" ? BranchModel::Mode::Trips
                                                 : BranchModel::Mode::Random;
    if (b.contains("taken_prob")) c.sim.branches.taken_prob = b["taken_prob"];
    if (b.contains("per_warp")) c.sim.branches.per_warp = b["per_warp"];
    if (b.contains("default_trips")) c.sim.branches.default_trips = b["default_trips"];
    if (b.contains("trips"))
      for (auto it = b["trips"].begin(); it != b["trips"].end(); ++it)
        c.sim.branches.trips[it.key()] = it.value().get<uint32_t>();
  }
  if (j.contains("fill_boundary")) c.fill_boundary = j["fill_boundary"];
  if (j.contains("loop_weight")) c.loop_weight = j["loop_weight"];
  if (j.contains("policy")) c.policy_override = policy_from_name(j["policy"]);
  if (j.contains("placement")) c.placement_override = placement_from_name(j["placement"]);

  env_seed_override(c);
  return c;
}

std::string run_config_json(const RunConfig& c) {
  ordered_json j;
  j["hardware"] = {{"num_sms", c.hw.num_sms},
                   {"sms_per_cluster", c.hw.sms_per_cluster},
                   {"scratchpad_per_sm", c.hw.scratchpad_per_sm},
                   {"max_blocks_per_sm", c.hw.max_blocks_per_sm},
                   {"max_threads_per_sm", c.hw.max_threads_per_sm},
                   {"warp_size", c.hw.warp_size},
                   {"schedulers_per_sm", c.hw.schedulers_per_sm}};
  j["t"] = c.t.str();
  j["latency"] = {{"add", c.lat.add},         {"mov", c.lat.mov},
                  {"ld_shared", c.lat.ld_shared}, {"st_shared", c.lat.st_shared},
                  {"ld_global", c.lat.ld_global}, {"st_global", c.lat.st_global},
                  {"bar_sync", c.lat.bar_sync},   {"bra", c.lat.bra},
                  {"relssp", c.lat.relssp},       {"exit", c.lat.exit}};
  j["seed"] = c.sim.seed;
  j["kernel_blocks"] = c.sim.kernel_blocks;
  j["block_size"] = c.sim.block_size;
  if (c.sim.active_threads) j["active_threads"] = *c.sim.active_threads;
  j["max_cycles"] = c.sim.max_cycles;
  j["check_invariants"] = c.sim.check_invariants;
  j["pregrant_lock"] = c.sim.pregrant_lock;
  ordered_json b;
  b["mode"] = c.sim.branches.mode == BranchModel::Mode::Trips ? "trips" : "random";
  b["taken_prob"] = c.sim.branches.taken_prob;
  b["per_warp"] = c.sim.branches.per_warp;
  b["default_trips"] = c.sim.branches.default_trips;
  ordered_json trips = ordered_json::object();
  for (const auto& [label, k] : c.sim.branches.trips) trips[label] = k;
  b["trips"] = trips;
  j["branches"] = b;
  j["fill_boundary"] = c.fill_boundary;
  j["loop_weight"] = c.loop_weight;
  if (c.policy_override) j["policy"] = policy_name(*c.policy_override);
  if (c.placement_override) j["placement"] = placement_name(*c.placement_override);
  return j.dump();
}

namespace {

Policy mode_policy(Mode m) {
  switch (m) {
    case Mode::UnsharedLrr:
    case Mode::SharedNoopt: return Policy::Lrr;
    case Mode::UnsharedGto: return Policy::Gto;
    default: return Policy::Owf;
  }
}

Placement mode_placement(Mode m) {
  switch (m) {
    case Mode::SharedOwfPostdom: return Placement::Postdom;
    case Mode::SharedOwfOpt: return Placement::Opt;
    default: return Placement::None;
  }
}

bool mode_shares(Mode m) { return m != Mode::UnsharedLrr && m != Mode::UnsharedGto; }

// Fill mode widens each pair's private region; shared variables move up so
// layout and address classification stay in agreement.
void apply_fill(SharingPlan& layout, const BlockPlan& plan, const KernelCFG& cfg) {
  if (plan.boundary_bytes <= layout.boundary_bytes) return;
  uint64_t delta = plan.boundary_bytes - layout.boundary_bytes;
  for (size_t v = 0; v < cfg.vars.size(); ++v)
    if (layout.shared(static_cast<int>(v))) layout.var_offset[v] += delta;
  layout.boundary_bytes = plan.boundary_bytes;
  layout.address_space += delta;
}

}  // namespace

PreparedKernel prepare_kernel(const KernelCFG& cfg, const RunConfig& config, Mode mode) {
  PreparedKernel out;
  uint64_t r_tb = cfg.scratchpad_demand();
  SharingConfig scfg = SharingConfig::make(config.hw.scratchpad_per_sm, r_tb, config.t);

  if (!mode_shares(mode)) {
    out.cfg = cfg;
    SharingConfig all_private = scfg;
    all_private.boundary_bytes = r_tb;
    out.layout = layout_declaration_order(cfg, all_private);
    return out;
  }

  Placement strategy = config.placement_override.value_or(mode_placement(mode));
  if (mode == Mode::SharedNoopt || mode == Mode::SharedOwf) strategy = Placement::None;

  if (strategy == Placement::None) {
    // No IR transform and no reordering: declaration-order layout.
    out.cfg = cfg;
    out.layout = layout_declaration_order(cfg, scfg);
    return out;
  }

  AccessFacts facts = compute_access_facts(cfg);
  out.layout = select_shared_set(cfg, facts, scfg, config.loop_weight);
  PlacementResult placed = place_relssp(cfg, out.layout, strategy);
  out.cfg = std::move(placed.cfg);
  out.insertions = std::move(placed.insertions);
  return out;
}

RunReport run_pipeline_cfg(const std::string& name, const KernelCFG& cfg, const RunConfig& config,
                           Mode mode) {
  PreparedKernel prep = prepare_kernel(cfg, config, mode);
  uint64_t r_tb = cfg.scratchpad_demand();
  SharingConfig scfg = SharingConfig::make(config.hw.scratchpad_per_sm, r_tb, config.t);

  BlockPlan plan = mode_shares(mode)
                       ? compute_block_plan(config.hw, scfg, config.sim.block_size,
                                            config.fill_boundary)
                       : unshared_block_plan(config.hw, r_tb, config.sim.block_size);
  if (mode_shares(mode)) apply_fill(prep.layout, plan, prep.cfg);

  SimOptions opt = config.sim;
  opt.policy = config.policy_override.value_or(mode_policy(mode));

  SimResult sim = run_kernel(prep.cfg, prep.layout, plan, config.hw, config.lat, opt);

  RunReport rep;
  rep.kernel = name;
  rep.hash = kernel_hash(cfg);  // hash of the untransformed kernel
  rep.mode = mode_name(mode);
  rep.policy = policy_name(opt.policy);
  Placement strategy = config.placement_override.value_or(mode_placement(mode));
  if (mode == Mode::SharedNoopt || mode == Mode::SharedOwf || !mode_shares(mode))
    strategy = Placement::None;
  rep.placement = placement_name(strategy);
  rep.plan = plan;
  rep.sim = std::move(sim);
  rep.seed = opt.seed;
  rep.config_echo = run_config_json(config);
  return rep;
}

RunReport run_pipeline(const std::string& kernel_path, const RunConfig& config, Mode mode) {
  KernelCFG cfg;
  try {
    cfg = parse_kernel_file(kernel_path);
  } catch (const Error& e) {
    throw Error("[parse] " + std::string(e.what()));
  }
  try {
    return run_pipeline_cfg(kernel_path, cfg, config, mode);
  } catch (const SimError& e) {
    throw Error("[sim] " + std::string(e.what()));
  } catch (const Error& e) {
    throw Error("[pipeline] " + std::string(e.what()));
  }
}

std::string RunReport::to_json() const {
  ordered_json j;
  j["schema"] = schema;
  j["kernel"] = kernel;
  j["kernel_hash"] = hash;
  j["mode"] = mode;
  j["policy"] = policy;
  j["placement"] = placement;
  j["seed"] = seed;
  j["plan"] = {{"default_blocks", plan.default_count},
               {"pairs", plan.pairs},
               {"unshared", plan.unshared},
               {"total", plan.total()},
               {"r_tb", plan.r_tb},
               {"boundary", plan.boundary_bytes}};
  j["cycles"] = sim.cycles;
  j["ipc"] = {{"num", sim.executed_total()}, {"den", sim.cycles}};
  j["ipc_value"] = sim.cycles == 0 ? 0.0
                                   : static_cast<double>(sim.executed_total()) /
                                         static_cast<double>(sim.cycles);
  j["stall_cycles"] = sim.stall_cycles;
  j["executed"] = {{"user", sim.executed_user},
                   {"relssp", sim.executed_relssp},
                   {"goto", sim.executed_goto},
                   {"total", sim.executed_total()}};
  j["issued_warp_instructions"] = sim.issued_warp_instrs;
  j["lock_wait_warp_cycles"] = sim.lock_wait_warp_cycles;
  j["unlock_events"] = sim.unlock_events;
  uint64_t phase_total = sim.phase_pre + sim.phase_shared + sim.phase_post;
  j["shared_block_phases"] = {
      {"pre", sim.phase_pre},
      {"shared", sim.phase_shared},
      {"post", sim.phase_post},
      {"pre_pct", phase_total ? 100.0 * sim.phase_pre / phase_total : 0.0},
      {"shared_pct", phase_total ? 100.0 * sim.phase_shared / phase_total : 0.0},
      {"post_pct", phase_total ? 100.0 * sim.phase_post / phase_total : 0.0}};
  ordered_json sms = ordered_json::array();
  for (const auto& c : sim.per_sm)
    sms.push_back({{"busy", c.busy}, {"stall", c.stall}, {"idle", c.idle}});
  j["per_sm"] = sms;
  j["config"] = ordered_json::parse(config_echo);
  return j.dump(2);
}

const char* RunReport::csv_header() {
  return "kernel,mode,blocks,cycles,ipc_num,ipc_den,stalls,instr_user,instr_relssp,instr_goto";
}

std::string RunReport::csv_row() const {
  std::ostringstream os;
  os << kernel << "," << mode << "," << plan.total() << "," << sim.cycles << ","
     << sim.executed_total() << "," << sim.cycles << "," << sim.stall_cycles << ","
     << sim.executed_user << "," << sim.executed_relssp << "," << sim.executed_goto;
  return os.str();
}

RunReport RunReport::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  RunReport r;
  r.schema = j.value("schema", 1);
  if (r.schema != 1) throw Error("unsupported report schema " + std::to_string(r.schema));
  r.kernel = j.value("kernel", "");
  r.hash = j.value("kernel_hash", 0ull);
  r.mode = j.value("mode", "");
  r.policy = j.value("policy", "");
  r.placement = j.value("placement", "");
  r.seed = j.value("seed", 0ull);
  if (j.contains("plan")) {
    r.plan.default_count = j["plan"].value("default_blocks", 0);
    r.plan.pairs = j["plan"].value("pairs", 0);
    r.plan.unshared = j["plan"].value("unshared", 0);
    r.plan.r_tb = j["plan"].value("r_tb", 0ull);
    r.plan.boundary_bytes = j["plan"].value("boundary", 0ull);
  }
  r.sim.cycles = j.value("cycles", 0ull);
  r.sim.stall_cycles = j.value("stall_cycles", 0ull);
  if (j.contains("executed")) {
    r.sim.executed_user = j["executed"].value("user", 0ull);
    r.sim.executed_relssp = j["executed"].value("relssp", 0ull);
    r.sim.executed_goto = j["executed"].value("goto", 0ull);
  }
  r.sim.lock_wait_warp_cycles = j.value("lock_wait_warp_cycles", 0ull);
  r.sim.unlock_events = j.value("unlock_events", 0ull);
  if (j.contains("config")) r.config_echo = j["config"].dump();
  return r;
}

RunReport RunReport::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

Comparison compare(const std::vector<RunReport>& reports) {
  if (reports.size() < 2) throw Error("compare needs at least two reports");
  const RunReport& base = reports.front();
  for (const auto& r : reports)
    if (r.hash != base.hash)
      throw Error("report '" + r.mode + "' was produced from a different kernel (hash mismatch)");

  Comparison cmp;
  cmp.kernel = base.kernel;
  for (const auto& r : reports) {
    Comparison::Row row;
    row.mode = r.mode;
    row.blocks = r.plan.total();
    row.blocks_ratio = base.plan.total() ? static_cast<double>(r.plan.total()) / base.plan.total()
                                         : 0.0;
    row.cycles = r.sim.cycles;
    row.speedup = r.sim.cycles ? static_cast<double>(base.sim.cycles) / r.sim.cycles : 0.0;
    row.instructions = r.sim.executed_total();
    row.instruction_delta = static_cast<int64_t>(r.sim.executed_total()) -
                            static_cast<int64_t>(base.sim.executed_total());
    row.lock_wait = r.sim.lock_wait_warp_cycles;
    cmp.rows.push_back(row);
  }
  return cmp;
}

std::string Comparison::to_json() const {
  ordered_json j;
  j["kernel"] = kernel;
  ordered_json rows_json = ordered_json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"mode", r.mode},
                         {"blocks", r.blocks},
                         {"blocks_ratio", r.blocks_ratio},
                         {"cycles", r.cycles},
                         {"speedup", r.speedup},
                         {"instructions", r.instructions},
                         {"instruction_delta", r.instruction_delta},
                         {"lock_wait_warp_cycles", r.lock_wait}});
  j["rows"] = rows_json;
  return j.dump(2);
}

std::string Comparison::to_csv() const {
  std::ostringstream os;
  os << "kernel,mode,blocks,blocks_ratio,cycles,speedup,instructions,instruction_delta,lock_wait\n";
  for (const auto& r : rows)
    os << kernel << "," << r.mode << "," << r.blocks << "," << r.blocks_ratio << "," << r.cycles
       << "," << r.speedup << "," << r.instructions << "," << r.instruction_delta << ","
       << r.lock_wait << "\n";
  return os.str();
}

}  // namespace scratchshare
