#include "scratchshare/alloc.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace scratchshare {

Fraction Fraction::parse(const std::string& text) {
  auto fail = [&text]() -> Fraction {
    throw Error("threshold must be a fraction in (0,1), e.g. \"0.1\" or \"1/10\": got '" + text +
                "'");
  };
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) return fail();

  uint64_t num = 0, den = 0;
  size_t slash = s.find('/');
  size_t dot = s.find('.');
  auto digits = [&fail](const std::string& d) {
    if (d.empty()) fail();
    uint64_t v = 0;
    for (char c : d) {
      if (!std::isdigit(static_cast<unsigned char>(c))) fail();
      if (v > UINT64_MAX / 10) fail();
      v = v * 10 + static_cast<uint64_t>(c - '0');
    }
    return v;
  };
  if (slash != std::string::npos) {
    num = digits(s.substr(0, slash));
    den = digits(s.substr(slash + 1));
  } else if (dot != std::string::npos) {
    std::string whole = s.substr(0, dot), frac = s.substr(dot + 1);
    if (whole.empty()) whole = "0";
    if (frac.size() > 18) fail();
    den = 1;
    for (size_t i = 0; i < frac.size(); ++i) den *= 10;
    num = digits(whole) * den + digits(frac);
  } else {
    fail();
  }
  if (den == 0 || num == 0 || num >= den) fail();
  uint64_t g = std::gcd(num, den);
  return Fraction{num / g, den / g};
}

uint64_t Fraction::floor_mul(uint64_t x) const {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(num) * x) / den);
}

SharingConfig SharingConfig::make(uint64_t r, uint64_t r_tb, Fraction t) {
  if (t.num == 0 || t.num >= t.den) throw Error("threshold t must satisfy 0 < t < 1");
  SharingConfig c;
  c.sm_scratchpad_bytes = r;
  c.block_demand_bytes = r_tb;
  c.threshold = t;
  c.boundary_bytes = t.floor_mul(r_tb);
  return c;
}

Region classify_address(uint64_t addr, const SharingConfig& config) {
  if (addr >= config.block_demand_bytes)
    throw Error("scratchpad address " + std::to_string(addr) + " out of range (R_tb=" +
                std::to_string(config.block_demand_bytes) + ")");
  return addr < config.boundary_bytes ? Region::Unshared : Region::Shared;
}

uint64_t SharingPlan::resolve(const KernelCFG& cfg, const SharedOperand& mem) const {
  int v = cfg.var_index(mem.var);
  if (v < 0) throw Error("unknown scratchpad variable '" + mem.var + "'");
  return var_offset[v] + mem.offset;
}

namespace {

std::string set_key(const KernelCFG& cfg, VarMask set) {
  std::vector<std::string> ids;
  for (size_t v = 0; v < cfg.vars.size(); ++v)
    if ((set >> v) & 1) ids.push_back(cfg.vars[v].id);
  std::sort(ids.begin(), ids.end());
  std::string key;
  for (const auto& id : ids) key += id + ",";
  return key;
}

void pack_offsets(const KernelCFG& cfg, SharingPlan& plan, uint64_t boundary) {
  uint64_t lo = 0, hi = boundary;
  plan.var_offset.assign(cfg.vars.size(), 0);
  for (size_t v = 0; v < cfg.vars.size(); ++v) {
    if (plan.shared(static_cast<int>(v))) {
      plan.var_offset[v] = hi;
      hi += cfg.vars[v].size_bytes;
    } else {
      plan.var_offset[v] = lo;
      lo += cfg.vars[v].size_bytes;
    }
  }
  if (lo > boundary) throw Error("unshared variables overflow the boundary");
}

}  // namespace

SharingPlan select_shared_set(const KernelCFG& cfg, const AccessFacts& facts,
                              const SharingConfig& config, uint64_t loop_weight) {
  const size_t n = cfg.vars.size();
  if (n > 16)
    throw Error("subset selection refuses kernels with more than 16 scratchpad variables (got " +
                std::to_string(n) + ")");
  if (cfg.scratchpad_demand() != config.block_demand_bytes)
    throw Error("sharing config R_tb does not match the kernel's variable sizes");

  const uint64_t shared_cap = config.shared_capacity();
  const uint64_t unshared_cap = config.unshared_capacity();

  SharingPlan plan;
  plan.boundary_bytes = config.boundary_bytes;
  plan.address_space = config.block_demand_bytes;

  bool found = false;
  uint64_t best_count = 0;
  int best_size = 0;
  std::string best_key;
  uint64_t nearest_shared_gap = UINT64_MAX, nearest_unshared_gap = UINT64_MAX;

  const VarMask all = n == 64 ? ~VarMask{0} : ((VarMask{1} << n) - 1);
  for (VarMask set = 0;; ++set) {
    uint64_t shared_size = 0;
    for (size_t v = 0; v < n; ++v)
      if ((set >> v) & 1) shared_size += cfg.vars[v].size_bytes;
    uint64_t unshared_size = config.block_demand_bytes - shared_size;

    SubsetAudit audit;
    audit.set = set;
    audit.feasible = shared_size <= shared_cap && unshared_size <= unshared_cap;
    if (shared_size > shared_cap) nearest_shared_gap = std::min(nearest_shared_gap, shared_size - shared_cap);
    if (unshared_size > unshared_cap)
      nearest_unshared_gap = std::min(nearest_unshared_gap, unshared_size - unshared_cap);
    audit.weighted_count =
        set == 0 ? 0 : access_range_of_set(cfg, facts, set, loop_weight).weighted_count;
    plan.audit.push_back(audit);

    if (audit.feasible) {
      int size = std::popcount(set);
      std::string key = set_key(cfg, set);
      bool better = !found || audit.weighted_count < best_count ||
                    (audit.weighted_count == best_count &&
                     (size < best_size || (size == best_size && key < best_key)));
      if (better) {
        found = true;
        plan.shared_set = set;
        best_count = audit.weighted_count;
        best_size = size;
        best_key = std::move(key);
      }
    }
    if (set == all) break;
  }

  if (!found) {
    std::ostringstream os;
    os << "infeasible packing: no variable subset fits shared capacity " << shared_cap
       << " with complement within unshared capacity " << unshared_cap << "; tightest constraint is "
       << (nearest_unshared_gap <= nearest_shared_gap ? "the unshared region (short by " +
                                                            std::to_string(nearest_unshared_gap) +
                                                            " bytes)"
                                                      : "the shared region (short by " +
                                                            std::to_string(nearest_shared_gap) +
                                                            " bytes)");
    throw Error(os.str());
  }

  plan.weighted_count = best_count;
  pack_offsets(cfg, plan, config.boundary_bytes);
  return plan;
}

SharingPlan layout_declaration_order(const KernelCFG& cfg, const SharingConfig& config) {
  SharingPlan plan;
  plan.boundary_bytes = config.boundary_bytes;
  plan.address_space = config.block_demand_bytes;
  plan.var_offset.assign(cfg.vars.size(), 0);
  uint64_t at = 0;
  for (size_t v = 0; v < cfg.vars.size(); ++v) {
    plan.var_offset[v] = at;
    if (at >= config.boundary_bytes) plan.shared_set |= var_bit(static_cast<int>(v));
    at += cfg.vars[v].size_bytes;
  }
  return plan;
}

std::string plan_json(const KernelCFG& cfg, const SharingPlan& plan) {
  nlohmann::ordered_json j;
  j["boundary"] = plan.boundary_bytes;
  j["address_space"] = plan.address_space;
  j["weighted_count"] = plan.weighted_count;
  nlohmann::ordered_json shared = nlohmann::ordered_json::array();
  for (size_t v = 0; v < cfg.vars.size(); ++v)
    if (plan.shared(static_cast<int>(v))) shared.push_back(cfg.vars[v].id);
  j["shared_set"] = shared;
  for (size_t v = 0; v < cfg.vars.size(); ++v) j["offsets"][cfg.vars[v].id] = plan.var_offset[v];
  nlohmann::ordered_json audit = nlohmann::ordered_json::array();
  for (const auto& a : plan.audit) {
    nlohmann::ordered_json row;
    nlohmann::ordered_json ids = nlohmann::ordered_json::array();
    for (size_t v = 0; v < cfg.vars.size(); ++v)
      if ((a.set >> v) & 1) ids.push_back(cfg.vars[v].id);
    row["set"] = ids;
    row["feasible"] = a.feasible;
    row["weighted_count"] = a.weighted_count;
    audit.push_back(row);
  }
  j["subsets"] = audit;
  return j.dump(2);
}

}  // namespace scratchshare
