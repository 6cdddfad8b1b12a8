#pragma once
// Pipeline driver and machine-readable reporting: run a kernel under one of
// the experiment modes, emit versioned JSON/CSV run reports, and compare
// reports against a baseline.

#include "scratchshare/relssp.hpp"
#include "scratchshare/sim.hpp"

namespace scratchshare {

enum class Mode : uint8_t {
  UnsharedLrr,
  UnsharedGto,
  SharedNoopt,
  SharedOwf,
  SharedOwfPostdom,
  SharedOwfOpt,
};
Mode mode_from_name(const std::string& name);
const char* mode_name(Mode m);

struct RunConfig {
  HardwareConfig hw;
  Fraction t;
  LatencyModel lat;
  SimOptions sim;
  bool fill_boundary = false;
  uint64_t loop_weight = 10;
  std::optional<Policy> policy_override;        // else the mode decides
  std::optional<Placement> placement_override;  // likewise
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);  // JSON; env seed override applies
std::string run_config_json(const RunConfig& config);

struct RunReport {
  int schema = 1;
  std::string kernel;
  uint64_t hash = 0;
  std::string mode;
  std::string policy;
  std::string placement;
  BlockPlan plan;
  SimResult sim;
  uint64_t seed = 0;
  std::string config_echo;  // JSON text of the effective config

  std::string to_json() const;
  std::string csv_row() const;
  static const char* csv_header();
  static RunReport from_json(const std::string& text);
  static RunReport from_json_file(const std::string& path);
};

// Transform stage shared by the CLI and the pipeline: returns the IR the
// simulator will execute plus the layout it was placed against.
struct PreparedKernel {
  KernelCFG cfg;
  SharingPlan layout;
  std::vector<Insertion> insertions;
};
PreparedKernel prepare_kernel(const KernelCFG& cfg, const RunConfig& config, Mode mode);

RunReport run_pipeline(const std::string& kernel_path, const RunConfig& config, Mode mode);
RunReport run_pipeline_cfg(const std::string& name, const KernelCFG& cfg, const RunConfig& config,
                           Mode mode);

struct Comparison {
  struct Row {
    std::string mode;
    int blocks = 0;
    double blocks_ratio = 1.0;
    uint64_t cycles = 0;
    double speedup = 1.0;  // baseline cycles / this cycles
    uint64_t instructions = 0;
    int64_t instruction_delta = 0;
    uint64_t lock_wait = 0;
  };
  std::string kernel;
  std::vector<Row> rows;  // baseline first

  std::string to_json() const;
  std::string to_csv() const;
};

// Baseline-anchored comparison; throws when kernel hashes differ.
Comparison compare(const std::vector<RunReport>& reports);

}  // namespace scratchshare
