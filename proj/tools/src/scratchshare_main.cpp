// scratchshare: analyze, transform, simulate and compare scratchpad-sharing
// kernels written in the mini-IR.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "scratchshare/normalize.hpp"
#include "scratchshare/parse.hpp"
#include "scratchshare/report.hpp"

namespace ss = scratchshare;

namespace {

ss::RunConfig load_config_opt(const std::string& path) {
  return path.empty() ? ss::default_run_config() : ss::load_run_config(path);
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw ss::Error("cannot write " + path);
  out << text;
}

// "--sets A+B,B+C" -> labelled variable masks; labels concatenate the ids.
std::vector<std::pair<std::string, ss::VarMask>> parse_sets(const ss::KernelCFG& cfg,
                                                            const std::string& spec) {
  std::vector<std::pair<std::string, ss::VarMask>> sets;
  std::string item;
  std::istringstream in(spec);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::vector<std::string> ids;
    std::string id;
    std::istringstream parts(item);
    while (std::getline(parts, id, '+'))
      if (!id.empty()) ids.push_back(id);
    std::string label;
    for (const auto& x : ids) label += x;
    sets.emplace_back(label, ss::mask_of(cfg, ids));
  }
  return sets;
}

int cmd_analyze(const std::string& kernel, const std::string& config_path,
                const std::string& sets_spec, const std::string& out_json) {
  ss::RunConfig config = load_config_opt(config_path);
  ss::KernelCFG cfg = ss::parse_kernel_file(kernel);
  ss::KernelCFG normal = ss::normalize(cfg);
  ss::AccessFacts facts = ss::compute_access_facts(normal);

  auto sets = parse_sets(normal, sets_spec);
  std::cout << ss::access_table(normal, facts, sets);

  ss::SharingConfig scfg =
      ss::SharingConfig::make(config.hw.scratchpad_per_sm, cfg.scratchpad_demand(), config.t);
  ss::SharingPlan plan = ss::select_shared_set(normal, facts, scfg, config.loop_weight);
  std::string plan_text = ss::plan_json(normal, plan);
  write_or_print(out_json, plan_text);
  return 0;
}

int cmd_transform(const std::string& kernel, const std::string& config_path,
                  const std::string& placement, const std::string& out_path) {
  ss::RunConfig config = load_config_opt(config_path);
  config.placement_override = ss::placement_from_name(placement);
  ss::KernelCFG cfg = ss::parse_kernel_file(kernel);

  ss::Mode mode = ss::Mode::SharedOwfOpt;  // transform modes share the same prep path
  if (*config.placement_override == ss::Placement::None) mode = ss::Mode::SharedOwf;
  ss::PreparedKernel prep = ss::prepare_kernel(cfg, config, mode);

  for (const auto& ins : prep.insertions)
    std::cerr << "relssp @ " << (ins.at_in ? "IN" : "OUT") << "(" << ins.block << ")\n";
  write_or_print(out_path, ss::pretty_print(prep.cfg));
  return 0;
}

int cmd_sim(const std::string& kernel, const std::string& config_path, const std::string& mode,
            const std::string& out_path, bool csv) {
  ss::RunConfig config = load_config_opt(config_path);
  ss::RunReport rep = ss::run_pipeline(kernel, config, ss::mode_from_name(mode));
  if (csv) {
    std::cout << ss::RunReport::csv_header() << "\n" << rep.csv_row() << "\n";
    if (!out_path.empty()) write_or_print(out_path, rep.to_json());
  } else {
    write_or_print(out_path, rep.to_json());
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& out_csv,
                const std::string& out_json) {
  std::vector<ss::RunReport> reports;
  for (const auto& f : files) reports.push_back(ss::RunReport::from_json_file(f));
  ss::Comparison cmp = ss::compare(reports);
  std::cout << cmp.to_csv();
  if (!out_csv.empty()) write_or_print(out_csv, cmp.to_csv());
  if (!out_json.empty()) write_or_print(out_json, cmp.to_json());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scratchpad sharing compiler pipeline and SM simulator"};
  app.require_subcommand(1);

  std::string kernel, config_path, sets_spec, out_path, mode, placement = "opt";
  std::vector<std::string> files;
  std::string out_csv, out_json;
  bool csv = false;

  auto* analyze = app.add_subcommand("analyze", "dump access-range table and sharing plan");
  analyze->add_option("kernel", kernel)->required();
  analyze->add_option("--config", config_path);
  analyze->add_option("--sets", sets_spec, "extra set columns, e.g. A+B,B+C,C+A");
  analyze->add_option("--json", out_path, "write the plan JSON here");

  auto* transform = app.add_subcommand("transform", "emit IR with relssp inserted");
  transform->add_option("kernel", kernel)->required();
  transform->add_option("--config", config_path);
  transform->add_option("--placement", placement)->check(CLI::IsMember({"opt", "postdom", "exit", "none"}));
  transform->add_option("-o,--out", out_path);

  auto* sim = app.add_subcommand("sim", "run the cycle-level simulation");
  sim->add_option("kernel", kernel)->required();
  sim->add_option("--mode", mode)->required()->check(CLI::IsMember(
      {"unshared-lrr", "unshared-gto", "shared-noopt", "shared-owf", "shared-owf-postdom",
       "shared-owf-opt"}));
  sim->add_option("--config", config_path);
  sim->add_option("-o,--out", out_path, "write the report JSON here");
  sim->add_flag("--csv", csv, "print the pinned CSV row");

  auto* comp = app.add_subcommand("compare", "compare run reports against the first");
  comp->add_option("reports", files)->required()->expected(-2);
  comp->add_option("--csv", out_csv);
  comp->add_option("--json", out_json);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) return cmd_analyze(kernel, config_path, sets_spec, out_path);
    if (*transform) return cmd_transform(kernel, config_path, placement, out_path);
    if (*sim) return cmd_sim(kernel, config_path, mode, out_path, csv);
    if (*comp) return cmd_compare(files, out_csv, out_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
