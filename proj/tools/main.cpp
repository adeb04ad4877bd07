// wml: scenario runner and operator export.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "wml/geometry.hpp"
#include "wml/runner.hpp"

namespace {

using namespace wml;

struct RunFlags {
  std::string config;
  std::map<std::string, std::string> values;
  bool override_resolution = false;
};

void add_config_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "flat key = value file; flags take precedence");
  for (const char* name : {"scenario", "bc", "T", "h", "C0", "k", "seed", "out", "format"}) {
    std::string flag = std::string("--") + name;
    cmd->add_option(flag, f.values[name]);
  }
  cmd->add_flag("--override-resolution-contract", f.override_resolution,
                "allow h·sqrt(max T) > 0.5 with a warning");
}

runner::RunConfig resolve(CLI::App* cmd, const RunFlags& f) {
  runner::RunConfig cfg;
  if (!f.config.empty()) runner::load_config_file(f.config, cfg);
  for (const auto& [name, value] : f.values)
    if (cmd->count(std::string("--") + name) > 0) runner::apply_setting(cfg, name, value);
  if (f.override_resolution) cfg.override_resolution = true;
  return cfg;
}

std::ostream* open_output(const std::string& path, std::ofstream& file) {
  if (path.empty()) return &std::cout;
  file.open(path);
  require(static_cast<bool>(file), ErrorKind::Io, "cannot write '" + path + "'");
  return &file;
}

int cmd_run(CLI::App* cmd, const RunFlags& f) {
  runner::RunConfig cfg = resolve(cmd, f);
  const runner::RunReport rep = runner::run(cfg);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  runner::emit(rep, std::cout);
  for (const auto& c : rep.checks)
    std::cerr << (c.pass ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  " + c.detail) << '\n';
  for (const auto& t : rep.timings) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "time %-12s %.3f s\n", t.stage.c_str(), t.seconds);
    std::cerr << buf;
  }
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Witten deformation experiments on planar surfaces"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run a scenario and emit its report");
  add_config_flags(run, run_flags);

  std::string filter;
  auto* list = app.add_subcommand("list", "list registered scenarios");
  list->alias("list_scenarios");
  list->add_option("filter", filter, "substring of the scenario name");

  RunFlags op_flags;
  double op_T = 0.0;
  int op_degree = 0;
  std::string op_what = "d";
  auto* op = app.add_subcommand("export-operator", "write d_T, M_k or A_k(T) as (row, col, value) triplets");
  add_config_flags(op, op_flags);
  op->add_option("--degree", op_degree, "form degree");
  op->add_option("--what", op_what, "d, mass or laplacian");
  op->add_option("--at", op_T, "T of the exported operator");

  RunFlags cx_flags;
  auto* cx = app.add_subcommand("export-complex", "write the Thom-Smale complex as JSON");
  add_config_flags(cx, cx_flags);

  RunFlags mesh_flags;
  auto* mesh = app.add_subcommand("export-mesh", "write the scenario mesh in OFF format");
  add_config_flags(mesh, mesh_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    runner::apply_thread_limit();
    if (run->parsed()) return cmd_run(run, run_flags);
    if (list->parsed()) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto* s : runner::list_scenarios(filter)) out.push_back(runner::to_json(*s));
      std::cout << out.dump(2) << '\n';
      return 0;
    }
    if (op->parsed()) {
      const runner::RunConfig cfg = resolve(op, op_flags);
      std::ofstream file;
      runner::export_operator(cfg, op_T, op_degree, runner::parse_operator(op_what), *open_output(cfg.out, file));
      return 0;
    }
    if (cx->parsed()) {
      runner::RunConfig cfg = resolve(cx, cx_flags);
      runner::validate(cfg);
      const runner::Pipeline pl = runner::prepare(cfg);
      std::ofstream file;
      *open_output(cfg.out, file) << runner::to_json(pl.complex).dump(2) << '\n';
      return 0;
    }
    if (mesh->parsed()) {
      runner::RunConfig cfg = resolve(mesh, mesh_flags);
      runner::validate(cfg);
      const runner::Pipeline pl = runner::prepare(cfg, false);
      std::ofstream file;
      geometry::write_off(pl.mesh, *open_output(cfg.out, file));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runner::exit_code(e);
  }
  return 2;
}
