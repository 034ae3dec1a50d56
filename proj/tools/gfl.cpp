#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gfl/report.hpp"

namespace {

constexpr const char* kVersion = "gammaflow 1.0.0";

// Exit codes: 0 all checks pass, 1 a check failed, 2 usage / config error,
// 3 numerical failure.
enum ExitCode { kPass = 0, kCheckFail = 1, kUsage = 2, kNumerical = 3 };

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string format = "csv";
  int jobs = 1;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path,
                            "scenario config (json)");
  if (needs_config) c->required();
  cmd->add_option("--jobs", opts.jobs, "parallel experiment workers")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", opts.seed, "override every seed in the config");
  cmd->add_option("--out", opts.out_dir,
                  "output directory (default: $GFL_OUT_DIR, then ./out)");
  cmd->add_option("--format", opts.format, "report format")
      ->check(CLI::IsMember({"csv", "json", "md"}));
}

std::filesystem::path resolve_out(const CommonOpts& opts,
                                  const gfl::ScenarioConfig* cfg) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (const char* env = std::getenv("GFL_OUT_DIR"); env && *env) return env;
  if (cfg && !cfg->output.empty()) return cfg->output;
  return "out";
}

int run_command(const std::string& command, const CommonOpts& opts,
                const std::vector<std::string>& experiments) {
  gfl::ScenarioConfig cfg = gfl::load_config_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!experiments.empty()) cfg.experiments = experiments;
  const std::filesystem::path dir = resolve_out(opts, &cfg);

  gfl::RunManifest manifest;
  manifest.command = command;
  manifest.config_hash = gfl::config_hash(cfg);
  manifest.seed = cfg.seed;
  manifest.version = kVersion;
  manifest.started = gfl::timestamp_utc();
  gfl::atomic_write(dir / "manifest.json",
                    gfl::manifest_json(manifest).dump(2) + "\n");

  gfl::ScenarioResult result = gfl::run_scenario(cfg, opts.jobs);
  auto written = gfl::write_scenario_bundle(result, dir);
  written.push_back(
      gfl::emit_report(result.experiments, opts.format, dir, "report"));

  manifest.finished = gfl::timestamp_utc();
  for (const auto& p : written)
    manifest.outputs.push_back(p.filename().string());
  gfl::atomic_write(dir / "manifest.json",
                    gfl::manifest_json(manifest).dump(2) + "\n");

  for (const gfl::ExperimentResult& e : result.experiments)
    std::cout << (e.pass ? "pass " : "FAIL ") << e.name
              << (e.note.empty() ? "" : "  (" + e.note + ")") << "\n";
  std::cout << (result.all_pass ? "all checks passed" : "checks FAILED")
            << "  [" << dir.string() << "]\n";
  return result.all_pass ? kPass : kCheckFail;
}

int rerender_report(const std::string& input, const CommonOpts& opts) {
  std::ifstream in(input);
  if (!in) throw std::invalid_argument("report: cannot read " + input);
  nlohmann::json j = nlohmann::json::parse(in);
  std::vector<gfl::ExperimentResult> results;
  for (const auto& e : j.at("experiments")) {
    gfl::ExperimentResult r;
    r.name = e.at("name").get<std::string>();
    r.pass = e.at("pass").get<bool>();
    r.metrics = e.value("metrics", nlohmann::json::object());
    r.seconds = e.value("seconds", 0.0);
    r.note = e.value("note", std::string());
    results.push_back(std::move(r));
  }
  const auto path =
      gfl::emit_report(results, opts.format, resolve_out(opts, nullptr),
                       "report");
  std::cout << path.string() << "\n";
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gammaflow: a numerical laboratory for gradient calculus,\n"
               "continuity equations, and particle flows on weighted grids"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> experiments;  // empty = use the config's list
  };
  const std::vector<Sub> subs{
      {"solve-ce", "transport/diffusion solve with mass and norm checks",
       {"solve-ce", "apriori"}},
      {"commutator-decay", "semigroup commutator decay and its identity",
       {"commutator-decay", "interpolation-identity"}},
      {"curvature-check", "curvature inequalities for the scenario's weight",
       {"be2", "be1", "reverse-poincare", "gamma2", "hessian-bound"}},
      {"flow", "particle flow energy and speed checks",
       {"dissipation", "speed"}},
      {"superposition-check", "flow marginals against the solved density",
       {"superposition"}},
      {"scenario", "run the experiment list declared in the config", {}}};

  std::vector<CommonOpts> opts(subs.size());
  std::vector<CLI::App*> cmds;
  for (size_t k = 0; k < subs.size(); ++k) {
    CLI::App* c = app.add_subcommand(subs[k].name, subs[k].help);
    add_common(c, opts[k]);
    cmds.push_back(c);
  }

  CommonOpts report_opts;
  std::string report_input;
  CLI::App* report_cmd =
      app.add_subcommand("report", "re-render a result.json in another format");
  report_cmd->add_option("--input", report_input, "result.json from a run")
      ->required();
  add_common(report_cmd, report_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (report_cmd->parsed()) return rerender_report(report_input, report_opts);
    for (size_t k = 0; k < subs.size(); ++k)
      if (cmds[k]->parsed())
        return run_command(subs[k].name, opts[k], subs[k].experiments);
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}
