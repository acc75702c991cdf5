// lpvmpc: closed-loop experiment runner.
//
//   lpvmpc run --benchmark unicycle --controller lpv-sqp
//   lpvmpc compare --benchmark vanderpol --controllers oracle,lpv-sqp
//   lpvmpc compare a.json b.json
//   lpvmpc selftest
//
// Exit codes: 0 ok, 1 runtime or self-test failure, 2 usage error,
// 3 run dominated by divergence or infeasibility.

#include "lpvmpc/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace lpvmpc;
using nlohmann::json;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;
constexpr int kRunFailed = 3;

struct Overrides {
  std::string config;
  std::string benchmark, controller, init_mode, output, embedding;
  int horizon{0}, steps{0}, max_iterations{0}, repeat{0};
  double step_tol{0.0}, schedule_tol{0.0};
  std::uint64_t seed{0};
  std::vector<CLI::Option*> set;

  void add_to(CLI::App& app, bool with_controller) {
    app.add_option("--config", config, "JSON config mirroring the run spec")->check(CLI::ExistingFile);
    opt(app.add_option("--benchmark,-b", benchmark, "vanderpol | unicycle | bicycle"));
    if (with_controller)
      opt(app.add_option("--controller,-c", controller,
                         "lpv-sqp | lpv-sqp-noncond | qlmpc | oracle"));
    opt(app.add_option("--horizon,-N", horizon, "prediction horizon"));
    opt(app.add_option("--steps", steps, "closed-loop steps"));
    opt(app.add_option("--step-tol", step_tol, "increment tolerance"));
    opt(app.add_option("--schedule-tol", schedule_tol, "schedule change tolerance"));
    opt(app.add_option("--max-iterations", max_iterations, "SQP iteration cap"));
    opt(app.add_option("--init-mode", init_mode, "zero | warm_shift"));
    opt(app.add_option("--repeat,-r", repeat, "repeats for timing statistics"));
    opt(app.add_option("--output,-o", output, "output directory (default $LPVMPC_OUTPUT_DIR or ./results)"));
    opt(app.add_option("--seed", seed, "seed for randomized self-test utilities"));
    opt(app.add_option("--embedding", embedding, "Van der Pol model: rk4_exact | euler_exact"));
  }

  void opt(CLI::Option* o) { set.push_back(o); }

  [[nodiscard]] bool given(const std::string& name) const {
    for (const auto* o : set)
      if (o->check_lname(name) && o->count() > 0) return true;
    return false;
  }

  [[nodiscard]] json file_config(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path);
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config " + path + ": " + e.what());
    }
  }

  [[nodiscard]] RunSpec apply(RunSpec spec) const {
    if (given("benchmark")) spec.benchmark = benchmark;
    if (given("controller")) spec.controller = controller;
    if (given("horizon")) spec.horizon = horizon;
    if (given("steps")) spec.steps = steps;
    if (given("step-tol")) spec.step_tol = step_tol;
    if (given("schedule-tol")) spec.schedule_tol = schedule_tol;
    if (given("max-iterations")) spec.max_iterations = max_iterations;
    if (given("repeat")) spec.repeat = repeat;
    if (given("output")) spec.output_dir = output;
    if (given("seed")) spec.seed = seed;
    if (given("embedding")) spec.vanderpol_embedding = embedding;
    if (given("init-mode")) {
      if (init_mode == "zero") spec.init_mode = InitMode::zero;
      else if (init_mode == "warm_shift" || init_mode == "warm-shift") spec.init_mode = InitMode::warm_shift;
      else throw UsageError("--init-mode must be zero or warm_shift");
    }
    return spec;
  }
};

void report_run(const ExperimentResult& r, const WrittenFiles& files) {
  const RunSummary& s = r.summary;
  std::printf("%s/%s: %d steps, cost %.6f, tau mean %.3e s (std %.1e, max %.3e), "
              "%.3f SQP iterations/step, worst status %s\n",
              r.spec.benchmark.c_str(), r.spec.controller.c_str(), s.steps, s.total_cost,
              s.tau_mean, s.tau_std, s.tau_max, s.mean_sqp_iterations,
              std::string(to_string(s.worst_status)).c_str());
  if (r.repeats_matching != r.spec.repeat)
    std::printf("warning: %d of %d repeats reproduced the first trajectory\n", r.repeats_matching,
                r.spec.repeat);
  std::printf("wrote %s\nwrote %s\n", files.csv.c_str(), files.summary.c_str());
}

int cmd_run(const Overrides& o) {
  RunSpec spec;
  if (!o.config.empty()) spec = run_spec_from_json(o.file_config(o.config));
  spec = o.apply(spec);
  spec.validate();
  const ExperimentResult result = run_experiment(spec);
  report_run(result, write_experiment(result));
  if (const std::string msg = failure_message(result); !msg.empty()) {
    std::cerr << "run failed: " << msg << "\n";
    return kRunFailed;
  }
  return 0;
}

int cmd_compare(const Overrides& o, const std::vector<std::string>& spec_files,
                std::vector<std::string> controllers) {
  std::vector<RunSpec> specs;
  if (!spec_files.empty()) {
    for (const auto& path : spec_files) specs.push_back(o.apply(run_spec_from_json(o.file_config(path))));
  } else {
    RunSpec base;
    if (!o.config.empty()) {
      const json cfg = o.file_config(o.config);
      base = run_spec_from_json(cfg);
      if (controllers.empty() && cfg.contains("controllers"))
        controllers = cfg.at("controllers").get<std::vector<std::string>>();
    }
    base = o.apply(base);
    if (controllers.empty()) controllers = {"oracle", "lpv-sqp", "qlmpc"};
    for (const auto& c : controllers) {
      RunSpec s = base;
      s.controller = c;
      specs.push_back(s);
    }
  }
  for (const auto& s : specs) {
    s.validate();
    if (s.benchmark != specs.front().benchmark)
      throw UsageError("compare: benchmark mismatch (" + specs.front().benchmark + " vs " +
                       s.benchmark + ")");
  }

  std::vector<ExperimentResult> results;
  int status = 0;
  for (const auto& s : specs) {
    results.push_back(run_experiment(s));
    report_run(results.back(), write_experiment(results.back()));
    if (const std::string msg = failure_message(results.back()); !msg.empty()) {
      std::cerr << s.controller << " failed: " << msg << "\n";
      status = kRunFailed;
    }
  }
  const json report = compare_results(results);
  const std::string table = format_comparison(report);
  std::cout << "\n" << table;

  const std::filesystem::path dir = resolve_output_dir(specs.front());
  const std::string stem = "compare_" + specs.front().benchmark;
  std::ofstream(dir / (stem + ".json")) << report.dump(2) << '\n';
  std::ofstream(dir / (stem + ".txt")) << table;
  std::printf("wrote %s\n", (dir / (stem + ".json")).string().c_str());
  return status;
}

int cmd_selftest(std::uint64_t seed) {
  int failures = 0;
  for (const auto& c : run_selftest(seed)) {
    std::printf("%s %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    failures += c.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LPV-MPC closed-loop experiments"};
  app.require_subcommand(1);

  Overrides run_opts;
  auto* run = app.add_subcommand("run", "run one benchmark with one controller");
  run_opts.add_to(*run, true);

  Overrides cmp_opts;
  std::vector<std::string> controllers, spec_files;
  auto* compare = app.add_subcommand("compare", "run several controllers and compare them");
  cmp_opts.add_to(*compare, false);
  compare->add_option("--controllers", controllers, "comma-separated; the first is the reference")
      ->delimiter(',');
  compare->add_option("specs", spec_files, "JSON run specs, the first is the reference")
      ->check(CLI::ExistingFile);

  std::uint64_t seed = 1;
  auto* selftest = app.add_subcommand("selftest", "run the invariant checks");
  selftest->add_option("--seed", seed, "seed for randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*compare) return cmd_compare(cmp_opts, spec_files, controllers);
    return cmd_selftest(seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
