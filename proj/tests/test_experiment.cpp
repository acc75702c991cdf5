#include <doctest.h>

#include "lpvmpc/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lpvmpc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lpvmpc_test_" + name);
  fs::remove_all(p);
  return p;
}

RunSpec spec(const std::string& benchmark, const std::string& controller) {
  RunSpec s;
  s.benchmark = benchmark;
  s.controller = controller;
  return s;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

}  // namespace

TEST_CASE("csv header follows the fixed schema") {
  ClosedLoopLog log;
  StepRecord r;
  r.x = VectorXd::Zero(2);
  r.u = VectorXd::Zero(1);
  log.records.push_back(r);
  std::ostringstream out;
  write_log_csv(out, log);
  const std::string text = out.str();
  CHECK(text.substr(0, text.find('\n')) ==
        "step,t,x0,x1,u0,solve_time_s,sqp_iters,qp_iters,status,stage_cost,violation");
}

TEST_CASE("csv round trip reconstructs every field exactly") {
  RunSpec s = spec("bicycle", "lpv-sqp-noncond");
  s.steps = 12;
  const auto result = run_experiment(s);
  std::stringstream buf;
  write_log_csv(buf, result.log);
  const ClosedLoopLog back = read_log_csv(buf);
  REQUIRE(back.size() == result.log.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    const auto& a = result.log.records[k];
    const auto& b = back.records[k];
    CHECK(a.step == b.step);
    CHECK(a.t == b.t);
    CHECK(a.x == b.x);
    CHECK(a.u == b.u);
    CHECK(a.solve_time_s == b.solve_time_s);
    CHECK(a.sqp_iterations == b.sqp_iterations);
    CHECK(a.qp_iterations == b.qp_iterations);
    CHECK(a.status == b.status);
    CHECK(a.stage_cost == b.stage_cost);
    CHECK(a.violation == b.violation);
  }
}

TEST_CASE("malformed csv is rejected") {
  std::istringstream empty("");
  CHECK_THROWS_AS((void)read_log_csv(empty), std::runtime_error);
  std::istringstream bad_header("step,t,x0\n");
  CHECK_THROWS_AS((void)read_log_csv(bad_header), std::runtime_error);
  std::istringstream short_row(
      "step,t,x0,u0,solve_time_s,sqp_iters,qp_iters,status,stage_cost,violation\n0,0,1\n");
  CHECK_THROWS_AS((void)read_log_csv(short_row), std::runtime_error);
  std::istringstream bad_status(
      "step,t,x0,u0,solve_time_s,sqp_iters,qp_iters,status,stage_cost,violation\n"
      "0,0,1,0,0.1,1,1,fine,0,0\n");
  CHECK_THROWS_AS((void)read_log_csv(bad_status), std::runtime_error);
}

TEST_CASE("unicycle run writes 100 rows and a finite summary") {
  RunSpec s = spec("unicycle", "lpv-sqp");
  s.output_dir = scratch_dir("unicycle").string();
  const auto result = run_experiment(s);
  const auto files = write_experiment(result);

  std::ifstream csv(files.csv);
  const ClosedLoopLog back = read_log_csv(csv);
  CHECK(back.size() == 100);

  const json summary = read_json(files.summary);
  for (const char* key : {"total_cost", "tau_mean", "tau_std", "tau_max", "mean_sqp_iterations"})
    CHECK(std::isfinite(summary.at(key).get<double>()));
  CHECK(summary.at("tau_mean").get<double>() > 0.0);
  CHECK(summary.at("worst_status") == "converged");

  double total = 0.0, iters = 0.0;
  for (const auto& r : back.records) {
    total += r.stage_cost;
    iters += r.sqp_iterations;
  }
  CHECK(std::abs(summary.at("total_cost").get<double>() - total) <= 1e-12);
  CHECK(std::abs(summary.at("mean_sqp_iterations").get<double>() - iters / 100.0) <= 1e-12);
}

TEST_CASE("summary cost equals stage costs recomputed from csv states and inputs") {
  const auto result = run_experiment(spec("vanderpol", "qlmpc"));
  std::stringstream buf;
  write_log_csv(buf, result.log);
  const ClosedLoopLog back = read_log_csv(buf);
  const auto scenario = scenario_for(result.spec);
  double total = 0.0;
  for (const auto& r : back.records) total += stage_cost(scenario.config, r.x, r.u);
  CHECK(std::abs(result.summary.total_cost - total) <= 1e-12);
}

TEST_CASE("repeats pool timing and reproduce the trajectory") {
  RunSpec s = spec("vanderpol", "oracle");
  s.repeat = 100;
  const auto many = run_experiment(s);
  const auto once = run_experiment(spec("vanderpol", "oracle"));
  CHECK(many.repeats_matching == 100);
  CHECK(many.summary.total_cost == once.summary.total_cost);
  CHECK(many.summary.mean_sqp_iterations == once.summary.mean_sqp_iterations);
  CHECK(std::isfinite(many.summary.tau_mean));
  CHECK(many.summary.tau_max >= many.summary.tau_mean);
}

TEST_CASE("run spec validation") {
  CHECK_NOTHROW(spec("vanderpol", "lpv-sqp").validate());
  CHECK_THROWS_AS(spec("vanderpol", "mpc").validate(), UsageError);
  CHECK_THROWS_AS(spec("pendulum", "qlmpc").validate(), UsageError);
  RunSpec s = spec("unicycle", "oracle");
  s.repeat = 0;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s.repeat = 1;
  s.horizon = 0;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s.horizon.reset();
  s.step_tol = -1.0;
  CHECK_THROWS_AS(s.validate(), UsageError);
  s.step_tol.reset();
  s.vanderpol_embedding = "exact";
  CHECK_THROWS_AS(s.validate(), UsageError);
}

TEST_CASE("json config overlays a base spec and round trips") {
  const json cfg = json::parse(R"({
    "benchmark": "bicycle", "controller": "qlmpc", "horizon": 8, "repeat": 3,
    "sqp": {"step_tol": 1e-7, "max_iterations": 12, "init_mode": "warm_shift"},
    "bicycle": {"ref_speed": 8.0}
  })");
  const RunSpec s = run_spec_from_json(cfg);
  CHECK(s.benchmark == "bicycle");
  CHECK(s.controller == "qlmpc");
  CHECK(s.horizon == 8);
  CHECK(s.repeat == 3);
  CHECK(s.step_tol == 1e-7);
  CHECK(!s.schedule_tol);
  CHECK(s.max_iterations == 12);
  CHECK(s.init_mode == InitMode::warm_shift);
  CHECK(s.bicycle.ref_speed == 8.0);
  CHECK(s.bicycle.mass == BicycleParams{}.mass);

  const RunSpec again = run_spec_from_json(to_json(s));
  CHECK(to_json(again) == to_json(s));

  CHECK_THROWS_AS((void)run_spec_from_json(json::parse(R"({"steps": "many"})")), UsageError);
  CHECK_THROWS_AS((void)run_spec_from_json(json::parse(R"({"sqp": {"tol": 1}})")), UsageError);
  CHECK_THROWS_AS((void)run_spec_from_json(json::parse(R"({"sqp": {"init_mode": "hot"}})")), UsageError);
  CHECK_THROWS_AS((void)run_spec_from_json(json::parse("[1]")), UsageError);
}

TEST_CASE("overrides reach the scenario and settings") {
  RunSpec s = spec("bicycle", "lpv-sqp");
  s.horizon = 7;
  s.steps = 9;
  s.schedule_tol = 1e-4;
  const auto sc = scenario_for(s);
  CHECK(sc.config.N == 7);
  CHECK(sc.config.reference.size() == 7);
  CHECK(sc.steps == 9);
  CHECK(settings_for(s).schedule_tol == 1e-4);
  CHECK(settings_for(s).step_tol == SqpSettings{}.step_tol);
  CHECK(run_experiment(s).log.size() == 9);

  s.bicycle.v_min = -1.0;
  CHECK_THROWS_AS((void)scenario_for(s), UsageError);
}

TEST_CASE("output directory falls back to the environment") {
  RunSpec s;
  s.output_dir = "explicit";
  CHECK(resolve_output_dir(s) == "explicit");
  s.output_dir.clear();
  ::setenv("LPVMPC_OUTPUT_DIR", "from_env", 1);
  CHECK(resolve_output_dir(s) == "from_env");
  ::unsetenv("LPVMPC_OUTPUT_DIR");
  CHECK(resolve_output_dir(s) == "results");
}

TEST_CASE("comparison against itself has zero gaps") {
  const auto r = run_experiment(spec("vanderpol", "lpv-sqp"));
  const json report = compare_results({r, r});
  REQUIRE(report.at("entries").size() == 2);
  const auto& e = report.at("entries")[1];
  CHECK(e.at("cost_gap_pct").get<double>() == 0.0);
  CHECK(e.at("time_reduction_pct").get<double>() == 0.0);
  CHECK(e.at("iteration_reduction_pct").get<double>() == 0.0);
  CHECK(e.at("tau_ratio").get<double>() == 1.0);
  const std::string table = format_comparison(report);
  CHECK(table.find("0.0000") != std::string::npos);
  CHECK(table.find("-0.0000") == std::string::npos);
}

TEST_CASE("oracle versus lpv-sqp reports cost gap and time reduction") {
  const auto oracle = run_experiment(spec("vanderpol", "oracle"));
  const auto sqp = run_experiment(spec("vanderpol", "lpv-sqp"));
  const json report = compare_results({oracle, sqp});
  CHECK(report.at("reference") == "oracle");
  const auto& e = report.at("entries")[1];
  const double gap = e.at("cost_gap_pct").get<double>();
  CHECK(gap == doctest::Approx(100.0 * (sqp.summary.total_cost - oracle.summary.total_cost) /
                               oracle.summary.total_cost));
  CHECK(e.at("time_reduction_pct").get<double>() ==
        doctest::Approx(100.0 * (1.0 - sqp.summary.tau_mean / oracle.summary.tau_mean)));
  CHECK(e.at("iteration_reduction_pct").get<double>() ==
        doctest::Approx(100.0 * (1.0 - 2.6 / 3.025)));
}

TEST_CASE("lpv-sqp versus qlmpc on the unicycle records the timing ratio") {
  const auto sqp = run_experiment(spec("unicycle", "lpv-sqp"));
  const auto q = run_experiment(spec("unicycle", "qlmpc"));
  const json report = compare_results({sqp, q});
  const double ratio = report.at("entries")[1].at("tau_ratio").get<double>();
  CHECK(ratio == doctest::Approx(q.summary.tau_mean / sqp.summary.tau_mean));
  CHECK(ratio > 0.0);
}

TEST_CASE("comparison rejects mismatched benchmarks") {
  RunSpec a = spec("vanderpol", "lpv-sqp"), b = spec("unicycle", "lpv-sqp");
  a.steps = b.steps = 2;
  CHECK_THROWS_AS((void)compare_results({run_experiment(a), run_experiment(b)}), UsageError);
  CHECK_THROWS_AS((void)compare_results({}), UsageError);
}

TEST_CASE("failure messages name the failing step") {
  ExperimentResult ok;
  ok.log.records.resize(4);
  CHECK(failure_message(ok).empty());

  ExperimentResult infeasible = ok;
  infeasible.log.records[2].step = 2;
  infeasible.log.records[3].step = 3;
  infeasible.log.records[2].status = SqpStatus::qp_infeasible;
  infeasible.log.records[3].status = SqpStatus::qp_infeasible;
  CHECK(failure_message(infeasible).find("step 2") != std::string::npos);

  ExperimentResult one_bad = ok;
  one_bad.log.records[1].status = SqpStatus::qp_infeasible;
  CHECK(failure_message(one_bad).empty());

  ExperimentResult truncated = ok;
  truncated.log.truncated = true;
  truncated.log.truncation_reason = "controller diverged at step 4";
  CHECK(failure_message(truncated) == "controller diverged at step 4");
}

TEST_CASE("tracking runs also write reference samples") {
  RunSpec s = spec("bicycle", "lpv-sqp");
  s.steps = 3;
  s.output_dir = scratch_dir("bicycle").string();
  (void)write_experiment(run_experiment(s));
  std::ifstream ref(fs::path(s.output_dir) / "bicycle_lpv-sqp_reference.csv");
  std::string header;
  std::getline(ref, header);
  CHECK(header == "t,r0,r1,r2,r3,r4,r5");
}

TEST_CASE("selftest passes") {
  for (const auto& c : run_selftest(7)) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.pass);
  }
}
