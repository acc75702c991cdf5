#include "lpvmpc/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace lpvmpc {

namespace {

using nlohmann::json;

const std::vector<std::string> kBenchmarks{"vanderpol", "unicycle", "bicycle"};

std::string known_list(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

std::optional<InitMode> parse_init_mode(std::string_view text) {
  if (text == "zero") return InitMode::zero;
  if (text == "warm_shift" || text == "warm-shift") return InitMode::warm_shift;
  return std::nullopt;
}

template <class T>
void take(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

template <class T>
void take(const json& obj, const char* key, std::optional<T>& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> keys,
                    const std::string& where) {
  for (const auto& [k, _] : obj.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw UsageError("unknown config key '" + where + k + "'");
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) fields.push_back(cur);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, int line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw std::runtime_error("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, int line) {
  const double v = parse_double(s, line);
  if (v != std::floor(v)) throw std::runtime_error("csv line " + std::to_string(line) + ": not an integer");
  return static_cast<int>(v);
}

bool same_trajectory(const ClosedLoopLog& a, const ClosedLoopLog& b) {
  if (a.size() != b.size() || a.truncated != b.truncated) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& ra = a.records[k];
    const auto& rb = b.records[k];
    if (ra.x != rb.x || ra.u != rb.u || ra.sqp_iterations != rb.sqp_iterations ||
        ra.qp_iterations != rb.qp_iterations || ra.status != rb.status)
      return false;
  }
  return true;
}

std::string csv_header(Eigen::Index n, Eigen::Index m) {
  std::string h = "step,t";
  for (Eigen::Index i = 0; i < n; ++i) h += ",x" + std::to_string(i);
  for (Eigen::Index i = 0; i < m; ++i) h += ",u" + std::to_string(i);
  return h + ",solve_time_s,sqp_iters,qp_iters,status,stage_cost,violation";
}

double pct_change(double reference, double value) {
  if (reference == value) return 0.0;
  return 100.0 * (value - reference) / std::max(std::abs(reference), 1e-300);
}

}  // namespace

void RunSpec::validate() const {
  if (std::find(kBenchmarks.begin(), kBenchmarks.end(), benchmark) == kBenchmarks.end())
    throw UsageError("unknown benchmark '" + benchmark + "' (expected " + known_list(kBenchmarks) + ")");
  if (!parse_controller(controller))
    throw UsageError("unknown controller '" + controller +
                     "' (expected lpv-sqp, lpv-sqp-noncond, qlmpc, oracle)");
  if (horizon && *horizon < 1) throw UsageError("horizon must be >= 1");
  if (steps && *steps < 1) throw UsageError("steps must be >= 1");
  if (step_tol && !(*step_tol > 0.0)) throw UsageError("step tolerance must be > 0");
  if (schedule_tol && !(*schedule_tol > 0.0)) throw UsageError("schedule tolerance must be > 0");
  if (max_iterations && *max_iterations < 1) throw UsageError("max iterations must be >= 1");
  if (repeat < 1) throw UsageError("repeat must be >= 1");
  if (vanderpol_embedding != "rk4_exact" && vanderpol_embedding != "euler_exact")
    throw UsageError("unknown Van der Pol embedding '" + vanderpol_embedding +
                     "' (expected rk4_exact, euler_exact)");
}

RunSpec run_spec_from_json(const json& config, RunSpec base) {
  if (!config.is_object()) throw UsageError("config must be a JSON object");
  try {
    reject_unknown(config,
                   {"benchmark", "controller", "controllers", "horizon", "steps", "sqp", "repeat",
                    "output_dir", "seed", "vanderpol", "bicycle"},
                   "");
    take(config, "benchmark", base.benchmark);
    take(config, "controller", base.controller);
    take(config, "horizon", base.horizon);
    take(config, "steps", base.steps);
    take(config, "repeat", base.repeat);
    take(config, "output_dir", base.output_dir);
    take(config, "seed", base.seed);
    if (config.contains("sqp")) {
      const json& sqp = config.at("sqp");
      reject_unknown(sqp, {"step_tol", "schedule_tol", "max_iterations", "init_mode"}, "sqp.");
      take(sqp, "step_tol", base.step_tol);
      take(sqp, "schedule_tol", base.schedule_tol);
      take(sqp, "max_iterations", base.max_iterations);
      if (sqp.contains("init_mode")) {
        const auto mode = parse_init_mode(sqp.at("init_mode").get<std::string>());
        if (!mode) throw UsageError("sqp.init_mode must be zero or warm_shift");
        base.init_mode = *mode;
      }
    }
    if (config.contains("vanderpol")) {
      const json& v = config.at("vanderpol");
      reject_unknown(v, {"embedding"}, "vanderpol.");
      take(v, "embedding", base.vanderpol_embedding);
    }
    if (config.contains("bicycle")) {
      const json& b = config.at("bicycle");
      BicycleParams& p = base.bicycle;
      reject_unknown(b,
                     {"mass", "inertia_z", "l_front", "l_rear", "c_front", "c_rear", "v_min",
                      "v_max", "steer_max", "accel_max", "lateral_max", "ref_speed",
                      "ref_amplitude", "ref_period"},
                     "bicycle.");
      take(b, "mass", p.mass);
      take(b, "inertia_z", p.inertia_z);
      take(b, "l_front", p.l_front);
      take(b, "l_rear", p.l_rear);
      take(b, "c_front", p.c_front);
      take(b, "c_rear", p.c_rear);
      take(b, "v_min", p.v_min);
      take(b, "v_max", p.v_max);
      take(b, "steer_max", p.steer_max);
      take(b, "accel_max", p.accel_max);
      take(b, "lateral_max", p.lateral_max);
      take(b, "ref_speed", p.ref_speed);
      take(b, "ref_amplitude", p.ref_amplitude);
      take(b, "ref_period", p.ref_period);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return base;
}

json to_json(const RunSpec& spec) {
  json j{{"benchmark", spec.benchmark},
         {"controller", spec.controller},
         {"repeat", spec.repeat},
         {"seed", spec.seed},
         {"sqp", {{"init_mode", std::string(to_string(spec.init_mode))}}}};
  if (spec.horizon) j["horizon"] = *spec.horizon;
  if (spec.steps) j["steps"] = *spec.steps;
  if (spec.step_tol) j["sqp"]["step_tol"] = *spec.step_tol;
  if (spec.schedule_tol) j["sqp"]["schedule_tol"] = *spec.schedule_tol;
  if (spec.max_iterations) j["sqp"]["max_iterations"] = *spec.max_iterations;
  if (!spec.output_dir.empty()) j["output_dir"] = spec.output_dir;
  if (spec.benchmark == "vanderpol") j["vanderpol"] = {{"embedding", spec.vanderpol_embedding}};
  if (spec.benchmark == "bicycle") {
    const BicycleParams& p = spec.bicycle;
    j["bicycle"] = {{"mass", p.mass},           {"inertia_z", p.inertia_z},
                    {"l_front", p.l_front},     {"l_rear", p.l_rear},
                    {"c_front", p.c_front},     {"c_rear", p.c_rear},
                    {"v_min", p.v_min},         {"v_max", p.v_max},
                    {"steer_max", p.steer_max}, {"accel_max", p.accel_max},
                    {"lateral_max", p.lateral_max}, {"ref_speed", p.ref_speed},
                    {"ref_amplitude", p.ref_amplitude}, {"ref_period", p.ref_period}};
  }
  return j;
}

BenchmarkScenario scenario_for(const RunSpec& spec) {
  spec.validate();
  BenchmarkScenario s = [&] {
    if (spec.benchmark == "vanderpol")
      return vanderpol_scenario(spec.vanderpol_embedding == "euler_exact"
                                    ? VanDerPolEmbedding::euler_exact
                                    : VanDerPolEmbedding::rk4_exact);
    if (spec.benchmark == "bicycle") {
      try {
        return bicycle_scenario(spec.bicycle);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
    return unicycle_scenario();
  }();
  if (spec.horizon) {
    s.config.N = *spec.horizon;
    s.config.reference = reference_window(s, 0);
  }
  if (spec.steps) s.steps = *spec.steps;
  return s;
}

SqpSettings settings_for(const RunSpec& spec) {
  SqpSettings s;
  if (spec.step_tol) s.step_tol = *spec.step_tol;
  if (spec.schedule_tol) s.schedule_tol = *spec.schedule_tol;
  if (spec.max_iterations) s.max_iterations = *spec.max_iterations;
  s.init_mode = spec.init_mode;
  return s;
}

std::string resolve_output_dir(const RunSpec& spec) {
  if (!spec.output_dir.empty()) return spec.output_dir;
  if (const char* env = std::getenv("LPVMPC_OUTPUT_DIR"); env && *env) return env;
  return "results";
}

RunSummary summarize(const ClosedLoopLog& log) {
  RunSummary s;
  s.total_cost = closed_loop_cost(log);
  const TimingStats t = timing_stats(log);
  s.tau_mean = t.mean;
  s.tau_std = t.std;
  s.tau_max = t.max;
  s.mean_sqp_iterations = mean_sqp_iterations(log);
  double qp = 0.0;
  for (const auto& r : log.records) qp += r.qp_iterations;
  s.mean_qp_iterations = log.records.empty() ? 0.0 : qp / static_cast<double>(log.size());
  s.worst_status = worst_status(log);
  s.converged_fraction = converged_fraction(log);
  s.steps = static_cast<int>(log.size());
  s.truncated = log.truncated;
  return s;
}

json to_json(const RunSummary& s) {
  return json{{"total_cost", s.total_cost},
              {"tau_mean", s.tau_mean},
              {"tau_std", s.tau_std},
              {"tau_max", s.tau_max},
              {"mean_sqp_iterations", s.mean_sqp_iterations},
              {"mean_qp_iterations", s.mean_qp_iterations},
              {"worst_status", std::string(to_string(s.worst_status))},
              {"converged_fraction", s.converged_fraction},
              {"steps", s.steps},
              {"truncated", s.truncated}};
}

ExperimentResult run_experiment(const RunSpec& spec) {
  const BenchmarkScenario scenario = scenario_for(spec);
  const SqpSettings settings = settings_for(spec);
  const ControllerKind kind = *parse_controller(spec.controller);

  ExperimentResult result;
  result.spec = spec;
  std::vector<double> samples;
  for (int rep = 0; rep < spec.repeat; ++rep) {
    Controller controller(kind, settings);
    ClosedLoopLog log = run_scenario(scenario, controller);
    for (const auto& r : log.records) samples.push_back(r.solve_time_s);
    if (rep == 0) {
      result.log = std::move(log);
      result.repeats_matching = 1;
    } else if (same_trajectory(result.log, log)) {
      ++result.repeats_matching;
    }
  }
  result.summary = summarize(result.log);
  const TimingStats pooled = timing_stats(samples);
  result.summary.tau_mean = pooled.mean;
  result.summary.tau_std = pooled.std;
  result.summary.tau_max = pooled.max;
  return result;
}

std::string failure_message(const ExperimentResult& result) {
  const ClosedLoopLog& log = result.log;
  if (log.truncated) return log.truncation_reason;
  int failed = 0;
  int first = -1;
  SqpStatus first_status = SqpStatus::converged;
  for (const auto& r : log.records) {
    if (r.status == SqpStatus::qp_infeasible || r.status == SqpStatus::line_search_failed ||
        r.status == SqpStatus::diverged) {
      if (first < 0) {
        first = r.step;
        first_status = r.status;
      }
      ++failed;
    }
  }
  if (2 * failed >= static_cast<int>(log.size()) && failed > 0)
    return std::to_string(failed) + " of " + std::to_string(log.size()) +
           " steps failed; first failure at step " + std::to_string(first) + " (" +
           std::string(to_string(first_status)) + ")";
  return {};
}

void write_log_csv(std::ostream& out, const ClosedLoopLog& log) {
  const Eigen::Index n = log.records.empty() ? log.final_state.size() : log.records.front().x.size();
  const Eigen::Index m = log.records.empty() ? 0 : log.records.front().u.size();
  out << csv_header(n, m) << '\n';
  for (const auto& r : log.records) {
    out << r.step << ',' << number(r.t);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << number(r.x(i));
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << number(r.u(i));
    out << ',' << number(r.solve_time_s) << ',' << r.sqp_iterations << ',' << r.qp_iterations << ','
        << to_string(r.status) << ',' << number(r.stage_cost) << ',' << number(r.violation) << '\n';
  }
}

ClosedLoopLog read_log_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: missing header");
  const auto header = split_csv_line(line);
  Eigen::Index n = 0, m = 0;
  for (const auto& h : header) {
    if (h.size() > 1 && h[0] == 'x' && std::isdigit(static_cast<unsigned char>(h[1]))) ++n;
    if (h.size() > 1 && h[0] == 'u' && std::isdigit(static_cast<unsigned char>(h[1]))) ++m;
  }
  const std::size_t width = 2 + static_cast<std::size_t>(n + m) + 6;
  if (line != csv_header(n, m))
    throw std::runtime_error("csv: unexpected header '" + line + "'");

  ClosedLoopLog log;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != width)
      throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                               std::to_string(width) + " fields");
    StepRecord r;
    std::size_t c = 0;
    r.step = parse_int(f[c++], line_no);
    r.t = parse_double(f[c++], line_no);
    r.x.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) r.x(i) = parse_double(f[c++], line_no);
    r.u.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) r.u(i) = parse_double(f[c++], line_no);
    r.solve_time_s = parse_double(f[c++], line_no);
    r.sqp_iterations = parse_int(f[c++], line_no);
    r.qp_iterations = parse_int(f[c++], line_no);
    const auto status = parse_sqp_status(f[c++]);
    if (!status) throw std::runtime_error("csv line " + std::to_string(line_no) + ": bad status");
    r.status = *status;
    r.stage_cost = parse_double(f[c++], line_no);
    r.violation = parse_double(f[c++], line_no);
    log.records.push_back(std::move(r));
  }
  return log;
}

std::string run_stem(const RunSpec& spec) { return spec.benchmark + "_" + spec.controller; }

WrittenFiles write_experiment(const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir = resolve_output_dir(result.spec);
  fs::create_directories(dir);
  const std::string stem = run_stem(result.spec);

  WrittenFiles files{(dir / (stem + ".csv")).string(), (dir / (stem + "_summary.json")).string()};
  {
    std::ofstream csv(files.csv);
    write_log_csv(csv, result.log);
    if (!csv) throw std::runtime_error("cannot write " + files.csv);
  }
  json summary = to_json(result.summary);
  summary["benchmark"] = result.spec.benchmark;
  summary["controller"] = result.spec.controller;
  summary["repeat"] = result.spec.repeat;
  summary["repeats_identical"] = result.repeats_matching == result.spec.repeat;
  summary["spec"] = to_json(result.spec);
  if (result.log.truncated) summary["truncation_reason"] = result.log.truncation_reason;
  {
    std::ofstream out(files.summary);
    out << summary.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + files.summary);
  }

  // Reference samples for plotting tracking runs.
  const BenchmarkScenario scenario = scenario_for(result.spec);
  if (scenario.reference) {
    std::ofstream ref(dir / (stem + "_reference.csv"));
    ref << 't';
    for (Eigen::Index i = 0; i < scenario.model.n(); ++i) ref << ",r" << i;
    ref << '\n';
    for (const auto& r : result.log.records) {
      const VectorXd v = scenario.reference(r.t);
      ref << number(r.t);
      for (Eigen::Index i = 0; i < v.size(); ++i) ref << ',' << number(v(i));
      ref << '\n';
    }
  }
  return files;
}

json compare_results(const std::vector<ExperimentResult>& results) {
  if (results.empty()) throw UsageError("compare needs at least one run");
  const auto& ref = results.front();
  json entries = json::array();
  for (const auto& r : results) {
    if (r.spec.benchmark != ref.spec.benchmark)
      throw UsageError("compare: benchmark mismatch (" + ref.spec.benchmark + " vs " +
                       r.spec.benchmark + ")");
    const RunSummary& s = r.summary;
    const RunSummary& s0 = ref.summary;
    entries.push_back(json{
        {"controller", r.spec.controller},
        {"total_cost", s.total_cost},
        {"cost_gap_pct", pct_change(s0.total_cost, s.total_cost)},
        {"tau_mean", s.tau_mean},
        {"tau_std", s.tau_std},
        {"tau_max", s.tau_max},
        {"tau_ratio", s0.tau_mean > 0.0 ? s.tau_mean / s0.tau_mean : 1.0},
        {"time_reduction_pct", 0.0 - pct_change(s0.tau_mean, s.tau_mean)},
        {"mean_sqp_iterations", s.mean_sqp_iterations},
        {"iteration_reduction_pct", 0.0 - pct_change(s0.mean_sqp_iterations, s.mean_sqp_iterations)},
        {"worst_status", std::string(to_string(s.worst_status))},
        {"converged_fraction", s.converged_fraction},
        {"steps", s.steps}});
  }
  return json{{"benchmark", ref.spec.benchmark},
              {"reference", ref.spec.controller},
              {"entries", entries}};
}

std::string format_comparison(const json& report) {
  std::ostringstream out;
  out << "benchmark " << report.at("benchmark").get<std::string>() << ", reference "
      << report.at("reference").get<std::string>() << "\n";
  out << std::left << std::setw(16) << "controller" << std::right << std::setw(14) << "cost"
      << std::setw(10) << "gap%" << std::setw(10) << "tau_mean" << std::setw(10) << "tau_std"
      << std::setw(10) << "tau_max" << std::setw(11) << "time_red%" << std::setw(10) << "iters"
      << std::setw(11) << "iter_red%" << "  status\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& e : report.at("entries")) {
    out << std::left << std::setw(16) << e.at("controller").get<std::string>() << std::right
        << std::setw(14) << e.at("total_cost").get<double>() << std::setw(10)
        << e.at("cost_gap_pct").get<double>() << std::setw(10) << e.at("tau_mean").get<double>()
        << std::setw(10) << e.at("tau_std").get<double>() << std::setw(10)
        << e.at("tau_max").get<double>() << std::setw(11)
        << e.at("time_reduction_pct").get<double>() << std::setw(10)
        << e.at("mean_sqp_iterations").get<double>() << std::setw(11)
        << e.at("iteration_reduction_pct").get<double>() << "  "
        << e.at("worst_status").get<std::string>() << "\n";
  }
  return out.str();
}

}  // namespace lpvmpc
