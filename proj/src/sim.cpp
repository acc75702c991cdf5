#include "lpvmpc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace lpvmpc {

namespace {

double positive_part_max(const MatrixXd& G, const VectorXd& h, const VectorXd& v) {
  if (G.rows() == 0) return 0.0;
  return std::max(0.0, (G * v - h).maxCoeff());
}

}  // namespace

double stage_cost(const MpcConfig& config, const VectorXd& x, const VectorXd& u,
                  const VectorXd& r) {
  const VectorXd e = r.size() ? VectorXd(x - r) : x;
  return e.dot(config.Q * e) + u.dot(config.R * u);
}

double state_violation(const MpcConfig& config, const VectorXd& x) {
  return positive_part_max(config.G_x, config.h_x, x);
}

double input_violation(const MpcConfig& config, const VectorXd& u) {
  return positive_part_max(config.G_u, config.h_u, u);
}

ClosedLoopLog run_closed_loop(const NonlinearPlant& plant, const AffineLpvModel& model,
                              Controller& controller, const MpcConfig& config, const VectorXd& x0,
                              int steps, const ReferenceGenerator& reference,
                              const StepObserver& observer) {
  if (steps < 1) throw std::invalid_argument("run_closed_loop: steps must be >= 1");
  if (plant.n != model.n() || plant.m != model.m() || x0.size() != plant.n)
    throw std::invalid_argument("run_closed_loop: plant, model and x0 dimensions differ");
  config.validate(model.n(), model.m());

  ClosedLoopLog log;
  log.records.reserve(static_cast<std::size_t>(steps));
  MpcConfig cfg = config;
  VectorXd x = x0;
  VectorXd u_prev = VectorXd::Zero(model.m());
  for (int k = 0; k < steps; ++k) {
    const double t = k * plant.t_s;
    VectorXd r_now;
    if (reference) {
      cfg.reference.clear();
      for (int j = 1; j <= cfg.N; ++j) cfg.reference.push_back(reference((k + j) * plant.t_s));
      r_now = reference(t);
    }

    const auto start = std::chrono::steady_clock::now();
    const SqpResult res = controller.solve(model, cfg, x);
    const auto stop = std::chrono::steady_clock::now();

    StepRecord rec;
    rec.step = k;
    rec.t = t;
    rec.x = x;
    rec.solve_time_s = std::chrono::duration<double>(stop - start).count();
    rec.sqp_iterations = res.iterations;
    rec.qp_iterations = res.qp_iterations_total;
    rec.status = res.status;
    rec.clamp_events = res.clamp_events;
    if (res.status == SqpStatus::diverged) {
      log.truncated = true;
      log.truncation_reason = "controller diverged at step " + std::to_string(k);
      break;
    }
    rec.u = res.status == SqpStatus::qp_infeasible || !res.u0.allFinite() ? u_prev : res.u0;
    rec.stage_cost = stage_cost(cfg, x, rec.u, r_now);
    rec.violation = std::max(state_violation(cfg, x), input_violation(cfg, rec.u));
    log.records.push_back(rec);
    if (observer) observer(rec, res);
    u_prev = rec.u;
    try {
      x = integrate_plant(plant, x, rec.u, plant.discretization);
    } catch (const std::domain_error&) {
      log.truncated = true;
      log.truncation_reason = "plant state not finite after step " + std::to_string(k);
      break;
    }
  }
  log.final_state = x;
  return log;
}

ClosedLoopLog run_scenario(const BenchmarkScenario& scenario, Controller& controller, int steps,
                           const StepObserver& observer) {
  return run_closed_loop(scenario.plant, scenario.model, controller, scenario.config, scenario.x0,
                         steps > 0 ? steps : scenario.steps, scenario.reference, observer);
}

double closed_loop_cost(const ClosedLoopLog& log) {
  double total = 0.0;
  for (const auto& r : log.records) total += r.stage_cost;
  return total;
}

TimingStats timing_stats(const std::vector<double>& samples) {
  TimingStats s;
  if (samples.empty()) return s;
  double sum = 0.0;
  for (double v : samples) {
    sum += v;
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  }
  return s;
}

TimingStats timing_stats(const ClosedLoopLog& log) {
  std::vector<double> samples;
  samples.reserve(log.size());
  for (const auto& r : log.records) samples.push_back(r.solve_time_s);
  return timing_stats(samples);
}

double mean_sqp_iterations(const ClosedLoopLog& log) {
  if (log.records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : log.records) sum += r.sqp_iterations;
  return sum / static_cast<double>(log.size());
}

SqpStatus worst_status(const ClosedLoopLog& log) {
  SqpStatus worst = log.truncated ? SqpStatus::diverged : SqpStatus::converged;
  for (const auto& r : log.records)
    if (severity(r.status) > severity(worst)) worst = r.status;
  return worst;
}

double converged_fraction(const ClosedLoopLog& log) {
  if (log.records.empty()) return 0.0;
  const auto ok = std::count_if(log.records.begin(), log.records.end(),
                                [](const StepRecord& r) { return r.status == SqpStatus::converged; });
  return static_cast<double>(ok) / static_cast<double>(log.size());
}

}  // namespace lpvmpc
