#pragma once

/**
 * @file
 * @brief Closed-loop simulation: the controller acts on the RK4-integrated
 * nonlinear plant, and each step records state, input, solve time, iteration
 * counts, status, stage cost and constraint violation.
 */

#include "lpvmpc/benchmarks.hpp"
#include "lpvmpc/sqp.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lpvmpc {

struct StepRecord {
  int step{0};
  double t{0.0};
  VectorXd x;  // state at t
  VectorXd u;  // applied input
  double solve_time_s{0.0};
  int sqp_iterations{0};
  int qp_iterations{0};
  SqpStatus status{SqpStatus::converged};
  double stage_cost{0.0};
  double violation{0.0};  // max positive part over state and input rows
  int clamp_events{0};
};

struct ClosedLoopLog {
  std::vector<StepRecord> records;
  VectorXd final_state;  // state after the last applied input
  bool truncated{false};
  std::string truncation_reason;

  [[nodiscard]] std::size_t size() const { return records.size(); }
};

/// Called after each logged step with the record and the controller output.
using StepObserver = std::function<void(const StepRecord&, const SqpResult&)>;

/// Stage cost (x - r)'Q(x - r) + u'Ru; r is empty when regulating.
[[nodiscard]] double stage_cost(const MpcConfig& config, const VectorXd& x, const VectorXd& u,
                                const VectorXd& r = {});

[[nodiscard]] double state_violation(const MpcConfig& config, const VectorXd& x);
[[nodiscard]] double input_violation(const MpcConfig& config, const VectorXd& u);

/**
 * Runs `steps` closed-loop steps from x0. When `reference` is set, the
 * controller sees the window r((k+1) t_s) .. r((k+N) t_s) at step k and stage
 * costs are measured against r(k t_s). A qp_infeasible step applies the
 * previous input (zero at the first step); divergence or a non-finite plant
 * state ends the run early with `truncated` set.
 */
[[nodiscard]] ClosedLoopLog run_closed_loop(const NonlinearPlant& plant,
                                            const AffineLpvModel& model, Controller& controller,
                                            const MpcConfig& config, const VectorXd& x0,
                                            int steps,
                                            const ReferenceGenerator& reference = {},
                                            const StepObserver& observer = {});

/// Convenience overload using the scenario's plant, model, config and reference.
[[nodiscard]] ClosedLoopLog run_scenario(const BenchmarkScenario& scenario, Controller& controller,
                                         int steps = -1, const StepObserver& observer = {});

[[nodiscard]] double closed_loop_cost(const ClosedLoopLog& log);

struct TimingStats {
  double mean{0.0};
  double std{0.0};  // sample standard deviation, 0 for a single step
  double max{0.0};
};

[[nodiscard]] TimingStats timing_stats(const std::vector<double>& samples);
[[nodiscard]] TimingStats timing_stats(const ClosedLoopLog& log);

[[nodiscard]] double mean_sqp_iterations(const ClosedLoopLog& log);
[[nodiscard]] SqpStatus worst_status(const ClosedLoopLog& log);
/// Fraction of logged steps with converged status.
[[nodiscard]] double converged_fraction(const ClosedLoopLog& log);

}  // namespace lpvmpc
