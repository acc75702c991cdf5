#pragma once

/**
 * @file
 * @brief Iterative LPV MPC controllers.
 *
 * - lpv_sqp_noncondensed / lpv_sqp_condensed: inexact SQP. Each iteration
 *   freezes the schedule induced by the current iterate and solves a QP for
 *   the increment d, using the LPV matrices in place of the exact Hessian and
 *   constraint Jacobian.
 * - qlmpc: re-solves the full condensed QP at the current schedule until the
 *   schedule stops moving.
 * - exact_sqp_oracle: Gauss-Newton SQP on the noncondensed NLP with the exact
 *   Jacobian of the dynamics residual, optionally globalized by an l1 merit
 *   line search.
 *
 * Zero initialization means zero inputs; the noncondensed forms fill the
 * state blocks with the LPV rollout of those inputs so the starting schedule
 * is the one the zero input sequence actually visits.
 */

#include "lpvmpc/mpc.hpp"
#include "lpvmpc/qp.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lpvmpc {

enum class InitMode { zero, warm_shift };
enum class LineSearch { off, merit_backtracking };

enum class SqpStatus { converged, max_iterations, qp_infeasible, diverged, line_search_failed };

[[nodiscard]] std::string_view to_string(SqpStatus status);
[[nodiscard]] std::string_view to_string(InitMode mode);
/// Severity order used when aggregating statuses; converged is 0.
[[nodiscard]] int severity(SqpStatus status);
[[nodiscard]] std::optional<SqpStatus> parse_sqp_status(std::string_view text);

struct SqpSettings {
  double step_tol{1e-6};
  double schedule_tol{1e-6};
  int max_iterations{30};
  InitMode init_mode{InitMode::zero};
  LineSearch line_search{LineSearch::merit_backtracking};
  double merit_penalty{1.0};     // lower bound on the l1 penalty weight
  double divergence_bound{1e6};  // on the infinity norm of the iterate
  QpSettings qp;

  /// Throws std::invalid_argument on non-positive tolerances or caps.
  void validate() const;
};

struct SqpResult {
  VectorXd u0;
  VectorXd decision;  // z (noncondensed, oracle) or u-bar (condensed, qLMPC)
  ScheduleTrajectory schedule;
  int iterations{0};  // QPs solved
  /// Per-iteration infinity norm of the increment; for qLMPC the change of
  /// the schedule trajectory, which is what its stopping rule monitors.
  std::vector<double> step_norms;
  int qp_iterations_total{0};
  SqpStatus status{SqpStatus::max_iterations};
  int failed_iteration{-1};
  double predicted_cost{0.0};  // horizon cost of the final iterate
  int clamp_events{0};         // scheduling clamps over all extractions
};

/// Optional starting decision; empty means zero initialization.
using InitialGuess = std::optional<VectorXd>;

[[nodiscard]] SqpResult lpv_sqp_noncondensed(const AffineLpvModel& model, const MpcConfig& config,
                                             const VectorXd& x0, const SqpSettings& settings = {},
                                             const InitialGuess& initial = std::nullopt);

[[nodiscard]] SqpResult lpv_sqp_condensed(const AffineLpvModel& model, const MpcConfig& config,
                                          const VectorXd& x0, const SqpSettings& settings = {},
                                          const InitialGuess& initial = std::nullopt);

[[nodiscard]] SqpResult qlmpc(const AffineLpvModel& model, const MpcConfig& config,
                              const VectorXd& x0, const SqpSettings& settings = {},
                              const InitialGuess& initial = std::nullopt);

[[nodiscard]] SqpResult exact_sqp_oracle(const AffineLpvModel& model, const MpcConfig& config,
                                         const VectorXd& x0, const SqpSettings& settings = {},
                                         const InitialGuess& initial = std::nullopt);

/// Increment QP in z around the iterate z with the schedule frozen.
[[nodiscard]] QpProblem increment_qp_noncondensed(const AffineLpvModel& model,
                                                  const MpcConfig& config, const VectorXd& x0,
                                                  const ScheduleTrajectory& schedule,
                                                  const VectorXd& z);

/// Increment QP in u-bar around the iterate u_bar with the schedule frozen.
[[nodiscard]] QpProblem increment_qp_condensed(const AffineLpvModel& model,
                                               const MpcConfig& config, const VectorXd& x0,
                                               const ScheduleTrajectory& schedule,
                                               const VectorXd& u_bar);

/// Zero-input initial decision of the given form.
[[nodiscard]] VectorXd zero_initial_decision(const AffineLpvModel& model, const MpcConfig& config,
                                             const VectorXd& x0, bool condensed);

enum class DecisionForm { noncondensed, condensed };

/// Distance from the decision to the minimizer of the QP built from the
/// decision's own schedule. Throws std::runtime_error if that QP is not solved.
[[nodiscard]] double fixed_point_residual(const AffineLpvModel& model, const MpcConfig& config,
                                          const VectorXd& x0, const VectorXd& decision,
                                          DecisionForm form);

/// z -> C(p(z)) z with the schedule re-extracted from z.
[[nodiscard]] VectorXd lifted_constraint_map(const AffineLpvModel& model, const MpcConfig& config,
                                             const VectorXd& x0, const VectorXd& z);

/// Exact Jacobian of lifted_constraint_map.
[[nodiscard]] MatrixXd lifted_constraint_jacobian(const AffineLpvModel& model,
                                                  const MpcConfig& config, const VectorXd& x0,
                                                  const VectorXd& z);

/// Dynamics residual r(z) = C(p(z)) z - b_x0(p(z)); zero iff z follows the model.
[[nodiscard]] VectorXd dynamics_residual(const AffineLpvModel& model, const MpcConfig& config,
                                         const VectorXd& x0, const VectorXd& z);

/// Exact Jacobian of dynamics_residual (used by the oracle).
[[nodiscard]] MatrixXd dynamics_residual_jacobian(const AffineLpvModel& model,
                                                  const MpcConfig& config, const VectorXd& x0,
                                                  const VectorXd& z);

/// Horizon cost sum (x_k - r_k)'Q(x_k - r_k) + u_k'Ru_k of a noncondensed decision.
[[nodiscard]] double horizon_cost(const MpcConfig& config, Eigen::Index n, Eigen::Index m,
                                  const VectorXd& z);

enum class ControllerKind { lpv_sqp, lpv_sqp_noncondensed, qlmpc, oracle };

[[nodiscard]] std::string_view to_string(ControllerKind kind);
[[nodiscard]] std::optional<ControllerKind> parse_controller(std::string_view name);

/// Stateful wrapper holding warm-start memory between closed-loop steps.
class Controller {
 public:
  explicit Controller(ControllerKind kind, SqpSettings settings = {});

  [[nodiscard]] SqpResult solve(const AffineLpvModel& model, const MpcConfig& config,
                                const VectorXd& x0);
  void reset() { previous_.reset(); }

  [[nodiscard]] ControllerKind kind() const { return kind_; }
  [[nodiscard]] const SqpSettings& settings() const { return settings_; }

 private:
  ControllerKind kind_;
  SqpSettings settings_;
  std::optional<VectorXd> previous_;
};

/// Shifts a decision one step forward, repeating the last input and state.
[[nodiscard]] VectorXd shift_decision(const VectorXd& decision, int N, Eigen::Index n,
                                      Eigen::Index m, bool condensed);

}  // namespace lpvmpc
