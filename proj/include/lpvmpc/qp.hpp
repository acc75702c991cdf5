#pragma once

/**
 * @file
 * @brief Dense primal active-set solver for strictly convex quadratic programs.
 *
 * Solves
 *
 *   min  1/2 d'Hd + f'd
 *   s.t. A_eq d  = b_eq
 *        A_in d <= b_in
 *
 * Multipliers follow the convention  Hd + f + A_eq'lambda + A_in'mu = 0, mu >= 0.
 */

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace lpvmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct QpProblem {
  MatrixXd H;
  VectorXd f;
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_in;
  VectorXd b_in;

  [[nodiscard]] Eigen::Index num_variables() const { return H.rows(); }
  [[nodiscard]] Eigen::Index num_equalities() const { return A_eq.rows(); }
  [[nodiscard]] Eigen::Index num_inequalities() const { return A_in.rows(); }

  /// Objective value at d.
  [[nodiscard]] double objective(const VectorXd& d) const;

  /// Throws std::invalid_argument on inconsistent dimensions or an asymmetric H.
  void validate() const;
};

/// Builds a problem with empty (zero-row) constraint blocks of the right width.
[[nodiscard]] QpProblem make_qp(MatrixXd H, VectorXd f);

enum class QpStatus { optimal, infeasible, max_iterations, numerical_failure };

[[nodiscard]] std::string_view to_string(QpStatus status);

struct QpSolution {
  VectorXd d_star;
  VectorXd lambda;
  VectorXd mu;
  std::vector<int> active_set;  // sorted inequality row indices
  QpStatus status{QpStatus::numerical_failure};
  int iterations{0};            // active-set iterations, phase 1 included
  bool regularized{false};      // curvature was shifted by regularization
};

struct QpWarmStart {
  VectorXd point;
  std::vector<int> active_set;
};

struct QpSettings {
  double feasibility_tol{1e-8};
  double kkt_tol{1e-8};
  double regularization{1e-10};
  /// Iteration cap is this factor times (n_d + m_in).
  int iteration_factor{50};
};

struct KktResiduals {
  double stationarity{0.0};
  double equality{0.0};
  double inequality{0.0};
  double complementarity{0.0};
  double dual_infeasibility{0.0};

  [[nodiscard]] double max() const;
};

/**
 * Primal active-set solver. An instance owns its workspace; use one instance
 * per thread.
 */
class QpSolver {
 public:
  QpSolver() = default;
  explicit QpSolver(QpSettings settings) : settings_(settings) {}

  [[nodiscard]] QpSolution solve(const QpProblem& problem,
                                 const std::optional<QpWarmStart>& warm_start = std::nullopt);

  [[nodiscard]] const QpSettings& settings() const { return settings_; }

 private:
  QpSettings settings_;
};

/// Convenience wrapper constructing a solver with default settings.
[[nodiscard]] QpSolution solve_qp(const QpProblem& problem,
                                  const std::optional<QpWarmStart>& warm_start = std::nullopt,
                                  const QpSettings& settings = {});

[[nodiscard]] KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

/// Plain-text dump: header "QP n_d m_eq m_in", then H, f, A_eq, b_eq, A_in, b_in row-major.
void write_qp_dump(std::ostream& out, const QpProblem& problem);
[[nodiscard]] QpProblem read_qp_dump(std::istream& in);

}  // namespace lpvmpc
