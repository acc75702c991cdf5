#pragma once

/**
 * @file
 * @brief Affine LPV models x+ = A(p)x + B(p)u with p = rho(x, u), and the
 * continuous-time nonlinear plants they embed.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace lpvmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using ScheduleMap = std::function<VectorXd(const VectorXd& x, const VectorXd& u)>;

struct ScheduleJacobians {
  MatrixXd d_dx;  // n_p x n
  MatrixXd d_du;  // n_p x m
};

using ScheduleJacobianMap = std::function<ScheduleJacobians(const VectorXd& x, const VectorXd& u)>;

struct ScheduleSample {
  VectorXd p;
  bool clamped{false};
};

/// Box [lower, upper] containing the scheduling parameter.
struct ParameterBox {
  VectorXd lower;
  VectorXd upper;
};

class AffineLpvModel {
 public:
  AffineLpvModel(MatrixXd A0, std::vector<MatrixXd> A_terms, MatrixXd B0,
                 std::vector<MatrixXd> B_terms, ScheduleMap rho, ParameterBox bounds,
                 ScheduleJacobianMap rho_jacobians = {});

  /// Time-invariant model (n_p = 0).
  static AffineLpvModel lti(MatrixXd A, MatrixXd B);

  [[nodiscard]] Eigen::Index n() const { return A0_.rows(); }
  [[nodiscard]] Eigen::Index m() const { return B0_.cols(); }
  [[nodiscard]] Eigen::Index n_p() const { return static_cast<Eigen::Index>(A_terms_.size()); }

  [[nodiscard]] const MatrixXd& A0() const { return A0_; }
  [[nodiscard]] const MatrixXd& B0() const { return B0_; }
  [[nodiscard]] const MatrixXd& A_term(Eigen::Index i) const { return A_terms_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] const MatrixXd& B_term(Eigen::Index i) const { return B_terms_.at(static_cast<std::size_t>(i)); }
  [[nodiscard]] const ParameterBox& bounds() const { return bounds_; }
  [[nodiscard]] bool has_analytic_jacobians() const { return static_cast<bool>(rho_jacobians_); }

  /// A0 + sum_i p_i A_i.
  [[nodiscard]] MatrixXd eval_A(const VectorXd& p) const;
  /// B0 + sum_i p_i B_i.
  [[nodiscard]] MatrixXd eval_B(const VectorXd& p) const;

  /// rho(x, u), clamped into the parameter box when clamping is enabled.
  /// Throws std::domain_error when the result is not finite.
  [[nodiscard]] ScheduleSample schedule(const VectorXd& x, const VectorXd& u) const;

  /// One step of the LPV recursion with p = rho(x, u).
  [[nodiscard]] VectorXd step(const VectorXd& x, const VectorXd& u) const;

  /// Analytic Jacobians of rho when supplied, central differences otherwise.
  [[nodiscard]] ScheduleJacobians scheduling_jacobians(const VectorXd& x, const VectorXd& u) const;

  /// Central-difference Jacobians regardless of analytic availability.
  [[nodiscard]] ScheduleJacobians finite_difference_jacobians(const VectorXd& x, const VectorXd& u) const;

  void set_clamping(bool enabled) { clamp_ = enabled; }
  [[nodiscard]] bool clamping() const { return clamp_; }

 private:
  MatrixXd A0_;
  std::vector<MatrixXd> A_terms_;
  MatrixXd B0_;
  std::vector<MatrixXd> B_terms_;
  ScheduleMap rho_;
  ParameterBox bounds_;
  ScheduleJacobianMap rho_jacobians_;
  bool clamp_{false};
};

enum class Discretization { euler, rk4 };

[[nodiscard]] std::string_view to_string(Discretization method);

using VectorField = std::function<VectorXd(const VectorXd& x, const VectorXd& u)>;

struct NonlinearPlant {
  VectorField f_continuous;
  Eigen::Index n{0};
  Eigen::Index m{0};
  Discretization discretization{Discretization::rk4};
  double t_s{0.1};
};

/// One zero-order-hold step of length plant.t_s. Throws std::domain_error on
/// a non-finite result.
[[nodiscard]] VectorXd integrate_plant(const NonlinearPlant& plant, const VectorXd& x,
                                       const VectorXd& u, Discretization method);

/// Same as above using the plant's own discretization.
[[nodiscard]] VectorXd discrete_step(const NonlinearPlant& plant, const VectorXd& x,
                                     const VectorXd& u);

struct SampleBox {
  VectorXd x_lower;
  VectorXd x_upper;
  VectorXd u_lower;
  VectorXd u_upper;
};

/// Worst infinity-norm gap between the LPV step and the plant's discrete map
/// over uniformly drawn (x, u) in the box.
[[nodiscard]] double embedding_exactness(const AffineLpvModel& model, const NonlinearPlant& plant,
                                         const SampleBox& box, int n_samples,
                                         std::uint64_t seed = 1);

}  // namespace lpvmpc
