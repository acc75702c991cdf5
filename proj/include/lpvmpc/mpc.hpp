#pragma once

/**
 * @file
 * @brief Horizon stacking for LPV MPC: prediction matrices, and the
 * noncondensed (inputs and states) and condensed (inputs only) QPs built for a
 * frozen schedule trajectory.
 *
 * Decision layout: z = [u_0; ...; u_{N-1}; x_1; ...; x_N]. The cost is
 *   sum_{k=1..N} (x_k - r_k)'Q(x_k - r_k) + sum_{k=0..N-1} u_k'Ru_k,
 * i.e. 1/2 z'Mz with M = 2 blkdiag(I_N (x) R, I_N (x) Q) plus a linear term when
 * tracking. Constant terms that do not move the minimizer are dropped.
 */

#include "lpvmpc/lpv.hpp"
#include "lpvmpc/qp.hpp"

#include <vector>

namespace lpvmpc {

struct MpcConfig {
  int N{1};
  MatrixXd Q;
  MatrixXd R;
  MatrixXd G_x;   // stage state polytope G_x x <= h_x
  VectorXd h_x;
  MatrixXd G_u;   // input polytope G_u u <= h_u
  VectorXd h_u;
  MatrixXd G_xf;  // terminal polytope; empty means "same as stage"
  VectorXd h_xf;
  /// Either empty (regulation to the origin) or N states r_1..r_N.
  std::vector<VectorXd> reference;

  /// Throws std::invalid_argument unless dimensions match (n, m), Q is
  /// symmetric PSD, R is symmetric PD and N >= 1.
  void validate(Eigen::Index n, Eigen::Index m) const;

  [[nodiscard]] const MatrixXd& terminal_G() const { return G_xf.rows() > 0 ? G_xf : G_x; }
  [[nodiscard]] const VectorXd& terminal_h() const { return G_xf.rows() > 0 ? h_xf : h_x; }
  [[nodiscard]] bool tracking() const { return !reference.empty(); }
};

/// Stacked schedule p_0..p_{N-1}.
struct ScheduleTrajectory {
  VectorXd values;
  Eigen::Index n_p{0};
  int clamp_events{0};

  [[nodiscard]] int horizon() const {
    return n_p > 0 ? static_cast<int>(values.size() / n_p) : 0;
  }
  [[nodiscard]] VectorXd at(int k) const {
    return n_p > 0 ? VectorXd(values.segment(k * n_p, n_p)) : VectorXd(0);
  }
};

/// Repeats a single parameter value over the horizon.
[[nodiscard]] ScheduleTrajectory constant_schedule(const VectorXd& p, int N);

/// Index arithmetic for z = [u-bar; x-bar].
class StackedLayout {
 public:
  StackedLayout(int N, Eigen::Index n, Eigen::Index m) : N_(N), n_(n), m_(m) {}

  [[nodiscard]] int N() const { return N_; }
  [[nodiscard]] Eigen::Index size() const { return N_ * (m_ + n_); }
  [[nodiscard]] Eigen::Index input_size() const { return N_ * m_; }
  [[nodiscard]] Eigen::Index u_offset(int k) const { return k * m_; }
  /// Offset of x_k, k = 1..N.
  [[nodiscard]] Eigen::Index x_offset(int k) const { return N_ * m_ + (k - 1) * n_; }

  [[nodiscard]] VectorXd u(const VectorXd& z, int k) const { return z.segment(u_offset(k), m_); }
  [[nodiscard]] VectorXd x(const VectorXd& z, int k) const { return z.segment(x_offset(k), n_); }

  [[nodiscard]] VectorXd stack(const VectorXd& u_bar, const VectorXd& x_bar) const;

 private:
  int N_;
  Eigen::Index n_;
  Eigen::Index m_;
};

struct PredictionMatrices {
  MatrixXd A_bar;  // N n x n
  MatrixXd B_bar;  // N n x N m
};

[[nodiscard]] PredictionMatrices build_prediction_matrices(const AffineLpvModel& model,
                                                           const MpcConfig& config,
                                                           const ScheduleTrajectory& schedule);

/// Cost weight M = 2 blkdiag(I_N (x) R, I_N (x) Q).
[[nodiscard]] MatrixXd stacked_cost_weight(const MpcConfig& config);

/// Stacked inequality data of the decision z (G^z, h^z).
struct StackedConstraints {
  MatrixXd G_u_bar;
  VectorXd h_u_bar;
  MatrixXd G_x_bar;
  VectorXd h_x_bar;
};

[[nodiscard]] StackedConstraints build_stacked_constraints(const MpcConfig& config,
                                                           Eigen::Index n, Eigen::Index m);

/// QP over z: H = M, equality C(p)z = b_x0, inequality G^z z <= h^z.
[[nodiscard]] QpProblem build_noncondensed(const AffineLpvModel& model, const MpcConfig& config,
                                           const VectorXd& x0, const ScheduleTrajectory& schedule);

/// QP over u-bar: H(p), f = g(p)'x0 (+ tracking term), G^u(p) u-bar <= h^u(p).
[[nodiscard]] QpProblem build_condensed(const AffineLpvModel& model, const MpcConfig& config,
                                        const VectorXd& x0, const ScheduleTrajectory& schedule);

/// Constant that turns the condensed objective into the full stage-cost sum
/// (reference energy excluded).
[[nodiscard]] double condensed_cost_offset(const AffineLpvModel& model, const MpcConfig& config,
                                           const VectorXd& x0, const ScheduleTrajectory& schedule);

/// p_k = rho(x_k, u_k) read from the blocks of z, with x_0 given.
[[nodiscard]] ScheduleTrajectory extract_schedule(const AffineLpvModel& model,
                                                  const MpcConfig& config, const VectorXd& x0,
                                                  const VectorXd& z);

struct Rollout {
  VectorXd x_bar;
  ScheduleTrajectory schedule;
};

/// Sequential LPV simulation of u-bar from x0; the schedule it visits is the
/// one induced by u-bar.
[[nodiscard]] Rollout rollout(const AffineLpvModel& model, const MpcConfig& config,
                              const VectorXd& x0, const VectorXd& u_bar);

/// Schedule induced by an input sequence (condensed decision).
[[nodiscard]] ScheduleTrajectory extract_schedule_condensed(const AffineLpvModel& model,
                                                            const MpcConfig& config,
                                                            const VectorXd& x0,
                                                            const VectorXd& u_bar);

/// Stacked reference r_1..r_N, or zeros when regulating.
[[nodiscard]] VectorXd stacked_reference(const MpcConfig& config, Eigen::Index n);

}  // namespace lpvmpc
