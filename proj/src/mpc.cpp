#include "lpvmpc/mpc.hpp"

#include <stdexcept>
#include <string>

namespace lpvmpc {

namespace {

constexpr Eigen::Index kMaxDecisionSize = 200000;

void check_schedule(const AffineLpvModel& model, const MpcConfig& config,
                    const ScheduleTrajectory& schedule) {
  if (schedule.n_p != model.n_p() || schedule.values.size() != config.N * model.n_p())
    throw std::invalid_argument("schedule trajectory length does not match N * n_p");
}

void check_common(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                  const ScheduleTrajectory& schedule) {
  config.validate(model.n(), model.m());
  if (x0.size() != model.n()) throw std::invalid_argument("x0 has wrong length");
  check_schedule(model, config, schedule);
  if (static_cast<Eigen::Index>(config.N) * (model.n() + model.m()) > kMaxDecisionSize)
    throw std::length_error("decision vector too large");
}

MatrixXd kron_identity(int N, const MatrixXd& block) {
  MatrixXd out = MatrixXd::Zero(N * block.rows(), N * block.cols());
  for (int k = 0; k < N; ++k) out.block(k * block.rows(), k * block.cols(), block.rows(), block.cols()) = block;
  return out;
}

}  // namespace

void MpcConfig::validate(Eigen::Index n, Eigen::Index m) const {
  if (N < 1) throw std::invalid_argument("MpcConfig: N must be >= 1");
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("MpcConfig: Q must be n x n");
  if (R.rows() != m || R.cols() != m) throw std::invalid_argument("MpcConfig: R must be m x m");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("MpcConfig: Q is not symmetric");
  if (n > 0 && Eigen::SelfAdjointEigenSolver<MatrixXd>(Q).eigenvalues().minCoeff() < -1e-12)
    throw std::invalid_argument("MpcConfig: Q is not positive semidefinite");
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, R.cwiseAbs().maxCoeff()) ||
      Eigen::LLT<MatrixXd>(R).info() != Eigen::Success)
    throw std::invalid_argument("MpcConfig: R is not symmetric positive definite");
  auto check_poly = [](const MatrixXd& G, const VectorXd& h, Eigen::Index cols, const char* what) {
    if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != cols))
      throw std::invalid_argument(std::string("MpcConfig: inconsistent ") + what + " polytope");
  };
  check_poly(G_x, h_x, n, "state");
  check_poly(G_u, h_u, m, "input");
  check_poly(G_xf, h_xf, n, "terminal");
  if (!reference.empty()) {
    if (static_cast<int>(reference.size()) != N)
      throw std::invalid_argument("MpcConfig: reference must hold N states");
    for (const auto& r : reference)
      if (r.size() != n) throw std::invalid_argument("MpcConfig: reference state has wrong length");
  }
}

ScheduleTrajectory constant_schedule(const VectorXd& p, int N) {
  ScheduleTrajectory s;
  s.n_p = p.size();
  s.values = p.replicate(N, 1);
  return s;
}

VectorXd StackedLayout::stack(const VectorXd& u_bar, const VectorXd& x_bar) const {
  if (u_bar.size() != N_ * m_ || x_bar.size() != N_ * n_)
    throw std::invalid_argument("StackedLayout::stack: wrong block lengths");
  VectorXd z(size());
  z << u_bar, x_bar;
  return z;
}

PredictionMatrices build_prediction_matrices(const AffineLpvModel& model, const MpcConfig& config,
                                             const ScheduleTrajectory& schedule) {
  check_schedule(model, config, schedule);
  const int N = config.N;
  const auto n = model.n();
  const auto m = model.m();
  PredictionMatrices pm{MatrixXd::Zero(N * n, n), MatrixXd::Zero(N * n, N * m)};

  // Row block k holds x_{k+1} = A(p_k) x_k + B(p_k) u_k.
  MatrixXd prev_A = MatrixXd::Identity(n, n);
  for (int k = 0; k < N; ++k) {
    const VectorXd p = schedule.at(k);
    const MatrixXd A = model.eval_A(p);
    pm.A_bar.middleRows(k * n, n) = A * prev_A;
    prev_A = pm.A_bar.middleRows(k * n, n);
    if (k > 0)
      pm.B_bar.block(k * n, 0, n, k * m) = A * pm.B_bar.block((k - 1) * n, 0, n, k * m);
    pm.B_bar.block(k * n, k * m, n, m) = model.eval_B(p);
  }
  return pm;
}

MatrixXd stacked_cost_weight(const MpcConfig& config) {
  const auto n = config.Q.rows();
  const auto m = config.R.rows();
  const int N = config.N;
  MatrixXd M = MatrixXd::Zero(N * (m + n), N * (m + n));
  M.topLeftCorner(N * m, N * m) = 2.0 * kron_identity(N, config.R);
  M.bottomRightCorner(N * n, N * n) = 2.0 * kron_identity(N, config.Q);
  return M;
}

StackedConstraints build_stacked_constraints(const MpcConfig& config, Eigen::Index n,
                                             Eigen::Index m) {
  const int N = config.N;
  StackedConstraints sc;
  sc.G_u_bar = config.G_u.rows() > 0 ? kron_identity(N, config.G_u) : MatrixXd::Zero(0, N * m);
  sc.h_u_bar = config.h_u.replicate(N, 1);

  const MatrixXd& Gf = config.terminal_G();
  const VectorXd& hf = config.terminal_h();
  const auto rx = config.G_x.rows();
  const auto rf = Gf.rows();
  sc.G_x_bar = MatrixXd::Zero((N - 1) * rx + rf, N * n);
  sc.h_x_bar.resize((N - 1) * rx + rf);
  for (int k = 0; k < N - 1; ++k) {
    sc.G_x_bar.block(k * rx, k * n, rx, n) = config.G_x;
    sc.h_x_bar.segment(k * rx, rx) = config.h_x;
  }
  if (rf > 0) {
    sc.G_x_bar.block((N - 1) * rx, (N - 1) * n, rf, n) = Gf;
    sc.h_x_bar.tail(rf) = hf;
  }
  return sc;
}

VectorXd stacked_reference(const MpcConfig& config, Eigen::Index n) {
  VectorXd r = VectorXd::Zero(config.N * n);
  for (std::size_t k = 0; k < config.reference.size(); ++k)
    r.segment(static_cast<Eigen::Index>(k) * n, n) = config.reference[k];
  return r;
}

QpProblem build_noncondensed(const AffineLpvModel& model, const MpcConfig& config,
                             const VectorXd& x0, const ScheduleTrajectory& schedule) {
  check_common(model, config, x0, schedule);
  const int N = config.N;
  const auto n = model.n();
  const auto m = model.m();
  const StackedLayout layout(N, n, m);
  const auto nz = layout.size();

  QpProblem qp;
  qp.H = stacked_cost_weight(config);
  qp.f = VectorXd::Zero(nz);
  if (config.tracking())
    qp.f.tail(N * n) = -qp.H.bottomRightCorner(N * n, N * n) * stacked_reference(config, n);

  qp.A_eq = MatrixXd::Zero(N * n, nz);
  qp.b_eq = VectorXd::Zero(N * n);
  for (int k = 0; k < N; ++k) {
    const VectorXd p = schedule.at(k);
    qp.A_eq.block(k * n, layout.u_offset(k), n, m) = model.eval_B(p);
    qp.A_eq.block(k * n, layout.x_offset(k + 1), n, n) = -MatrixXd::Identity(n, n);
    if (k == 0)
      qp.b_eq.head(n) = -model.eval_A(p) * x0;
    else
      qp.A_eq.block(k * n, layout.x_offset(k), n, n) = model.eval_A(p);
  }

  const StackedConstraints sc = build_stacked_constraints(config, n, m);
  const auto ru = sc.G_u_bar.rows();
  const auto rx = sc.G_x_bar.rows();
  qp.A_in = MatrixXd::Zero(ru + rx, nz);
  qp.A_in.topLeftCorner(ru, N * m) = sc.G_u_bar;
  qp.A_in.bottomRightCorner(rx, N * n) = sc.G_x_bar;
  qp.b_in.resize(ru + rx);
  qp.b_in << sc.h_u_bar, sc.h_x_bar;
  return qp;
}

QpProblem build_condensed(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                          const ScheduleTrajectory& schedule) {
  check_common(model, config, x0, schedule);
  const int N = config.N;
  const auto n = model.n();
  const auto m = model.m();
  const PredictionMatrices pm = build_prediction_matrices(model, config, schedule);
  const MatrixXd Mx = 2.0 * kron_identity(N, config.Q);
  const MatrixXd Mu = 2.0 * kron_identity(N, config.R);

  QpProblem qp;
  const MatrixXd MxB = Mx * pm.B_bar;
  qp.H = Mu + pm.B_bar.transpose() * MxB;
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  VectorXd free_response = pm.A_bar * x0;
  if (config.tracking()) free_response -= stacked_reference(config, n);
  qp.f = MxB.transpose() * free_response;
  qp.A_eq = MatrixXd::Zero(0, N * m);
  qp.b_eq = VectorXd::Zero(0);

  const StackedConstraints sc = build_stacked_constraints(config, n, m);
  const auto ru = sc.G_u_bar.rows();
  const auto rx = sc.G_x_bar.rows();
  qp.A_in.resize(ru + rx, N * m);
  qp.A_in.topRows(ru) = sc.G_u_bar;
  qp.A_in.bottomRows(rx) = sc.G_x_bar * pm.B_bar;
  qp.b_in.resize(ru + rx);
  qp.b_in.head(ru) = sc.h_u_bar;
  qp.b_in.tail(rx) = sc.h_x_bar - sc.G_x_bar * (pm.A_bar * x0);
  return qp;
}

double condensed_cost_offset(const AffineLpvModel& model, const MpcConfig& config,
                             const VectorXd& x0, const ScheduleTrajectory& schedule) {
  check_common(model, config, x0, schedule);
  const PredictionMatrices pm = build_prediction_matrices(model, config, schedule);
  const VectorXd free_x = pm.A_bar * x0;
  const MatrixXd Mx = 2.0 * kron_identity(config.N, config.Q);
  double offset = 0.5 * free_x.dot(Mx * free_x);
  if (config.tracking()) offset -= stacked_reference(config, model.n()).dot(Mx * free_x);
  return offset;
}

ScheduleTrajectory extract_schedule(const AffineLpvModel& model, const MpcConfig& config,
                                    const VectorXd& x0, const VectorXd& z) {
  const StackedLayout layout(config.N, model.n(), model.m());
  if (z.size() != layout.size() || x0.size() != model.n())
    throw std::invalid_argument("extract_schedule: decision has wrong length");
  ScheduleTrajectory s;
  s.n_p = model.n_p();
  s.values.resize(config.N * s.n_p);
  for (int k = 0; k < config.N; ++k) {
    const VectorXd xk = k == 0 ? x0 : layout.x(z, k);
    const ScheduleSample sample = model.schedule(xk, layout.u(z, k));
    if (sample.clamped) ++s.clamp_events;
    s.values.segment(k * s.n_p, s.n_p) = sample.p;
  }
  return s;
}

Rollout rollout(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                const VectorXd& u_bar) {
  const auto n = model.n();
  const auto m = model.m();
  if (u_bar.size() != config.N * m || x0.size() != n)
    throw std::invalid_argument("rollout: input sequence has wrong length");
  Rollout r;
  r.x_bar.resize(config.N * n);
  r.schedule.n_p = model.n_p();
  r.schedule.values.resize(config.N * model.n_p());
  VectorXd x = x0;
  for (int k = 0; k < config.N; ++k) {
    const VectorXd u = u_bar.segment(k * m, m);
    const ScheduleSample sample = model.schedule(x, u);
    if (sample.clamped) ++r.schedule.clamp_events;
    r.schedule.values.segment(k * model.n_p(), model.n_p()) = sample.p;
    x = model.eval_A(sample.p) * x + model.eval_B(sample.p) * u;
    r.x_bar.segment(k * n, n) = x;
  }
  return r;
}

ScheduleTrajectory extract_schedule_condensed(const AffineLpvModel& model, const MpcConfig& config,
                                              const VectorXd& x0, const VectorXd& u_bar) {
  return rollout(model, config, x0, u_bar).schedule;
}

}  // namespace lpvmpc
