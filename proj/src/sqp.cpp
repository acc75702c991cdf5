#include "lpvmpc/sqp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lpvmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-10;
constexpr double kElasticWeight = 1e4;
constexpr double kElasticCurvature = 1e-6;
constexpr double kElasticSlackTol = 1e-6;

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

void check_inputs(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                  const SqpSettings& settings) {
  settings.validate();
  config.validate(model.n(), model.m());
  if (x0.size() != model.n() || !x0.allFinite())
    throw std::invalid_argument("initial state has wrong length or is not finite");
}

VectorXd initial_decision(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                          const InitialGuess& initial, bool condensed) {
  if (!initial) return zero_initial_decision(model, config, x0, condensed);
  const Eigen::Index expected = config.N * (condensed ? model.m() : model.m() + model.n());
  if (initial->size() != expected) throw std::invalid_argument("initial decision has wrong length");
  return *initial;
}

std::optional<QpWarmStart> warm_start(Eigen::Index size, const std::vector<int>& active, int l) {
  if (l == 0) return std::nullopt;
  return QpWarmStart{VectorXd::Zero(size), active};
}

bool diverged(const VectorXd& v, double bound) { return !v.allFinite() || inf_norm(v) > bound; }

// Per-step schedule derivatives with rows of clamped components zeroed.
struct StepLinearization {
  VectorXd p;
  MatrixXd W;  // column j: A_j x + B_j u (or B_j u only)
  ScheduleJacobians J;
};

StepLinearization linearize_step(const AffineLpvModel& model, const VectorXd& x,
                                 const VectorXd& u, bool include_state_term) {
  StepLinearization s;
  s.p = model.schedule(x, u).p;
  s.W.resize(model.n(), model.n_p());
  for (Eigen::Index j = 0; j < model.n_p(); ++j) {
    s.W.col(j) = model.B_term(j) * u;
    if (include_state_term) s.W.col(j) += model.A_term(j) * x;
  }
  s.J = model.scheduling_jacobians(x, u);
  if (model.clamping()) {
    const auto& box = model.bounds();
    for (Eigen::Index i = 0; i < model.n_p(); ++i)
      if (s.p(i) <= box.lower(i) || s.p(i) >= box.upper(i)) {
        s.J.d_dx.row(i).setZero();
        s.J.d_du.row(i).setZero();
      }
  }
  return s;
}

MatrixXd residual_jacobian(const AffineLpvModel& model, const MpcConfig& config,
                           const VectorXd& x0, const VectorXd& z, bool initial_state_term) {
  const auto n = model.n();
  const auto m = model.m();
  const StackedLayout layout(config.N, n, m);
  if (z.size() != layout.size()) throw std::invalid_argument("decision has wrong length");
  MatrixXd Jac = MatrixXd::Zero(config.N * n, layout.size());
  for (int k = 0; k < config.N; ++k) {
    const VectorXd xk = k == 0 ? x0 : layout.x(z, k);
    const VectorXd uk = layout.u(z, k);
    const StepLinearization s = linearize_step(model, xk, uk, k > 0 || initial_state_term);
    Jac.block(k * n, layout.u_offset(k), n, m) = model.eval_B(s.p) + s.W * s.J.d_du;
    if (k > 0) Jac.block(k * n, layout.x_offset(k), n, n) = model.eval_A(s.p) + s.W * s.J.d_dx;
    Jac.block(k * n, layout.x_offset(k + 1), n, n) = -MatrixXd::Identity(n, n);
  }
  return Jac;
}

VectorXd stack_rollout(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                       const VectorXd& u_bar) {
  const Rollout r = rollout(model, config, x0, u_bar);
  return StackedLayout(config.N, model.n(), model.m()).stack(u_bar, r.x_bar);
}

void finish(SqpResult& res, Eigen::Index m, const VectorXd& decision) {
  res.decision = decision;
  res.u0 = decision.head(m);
}

// Elastic fallback for an inconsistent linearization: state rows get slacks
// s >= 0 with linear penalty kElasticWeight. Returns the solution restricted
// to the original variables and inequality rows; `slack` receives max(s).
QpSolution solve_elastic(QpSolver& solver, const QpProblem& qp, Eigen::Index input_rows,
                         double& slack) {
  const auto nz = qp.f.size();
  const auto rs = qp.A_in.rows() - input_rows;
  QpProblem e;
  e.H = MatrixXd::Zero(nz + rs, nz + rs);
  e.H.topLeftCorner(nz, nz) = qp.H;
  e.H.bottomRightCorner(rs, rs).diagonal().setConstant(kElasticCurvature);
  e.f.resize(nz + rs);
  e.f << qp.f, VectorXd::Constant(rs, kElasticWeight);
  e.A_eq = MatrixXd::Zero(qp.A_eq.rows(), nz + rs);
  e.A_eq.leftCols(nz) = qp.A_eq;
  e.b_eq = qp.b_eq;
  e.A_in = MatrixXd::Zero(qp.A_in.rows() + rs, nz + rs);
  e.A_in.topLeftCorner(qp.A_in.rows(), nz) = qp.A_in;
  e.A_in.block(input_rows, nz, rs, rs) = -MatrixXd::Identity(rs, rs);
  e.A_in.bottomRightCorner(rs, rs) = -MatrixXd::Identity(rs, rs);
  e.b_in.resize(qp.A_in.rows() + rs);
  e.b_in << qp.b_in, VectorXd::Zero(rs);
  QpSolution sol = solver.solve(e);
  if (sol.status != QpStatus::optimal) return sol;
  slack = rs > 0 ? sol.d_star.tail(rs).maxCoeff() : 0.0;
  sol.d_star.conservativeResize(nz);
  sol.mu.conservativeResize(qp.A_in.rows());
  std::erase_if(sol.active_set, [&](int i) { return i >= qp.A_in.rows(); });
  return sol;
}

}  // namespace

std::string_view to_string(SqpStatus status) {
  switch (status) {
    case SqpStatus::converged: return "converged";
    case SqpStatus::max_iterations: return "max_iterations";
    case SqpStatus::qp_infeasible: return "qp_infeasible";
    case SqpStatus::diverged: return "diverged";
    case SqpStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

std::string_view to_string(InitMode mode) {
  return mode == InitMode::zero ? "zero" : "warm_shift";
}

int severity(SqpStatus status) {
  switch (status) {
    case SqpStatus::converged: return 0;
    case SqpStatus::max_iterations: return 1;
    case SqpStatus::line_search_failed: return 2;
    case SqpStatus::qp_infeasible: return 3;
    case SqpStatus::diverged: return 4;
  }
  return 4;
}

std::optional<SqpStatus> parse_sqp_status(std::string_view text) {
  for (auto s : {SqpStatus::converged, SqpStatus::max_iterations, SqpStatus::qp_infeasible,
                 SqpStatus::diverged, SqpStatus::line_search_failed})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

void SqpSettings::validate() const {
  if (!(step_tol > 0) || !(schedule_tol > 0))
    throw std::invalid_argument("SqpSettings: tolerances must be positive");
  if (max_iterations < 1) throw std::invalid_argument("SqpSettings: max_iterations must be >= 1");
  if (!(merit_penalty > 0) || !(divergence_bound > 0))
    throw std::invalid_argument("SqpSettings: merit_penalty and divergence_bound must be positive");
}

VectorXd zero_initial_decision(const AffineLpvModel& model, const MpcConfig& config,
                               const VectorXd& x0, bool condensed) {
  const VectorXd u_bar = VectorXd::Zero(config.N * model.m());
  if (condensed) return u_bar;
  return stack_rollout(model, config, x0, u_bar);
}

QpProblem increment_qp_noncondensed(const AffineLpvModel& model, const MpcConfig& config,
                                    const VectorXd& x0, const ScheduleTrajectory& schedule,
                                    const VectorXd& z) {
  QpProblem qp = build_noncondensed(model, config, x0, schedule);
  if (z.size() != qp.f.size()) throw std::invalid_argument("iterate has wrong length");
  qp.f += qp.H * z;
  qp.b_eq -= qp.A_eq * z;
  qp.b_in -= qp.A_in * z;
  return qp;
}

QpProblem increment_qp_condensed(const AffineLpvModel& model, const MpcConfig& config,
                                 const VectorXd& x0, const ScheduleTrajectory& schedule,
                                 const VectorXd& u_bar) {
  QpProblem qp = build_condensed(model, config, x0, schedule);
  if (u_bar.size() != qp.f.size()) throw std::invalid_argument("iterate has wrong length");
  qp.f += qp.H * u_bar;
  qp.b_in -= qp.A_in * u_bar;
  return qp;
}

double horizon_cost(const MpcConfig& config, Eigen::Index n, Eigen::Index m, const VectorXd& z) {
  const StackedLayout layout(config.N, n, m);
  double cost = 0.0;
  for (int k = 0; k < config.N; ++k) {
    const VectorXd u = layout.u(z, k);
    VectorXd e = layout.x(z, k + 1);
    if (config.tracking()) e -= config.reference[static_cast<std::size_t>(k)];
    cost += u.dot(config.R * u) + e.dot(config.Q * e);
  }
  return cost;
}

SqpResult lpv_sqp_noncondensed(const AffineLpvModel& model, const MpcConfig& config,
                               const VectorXd& x0, const SqpSettings& settings,
                               const InitialGuess& initial) {
  check_inputs(model, config, x0, settings);
  SqpResult res;
  VectorXd z = initial_decision(model, config, x0, initial, false);
  QpSolver solver(settings.qp);
  std::vector<int> active;
  try {
    for (int l = 0; l < settings.max_iterations; ++l) {
      res.schedule = extract_schedule(model, config, x0, z);
      res.clamp_events += res.schedule.clamp_events;
      const QpProblem qp = increment_qp_noncondensed(model, config, x0, res.schedule, z);
      const QpSolution sol = solver.solve(qp, warm_start(z.size(), active, l));
      ++res.iterations;
      res.qp_iterations_total += sol.iterations;
      if (sol.status != QpStatus::optimal) {
        res.status = SqpStatus::qp_infeasible;
        res.failed_iteration = l;
        break;
      }
      active = sol.active_set;
      z += sol.d_star;
      res.step_norms.push_back(inf_norm(sol.d_star));
      if (diverged(z, settings.divergence_bound)) {
        res.status = SqpStatus::diverged;
        res.failed_iteration = l;
        break;
      }
      if (res.step_norms.back() <= settings.step_tol) {
        res.status = SqpStatus::converged;
        break;
      }
    }
  } catch (const std::domain_error&) {
    res.status = SqpStatus::diverged;
    res.failed_iteration = res.iterations;
  }
  finish(res, model.m(), z);
  if (z.allFinite()) res.predicted_cost = horizon_cost(config, model.n(), model.m(), z);
  return res;
}

SqpResult lpv_sqp_condensed(const AffineLpvModel& model, const MpcConfig& config,
                            const VectorXd& x0, const SqpSettings& settings,
                            const InitialGuess& initial) {
  check_inputs(model, config, x0, settings);
  SqpResult res;
  VectorXd u_bar = initial_decision(model, config, x0, initial, true);
  QpSolver solver(settings.qp);
  std::vector<int> active;
  try {
    for (int l = 0; l < settings.max_iterations; ++l) {
      res.schedule = extract_schedule_condensed(model, config, x0, u_bar);
      res.clamp_events += res.schedule.clamp_events;
      const QpProblem qp = increment_qp_condensed(model, config, x0, res.schedule, u_bar);
      const QpSolution sol = solver.solve(qp, warm_start(u_bar.size(), active, l));
      ++res.iterations;
      res.qp_iterations_total += sol.iterations;
      if (sol.status != QpStatus::optimal) {
        res.status = SqpStatus::qp_infeasible;
        res.failed_iteration = l;
        break;
      }
      active = sol.active_set;
      u_bar += sol.d_star;
      res.step_norms.push_back(inf_norm(sol.d_star));
      if (diverged(u_bar, settings.divergence_bound)) {
        res.status = SqpStatus::diverged;
        res.failed_iteration = l;
        break;
      }
      if (res.step_norms.back() <= settings.step_tol) {
        res.status = SqpStatus::converged;
        break;
      }
    }
    finish(res, model.m(), u_bar);
    res.predicted_cost =
        horizon_cost(config, model.n(), model.m(), stack_rollout(model, config, x0, u_bar));
  } catch (const std::domain_error&) {
    res.status = SqpStatus::diverged;
    res.failed_iteration = res.iterations;
    finish(res, model.m(), u_bar);
  }
  return res;
}

SqpResult qlmpc(const AffineLpvModel& model, const MpcConfig& config, const VectorXd& x0,
                const SqpSettings& settings, const InitialGuess& initial) {
  check_inputs(model, config, x0, settings);
  SqpResult res;
  VectorXd u_bar = initial_decision(model, config, x0, initial, true);
  QpSolver solver(settings.qp);
  std::vector<int> active;
  try {
    res.schedule = extract_schedule_condensed(model, config, x0, u_bar);
    res.clamp_events += res.schedule.clamp_events;
    for (int l = 0; l < settings.max_iterations; ++l) {
      const QpProblem qp = build_condensed(model, config, x0, res.schedule);
      std::optional<QpWarmStart> warm;
      if (l > 0) warm = QpWarmStart{u_bar, active};
      const QpSolution sol = solver.solve(qp, warm);
      ++res.iterations;
      res.qp_iterations_total += sol.iterations;
      if (sol.status != QpStatus::optimal) {
        res.status = SqpStatus::qp_infeasible;
        res.failed_iteration = l;
        break;
      }
      active = sol.active_set;
      u_bar = sol.d_star;
      if (diverged(u_bar, settings.divergence_bound)) {
        res.status = SqpStatus::diverged;
        res.failed_iteration = l;
        break;
      }
      ScheduleTrajectory next = extract_schedule_condensed(model, config, x0, u_bar);
      res.clamp_events += next.clamp_events;
      res.step_norms.push_back(inf_norm(next.values - res.schedule.values));
      res.schedule = std::move(next);
      if (res.step_norms.back() <= settings.schedule_tol) {
        res.status = SqpStatus::converged;
        break;
      }
    }
    finish(res, model.m(), u_bar);
    res.predicted_cost =
        horizon_cost(config, model.n(), model.m(), stack_rollout(model, config, x0, u_bar));
  } catch (const std::domain_error&) {
    res.status = SqpStatus::diverged;
    res.failed_iteration = res.iterations;
    finish(res, model.m(), u_bar);
  }
  return res;
}

VectorXd lifted_constraint_map(const AffineLpvModel& model, const MpcConfig& config,
                               const VectorXd& x0, const VectorXd& z) {
  VectorXd c = dynamics_residual(model, config, x0, z);
  const VectorXd p0 = model.schedule(x0, StackedLayout(config.N, model.n(), model.m()).u(z, 0)).p;
  c.head(model.n()) -= model.eval_A(p0) * x0;
  return c;
}

MatrixXd lifted_constraint_jacobian(const AffineLpvModel& model, const MpcConfig& config,
                                    const VectorXd& x0, const VectorXd& z) {
  return residual_jacobian(model, config, x0, z, false);
}

VectorXd dynamics_residual(const AffineLpvModel& model, const MpcConfig& config,
                           const VectorXd& x0, const VectorXd& z) {
  const auto n = model.n();
  const StackedLayout layout(config.N, n, model.m());
  if (z.size() != layout.size() || x0.size() != n)
    throw std::invalid_argument("decision has wrong length");
  VectorXd r(config.N * n);
  for (int k = 0; k < config.N; ++k) {
    const VectorXd xk = k == 0 ? x0 : layout.x(z, k);
    r.segment(k * n, n) = model.step(xk, layout.u(z, k)) - layout.x(z, k + 1);
  }
  return r;
}

MatrixXd dynamics_residual_jacobian(const AffineLpvModel& model, const MpcConfig& config,
                                    const VectorXd& x0, const VectorXd& z) {
  return residual_jacobian(model, config, x0, z, true);
}

SqpResult exact_sqp_oracle(const AffineLpvModel& model, const MpcConfig& config,
                           const VectorXd& x0, const SqpSettings& settings,
                           const InitialGuess& initial) {
  check_inputs(model, config, x0, settings);
  SqpResult res;
  VectorXd z = initial_decision(model, config, x0, initial, false);
  QpSolver solver(settings.qp);
  std::vector<int> active;
  double penalty = settings.merit_penalty;

  // The cost Hessian, tracking term and inequality data do not depend on the schedule.
  const QpProblem base =
      build_noncondensed(model, config, x0, constant_schedule(VectorXd::Zero(model.n_p()), config.N));
  const Eigen::Index input_rows = build_stacked_constraints(config, model.n(), model.m()).G_u_bar.rows();
  auto infeasibility = [&](const VectorXd& v, const VectorXd& r) {
    return r.lpNorm<1>() + (base.A_in * v - base.b_in).cwiseMax(0.0).sum();
  };
  auto merit = [&](const VectorXd& v) {
    try {
      const VectorXd r = dynamics_residual(model, config, x0, v);
      return 0.5 * v.dot(base.H * v) + base.f.dot(v) + penalty * infeasibility(v, r);
    } catch (const std::domain_error&) {
      return kInf;
    }
  };

  try {
    for (int l = 0; l < settings.max_iterations; ++l) {
      res.schedule = extract_schedule(model, config, x0, z);
      res.clamp_events += res.schedule.clamp_events;
      const VectorXd r = dynamics_residual(model, config, x0, z);
      QpProblem qp = base;
      qp.f += base.H * z;
      qp.A_eq = dynamics_residual_jacobian(model, config, x0, z);
      qp.b_eq = -r;
      qp.b_in -= base.A_in * z;
      QpSolution sol = solver.solve(qp, warm_start(z.size(), active, l));
      res.qp_iterations_total += sol.iterations;
      double slack = 0.0;
      if (sol.status == QpStatus::infeasible) {
        sol = solve_elastic(solver, qp, input_rows, slack);
        res.qp_iterations_total += sol.iterations;
      }
      ++res.iterations;
      if (sol.status != QpStatus::optimal) {
        res.status = SqpStatus::qp_infeasible;
        res.failed_iteration = l;
        break;
      }
      active = sol.active_set;
      const VectorXd d = sol.d_star;
      res.step_norms.push_back(inf_norm(d));
      if (res.step_norms.back() <= settings.step_tol) {
        z += d;
        // A stationary point that still needs slack is a local infeasibility.
        res.status = slack > kElasticSlackTol ? SqpStatus::qp_infeasible : SqpStatus::converged;
        if (slack > kElasticSlackTol) res.failed_iteration = l;
        break;
      }

      double alpha = 1.0;
      if (settings.line_search == LineSearch::merit_backtracking) {
        penalty = std::max(penalty, 1.1 * std::max(inf_norm(sol.lambda), inf_norm(sol.mu)));
        const double phi0 = merit(z);
        const double slope = qp.f.dot(d) - penalty * infeasibility(z, r);
        while (merit(z + alpha * d) > phi0 + kArmijo * alpha * std::min(slope, 0.0)) {
          alpha *= 0.5;
          if (alpha < kMinStep) break;
        }
        if (alpha < kMinStep) {
          res.status = SqpStatus::line_search_failed;
          res.failed_iteration = l;
          break;
        }
      }
      z += alpha * d;
      if (diverged(z, settings.divergence_bound)) {
        res.status = SqpStatus::diverged;
        res.failed_iteration = l;
        break;
      }
    }
  } catch (const std::domain_error&) {
    res.status = SqpStatus::diverged;
    res.failed_iteration = res.iterations;
  }
  finish(res, model.m(), z);
  if (z.allFinite()) res.predicted_cost = horizon_cost(config, model.n(), model.m(), z);
  return res;
}

double fixed_point_residual(const AffineLpvModel& model, const MpcConfig& config,
                            const VectorXd& x0, const VectorXd& decision, DecisionForm form) {
  const bool condensed = form == DecisionForm::condensed;
  const ScheduleTrajectory sched = condensed
                                       ? extract_schedule_condensed(model, config, x0, decision)
                                       : extract_schedule(model, config, x0, decision);
  const QpProblem qp = condensed ? build_condensed(model, config, x0, sched)
                                 : build_noncondensed(model, config, x0, sched);
  const QpSolution sol = solve_qp(qp);
  if (sol.status != QpStatus::optimal)
    throw std::runtime_error("fixed_point_residual: QP at the extracted schedule not solved (" +
                             std::string(to_string(sol.status)) + ")");
  return inf_norm(decision - sol.d_star);
}

std::string_view to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::lpv_sqp: return "lpv-sqp";
    case ControllerKind::lpv_sqp_noncondensed: return "lpv-sqp-noncond";
    case ControllerKind::qlmpc: return "qlmpc";
    case ControllerKind::oracle: return "oracle";
  }
  return "unknown";
}

std::optional<ControllerKind> parse_controller(std::string_view name) {
  for (auto k : {ControllerKind::lpv_sqp, ControllerKind::lpv_sqp_noncondensed,
                 ControllerKind::qlmpc, ControllerKind::oracle})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

VectorXd shift_decision(const VectorXd& decision, int N, Eigen::Index n, Eigen::Index m,
                        bool condensed) {
  const Eigen::Index expected = N * (condensed ? m : m + n);
  if (decision.size() != expected) throw std::invalid_argument("shift_decision: wrong length");
  VectorXd out = decision;
  auto shift_blocks = [&](Eigen::Index offset, Eigen::Index width) {
    for (int k = 0; k + 1 < N; ++k)
      out.segment(offset + k * width, width) = decision.segment(offset + (k + 1) * width, width);
  };
  shift_blocks(0, m);
  if (!condensed) shift_blocks(N * m, n);
  return out;
}

Controller::Controller(ControllerKind kind, SqpSettings settings)
    : kind_(kind), settings_(std::move(settings)) {
  settings_.validate();
}

SqpResult Controller::solve(const AffineLpvModel& model, const MpcConfig& config,
                            const VectorXd& x0) {
  const bool condensed = kind_ == ControllerKind::lpv_sqp || kind_ == ControllerKind::qlmpc;
  InitialGuess initial;
  if (settings_.init_mode == InitMode::warm_shift && previous_ &&
      previous_->size() == config.N * (condensed ? model.m() : model.m() + model.n()))
    initial = shift_decision(*previous_, config.N, model.n(), model.m(), condensed);

  SqpResult res;
  switch (kind_) {
    case ControllerKind::lpv_sqp: res = lpv_sqp_condensed(model, config, x0, settings_, initial); break;
    case ControllerKind::lpv_sqp_noncondensed:
      res = lpv_sqp_noncondensed(model, config, x0, settings_, initial);
      break;
    case ControllerKind::qlmpc: res = qlmpc(model, config, x0, settings_, initial); break;
    case ControllerKind::oracle: res = exact_sqp_oracle(model, config, x0, settings_, initial); break;
  }
  if (res.decision.allFinite() && severity(res.status) <= severity(SqpStatus::max_iterations))
    previous_ = res.decision;
  else
    previous_.reset();
  return res;
}

}  // namespace lpvmpc
