#include "lpvmpc/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

namespace lpvmpc {

namespace {

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = g(rng);
  return M;
}

// Strictly convex QP that is feasible by construction.
QpProblem random_feasible_qp(std::mt19937_64& rng) {
  const Eigen::Index n = 6, m_in = 8, m_eq = 2;
  const MatrixXd L = gaussian(rng, n, n);
  QpProblem p = make_qp(L * L.transpose() + 0.1 * MatrixXd::Identity(n, n), gaussian(rng, n, 1));
  const VectorXd d0 = gaussian(rng, n, 1);
  p.A_eq = gaussian(rng, m_eq, n);
  p.b_eq = p.A_eq * d0;
  p.A_in = gaussian(rng, m_in, n);
  p.b_in = p.A_in * d0 + gaussian(rng, m_in, 1).cwiseAbs();
  return p;
}

std::vector<BenchmarkScenario> models() {
  return {vanderpol_scenario(VanDerPolEmbedding::rk4_exact),
          vanderpol_scenario(VanDerPolEmbedding::euler_exact), unicycle_scenario(),
          bicycle_scenario()};
}

SelfTestCheck qp_certificates(std::mt19937_64& rng) {
  double worst = 0.0;
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    const QpProblem p = random_feasible_qp(rng);
    const QpSolution s = solve_qp(p);
    if (s.status != QpStatus::optimal) {
      ++failures;
      continue;
    }
    worst = std::max(worst, kkt_residuals(p, s).max());
  }
  return {"qp kkt certificates", failures == 0 && worst <= 1e-8,
          std::to_string(failures) + " failures, " + fmt("max kkt %.1e", worst)};
}

SelfTestCheck embedding(std::uint64_t seed) {
  double worst = 0.0;
  for (const auto& s : models())
    worst = std::max(worst, embedding_exactness(s.model, s.embedded_plant(), s.operating_box, 500, seed));
  return {"lpv embedding exactness", worst <= 1e-10, fmt("max gap %.1e", worst)};
}

SelfTestCheck recovery_and_cross_form() {
  double worst_recovery = 0.0, worst_cross = 0.0;
  bool solved = true;
  for (const auto& s : models()) {
    const VectorXd u_bar = VectorXd::Zero(s.config.N * s.model.m());
    const ScheduleTrajectory sched = rollout(s.model, s.config, s.x0, u_bar).schedule;
    const StackedLayout layout(s.config.N, s.model.n(), s.model.m());
    const auto direct_nc = solve_qp(build_noncondensed(s.model, s.config, s.x0, sched));
    const auto direct_c = solve_qp(build_condensed(s.model, s.config, s.x0, sched));
    const auto inc_nc = solve_qp(
        increment_qp_noncondensed(s.model, s.config, s.x0, sched, VectorXd::Zero(layout.size())));
    const auto inc_c = solve_qp(increment_qp_condensed(s.model, s.config, s.x0, sched, u_bar));
    for (const auto* sol : {&direct_nc, &direct_c, &inc_nc, &inc_c})
      solved = solved && sol->status == QpStatus::optimal;
    if (!solved) break;
    worst_recovery = std::max({worst_recovery, inf_norm(inc_nc.d_star - direct_nc.d_star),
                               inf_norm(inc_c.d_star - direct_c.d_star)});
    worst_cross = std::max(worst_cross,
                           inf_norm(direct_c.d_star - direct_nc.d_star.head(layout.input_size())));
  }
  return {"recovery and cross-form agreement",
          solved && worst_recovery <= 1e-8 && worst_cross <= 1e-6,
          fmt("recovery %.1e, ", worst_recovery) + fmt("cross-form %.1e", worst_cross) +
              (solved ? "" : ", QP failure")};
}

SelfTestCheck jacobians() {
  double worst_sched = 0.0, worst_res = 0.0;
  for (const auto& s : models()) {
    const VectorXd u_bar = VectorXd::Constant(s.config.N * s.model.m(), 0.1);
    const Rollout r = rollout(s.model, s.config, s.x0, u_bar);
    const StackedLayout layout(s.config.N, s.model.n(), s.model.m());
    const VectorXd z = layout.stack(u_bar, r.x_bar);
    if (s.model.has_analytic_jacobians()) {
      const auto a = s.model.scheduling_jacobians(s.x0, u_bar.head(s.model.m()));
      const auto f = s.model.finite_difference_jacobians(s.x0, u_bar.head(s.model.m()));
      worst_sched = std::max({worst_sched, (a.d_dx - f.d_dx).cwiseAbs().maxCoeff(),
                              (a.d_du - f.d_du).cwiseAbs().maxCoeff()});
    }
    const MatrixXd J = dynamics_residual_jacobian(s.model, s.config, s.x0, z);
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(z(j)));
      VectorXd zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      const VectorXd col = (dynamics_residual(s.model, s.config, s.x0, zp) -
                            dynamics_residual(s.model, s.config, s.x0, zm)) / (2.0 * h);
      worst_res = std::max(worst_res, inf_norm(col - J.col(j)));
    }
  }
  return {"analytic jacobians", worst_sched <= 1e-6 && worst_res <= 1e-5,
          fmt("scheduling %.1e, ", worst_sched) + fmt("residual %.1e", worst_res)};
}

SelfTestCheck csv_round_trip() {
  Controller c(ControllerKind::lpv_sqp);
  const ClosedLoopLog log = run_scenario(vanderpol_scenario(), c, 5);
  std::stringstream buf;
  write_log_csv(buf, log);
  const ClosedLoopLog back = read_log_csv(buf);
  bool same = back.size() == log.size();
  for (std::size_t k = 0; same && k < log.size(); ++k) {
    const auto& a = log.records[k];
    const auto& b = back.records[k];
    same = a.step == b.step && a.t == b.t && a.x == b.x && a.u == b.u &&
           a.solve_time_s == b.solve_time_s && a.sqp_iterations == b.sqp_iterations &&
           a.qp_iterations == b.qp_iterations && a.status == b.status &&
           a.stage_cost == b.stage_cost && a.violation == b.violation;
  }
  return {"csv round trip", same, std::to_string(log.size()) + " rows"};
}

}  // namespace

std::vector<SelfTestCheck> run_selftest(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SelfTestCheck> checks;
  const auto guarded = [&](const char* name, auto&& check) {
    try {
      checks.push_back(check());
    } catch (const std::exception& e) {
      checks.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("qp kkt certificates", [&] { return qp_certificates(rng); });
  guarded("lpv embedding exactness", [&] { return embedding(seed); });
  guarded("recovery and cross-form agreement", recovery_and_cross_form);
  guarded("analytic jacobians", jacobians);
  guarded("csv round trip", csv_round_trip);
  return checks;
}

}  // namespace lpvmpc
