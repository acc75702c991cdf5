#include <doctest.h>

#include "lpvmpc/benchmarks.hpp"
#include "lpvmpc/sqp.hpp"
#include "support/random_lpv.hpp"

#include <random>

using namespace lpvmpc;

namespace {

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

struct LtiCase {
  AffineLpvModel model;
  MpcConfig config;
  VectorXd x0;
};

LtiCase lti_case() {
  MatrixXd A(2, 2);
  A << 1.0, 0.1, 0.0, 1.0;
  MatrixXd B(2, 1);
  B << 0.005, 0.1;
  MpcConfig c;
  c.N = 8;
  c.Q = MatrixXd::Identity(2, 2);
  c.R = MatrixXd::Constant(1, 1, 0.1);
  c.G_u.resize(2, 1);
  c.G_u << 1.0, -1.0;
  c.h_u = VectorXd::Constant(2, 1.0);
  c.G_x.resize(2, 2);
  c.G_x << 1.0, 0.0, -1.0, 0.0;
  c.h_x = VectorXd::Constant(2, 5.0);
  return {AffineLpvModel::lti(A, B), c, (VectorXd(2) << 2.0, -1.0).finished()};
}

void check_bookkeeping(const SqpResult& r, const SqpSettings& s = {}) {
  CHECK(static_cast<int>(r.step_norms.size()) == r.iterations);
  if (r.status == SqpStatus::converged) {
    REQUIRE_FALSE(r.step_norms.empty());
    CHECK(r.step_norms.back() <= std::max(s.step_tol, s.schedule_tol));
  }
  for (double v : r.step_norms) CHECK(std::isfinite(v));
}

}  // namespace

TEST_CASE("time-invariant model: iteration counts") {
  const auto lti = lti_case();
  const auto nc = lpv_sqp_noncondensed(lti.model, lti.config, lti.x0);
  const auto cd = lpv_sqp_condensed(lti.model, lti.config, lti.x0);
  const auto ql = qlmpc(lti.model, lti.config, lti.x0);
  const auto oracle = exact_sqp_oracle(lti.model, lti.config, lti.x0);
  for (const auto* r : {&nc, &cd, &ql, &oracle}) {
    CHECK(r->status == SqpStatus::converged);
    check_bookkeeping(*r);
  }
  CHECK(nc.iterations == 2);
  CHECK(nc.step_norms[1] <= 1e-12);
  CHECK(cd.iterations == 2);
  CHECK(ql.iterations == 1);
  CHECK(inf_norm(nc.u0 - cd.u0) <= 1e-9);
  CHECK(inf_norm(cd.decision - ql.decision) <= 1e-9);

  // The Jacobian correction vanishes, so the oracle retraces the inexact iterates.
  CHECK(oracle.iterations == nc.iterations);
  CHECK(inf_norm(oracle.decision - nc.decision) <= 1e-12);
  CHECK(fixed_point_residual(lti.model, lti.config, lti.x0, nc.decision, DecisionForm::noncondensed) <= 1e-8);
  CHECK(fixed_point_residual(lti.model, lti.config, lti.x0, cd.decision, DecisionForm::condensed) <= 1e-8);
}

TEST_CASE("zero state is a fixed point of every controller") {
  for (const auto& s : {vanderpol_scenario(), unicycle_scenario()}) {
    const VectorXd x0 = VectorXd::Zero(s.model.n());
    for (auto kind : {ControllerKind::lpv_sqp, ControllerKind::lpv_sqp_noncondensed,
                      ControllerKind::qlmpc, ControllerKind::oracle}) {
      Controller c(kind);
      const auto r = c.solve(s.model, s.config, x0);
      CAPTURE(s.name);
      CAPTURE(to_string(kind));
      CHECK(r.status == SqpStatus::converged);
      CHECK(r.iterations <= 1);
      CHECK(inf_norm(r.u0) == 0.0);
    }
  }
}

TEST_CASE("one increment step recovers the frozen-schedule QP") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto inst = testing::random_mpc_instance(rng, trial % 3 == 0);
    const auto n = inst.model.n();
    const auto m = inst.model.m();
    const StackedLayout layout(inst.config.N, n, m);
    const VectorXd z = testing::gaussian(rng, layout.size(), 1, 1.0);
    const auto direct = solve_qp(build_noncondensed(inst.model, inst.config, inst.x0, inst.schedule));
    const auto step = solve_qp(increment_qp_noncondensed(inst.model, inst.config, inst.x0, inst.schedule, z));
    REQUIRE(direct.status == QpStatus::optimal);
    REQUIRE(step.status == QpStatus::optimal);
    CHECK(inf_norm(z + step.d_star - direct.d_star) <= 1e-8);

    const VectorXd u = z.head(layout.input_size());
    const auto cdirect = solve_qp(build_condensed(inst.model, inst.config, inst.x0, inst.schedule));
    const auto cstep = solve_qp(increment_qp_condensed(inst.model, inst.config, inst.x0, inst.schedule, u));
    REQUIRE(cstep.status == QpStatus::optimal);
    CHECK(inf_norm(u + cstep.d_star - cdirect.d_star) <= 1e-8);
  }
}

TEST_CASE("condensed iterates and qLMPC iterates coincide") {
  const auto s = unicycle_scenario();
  VectorXd x0(5);
  x0 << 1.0, 2.0, 0.5, 2.0, 0.3;
  SqpSettings one;
  for (int iters = 1; iters <= 3; ++iters) {
    one.max_iterations = iters;
    const auto a = lpv_sqp_condensed(s.model, s.config, x0, one);
    const auto b = qlmpc(s.model, s.config, x0, one);
    CHECK(inf_norm(a.decision - b.decision) <= 1e-9);
  }
  const auto a = lpv_sqp_condensed(s.model, s.config, x0);
  const auto b = qlmpc(s.model, s.config, x0);
  REQUIRE(a.status == SqpStatus::converged);
  REQUIRE(b.status == SqpStatus::converged);
  check_bookkeeping(a);
  check_bookkeeping(b);
  CHECK(fixed_point_residual(s.model, s.config, x0, a.decision, DecisionForm::condensed) <= 1e-5);
  CHECK(fixed_point_residual(s.model, s.config, x0, b.decision, DecisionForm::condensed) <= 1e-6);
  const auto nc = lpv_sqp_noncondensed(s.model, s.config, x0);
  REQUIRE(nc.status == SqpStatus::converged);
  CHECK(fixed_point_residual(s.model, s.config, x0, nc.decision, DecisionForm::noncondensed) <= 1e-5);
  CHECK(inf_norm(nc.u0 - a.u0) <= 1e-5);
  CHECK(a.predicted_cost == doctest::Approx(nc.predicted_cost).epsilon(1e-6));
}

TEST_CASE("oracle converges to a stationary point of the nonlinear program") {
  const auto s = bicycle_scenario();
  const auto r = exact_sqp_oracle(s.model, s.config, s.x0);
  REQUIRE(r.status == SqpStatus::converged);
  check_bookkeeping(r);
  CHECK(inf_norm(dynamics_residual(s.model, s.config, s.x0, r.decision)) <= 1e-6);
  const auto inexact = lpv_sqp_noncondensed(s.model, s.config, s.x0);
  REQUIRE(inexact.status == SqpStatus::converged);
  CHECK(r.predicted_cost <= inexact.predicted_cost + 1e-9);
}

TEST_CASE("jacobians of the lifted constraint map") {
  const auto s = unicycle_scenario();
  MpcConfig cfg = s.config;
  cfg.N = 3;
  std::mt19937_64 rng(8);
  const VectorXd x0 = testing::gaussian(rng, 5, 1, 1.0);
  const VectorXd z = testing::gaussian(rng, 21, 1, 1.0);
  const MatrixXd J = lifted_constraint_jacobian(s.model, cfg, x0, z);
  const MatrixXd Jr = dynamics_residual_jacobian(s.model, cfg, x0, z);
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double h = 1e-6;
    VectorXd zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    const VectorXd col = (lifted_constraint_map(s.model, cfg, x0, zp) -
                          lifted_constraint_map(s.model, cfg, x0, zm)) / (2 * h);
    const VectorXd rcol = (dynamics_residual(s.model, cfg, x0, zp) -
                           dynamics_residual(s.model, cfg, x0, zm)) / (2 * h);
    CHECK(inf_norm(J.col(j) - col) <= 1e-6);
    CHECK(inf_norm(Jr.col(j) - rcol) <= 1e-6);
  }
  // C(p) z differs from the residual by the x0 term only.
  const VectorXd p0 = s.model.schedule(x0, z.head(2)).p;
  VectorXd diff = dynamics_residual(s.model, cfg, x0, z) - lifted_constraint_map(s.model, cfg, x0, z);
  CHECK(inf_norm(diff.head(5) - s.model.eval_A(p0) * x0) <= 1e-14);
  CHECK(inf_norm(diff.tail(10)) == 0.0);
}

TEST_CASE("failure statuses") {
  auto lti = lti_case();
  // x1 >= 4 is unreachable from x0 = (-3, 0) with |u| <= 1.
  lti.config.G_x.resize(1, 2);
  lti.config.G_x << -1.0, 0.0;
  lti.config.h_x = VectorXd::Constant(1, -4.0);
  const VectorXd x0 = (VectorXd(2) << -3.0, 0.0).finished();
  for (auto kind : {ControllerKind::lpv_sqp, ControllerKind::lpv_sqp_noncondensed,
                    ControllerKind::qlmpc, ControllerKind::oracle}) {
    Controller c(kind);
    const auto r = c.solve(lti.model, lti.config, x0);
    CAPTURE(to_string(kind));
    if (kind == ControllerKind::oracle) {
      // The elastic fallback keeps the oracle iterating but cannot remove the slack.
      CHECK(r.status == SqpStatus::qp_infeasible);
    } else {
      CHECK(r.status == SqpStatus::qp_infeasible);
      CHECK(r.failed_iteration == 0);
    }
  }

  const auto base = lti_case();
  SqpSettings tight;
  tight.divergence_bound = 0.5;
  CHECK(lpv_sqp_condensed(base.model, base.config, base.x0, tight).status == SqpStatus::diverged);
  CHECK(lpv_sqp_noncondensed(base.model, base.config, base.x0, tight).status == SqpStatus::diverged);

  const auto vdp = vanderpol_scenario();
  SqpSettings capped;
  capped.max_iterations = 1;
  const auto r = lpv_sqp_condensed(vdp.model, vdp.config, vdp.x0, capped);
  CHECK(r.status == SqpStatus::max_iterations);
  CHECK(r.iterations == 1);
}

TEST_CASE("settings validation and names") {
  SqpSettings s;
  CHECK_NOTHROW(s.validate());
  s.step_tol = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.max_iterations = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(Controller(ControllerKind::qlmpc, s), std::invalid_argument);

  for (auto k : {ControllerKind::lpv_sqp, ControllerKind::lpv_sqp_noncondensed,
                 ControllerKind::qlmpc, ControllerKind::oracle})
    CHECK(parse_controller(to_string(k)) == k);
  CHECK_FALSE(parse_controller("ipopt").has_value());
  for (auto st : {SqpStatus::converged, SqpStatus::max_iterations, SqpStatus::qp_infeasible,
                  SqpStatus::diverged, SqpStatus::line_search_failed})
    CHECK(parse_sqp_status(to_string(st)) == st);
  CHECK(severity(SqpStatus::converged) < severity(SqpStatus::diverged));

  const auto lti = lti_case();
  CHECK_THROWS_AS((void)lpv_sqp_condensed(lti.model, lti.config, VectorXd::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)lpv_sqp_condensed(lti.model, lti.config, lti.x0, {}, VectorXd::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("warm shift") {
  VectorXd d(2 * 3 + 1 * 3);  // N = 3, n = 2, m = 1
  d << 1, 2, 3, 10, 11, 20, 21, 30, 31;
  const VectorXd shifted = shift_decision(d, 3, 2, 1, false);
  CHECK(shifted == (VectorXd(9) << 2, 3, 3, 20, 21, 30, 31, 30, 31).finished());
  CHECK(shift_decision(d.head(3), 3, 2, 1, true) == (VectorXd(3) << 2, 3, 3).finished());
  CHECK_THROWS_AS((void)shift_decision(d, 2, 2, 1, false), std::invalid_argument);

  const auto s = vanderpol_scenario();
  SqpSettings warm;
  warm.init_mode = InitMode::warm_shift;
  Controller cold(ControllerKind::lpv_sqp);
  Controller hot(ControllerKind::lpv_sqp, warm);
  VectorXd x = s.x0;
  for (int k = 0; k < 5; ++k) {
    const auto a = cold.solve(s.model, s.config, x);
    const auto b = hot.solve(s.model, s.config, x);
    REQUIRE(a.status == SqpStatus::converged);
    REQUIRE(b.status == SqpStatus::converged);
    CHECK(inf_norm(a.u0 - b.u0) <= 1e-4);
    x = discrete_step(s.plant, x, a.u0);
  }
}
