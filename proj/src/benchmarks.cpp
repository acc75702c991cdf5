#include "lpvmpc/benchmarks.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lpvmpc {

namespace {

MatrixXd unit_matrix(Eigen::Index rows, Eigen::Index cols, Eigen::Index i, Eigen::Index j,
                     double value = 1.0) {
  MatrixXd E = MatrixXd::Zero(rows, cols);
  E(i, j) = value;
  return E;
}

/// Rows +e_i <= upper_i and -e_i <= -lower_i for the listed components.
void add_box_rows(MatrixXd& G, VectorXd& h, Eigen::Index dim, Eigen::Index index, double lower,
                  double upper) {
  const auto r = G.rows();
  G.conservativeResize(r + 2, dim);
  h.conservativeResize(r + 2);
  G.row(r).setZero();
  G.row(r + 1).setZero();
  G(r, index) = 1.0;
  h(r) = upper;
  G(r + 1, index) = -1.0;
  h(r + 1) = -lower;
}

// Factorization of one RK4 step of the Van der Pol field as A(x,u) x + B(x,u) u.
// The field is f(xi, u) = F(xi_1) xi + b u with F(s) = [0 1; -1 1 - s^2], so
// every stage value is linear in (x, u) with state-dependent coefficients.
struct Rk4Factors {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};

Rk4Factors vanderpol_rk4_factors(const VectorXd& x, double u, double h) {
  const Eigen::Vector2d b(0.0, 1.0);
  auto F = [](double s) {
    Eigen::Matrix2d m;
    m << 0.0, 1.0, -1.0, 1.0 - s * s;
    return m;
  };
  const Eigen::Vector2d x2(x(0), x(1));
  Eigen::Matrix2d P_xi = Eigen::Matrix2d::Identity();
  Eigen::Vector2d q_xi = Eigen::Vector2d::Zero();
  Eigen::Matrix2d P_sum = Eigen::Matrix2d::Zero();
  Eigen::Vector2d q_sum = Eigen::Vector2d::Zero();
  const double stage_shift[4] = {0.0, 0.5, 0.5, 1.0};
  const double stage_weight[4] = {1.0, 2.0, 2.0, 1.0};
  Eigen::Matrix2d P_k = Eigen::Matrix2d::Zero();
  Eigen::Vector2d q_k = Eigen::Vector2d::Zero();
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      P_xi = Eigen::Matrix2d::Identity() + stage_shift[s] * h * P_k;
      q_xi = stage_shift[s] * h * q_k;
    }
    const double y_stage = (P_xi * x2 + q_xi * u)(0);
    const Eigen::Matrix2d Fs = F(y_stage);
    P_k = Fs * P_xi;
    q_k = Fs * q_xi + b;
    P_sum += stage_weight[s] * P_k;
    q_sum += stage_weight[s] * q_k;
  }
  return {Eigen::Matrix2d::Identity() + (h / 6.0) * P_sum, (h / 6.0) * q_sum};
}

}  // namespace

VectorXd vanderpol_dynamics(const VectorXd& x, const VectorXd& u) {
  VectorXd dx(2);
  dx << x(1), (1.0 - x(0) * x(0)) * x(1) - x(0) + u(0);
  return dx;
}

BenchmarkScenario vanderpol_scenario(VanDerPolEmbedding embedding) {
  constexpr double ts = 0.5;
  NonlinearPlant plant{vanderpol_dynamics, 2, 1, Discretization::rk4, ts};

  std::optional<AffineLpvModel> model;
  Discretization designated = Discretization::euler;
  if (embedding == VanDerPolEmbedding::euler_exact) {
    // x+ = [1 ts; -ts 1 + ts (1 - p)] x + [0; ts] u with p = y^2.
    MatrixXd A0(2, 2);
    A0 << 1.0, ts, -ts, 1.0 + ts;
    MatrixXd B0(2, 1);
    B0 << 0.0, ts;
    ParameterBox box{VectorXd::Constant(1, 0.0), VectorXd::Constant(1, 9.0)};
    model.emplace(
        A0, std::vector<MatrixXd>{unit_matrix(2, 2, 1, 1, -ts)}, B0,
        std::vector<MatrixXd>{MatrixXd::Zero(2, 1)},
        [](const VectorXd& x, const VectorXd&) { return VectorXd::Constant(1, x(0) * x(0)); }, box,
        [](const VectorXd& x, const VectorXd&) {
          ScheduleJacobians J{MatrixXd::Zero(1, 2), MatrixXd::Zero(1, 1)};
          J.d_dx(0, 0) = 2.0 * x(0);
          return J;
        });
  } else {
    // p collects the entries of the RK4 factors: (A - I) row-major, then B.
    std::vector<MatrixXd> A_terms;
    std::vector<MatrixXd> B_terms;
    for (Eigen::Index i = 0; i < 2; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) {
        A_terms.push_back(unit_matrix(2, 2, i, j));
        B_terms.push_back(MatrixXd::Zero(2, 1));
      }
    for (Eigen::Index i = 0; i < 2; ++i) {
      A_terms.push_back(MatrixXd::Zero(2, 2));
      B_terms.push_back(unit_matrix(2, 1, i, 0));
    }
    model.emplace(
        MatrixXd::Identity(2, 2), std::move(A_terms), MatrixXd::Zero(2, 1), std::move(B_terms),
        [](const VectorXd& x, const VectorXd& u) {
          const Rk4Factors f = vanderpol_rk4_factors(x, u(0), ts);
          VectorXd p(6);
          p << f.A(0, 0) - 1.0, f.A(0, 1), f.A(1, 0), f.A(1, 1) - 1.0, f.B(0), f.B(1);
          return p;
        },
        ParameterBox{});
    designated = Discretization::rk4;
  }

  MpcConfig config;
  config.N = 10;
  config.Q = MatrixXd::Identity(2, 2);
  config.R = MatrixXd::Constant(1, 1, 0.1);
  config.G_x = MatrixXd(1, 2);
  config.G_x << 0.0, -1.0;  // y' >= -0.25
  config.h_x = VectorXd::Constant(1, 0.25);
  config.G_u = MatrixXd(2, 1);
  config.G_u << 1.0, -1.0;  // |u| <= 1
  config.h_u = VectorXd::Constant(2, 1.0);

  SampleBox box;
  if (embedding == VanDerPolEmbedding::euler_exact) {
    box = {VectorXd::Constant(2, -3.0), VectorXd::Constant(2, 3.0), VectorXd::Constant(1, -1.0),
           VectorXd::Constant(1, 1.0)};
  } else {
    box = {VectorXd::Constant(2, -2.0), VectorXd::Constant(2, 2.0), VectorXd::Constant(1, -1.0),
           VectorXd::Constant(1, 1.0)};
  }

  VectorXd x0(2);
  x0 << 1.0, 0.0;
  return BenchmarkScenario{"vanderpol", plant, std::move(*model), designated, config, x0, 40, box,
                           {}};
}

VectorXd unicycle_dynamics(const VectorXd& x, const VectorXd& u) {
  VectorXd dx(5);
  dx << x(2) * std::cos(x(3)), x(2) * std::sin(x(3)), u(0), x(4), u(1);
  return dx;
}

BenchmarkScenario unicycle_scenario() {
  constexpr double ts = 0.1;
  NonlinearPlant plant{unicycle_dynamics, 5, 2, Discretization::rk4, ts};

  MatrixXd A0 = MatrixXd::Identity(5, 5);
  A0(3, 4) = ts;
  MatrixXd B0 = MatrixXd::Zero(5, 2);
  B0(2, 0) = ts;
  B0(4, 1) = ts;
  AffineLpvModel model(
      A0, {unit_matrix(5, 5, 0, 2, ts), unit_matrix(5, 5, 1, 2, ts)}, B0,
      {MatrixXd::Zero(5, 2), MatrixXd::Zero(5, 2)},
      [](const VectorXd& x, const VectorXd&) {
        VectorXd p(2);
        p << std::cos(x(3)), std::sin(x(3));
        return p;
      },
      ParameterBox{VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)},
      [](const VectorXd& x, const VectorXd&) {
        ScheduleJacobians J{MatrixXd::Zero(2, 5), MatrixXd::Zero(2, 2)};
        J.d_dx(0, 3) = -std::sin(x(3));
        J.d_dx(1, 3) = std::cos(x(3));
        return J;
      });

  MpcConfig config;
  config.N = 20;
  config.Q = VectorXd((VectorXd(5) << 1.0, 1.0, 0.1, 1.0, 0.1).finished()).asDiagonal();
  config.R = MatrixXd::Identity(2, 2);
  // Generous boxes keep the QP bounded without binding.
  for (Eigen::Index i = 0; i < 5; ++i) add_box_rows(config.G_x, config.h_x, 5, i, -100.0, 100.0);
  for (Eigen::Index i = 0; i < 2; ++i) add_box_rows(config.G_u, config.h_u, 2, i, -10.0, 10.0);

  SampleBox box;
  box.x_lower = (VectorXd(5) << -10.0, -10.0, -5.0, -std::numbers::pi, -5.0).finished();
  box.x_upper = -box.x_lower;
  box.u_lower = VectorXd::Constant(2, -10.0);
  box.u_upper = VectorXd::Constant(2, 10.0);

  VectorXd x0(5);
  x0 << 1.0, 2.0, 0.0, std::numbers::pi, 0.0;
  return BenchmarkScenario{"unicycle", plant, std::move(model), Discretization::euler, config, x0,
                           100, box, {}};
}

std::pair<double, double> bicycle_slip_angles(const BicycleParams& params, const VectorXd& x,
                                              double delta) {
  const double v = x(2), nu = x(3), omega = x(5);
  return {delta - (nu + params.l_front * omega) / v, (params.l_rear * omega - nu) / v};
}

VectorXd bicycle_dynamics(const BicycleParams& params, const VectorXd& x, const VectorXd& u) {
  const double v = x(2), nu = x(3), psi = x(4), omega = x(5);
  const double a = u(0), delta = u(1);
  const auto [alpha_f, alpha_r] = bicycle_slip_angles(params, x, delta);
  const double F_f = params.c_front * alpha_f;
  const double F_r = params.c_rear * alpha_r;
  VectorXd dx(6);
  dx << v * std::cos(psi) - nu * std::sin(psi),
      v * std::sin(psi) + nu * std::cos(psi),
      omega * nu + a,
      -omega * v + 2.0 / params.mass * (F_f * std::cos(delta) + F_r),
      omega,
      2.0 / params.inertia_z * (params.l_front * F_f - params.l_rear * F_r);
  return dx;
}

VectorXd bicycle_reference(const BicycleParams& params, double t) {
  const double w = 2.0 * std::numbers::pi / params.ref_period;
  const double V = params.ref_speed;
  const double A = params.ref_amplitude;
  const double ydot = A * w * std::cos(w * t);
  const double yddot = -A * w * w * std::sin(w * t);
  VectorXd r(6);
  r << V * t, A * std::sin(w * t), std::hypot(V, ydot), 0.0, std::atan2(ydot, V),
      V * yddot / (V * V + ydot * ydot);
  return r;
}

BenchmarkScenario bicycle_scenario(const BicycleParams& params) {
  if (params.mass <= 0 || params.inertia_z <= 0 || params.l_front <= 0 || params.l_rear <= 0 ||
      params.c_front <= 0 || params.c_rear <= 0 || params.v_min <= 0 || params.v_max <= params.v_min)
    throw std::invalid_argument("bicycle_scenario: parameters must be positive with v_min > 0");
  constexpr double ts = 0.05;
  NonlinearPlant plant{[params](const VectorXd& x, const VectorXd& u) {
                         return bicycle_dynamics(params, x, u);
                       },
                       6, 2, Discretization::rk4, ts};

  const double m = params.mass, Iz = params.inertia_z;
  const double lf = params.l_front, lr = params.l_rear;
  const double cf = params.c_front, cr = params.c_rear;

  // Continuous-time factors; p = (cos psi, sin psi, v, nu, cos delta, 1/v, cos delta / v).
  enum : Eigen::Index { X, Y, V, NU, PSI, OMEGA };
  std::vector<MatrixXd> Ac(7, MatrixXd::Zero(6, 6));
  std::vector<MatrixXd> Bc(7, MatrixXd::Zero(6, 2));
  MatrixXd Ac0 = MatrixXd::Zero(6, 6);
  MatrixXd Bc0 = MatrixXd::Zero(6, 2);
  Ac[0](X, V) = 1.0;
  Ac[0](Y, NU) = 1.0;
  Ac[1](X, NU) = -1.0;
  Ac[1](Y, V) = 1.0;
  Ac[3](V, OMEGA) = 1.0;                          // omega * nu
  Ac[2](NU, OMEGA) = -1.0;                        // -omega * v
  Ac[6](NU, NU) = -2.0 * cf / m;
  Ac[5](NU, NU) = -2.0 * cr / m;
  Ac[6](NU, OMEGA) = -2.0 * cf * lf / m;
  Ac[5](NU, OMEGA) = 2.0 * cr * lr / m;
  Ac0(PSI, OMEGA) = 1.0;
  Ac[5](OMEGA, NU) = 2.0 * (lr * cr - lf * cf) / Iz;
  Ac[5](OMEGA, OMEGA) = -2.0 * (lf * lf * cf + lr * lr * cr) / Iz;
  Bc0(V, 0) = 1.0;
  Bc[4](NU, 1) = 2.0 * cf / m;
  Bc0(OMEGA, 1) = 2.0 * lf * cf / Iz;

  std::vector<MatrixXd> A_terms, B_terms;
  for (int i = 0; i < 7; ++i) {
    A_terms.push_back(ts * Ac[static_cast<std::size_t>(i)]);
    B_terms.push_back(ts * Bc[static_cast<std::size_t>(i)]);
  }
  const double cmin = std::cos(params.steer_max);
  ParameterBox pbox;
  pbox.lower = (VectorXd(7) << -1.0, -1.0, params.v_min, -params.lateral_max, cmin,
                1.0 / params.v_max, cmin / params.v_max).finished();
  pbox.upper = (VectorXd(7) << 1.0, 1.0, params.v_max, params.lateral_max, 1.0,
                1.0 / params.v_min, 1.0 / params.v_min).finished();

  AffineLpvModel model(
      MatrixXd::Identity(6, 6) + ts * Ac0, std::move(A_terms), ts * Bc0, std::move(B_terms),
      [](const VectorXd& x, const VectorXd& u) {
        const double v = x(2), c = std::cos(u(1));
        VectorXd p(7);
        p << std::cos(x(4)), std::sin(x(4)), v, x(3), c, 1.0 / v, c / v;
        return p;
      },
      pbox,
      [](const VectorXd& x, const VectorXd& u) {
        const double v = x(2), psi = x(4), delta = u(1);
        ScheduleJacobians J{MatrixXd::Zero(7, 6), MatrixXd::Zero(7, 2)};
        J.d_dx(0, 4) = -std::sin(psi);
        J.d_dx(1, 4) = std::cos(psi);
        J.d_dx(2, 2) = 1.0;
        J.d_dx(3, 3) = 1.0;
        J.d_du(4, 1) = -std::sin(delta);
        J.d_dx(5, 2) = -1.0 / (v * v);
        J.d_dx(6, 2) = -std::cos(delta) / (v * v);
        J.d_du(6, 1) = -std::sin(delta) / v;
        return J;
      });
  model.set_clamping(true);

  MpcConfig config;
  config.N = 15;
  config.Q = MatrixXd::Identity(6, 6);
  config.R = 0.1 * MatrixXd::Identity(2, 2);
  add_box_rows(config.G_x, config.h_x, 6, V, params.v_min, params.v_max);
  add_box_rows(config.G_u, config.h_u, 2, 0, -params.accel_max, params.accel_max);
  add_box_rows(config.G_u, config.h_u, 2, 1, -params.steer_max, params.steer_max);

  SampleBox box;
  box.x_lower = (VectorXd(6) << -100.0, -100.0, params.v_min, -5.0, -std::numbers::pi, -2.0).finished();
  box.x_upper = (VectorXd(6) << 100.0, 100.0, params.v_max, 5.0, std::numbers::pi, 2.0).finished();
  box.u_lower = (VectorXd(2) << -params.accel_max, -params.steer_max).finished();
  box.u_upper = (VectorXd(2) << params.accel_max, params.steer_max).finished();

  BenchmarkScenario s{"bicycle", plant, std::move(model), Discretization::euler, config,
                      bicycle_reference(params, 0.0), 400, box,
                      [params](double t) { return bicycle_reference(params, t); }};
  s.config.reference = reference_window(s, 0);
  return s;
}

std::vector<VectorXd> reference_window(const BenchmarkScenario& scenario, int k) {
  std::vector<VectorXd> window;
  if (!scenario.reference) return window;
  window.reserve(static_cast<std::size_t>(scenario.config.N));
  for (int j = 1; j <= scenario.config.N; ++j)
    window.push_back(scenario.reference((k + j) * scenario.plant.t_s));
  return window;
}

BenchmarkScenario make_scenario(const std::string& name) {
  if (name == "vanderpol") return vanderpol_scenario();
  if (name == "unicycle") return unicycle_scenario();
  if (name == "bicycle") return bicycle_scenario();
  throw std::invalid_argument("unknown benchmark: " + name);
}

}  // namespace lpvmpc
