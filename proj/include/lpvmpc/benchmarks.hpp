#pragma once

/**
 * @file
 * @brief Closed-loop benchmark scenarios: forced Van der Pol oscillator,
 * dynamic unicycle, and dynamic bicycle reference tracking. Each scenario
 * carries the continuous-time plant, an exact LPV embedding of one of its
 * discretizations, MPC weights and constraints, and the initial state.
 */

#include "lpvmpc/lpv.hpp"
#include "lpvmpc/mpc.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lpvmpc {

using ReferenceGenerator = std::function<VectorXd(double t)>;

struct BenchmarkScenario {
  std::string name;
  NonlinearPlant plant;         // simulated plant (RK4 at t_s)
  AffineLpvModel model;         // controller model
  Discretization model_discretization{Discretization::euler};  // map the model embeds
  MpcConfig config;
  VectorXd x0;
  int steps{1};
  SampleBox operating_box;      // where the embedding is certified
  ReferenceGenerator reference; // empty for regulation

  /// Plant copy integrated with the discretization the model embeds.
  [[nodiscard]] NonlinearPlant embedded_plant() const {
    NonlinearPlant p = plant;
    p.discretization = model_discretization;
    return p;
  }
};

enum class VanDerPolEmbedding { euler_exact, rk4_exact };

/// Van der Pol: y'' = (1 - y^2) y' - y + u, x = (y, y'), t_s = 0.5 s,
/// y' >= -0.25, |u| <= 1, x0 = (1, 0). Q = I, R = 0.1, N = 10, 40 steps.
[[nodiscard]] BenchmarkScenario vanderpol_scenario(VanDerPolEmbedding embedding = VanDerPolEmbedding::rk4_exact);

/// Van der Pol right-hand side.
[[nodiscard]] VectorXd vanderpol_dynamics(const VectorXd& x, const VectorXd& u);

/// Unicycle x = (s, q, v, phi, omega), u = (F, r), Euler at t_s = 0.1 s with
/// p = (cos phi, sin phi). N = 20, Q = diag(1, 1, 0.1, 1, 0.1), R = I,
/// x0 = (1, 2, 0, pi, 0), 100 steps.
[[nodiscard]] BenchmarkScenario unicycle_scenario();

[[nodiscard]] VectorXd unicycle_dynamics(const VectorXd& x, const VectorXd& u);

/// Vehicle parameters for the dynamic bicycle. Defaults are generic
/// mid-size car values.
struct BicycleParams {
  double mass{1500.0};        // kg
  double inertia_z{3000.0};   // kg m^2
  double l_front{1.2};        // m
  double l_rear{1.6};         // m
  double c_front{19000.0};    // N/rad
  double c_rear{19000.0};     // N/rad
  double v_min{0.5};          // m/s, lower bound keeping slip angles finite
  double v_max{30.0};         // m/s
  double steer_max{0.5};      // rad
  double accel_max{5.0};      // m/s^2
  double lateral_max{10.0};   // m/s, box on the lateral velocity parameter
  double ref_speed{10.0};     // m/s
  double ref_amplitude{2.0};  // m, lateral amplitude of the reference
  double ref_period{10.0};    // s
};

/// Slip angles (front, rear) for state x and steering angle delta.
[[nodiscard]] std::pair<double, double> bicycle_slip_angles(const BicycleParams& params,
                                                            const VectorXd& x, double delta);

[[nodiscard]] VectorXd bicycle_dynamics(const BicycleParams& params, const VectorXd& x,
                                        const VectorXd& u);

/// Sinusoidal lane-weave reference: X advances at ref_speed while Y follows
/// ref_amplitude * sin(2 pi t / ref_period). Returns (X, Y, v, 0, psi, omega).
[[nodiscard]] VectorXd bicycle_reference(const BicycleParams& params, double t);

/// Bicycle x = (X, Y, v, nu, psi, omega), u = (a, delta), Euler at t_s = 0.05 s,
/// N = 15, Q = I, R = diag(0.1, 0.1), 400 steps of reference tracking.
/// Scheduling: (cos psi, sin psi, v, nu, cos delta, 1/v, cos delta / v),
/// a function of (v, nu, delta, psi) only. Clamping is enabled.
[[nodiscard]] BenchmarkScenario bicycle_scenario(const BicycleParams& params = {});

/// Window r_{k+1}..r_{k+N} of the scenario reference starting at step k.
[[nodiscard]] std::vector<VectorXd> reference_window(const BenchmarkScenario& scenario, int k);

/// Scenario by name ("vanderpol", "unicycle", "bicycle").
[[nodiscard]] BenchmarkScenario make_scenario(const std::string& name);

}  // namespace lpvmpc
