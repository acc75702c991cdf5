#include <doctest.h>

#include "lpvmpc/benchmarks.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace lpvmpc;

namespace {

VectorXd vec(std::initializer_list<double> values) {
  VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

double max_abs(const MatrixXd& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

VectorXd draw(std::mt19937_64& rng, const VectorXd& lo, const VectorXd& hi) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VectorXd v(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
  return v;
}

// Fine-step RK4 integration over one sample.
VectorXd fine_reference(const NonlinearPlant& plant, VectorXd x, const VectorXd& u, int substeps) {
  NonlinearPlant fine = plant;
  fine.t_s = plant.t_s / substeps;
  for (int i = 0; i < substeps; ++i) x = integrate_plant(fine, x, u, Discretization::rk4);
  return x;
}

}  // namespace

TEST_CASE("unicycle system matrices") {
  const auto s = unicycle_scenario();
  const MatrixXd A = s.model.eval_A(vec({1.0, 0.0}));
  CHECK(max_abs(A.row(0) - vec({1, 0, 0.1, 0, 0}).transpose()) == 0.0);
  CHECK(max_abs(A.row(1) - vec({0, 1, 0, 0, 0}).transpose()) == 0.0);
  CHECK(A(3, 4) == doctest::Approx(0.1));
  CHECK(s.model.eval_A(vec({-1.0, 0.0}))(0, 2) == doctest::Approx(-0.1));
  CHECK(max_abs(s.model.eval_A(VectorXd::Zero(2)) - s.model.A0()) == 0.0);

  MatrixXd B_expected = MatrixXd::Zero(5, 2);
  B_expected(2, 0) = 0.1;
  B_expected(4, 1) = 0.1;
  for (const auto& p : {vec({1, 0}), vec({-1, 0}), vec({0.3, -0.7})})
    CHECK(max_abs(s.model.eval_B(p) - B_expected) == 0.0);
  CHECK(s.config.Q(2, 2) == 0.1);
  CHECK_THROWS_AS((void)s.model.eval_A(VectorXd::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS((void)s.model.eval_B(VectorXd::Zero(1)), std::invalid_argument);
}

TEST_CASE("affine dependence at random parameters") {
  std::mt19937_64 rng(7);
  for (const auto& name : {"vanderpol", "unicycle", "bicycle"}) {
    const auto s = make_scenario(name);
    const auto& model = s.model;
    for (int trial = 0; trial < 20; ++trial) {
      const VectorXd p = draw(rng, -VectorXd::Ones(model.n_p()), VectorXd::Ones(model.n_p()));
      MatrixXd A = model.A0();
      MatrixXd B = model.B0();
      for (Eigen::Index i = 0; i < model.n_p(); ++i) {
        A += p(i) * model.A_term(i);
        B += p(i) * model.B_term(i);
      }
      CHECK(max_abs(model.eval_A(p) - A) <= 1e-15);
      CHECK(max_abs(model.eval_B(p) - B) <= 1e-15);
    }
  }
}

TEST_CASE("scheduling map values") {
  const auto uni = unicycle_scenario();
  const VectorXd u0 = VectorXd::Zero(2);
  CHECK(max_abs(uni.model.schedule(vec({1, 2, 0, std::numbers::pi, 0}), u0).p - vec({-1, 0})) <=
        1e-15);
  CHECK(max_abs(uni.model.schedule(VectorXd::Zero(5), u0).p - vec({1, 0})) == 0.0);

  const auto vdp = vanderpol_scenario(VanDerPolEmbedding::euler_exact);
  CHECK(vdp.model.schedule(vec({1, 0}), VectorXd::Zero(1)).p(0) == 1.0);
  const MatrixXd B = vdp.model.eval_B(vec({4.0}));
  CHECK(max_abs(B - vec({0.0, 0.5})) == 0.0);
}

TEST_CASE("one LPV step") {
  const auto uni = unicycle_scenario();
  const VectorXd u0 = VectorXd::Zero(2);
  CHECK(uni.model.step(VectorXd::Zero(5), u0).norm() == 0.0);
  const VectorXd x = vec({1, 2, 0, std::numbers::pi, 0});
  CHECK(max_abs(uni.model.step(x, u0) - x) == 0.0);
  CHECK(max_abs(uni.model.step(vec({0, 0, 1, 0, 0}), u0) - vec({0.1, 0, 1, 0, 0})) <= 1e-15);

  const auto lti = AffineLpvModel::lti(MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 1));
  CHECK(lti.n_p() == 0);
  CHECK(lti.schedule(VectorXd::Zero(2), VectorXd::Zero(1)).p.size() == 0);
  CHECK(max_abs(lti.step(vec({1, 2}), vec({1})) - vec({2, 3})) == 0.0);
}

TEST_CASE("scheduling jacobians") {
  const auto uni = unicycle_scenario();
  const auto J = uni.model.scheduling_jacobians(VectorXd::Zero(5), VectorXd::Zero(2));
  CHECK(J.d_dx(0, 3) == 0.0);
  CHECK(J.d_dx(1, 3) == 1.0);

  const auto vdp = vanderpol_scenario(VanDerPolEmbedding::euler_exact);
  CHECK(vdp.model.scheduling_jacobians(vec({1, 0}), vec({0})).d_dx(0, 0) == 2.0);

  std::mt19937_64 rng(11);
  for (const auto& s : {unicycle_scenario(), bicycle_scenario(),
                        vanderpol_scenario(VanDerPolEmbedding::euler_exact)}) {
    REQUIRE(s.model.has_analytic_jacobians());
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const VectorXd x = draw(rng, s.operating_box.x_lower, s.operating_box.x_upper);
      const VectorXd u = draw(rng, s.operating_box.u_lower, s.operating_box.u_upper);
      const auto Ja = s.model.scheduling_jacobians(x, u);
      const auto Jf = s.model.finite_difference_jacobians(x, u);
      worst = std::max({worst, max_abs(Ja.d_dx - Jf.d_dx), max_abs(Ja.d_du - Jf.d_du)});
    }
    CAPTURE(s.name);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("scheduling clamp flags out-of-box values") {
  auto s = bicycle_scenario();
  REQUIRE(s.model.clamping());
  VectorXd x = s.x0;
  x(2) = 0.25;  // below v_min
  const auto sample = s.model.schedule(x, VectorXd::Zero(2));
  CHECK(sample.clamped);
  CHECK(sample.p(2) == doctest::Approx(0.5));
  CHECK(sample.p(5) == doctest::Approx(2.0));
  CHECK_FALSE(s.model.schedule(s.x0, VectorXd::Zero(2)).clamped);

  s.model.set_clamping(false);
  x(2) = 0.0;
  CHECK_THROWS_AS((void)s.model.schedule(x, VectorXd::Zero(2)), std::domain_error);
}

TEST_CASE("plant integration") {
  NonlinearPlant still{[](const VectorXd& x, const VectorXd&) { return VectorXd(VectorXd::Zero(x.size())); },
                       2, 1, Discretization::rk4, 0.1};
  CHECK(max_abs(discrete_step(still, vec({1, 2}), vec({3})) - vec({1, 2})) == 0.0);

  NonlinearPlant integrator{[](const VectorXd&, const VectorXd& u) { return u; }, 1, 1,
                            Discretization::rk4, 0.1};
  for (auto method : {Discretization::euler, Discretization::rk4})
    CHECK(integrate_plant(integrator, vec({2}), vec({1}), method)(0) == doctest::Approx(2.1));

  const auto vdp = vanderpol_scenario();
  const VectorXd x0 = vec({1, 0});
  const VectorXd u = vec({0});
  const VectorXd coarse = discrete_step(vdp.plant, x0, u);
  const VectorXd fine = fine_reference(vdp.plant, x0, u, 1000);
  CHECK((coarse - fine).lpNorm<Eigen::Infinity>() <= 1e-3);

  NonlinearPlant blowup{[](const VectorXd& x, const VectorXd&) { return VectorXd(x.array().square() * 1e200); },
                        1, 1, Discretization::euler, 1.0};
  CHECK_THROWS_AS((void)discrete_step(blowup, vec({1e200}), vec({0})), std::domain_error);
  CHECK_THROWS_AS((void)discrete_step(vdp.plant, vec({1}), u), std::invalid_argument);
}

TEST_CASE("embedding exactness of benchmark models") {
  const auto lti = AffineLpvModel::lti(MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 1));
  NonlinearPlant self{[](const VectorXd& x, const VectorXd& u) { return VectorXd(x + u.replicate(2, 1)); },
                      2, 1, Discretization::euler, 1.0};
  // Euler with t_s = 1: x+ = 2x + u, distinct from the LTI model x + u.
  SampleBox box{VectorXd::Constant(2, -1), VectorXd::Constant(2, 1), VectorXd::Constant(1, -1),
                VectorXd::Constant(1, 1)};
  NonlinearPlant zero_field{[](const VectorXd& x, const VectorXd& u) {
                              return VectorXd(u.replicate(x.size(), 1));
                            },
                            2, 1, Discretization::euler, 1.0};
  CHECK(embedding_exactness(lti, zero_field, box, 100) <= 1e-15);
  CHECK(embedding_exactness(lti, self, box, 100) > 0.1);

  const auto euler_vdp = vanderpol_scenario(VanDerPolEmbedding::euler_exact);
  CHECK(embedding_exactness(euler_vdp.model, euler_vdp.embedded_plant(), euler_vdp.operating_box,
                            10000) <= 1e-12);
  const auto uni = unicycle_scenario();
  CHECK(embedding_exactness(uni.model, uni.embedded_plant(), uni.operating_box, 10000) <= 1e-12);
  const auto rk4_vdp = vanderpol_scenario(VanDerPolEmbedding::rk4_exact);
  CHECK(embedding_exactness(rk4_vdp.model, rk4_vdp.embedded_plant(), rk4_vdp.operating_box,
                            10000) <= 1e-10);
  const auto bike = bicycle_scenario();
  CHECK(embedding_exactness(bike.model, bike.embedded_plant(), bike.operating_box, 10000) <= 1e-10);
}

TEST_CASE("bicycle slip angles and schedule") {
  const BicycleParams params;
  std::mt19937_64 rng(3);
  const auto s = bicycle_scenario(params);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd x = draw(rng, s.operating_box.x_lower, s.operating_box.x_upper);
    const double delta = draw(rng, s.operating_box.u_lower, s.operating_box.u_upper)(1);
    const auto [af, ar] = bicycle_slip_angles(params, x, delta);
    CHECK(af == doctest::Approx(delta - (x(3) + params.l_front * x(5)) / x(2)).epsilon(1e-14));
    CHECK(ar == doctest::Approx((params.l_rear * x(5) - x(3)) / x(2)).epsilon(1e-14));
  }
  VectorXd x = s.x0;
  x(3) = 0.0;
  x(5) = 0.0;
  CHECK(bicycle_slip_angles(params, x, 0.3).second == 0.0);

  // The schedule varies with v, nu, delta and psi and nothing else.
  const VectorXd x_ref = vec({1, 2, 5, 0.3, 0.2, -0.1});
  const VectorXd u_ref = vec({1, 0.1});
  const VectorXd p = s.model.schedule(x_ref, u_ref).p;
  for (int i : {2, 3, 4}) {
    VectorXd xp = x_ref;
    xp(i) += 0.01;
    CHECK(max_abs(s.model.schedule(xp, u_ref).p - p) > 0.0);
  }
  for (int i : {0, 1, 5}) {
    VectorXd xp = x_ref;
    xp(i) += 0.01;
    CHECK(max_abs(s.model.schedule(xp, u_ref).p - p) == 0.0);
  }
  CHECK(max_abs(s.model.schedule(x_ref, vec({2, 0.1})).p - p) == 0.0);
  CHECK(max_abs(s.model.schedule(x_ref, vec({1, 0.2})).p - p) > 0.0);

  BicycleParams bad;
  bad.v_min = 0.0;
  CHECK_THROWS_AS((void)bicycle_scenario(bad), std::invalid_argument);
}

TEST_CASE("bicycle reference is consistent with its own kinematics") {
  const BicycleParams params;
  const double h = 1e-5;
  for (double t : {0.0, 1.3, 2.5, 7.0}) {
    const VectorXd r = bicycle_reference(params, t);
    const VectorXd d = (bicycle_reference(params, t + h) - bicycle_reference(params, t - h)) / (2 * h);
    CHECK(d(0) == doctest::Approx(r(2) * std::cos(r(4))).epsilon(1e-7));
    CHECK(d(1) == doctest::Approx(r(2) * std::sin(r(4))).epsilon(1e-7));
    CHECK(d(4) == doctest::Approx(r(5)).epsilon(1e-6));
    CHECK(r(3) == 0.0);
  }
  const auto s = bicycle_scenario(params);
  CHECK(s.x0(2) >= 1.0);
  const auto window = reference_window(s, 3);
  REQUIRE(window.size() == 15);
  CHECK(max_abs(window[0] - bicycle_reference(params, 4 * 0.05)) == 0.0);
  CHECK(reference_window(unicycle_scenario(), 0).empty());
}

TEST_CASE("scenario defaults") {
  const auto vdp = vanderpol_scenario();
  CHECK(vdp.config.N == 10);
  CHECK(vdp.steps == 40);
  CHECK(vdp.plant.t_s == 0.5);
  CHECK(vdp.plant.discretization == Discretization::rk4);
  const auto uni = unicycle_scenario();
  CHECK(uni.config.N == 20);
  CHECK(uni.steps == 100);
  CHECK(max_abs(uni.config.R - MatrixXd::Identity(2, 2)) == 0.0);
  const auto bike = bicycle_scenario();
  CHECK(bike.config.N == 15);
  CHECK(bike.steps == 400);
  CHECK(bike.plant.t_s == 0.05);
  CHECK(bike.config.tracking());
  CHECK_THROWS_AS((void)make_scenario("pendulum"), std::invalid_argument);
}
