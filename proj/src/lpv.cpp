#include "lpvmpc/lpv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace lpvmpc {

AffineLpvModel::AffineLpvModel(MatrixXd A0, std::vector<MatrixXd> A_terms, MatrixXd B0,
                               std::vector<MatrixXd> B_terms, ScheduleMap rho,
                               ParameterBox bounds, ScheduleJacobianMap rho_jacobians)
    : A0_(std::move(A0)),
      A_terms_(std::move(A_terms)),
      B0_(std::move(B0)),
      B_terms_(std::move(B_terms)),
      rho_(std::move(rho)),
      bounds_(std::move(bounds)),
      rho_jacobians_(std::move(rho_jacobians)) {
  const auto nx = A0_.rows();
  if (A0_.cols() != nx || B0_.rows() != nx)
    throw std::invalid_argument("AffineLpvModel: A0/B0 dimensions disagree");
  if (A_terms_.size() != B_terms_.size())
    throw std::invalid_argument("AffineLpvModel: A and B term counts differ");
  for (std::size_t i = 0; i < A_terms_.size(); ++i) {
    if (A_terms_[i].rows() != nx || A_terms_[i].cols() != nx)
      throw std::invalid_argument("AffineLpvModel: A term has wrong shape");
    if (B_terms_[i].rows() != nx || B_terms_[i].cols() != B0_.cols())
      throw std::invalid_argument("AffineLpvModel: B term has wrong shape");
  }
  const auto np = n_p();
  if (bounds_.lower.size() == 0 && bounds_.upper.size() == 0) {
    bounds_.lower = VectorXd::Constant(np, -std::numeric_limits<double>::infinity());
    bounds_.upper = VectorXd::Constant(np, std::numeric_limits<double>::infinity());
  }
  if (bounds_.lower.size() != np || bounds_.upper.size() != np)
    throw std::invalid_argument("AffineLpvModel: parameter box has wrong length");
  if (np > 0 && !rho_) throw std::invalid_argument("AffineLpvModel: missing scheduling map");
}

AffineLpvModel AffineLpvModel::lti(MatrixXd A, MatrixXd B) {
  return AffineLpvModel(std::move(A), {}, std::move(B), {},
                        [](const VectorXd&, const VectorXd&) { return VectorXd(0); }, {});
}

MatrixXd AffineLpvModel::eval_A(const VectorXd& p) const {
  if (p.size() != n_p()) throw std::invalid_argument("eval_A: scheduling vector has wrong length");
  MatrixXd A = A0_;
  for (Eigen::Index i = 0; i < n_p(); ++i) A.noalias() += p(i) * A_terms_[static_cast<std::size_t>(i)];
  return A;
}

MatrixXd AffineLpvModel::eval_B(const VectorXd& p) const {
  if (p.size() != n_p()) throw std::invalid_argument("eval_B: scheduling vector has wrong length");
  MatrixXd B = B0_;
  for (Eigen::Index i = 0; i < n_p(); ++i) B.noalias() += p(i) * B_terms_[static_cast<std::size_t>(i)];
  return B;
}

ScheduleSample AffineLpvModel::schedule(const VectorXd& x, const VectorXd& u) const {
  if (x.size() != n() || u.size() != m()) throw std::invalid_argument("schedule: dimension mismatch");
  ScheduleSample s;
  s.p = n_p() > 0 ? rho_(x, u) : VectorXd(0);
  if (s.p.size() != n_p()) throw std::logic_error("schedule: map returned wrong length");
  if (clamp_) {
    for (Eigen::Index i = 0; i < n_p(); ++i) {
      const double c = std::clamp(s.p(i), bounds_.lower(i), bounds_.upper(i));
      if (c != s.p(i) || std::isnan(s.p(i))) s.clamped = true;
      s.p(i) = c;
    }
  }
  if (!s.p.allFinite()) throw std::domain_error("schedule: non-finite scheduling parameter");
  return s;
}

VectorXd AffineLpvModel::step(const VectorXd& x, const VectorXd& u) const {
  const VectorXd p = schedule(x, u).p;
  return eval_A(p) * x + eval_B(p) * u;
}

ScheduleJacobians AffineLpvModel::scheduling_jacobians(const VectorXd& x, const VectorXd& u) const {
  if (rho_jacobians_) return rho_jacobians_(x, u);
  return finite_difference_jacobians(x, u);
}

ScheduleJacobians AffineLpvModel::finite_difference_jacobians(const VectorXd& x,
                                                              const VectorXd& u) const {
  const auto np = n_p();
  ScheduleJacobians J{MatrixXd::Zero(np, n()), MatrixXd::Zero(np, m())};
  if (np == 0) return J;
  auto column = [&](VectorXd xp, VectorXd up, VectorXd xm, VectorXd um, double h) {
    return VectorXd((rho_(xp, up) - rho_(xm, um)) / (2.0 * h));
  };
  for (Eigen::Index j = 0; j < n(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    J.d_dx.col(j) = column(xp, u, xm, u, h);
  }
  for (Eigen::Index j = 0; j < m(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(j)));
    VectorXd up = u, um = u;
    up(j) += h;
    um(j) -= h;
    J.d_du.col(j) = column(x, up, x, um, h);
  }
  return J;
}

std::string_view to_string(Discretization method) {
  return method == Discretization::euler ? "euler" : "rk4";
}

VectorXd integrate_plant(const NonlinearPlant& plant, const VectorXd& x, const VectorXd& u,
                         Discretization method) {
  if (x.size() != plant.n || u.size() != plant.m)
    throw std::invalid_argument("integrate_plant: dimension mismatch");
  const double h = plant.t_s;
  const auto& f = plant.f_continuous;
  VectorXd next;
  if (method == Discretization::euler) {
    next = x + h * f(x, u);
  } else {
    const VectorXd k1 = f(x, u);
    const VectorXd k2 = f(x + 0.5 * h * k1, u);
    const VectorXd k3 = f(x + 0.5 * h * k2, u);
    const VectorXd k4 = f(x + h * k3, u);
    next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!next.allFinite()) throw std::domain_error("integrate_plant: non-finite state");
  return next;
}

VectorXd discrete_step(const NonlinearPlant& plant, const VectorXd& x, const VectorXd& u) {
  return integrate_plant(plant, x, u, plant.discretization);
}

double embedding_exactness(const AffineLpvModel& model, const NonlinearPlant& plant,
                           const SampleBox& box, int n_samples, std::uint64_t seed) {
  if (model.n() != plant.n || model.m() != plant.m)
    throw std::invalid_argument("embedding_exactness: model and plant dimensions differ");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const VectorXd& lo, const VectorXd& hi) {
    VectorXd v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) v(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
    return v;
  };
  double worst = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    const VectorXd x = draw(box.x_lower, box.x_upper);
    const VectorXd u = draw(box.u_lower, box.u_upper);
    const double err = (model.step(x, u) - discrete_step(plant, x, u)).lpNorm<Eigen::Infinity>();
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace lpvmpc
