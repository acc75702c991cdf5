#include "lpvmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lpvmpc {

namespace {

// Working form of a problem: nonzero rows scaled to unit 2-norm, redundant
// equality rows removed. Index maps point back into the caller's problem.
struct ScaledProblem {
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_in;
  VectorXd b_in;
  std::vector<Eigen::Index> eq_rows;
  std::vector<Eigen::Index> in_rows;
  VectorXd eq_scale;
  VectorXd in_scale;
  std::vector<Eigen::Index> dropped_eq;  // dependent rows, checked for consistency
};

// Greedy selection of linearly independent rows via modified Gram-Schmidt.
class RowBasis {
 public:
  explicit RowBasis(Eigen::Index dim) : dim_(dim) {}

  bool try_add(const Eigen::Ref<const VectorXd>& row) {
    VectorXd r = row;
    const double norm0 = r.norm();
    if (norm0 == 0.0) return false;
    for (const auto& q : basis_) r -= q.dot(r) * q;
    for (const auto& q : basis_) r -= q.dot(r) * q;
    const double norm = r.norm();
    if (norm <= 1e-10 * norm0 || static_cast<Eigen::Index>(basis_.size()) >= dim_) return false;
    basis_.emplace_back(r / norm);
    return true;
  }

 private:
  Eigen::Index dim_;
  std::vector<VectorXd> basis_;
};

ScaledProblem scale_problem(const QpProblem& p, double feas_tol, bool& trivially_infeasible) {
  ScaledProblem s;
  const auto n = p.num_variables();
  trivially_infeasible = false;

  RowBasis basis(n);
  std::vector<VectorXd> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<double> eq_scale;
  for (Eigen::Index i = 0; i < p.num_equalities(); ++i) {
    const double nrm = p.A_eq.row(i).norm();
    if (nrm == 0.0) {
      if (std::abs(p.b_eq(i)) > feas_tol) trivially_infeasible = true;
      continue;
    }
    if (!basis.try_add(p.A_eq.row(i).transpose())) {
      s.dropped_eq.push_back(i);
      continue;
    }
    eq_rows.emplace_back(p.A_eq.row(i).transpose() / nrm);
    eq_rhs.push_back(p.b_eq(i) / nrm);
    eq_scale.push_back(nrm);
    s.eq_rows.push_back(i);
  }

  std::vector<Eigen::Index> in_idx;
  for (Eigen::Index i = 0; i < p.num_inequalities(); ++i) {
    if (p.A_in.row(i).norm() == 0.0) {
      if (p.b_in(i) < -feas_tol) trivially_infeasible = true;
      continue;
    }
    in_idx.push_back(i);
  }

  const auto me = static_cast<Eigen::Index>(eq_rows.size());
  s.A_eq.resize(me, n);
  s.b_eq.resize(me);
  s.eq_scale.resize(me);
  for (Eigen::Index i = 0; i < me; ++i) {
    s.A_eq.row(i) = eq_rows[i].transpose();
    s.b_eq(i) = eq_rhs[i];
    s.eq_scale(i) = eq_scale[i];
  }

  const auto mi = static_cast<Eigen::Index>(in_idx.size());
  s.A_in.resize(mi, n);
  s.b_in.resize(mi);
  s.in_scale.resize(mi);
  for (Eigen::Index k = 0; k < mi; ++k) {
    const auto i = in_idx[k];
    const double nrm = p.A_in.row(i).norm();
    s.A_in.row(k) = p.A_in.row(i) / nrm;
    s.b_in(k) = p.b_in(i) / nrm;
    s.in_scale(k) = nrm;
  }
  s.in_rows = std::move(in_idx);
  return s;
}

struct CoreResult {
  QpStatus status{QpStatus::numerical_failure};
  VectorXd d;
  VectorXd lambda;
  VectorXd mu;
  std::vector<Eigen::Index> working;  // inequality rows in the working set
  int iterations{0};
};

// Primal active-set iteration from a feasible start point. H is supplied as a
// Cholesky factor. The caller guarantees that the equality rows together with
// `working` are linearly independent.
class ActiveSetCore {
 public:
  ActiveSetCore(const Eigen::LLT<MatrixXd>& chol, const VectorXd& f, const MatrixXd& A_eq,
                const VectorXd& b_eq, const MatrixXd& A_in, const VectorXd& b_in,
                const QpSettings& settings)
      : chol_(chol), f_(f), A_eq_(A_eq), b_eq_(b_eq), A_in_(A_in), b_in_(b_in),
        settings_(settings) {}

  CoreResult run(VectorXd d, std::vector<Eigen::Index> working, int max_iterations) {
    CoreResult out;
    const auto n = f_.size();
    const auto me = A_eq_.rows();
    const auto mi = A_in_.rows();
    std::vector<char> in_working(static_cast<std::size_t>(mi), 0);
    for (auto i : working) in_working[static_cast<std::size_t>(i)] = 1;

    VectorXd p(n);
    VectorXd nu;

    for (int iter = 0; iter < max_iterations; ++iter) {
      out.iterations = iter + 1;
      const auto w = me + static_cast<Eigen::Index>(working.size());
      MatrixXd AW(w, n);
      VectorXd r(w);
      if (me > 0) {
        AW.topRows(me) = A_eq_;
        r.head(me) = b_eq_ - A_eq_ * d;
      }
      for (std::size_t k = 0; k < working.size(); ++k) {
        const auto row = me + static_cast<Eigen::Index>(k);
        AW.row(row) = A_in_.row(working[k]);
        r(row) = b_in_(working[k]) - A_in_.row(working[k]).dot(d);
      }

      const VectorXd g = chol_.matrixL().solve(VectorXd(apply_H(d) + f_));
      if (w == 0) {
        nu.resize(0);
        p = -chol_.matrixU().solve(g);
      } else {
        const MatrixXd Y = chol_.matrixL().solve(MatrixXd(AW.transpose()));
        Eigen::HouseholderQR<MatrixXd> qr(Y);
        const MatrixXd R = qr.matrixQR().topRows(w).triangularView<Eigen::Upper>();
        const double rmax = R.diagonal().cwiseAbs().maxCoeff();
        if (R.diagonal().cwiseAbs().minCoeff() <= 1e-13 * std::max(1.0, rmax)) {
          out.status = QpStatus::numerical_failure;
          out.d = d;
          return out;
        }
        VectorXd rhs = -(r + Y.transpose() * g);
        const auto Ru = R.triangularView<Eigen::Upper>();
        VectorXd tmp = Ru.transpose().solve(rhs);
        nu = Ru.solve(tmp);
        p = -chol_.matrixU().solve(VectorXd(g + Y * nu));
      }

      // Zero test relative to both the iterate and the unconstrained Newton
      // step, so that strongly scaled objectives (phase 1) still terminate.
      const double newton_scale = chol_.matrixU().solve(g).lpNorm<Eigen::Infinity>();
      const double step_eps =
          1e-11 * (1.0 + d.lpNorm<Eigen::Infinity>()) + 1e-12 * newton_scale;
      if (p.lpNorm<Eigen::Infinity>() <= step_eps) {
        // Stationary on the working set: inspect inequality multipliers.
        Eigen::Index drop = -1;
        double most_negative = -settings_.kkt_tol;
        Eigen::Index drop_row = std::numeric_limits<Eigen::Index>::max();
        for (std::size_t k = 0; k < working.size(); ++k) {
          const double m = nu(me + static_cast<Eigen::Index>(k));
          const auto row = working[k];
          if (m < most_negative || (m == most_negative && row < drop_row)) {
            most_negative = m;
            drop = static_cast<Eigen::Index>(k);
            drop_row = row;
          }
        }
        if (drop < 0) {
          d += p;
          out.status = QpStatus::optimal;
          out.d = std::move(d);
          out.lambda = nu.head(me);
          out.mu = VectorXd::Zero(mi);
          for (std::size_t k = 0; k < working.size(); ++k)
            out.mu(working[k]) = std::max(0.0, nu(me + static_cast<Eigen::Index>(k)));
          out.working = std::move(working);
          return out;
        }
        in_working[static_cast<std::size_t>(working[drop])] = 0;
        working.erase(working.begin() + drop);
        continue;
      }

      // Ratio test; ties go to the lowest row index.
      double alpha = 1.0;
      Eigen::Index blocking = -1;
      const double pnorm = p.norm();
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (in_working[static_cast<std::size_t>(i)]) continue;
        const double ap = A_in_.row(i).dot(p);
        if (ap <= 1e-14 * pnorm) continue;
        const double slack = std::max(0.0, b_in_(i) - A_in_.row(i).dot(d));
        const double a = slack / ap;
        if (a < alpha) {
          alpha = a;
          blocking = i;
        }
      }
      d += alpha * p;
      if (blocking >= 0) {
        working.push_back(blocking);
        in_working[static_cast<std::size_t>(blocking)] = 1;
      }
      if (!d.allFinite()) {
        out.status = QpStatus::numerical_failure;
        out.d = d;
        return out;
      }
    }
    out.status = QpStatus::max_iterations;
    out.d = std::move(d);
    out.working = std::move(working);
    return out;
  }

 private:
  VectorXd apply_H(const VectorXd& d) const {
    const auto L = chol_.matrixL();
    return L * (chol_.matrixU() * d);
  }

  const Eigen::LLT<MatrixXd>& chol_;
  const VectorXd& f_;
  const MatrixXd& A_eq_;
  const VectorXd& b_eq_;
  const MatrixXd& A_in_;
  const VectorXd& b_in_;
  const QpSettings& settings_;
};

double max_violation(const MatrixXd& A_in, const VectorXd& b_in, const VectorXd& d) {
  if (A_in.rows() == 0) return 0.0;
  return (A_in * d - b_in).maxCoeff();
}

std::vector<Eigen::Index> independent_subset(const MatrixXd& A_eq,
                                             const MatrixXd& A_in,
                                             const std::vector<Eigen::Index>& candidates) {
  RowBasis basis(A_in.cols());
  for (Eigen::Index i = 0; i < A_eq.rows(); ++i) basis.try_add(A_eq.row(i).transpose());
  std::vector<Eigen::Index> out;
  for (auto i : candidates)
    if (basis.try_add(A_in.row(i).transpose())) out.push_back(i);
  return out;
}

}  // namespace

double QpProblem::objective(const VectorXd& d) const { return 0.5 * d.dot(H * d) + f.dot(d); }

void QpProblem::validate() const {
  const auto n = H.rows();
  if (H.cols() != n) throw std::invalid_argument("QpProblem: H must be square");
  if (f.size() != n) throw std::invalid_argument("QpProblem: f has wrong length");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
    throw std::invalid_argument("QpProblem: equality block dimensions disagree");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
    throw std::invalid_argument("QpProblem: inequality block dimensions disagree");
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("QpProblem: H is not symmetric");
  if (!H.allFinite() || !f.allFinite() || !A_eq.allFinite() || !b_eq.allFinite() ||
      !A_in.allFinite() || !b_in.allFinite())
    throw std::invalid_argument("QpProblem: non-finite data");
}

QpProblem make_qp(MatrixXd H, VectorXd f) {
  const auto n = H.rows();
  QpProblem p;
  p.H = std::move(H);
  p.f = std::move(f);
  p.A_eq = MatrixXd::Zero(0, n);
  p.b_eq = VectorXd::Zero(0);
  p.A_in = MatrixXd::Zero(0, n);
  p.b_in = VectorXd::Zero(0);
  return p;
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max_iterations";
    case QpStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({stationarity, equality, inequality, complementarity, dual_infeasibility});
}

QpSolution QpSolver::solve(const QpProblem& problem, const std::optional<QpWarmStart>& warm_start) {
  problem.validate();
  const auto n = problem.num_variables();
  const auto m_eq = problem.num_equalities();
  const auto m_in = problem.num_inequalities();
  if (warm_start && warm_start->point.size() != n)
    throw std::invalid_argument("solve_qp: warm-start point has wrong dimension");

  QpSolution sol;
  sol.d_star = VectorXd::Zero(n);
  sol.lambda = VectorXd::Zero(m_eq);
  sol.mu = VectorXd::Zero(m_in);

  bool trivially_infeasible = false;
  const ScaledProblem sp = scale_problem(problem, settings_.feasibility_tol, trivially_infeasible);
  if (trivially_infeasible) {
    sol.status = QpStatus::infeasible;
    return sol;
  }
  const int cap = settings_.iteration_factor * static_cast<int>(n + m_in);

  // Curvature factorization with one regularization retry.
  Eigen::LLT<MatrixXd> chol(problem.H);
  auto pivots_ok = [&] {
    return chol.info() == Eigen::Success &&
           chol.matrixLLT().diagonal().array().square().minCoeff() >= settings_.regularization;
  };
  if (n > 0 && !pivots_ok()) {
    chol.compute(problem.H + settings_.regularization * MatrixXd::Identity(n, n));
    sol.regularized = true;
    if (chol.info() != Eigen::Success) {
      sol.status = QpStatus::numerical_failure;
      return sol;
    }
  }

  // Start point: warm point (or origin) projected onto the equality manifold.
  VectorXd d0 = warm_start ? warm_start->point : VectorXd::Zero(n);
  if (sp.A_eq.rows() > 0) {
    const VectorXd r = sp.b_eq - sp.A_eq * d0;
    d0 += sp.A_eq.completeOrthogonalDecomposition().solve(r);
  }

  std::vector<Eigen::Index> initial;
  int phase1_iterations = 0;
  const double t0 = std::max(0.0, max_violation(sp.A_in, sp.b_in, d0));

  if (t0 > settings_.feasibility_tol) {
    // Phase 1: minimize the worst violation t over (d, t), lightly regularized.
    const auto mi = sp.A_in.rows();
    const auto me = sp.A_eq.rows();
    MatrixXd A_eq1 = MatrixXd::Zero(me, n + 1);
    A_eq1.leftCols(n) = sp.A_eq;
    MatrixXd A_in1 = MatrixXd::Zero(mi + 1, n + 1);
    A_in1.topLeftCorner(mi, n) = sp.A_in;
    A_in1.block(0, n, mi, 1).setConstant(-1.0);
    A_in1(mi, n) = -1.0;
    VectorXd b_in1(mi + 1);
    b_in1 << sp.b_in, 0.0;

    double eps = 1e-6 / std::max(1.0, t0 * t0);
    bool feasible = false;
    for (int attempt = 0; attempt < 3 && !feasible; ++attempt, eps *= 1e-4) {
      MatrixXd H1 = eps * MatrixXd::Identity(n + 1, n + 1);
      VectorXd f1(n + 1);
      f1 << -eps * d0, 1.0;
      Eigen::LLT<MatrixXd> chol1(H1);
      VectorXd y0(n + 1);
      y0 << d0, t0;
      std::vector<Eigen::Index> w0;
      for (Eigen::Index i = 0; i < mi; ++i)
        if (sp.A_in.row(i).dot(d0) - t0 - sp.b_in(i) >= -1e-12 * std::max(1.0, t0)) w0.push_back(i);
      w0 = independent_subset(A_eq1, A_in1, w0);
      ActiveSetCore core(chol1, f1, A_eq1, sp.b_eq, A_in1, b_in1, settings_);
      const CoreResult res = core.run(y0, w0, cap);
      phase1_iterations += res.iterations;
      if (res.status != QpStatus::optimal) {
        sol.status = res.status;
        sol.iterations = phase1_iterations;
        return sol;
      }
      if (res.d(n) <= settings_.feasibility_tol) {
        feasible = true;
        d0 = res.d.head(n);
        for (auto i : res.working)
          if (i < mi) initial.push_back(i);
      }
    }
    if (!feasible) {
      sol.status = QpStatus::infeasible;
      sol.iterations = phase1_iterations;
      return sol;
    }
  }

  if (warm_start) {
    // Map caller indices to scaled rows; keep the ones tight at the start point.
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(m_in), -1);
    for (std::size_t k = 0; k < sp.in_rows.size(); ++k)
      pos[static_cast<std::size_t>(sp.in_rows[k])] = static_cast<Eigen::Index>(k);
    for (int i : warm_start->active_set) {
      if (i < 0 || i >= m_in) continue;
      const auto k = pos[static_cast<std::size_t>(i)];
      if (k < 0) continue;
      if (std::abs(sp.b_in(k) - sp.A_in.row(k).dot(d0)) <= settings_.feasibility_tol)
        initial.push_back(k);
    }
  }
  std::sort(initial.begin(), initial.end());
  initial.erase(std::unique(initial.begin(), initial.end()), initial.end());
  initial = independent_subset(sp.A_eq, sp.A_in, initial);

  ActiveSetCore core(chol, problem.f, sp.A_eq, sp.b_eq, sp.A_in, sp.b_in, settings_);
  CoreResult res = core.run(d0, initial, std::max(1, cap - phase1_iterations));
  sol.iterations = phase1_iterations + res.iterations;
  sol.status = res.status;
  sol.d_star = res.d;
  if (res.status != QpStatus::optimal) return sol;

  for (Eigen::Index k = 0; k < sp.A_eq.rows(); ++k)
    sol.lambda(sp.eq_rows[static_cast<std::size_t>(k)]) = res.lambda(k) / sp.eq_scale(k);
  for (auto i : sp.dropped_eq) {
    if (std::abs(problem.A_eq.row(i).dot(sol.d_star) - problem.b_eq(i)) >
        settings_.feasibility_tol * std::max(1.0, problem.A_eq.row(i).norm())) {
      sol.status = QpStatus::infeasible;
      return sol;
    }
  }
  for (auto k : res.working) {
    const auto row = sp.in_rows[static_cast<std::size_t>(k)];
    sol.mu(row) = res.mu(k) / sp.in_scale(k);
    sol.active_set.push_back(static_cast<int>(row));
  }
  std::sort(sol.active_set.begin(), sol.active_set.end());
  return sol;
}

QpSolution solve_qp(const QpProblem& problem, const std::optional<QpWarmStart>& warm_start,
                    const QpSettings& settings) {
  QpSolver solver(settings);
  return solver.solve(problem, warm_start);
}

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution) {
  const auto n = problem.num_variables();
  if (solution.d_star.size() != n || solution.lambda.size() != problem.num_equalities() ||
      solution.mu.size() != problem.num_inequalities())
    throw std::invalid_argument("kkt_residuals: dimension mismatch");

  const VectorXd& d = solution.d_star;
  KktResiduals k;
  VectorXd grad = problem.H * d + problem.f;
  if (problem.num_equalities() > 0) grad += problem.A_eq.transpose() * solution.lambda;
  if (problem.num_inequalities() > 0) grad += problem.A_in.transpose() * solution.mu;
  k.stationarity = n > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  if (problem.num_equalities() > 0)
    k.equality = (problem.A_eq * d - problem.b_eq).lpNorm<Eigen::Infinity>();
  if (problem.num_inequalities() > 0) {
    const VectorXd slack = problem.b_in - problem.A_in * d;
    k.inequality = std::max(0.0, -slack.minCoeff());
    k.complementarity = solution.mu.cwiseProduct(slack).lpNorm<Eigen::Infinity>();
    k.dual_infeasibility = std::max(0.0, -solution.mu.minCoeff());
  }
  return k;
}

void write_qp_dump(std::ostream& out, const QpProblem& problem) {
  const auto old_precision = out.precision(17);
  out << "QP " << problem.num_variables() << ' ' << problem.num_equalities() << ' '
      << problem.num_inequalities() << '\n';
  auto write_matrix = [&out](const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
      out << '\n';
    }
  };
  auto write_vector = [&out](const VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v(i);
    out << '\n';
  };
  write_matrix(problem.H);
  write_vector(problem.f);
  write_matrix(problem.A_eq);
  write_vector(problem.b_eq);
  write_matrix(problem.A_in);
  write_vector(problem.b_in);
  out.precision(old_precision);
}

QpProblem read_qp_dump(std::istream& in) {
  std::string tag;
  Eigen::Index n = 0, me = 0, mi = 0;
  if (!(in >> tag >> n >> me >> mi) || tag != "QP" || n < 0 || me < 0 || mi < 0)
    throw std::runtime_error("read_qp_dump: bad header");
  auto read_matrix = [&in](Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(in >> m(i, j))) throw std::runtime_error("read_qp_dump: truncated matrix");
    return m;
  };
  QpProblem p;
  p.H = read_matrix(n, n);
  p.f = read_matrix(n, 1);
  p.A_eq = read_matrix(me, n);
  p.b_eq = read_matrix(me, 1);
  p.A_in = read_matrix(mi, n);
  p.b_in = read_matrix(mi, 1);
  return p;
}

}  // namespace lpvmpc
