#pragma once

// Dense operator-splitting (ADMM) solver for convex QPs
//   minimize 1/2 x'Px + q'x  subject to  l <= Ax <= u
// with Ruiz equilibration, adaptive step size, infeasibility certificates
// and active-set polishing. Sized for the MPC's ~80 variables.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "aware/common.hpp"

namespace aware {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kQpInf = 1e20;

struct QpProblem {
  MatrixXd P;
  VectorXd q;
  MatrixXd A;
  VectorXd l, u;

  int n() const { return static_cast<int>(q.size()); }
  int m() const { return static_cast<int>(l.size()); }
  double objective(const VectorXd& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }
};

struct QpSettings {
  int max_iter = 4000;
  double eps_abs = 1e-4;
  double eps_rel = 1e-4;
  double eps_pinf = 1e-5;
  double eps_dinf = 1e-5;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int scaling_iters = 10;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  int check_every = 5;
  bool polish = true;
};

enum class QpStatus { Solved, MaxIterations, PrimalInfeasible, DualInfeasible };

inline const char* qp_status_name(QpStatus s) {
  switch (s) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIterations: return "max_iter";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::DualInfeasible: return "dual_infeasible";
  }
  return "?";
}

struct QpResult {
  VectorXd x, y;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  double prim_res = 0.0, dual_res = 0.0;
  bool polished = false;
  double objective = 0.0;
  int active_constraints = 0;

  bool ok() const { return status == QpStatus::Solved || status == QpStatus::MaxIterations; }
};

namespace detail {

inline double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Residuals {
  double prim, dual, eps_prim, eps_dual;
};

// Residuals of (x, y, z) on the unscaled problem.
inline Residuals residuals(const QpProblem& p, const VectorXd& x, const VectorXd& z, const VectorXd& y,
                           const QpSettings& s) {
  const VectorXd Ax = p.A * x;
  const VectorXd Px = p.P * x;
  const VectorXd Aty = p.A.transpose() * y;
  Residuals r;
  r.prim = inf_norm(Ax - z);
  r.dual = inf_norm(Px + p.q + Aty);
  r.eps_prim = s.eps_abs + s.eps_rel * std::max(inf_norm(Ax), inf_norm(z));
  r.eps_dual = s.eps_abs + s.eps_rel * std::max({inf_norm(Px), inf_norm(Aty), inf_norm(p.q)});
  return r;
}

inline bool primal_infeasible(const QpProblem& p, const VectorXd& dy, double eps) {
  const double ny = inf_norm(dy);
  if (ny < 1e-30) return false;
  if (inf_norm(p.A.transpose() * dy) > eps * ny) return false;
  double s = 0;
  for (int i = 0; i < p.m(); ++i) {
    if (dy(i) > 0) {
      if (p.u(i) >= kQpInf) return false;
      s += p.u(i) * dy(i);
    } else if (dy(i) < 0) {
      if (p.l(i) <= -kQpInf) return false;
      s += p.l(i) * dy(i);
    }
  }
  return s < -eps * ny;
}

inline bool dual_infeasible(const QpProblem& p, const VectorXd& dx, double eps) {
  const double nx = inf_norm(dx);
  if (nx < 1e-30) return false;
  if (inf_norm(p.P * dx) > eps * nx || p.q.dot(dx) > -eps * nx) return false;
  const VectorXd Adx = p.A * dx;
  for (int i = 0; i < p.m(); ++i) {
    const bool lo_inf = p.l(i) <= -kQpInf, hi_inf = p.u(i) >= kQpInf;
    if (!lo_inf && Adx(i) < -eps * nx) return false;
    if (!hi_inf && Adx(i) > eps * nx) return false;
  }
  return true;
}

}  // namespace detail

/// Solves the QP; x0/y0 warm-start the iteration when sized correctly.
inline QpResult solve_qp(const QpProblem& prob, const QpSettings& s = {}, const VectorXd* x0 = nullptr,
                         const VectorXd* y0 = nullptr) {
  const int n = prob.n(), m = prob.m();
  if (prob.P.rows() != n || prob.P.cols() != n || prob.A.rows() != m || prob.A.cols() != n || prob.u.size() != m)
    throw ConfigError("solve_qp: inconsistent problem dimensions");
  for (int i = 0; i < m; ++i)
    if (prob.l(i) > prob.u(i)) throw ConfigError("solve_qp: lower bound exceeds upper bound");

  // Ruiz equilibration of the KKT matrix, then cost scaling.
  VectorXd D = VectorXd::Ones(n), E = VectorXd::Ones(m);
  MatrixXd P = prob.P, A = prob.A;
  VectorXd q = prob.q;
  for (int it = 0; it < s.scaling_iters; ++it) {
    VectorXd dn(n), em(m);
    for (int j = 0; j < n; ++j) {
      double c = std::max(P.col(j).cwiseAbs().maxCoeff(), m ? A.col(j).cwiseAbs().maxCoeff() : 0.0);
      dn(j) = c < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(c, 1e4));
    }
    for (int i = 0; i < m; ++i) {
      const double c = A.row(i).cwiseAbs().maxCoeff();
      em(i) = c < 1e-4 ? 1.0 : 1.0 / std::sqrt(std::min(c, 1e4));
    }
    P = dn.asDiagonal() * P * dn.asDiagonal();
    A = em.asDiagonal() * A * dn.asDiagonal();
    q = dn.cwiseProduct(q);
    D = D.cwiseProduct(dn);
    E = E.cwiseProduct(em);
  }
  double c = 1.0;
  {
    double pmean = 0;
    for (int j = 0; j < n; ++j) pmean += P.col(j).cwiseAbs().maxCoeff();
    pmean /= std::max(n, 1);
    const double g = std::max(pmean, detail::inf_norm(q));
    c = g < 1e-4 ? 1.0 : 1.0 / std::min(g, 1e4);
    P *= c;
    q *= c;
  }
  VectorXd l(m), u(m);
  for (int i = 0; i < m; ++i) {
    l(i) = prob.l(i) <= -kQpInf ? -kQpInf : E(i) * prob.l(i);
    u(i) = prob.u(i) >= kQpInf ? kQpInf : E(i) * prob.u(i);
  }

  // Per-row step sizes: equality rows are stiffer, free rows nearly inert.
  double rho = s.rho;
  auto rho_vec = [&](double r) {
    VectorXd rv(m);
    for (int i = 0; i < m; ++i) {
      if (l(i) <= -kQpInf && u(i) >= kQpInf)
        rv(i) = 1e-6;
      else if (std::abs(u(i) - l(i)) < 1e-10)
        rv(i) = 1e3 * r;
      else
        rv(i) = r;
    }
    return rv;
  };
  VectorXd rv = rho_vec(rho);
  Eigen::LLT<MatrixXd> kkt;
  auto factor = [&] {
    MatrixXd K = P + s.sigma * MatrixXd::Identity(n, n) + A.transpose() * rv.asDiagonal() * A;
    kkt.compute(K);
    if (kkt.info() != Eigen::Success) throw NumericError("solve_qp: KKT factorization failed (P not PSD?)");
  };
  factor();

  VectorXd x = VectorXd::Zero(n), z = VectorXd::Zero(m), y = VectorXd::Zero(m);
  if (x0 && x0->size() == n) x = D.cwiseInverse().cwiseProduct(*x0);
  if (y0 && y0->size() == m) y = c * E.cwiseInverse().cwiseProduct(*y0);
  z = (A * x).cwiseMax(l).cwiseMin(u);

  auto unscaled = [&](const VectorXd& xs, const VectorXd& zs, const VectorXd& ys) {
    return std::tuple<VectorXd, VectorXd, VectorXd>{D.cwiseProduct(xs), E.cwiseInverse().cwiseProduct(zs),
                                                    E.cwiseProduct(ys) / c};
  };

  QpResult res;
  res.status = QpStatus::MaxIterations;
  VectorXd x_prev = x, y_prev = y;
  int it = 0;
  for (it = 1; it <= s.max_iter; ++it) {
    x_prev = x;
    y_prev = y;
    const VectorXd rhs = s.sigma * x - q + A.transpose() * (rv.cwiseProduct(z) - y);
    const VectorXd xt = kkt.solve(rhs);
    const VectorXd zt = A * xt;
    x = s.alpha * xt + (1 - s.alpha) * x;
    const VectorXd zr = s.alpha * zt + (1 - s.alpha) * z;
    const VectorXd zn = (zr + rv.cwiseInverse().cwiseProduct(y)).cwiseMax(l).cwiseMin(u);
    y += rv.cwiseProduct(zr - zn);
    z = zn;

    if (it % s.check_every != 0 && it != s.max_iter) continue;
    const auto [xu, zu, yu] = unscaled(x, z, y);
    const auto r = detail::residuals(prob, xu, zu, yu, s);
    res.prim_res = r.prim;
    res.dual_res = r.dual;
    if (r.prim <= r.eps_prim && r.dual <= r.eps_dual) {
      res.status = QpStatus::Solved;
      break;
    }
    const VectorXd dy = E.cwiseProduct(y - y_prev) / c;
    if (detail::primal_infeasible(prob, dy, s.eps_pinf)) {
      res.status = QpStatus::PrimalInfeasible;
      break;
    }
    const VectorXd dx = D.cwiseProduct(x - x_prev);
    if (detail::dual_infeasible(prob, dx, s.eps_dinf)) {
      res.status = QpStatus::DualInfeasible;
      break;
    }
    if (s.adaptive_rho && it % s.adaptive_rho_interval == 0) {
      const VectorXd Ax = A * x, Px = P * x, Aty = A.transpose() * y;
      const double pn = detail::inf_norm(Ax - z) / std::max({detail::inf_norm(Ax), detail::inf_norm(z), 1e-30});
      const double dn = detail::inf_norm(Px + q + Aty) /
                        std::max({detail::inf_norm(Px), detail::inf_norm(Aty), detail::inf_norm(q), 1e-30});
      const double nr = std::clamp(rho * std::sqrt(pn / std::max(dn, 1e-30)), 1e-6, 1e6);
      if (nr > 5 * rho || nr < 0.2 * rho) {
        rho = nr;
        rv = rho_vec(rho);
        factor();
      }
    }
  }
  res.iterations = std::min(it, s.max_iter);
  auto [xu, zu, yu] = unscaled(x, z, y);
  res.x = xu;
  res.y = yu;

  if (res.status == QpStatus::PrimalInfeasible || res.status == QpStatus::DualInfeasible) return res;

  // Polishing: solve the equality-constrained problem on the guessed active
  // set, with iterative refinement against the unregularized KKT system.
  // The guess is corrected a few times: rows with wrong-sign multipliers
  // leave the set, violated rows join it.
  if (s.polish) {
    // side: -1 at lower bound, +1 at upper bound, 0 inactive
    std::vector<int> side(static_cast<std::size_t>(m), 0);
    for (int i = 0; i < m; ++i) {
      if (zu(i) - prob.l(i) < -yu(i) && prob.l(i) > -kQpInf)
        side[static_cast<std::size_t>(i)] = -1;
      else if (prob.u(i) - zu(i) < yu(i) && prob.u(i) < kQpInf)
        side[static_cast<std::size_t>(i)] = 1;
    }
    const auto ra = detail::residuals(prob, res.x, zu, res.y, s);
    for (int round = 0; round < 4 * n; ++round) {
      std::vector<int> act;
      for (int i = 0; i < m; ++i)
        if (side[static_cast<std::size_t>(i)] != 0) act.push_back(i);
      const int k = static_cast<int>(act.size());
      MatrixXd K = MatrixXd::Zero(n + k, n + k);
      const double delta = 1e-9;
      K.topLeftCorner(n, n) = prob.P;
      VectorXd rhs(n + k);
      rhs.head(n) = -prob.q;
      for (int j = 0; j < k; ++j) {
        const int i = act[static_cast<std::size_t>(j)];
        K.block(n + j, 0, 1, n) = prob.A.row(i);
        K.block(0, n + j, n, 1) = prob.A.row(i).transpose();
        rhs(n + j) = side[static_cast<std::size_t>(i)] < 0 ? prob.l(i) : prob.u(i);
      }
      MatrixXd Kreg = K;
      Kreg.topLeftCorner(n, n) += delta * MatrixXd::Identity(n, n);
      Kreg.bottomRightCorner(k, k) -= delta * MatrixXd::Identity(k, k);
      Eigen::PartialPivLU<MatrixXd> lu(Kreg);
      VectorXd sol = lu.solve(rhs);
      for (int ref = 0; ref < 3; ++ref) sol += lu.solve(rhs - K * sol);
      if (!sol.allFinite()) break;
      VectorXd xp = sol.head(n), yp = VectorXd::Zero(m);
      for (int j = 0; j < k; ++j) yp(act[static_cast<std::size_t>(j)]) = sol(n + j);
      const VectorXd Axp = prob.A * xp;
      // Fix the single worst inconsistency per round; changing many rows
      // at once cycles.
      const double ytol = 1e-7 * (1.0 + detail::inf_norm(yp));
      int worst = -1, worst_side = 0;
      double worst_val = 0.0;
      for (int i = 0; i < m; ++i) {
        const int sd = side[static_cast<std::size_t>(i)];
        if (prob.l(i) == prob.u(i)) continue;
        const double scale = 1.0 + prob.A.row(i).cwiseAbs().maxCoeff();
        double v = 0.0;
        int ns = sd;
        if (sd < 0 && yp(i) > ytol) {
          v = yp(i) / (1.0 + detail::inf_norm(yp));
          ns = 0;
        } else if (sd > 0 && yp(i) < -ytol) {
          v = -yp(i) / (1.0 + detail::inf_norm(yp));
          ns = 0;
        } else if (sd == 0 && Axp(i) > prob.u(i) + 1e-9 * (1.0 + std::abs(prob.u(i)))) {
          v = (Axp(i) - prob.u(i)) / scale;
          ns = 1;
        } else if (sd == 0 && Axp(i) < prob.l(i) - 1e-9 * (1.0 + std::abs(prob.l(i)))) {
          v = (prob.l(i) - Axp(i)) / scale;
          ns = -1;
        }
        if (v > worst_val) {
          worst_val = v;
          worst = i;
          worst_side = ns;
        }
      }
      const bool changed = worst >= 0;
      if (changed) side[static_cast<std::size_t>(worst)] = worst_side;
      if (changed) continue;
      const VectorXd zp = Axp.cwiseMax(prob.l).cwiseMin(prob.u);
      const auto rp = detail::residuals(prob, xp, zp, yp, s);
      if (rp.prim <= std::max(ra.prim, rp.eps_prim) && rp.dual <= std::max(ra.dual, rp.eps_dual)) {
        res.x = xp;
        res.y = yp;
        res.prim_res = rp.prim;
        res.dual_res = rp.dual;
        res.polished = true;
        if (rp.prim <= rp.eps_prim && rp.dual <= rp.eps_dual) res.status = QpStatus::Solved;
      }
      break;
    }
    int k = 0;
    for (int i = 0; i < m; ++i) k += side[static_cast<std::size_t>(i)] != 0;
    res.active_constraints = k;
  }
  res.objective = prob.objective(res.x);
  return res;
}

}  // namespace aware
