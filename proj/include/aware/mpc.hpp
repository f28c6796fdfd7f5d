#pragma once

// Observability-augmented MPC: condensed QP over the stacked inputs with
// tracking, effort, smoothness, corridor and state-bound terms, plus the
// quadratic yaw surrogate fitted to the observability curve.

#include <chrono>
#include <optional>

#include "aware/control.hpp"
#include "aware/observability.hpp"
#include "aware/qp.hpp"

namespace aware {

struct MpcWeights {
  double lambda_p = 10.0;
  double lambda_v = 1.0;
  double lambda_a = 0.1;
  double lambda_yawrate = 1.0;
  double lambda_obs = 0.0;

  std::array<double, 5> as_array() const { return {lambda_p, lambda_v, lambda_a, lambda_yawrate, lambda_obs}; }
  static MpcWeights from_array(const std::array<double, 5>& w) { return {w[0], w[1], w[2], w[3], w[4]}; }
  void validate() const {
    for (double x : as_array())
      if (!(x >= 0) || !std::isfinite(x)) throw ConfigError("mpc weights must be finite and >= 0");
  }
};

struct MpcConfig {
  int N = 20;
  double dt = 0.1;
  double lambda_R = 0.1;
  double lambda_Rcon = 0.5;
  double terminal_factor = 10.0;  // lambda_F = terminal_factor * lambda_p
  double v_max = 2.0;
  double a_max = 4.0;
  double j_max = 20.0;
  double yaw_rate_max = 8.0;
  // Fixed-rate baseline: penalty lambda_track * (yaw_rate - omega)^2.
  std::optional<double> track_yaw_rate;
  double lambda_track = 100.0;
  double fit_half_width = 0.35;
  int fit_n_local = 5;
  bool global_steering = true;
  double braking_tau = 0.5;
  SweepOptions sweep;
  SfcOptions sfc;
  QpSettings qp;

  void validate() const {
    if (N < 2) throw ConfigError("mpc: horizon must be >= 2");
    if (!(dt > 0)) throw ConfigError("mpc: dt must be positive");
    if (lambda_R < 0 || lambda_Rcon < 0 || terminal_factor < 0) throw ConfigError("mpc: negative fixed weight");
    if (track_yaw_rate && !(*track_yaw_rate > 0)) throw ConfigError("mpc: tracked yaw rate must be positive");
  }
};

/// Condensed problem plus what is needed to recover predicted states.
struct MpcProblem {
  QpProblem qp;
  int N = 0;
  Eigen::MatrixXd Gamma;   // 10N x 4N, stacked x_1..x_N sensitivity to U
  Eigen::VectorXd free;    // 10N, stacked x_1..x_N under U = 0
  int sfc_rows_begin = 0;  // first corridor row in qp.A
  int sfc_rows = 0;

  std::vector<StateVec> predict(const Eigen::VectorXd& U) const {
    const Eigen::VectorXd X = free + Gamma * U;
    std::vector<StateVec> xs(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) xs[static_cast<std::size_t>(k)] = X.segment<kNx>(kNx * k);
    return xs;
  }
};

inline int yaw_index(int k) { return kNu * k + 3; }

/// Restriction of a QP to a subset of variables. Rows must touch either
/// only the kept columns (kept) or none of them (dropped); the cost must
/// not couple kept and dropped columns.
struct SubQp {
  QpProblem qp;
  std::vector<int> cols, rows;
};

inline SubQp restrict_qp(const QpProblem& p, const std::vector<int>& cols) {
  std::vector<char> keep(static_cast<std::size_t>(p.n()), 0);
  for (int c : cols) keep[static_cast<std::size_t>(c)] = 1;
  SubQp s;
  s.cols = cols;
  for (int i = 0; i < p.m(); ++i) {
    bool in = false, out = false;
    for (int j = 0; j < p.n(); ++j)
      if (p.A(i, j) != 0.0) (keep[static_cast<std::size_t>(j)] ? in : out) = true;
    if (in && out) throw ConfigError("restrict_qp: constraint couples the partition");
    if (in) s.rows.push_back(i);
  }
  const auto nc = static_cast<Eigen::Index>(cols.size()), nr = static_cast<Eigen::Index>(s.rows.size());
  s.qp.P.resize(nc, nc);
  s.qp.q.resize(nc);
  s.qp.A.resize(nr, nc);
  s.qp.l.resize(nr);
  s.qp.u.resize(nr);
  for (Eigen::Index a = 0; a < nc; ++a) {
    s.qp.q(a) = p.q(cols[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < nc; ++b)
      s.qp.P(a, b) = p.P(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
    for (Eigen::Index r = 0; r < nr; ++r)
      s.qp.A(r, a) = p.A(s.rows[static_cast<std::size_t>(r)], cols[static_cast<std::size_t>(a)]);
  }
  for (Eigen::Index r = 0; r < nr; ++r) {
    s.qp.l(r) = p.l(s.rows[static_cast<std::size_t>(r)]);
    s.qp.u(r) = p.u(s.rows[static_cast<std::size_t>(r)]);
  }
  return s;
}

/// Solves the condensed problem as two independent QPs: translation (jerk)
/// and yaw (yaw rate). The model, constraints and cost never couple the
/// two, so this is the same optimum, and translation is bit-identical
/// across yaw controllers.
struct SplitResult {
  Eigen::VectorXd x, y;
  QpStatus status = QpStatus::Solved;
  int iterations = 0;
  int active_constraints = 0;
  bool ok() const { return status == QpStatus::Solved || status == QpStatus::MaxIterations; }
};

inline SplitResult solve_split(const MpcProblem& mp, const QpSettings& s, const Eigen::VectorXd* warm_x = nullptr,
                               const Eigen::VectorXd* warm_y = nullptr) {
  std::vector<int> tc, yc;
  for (int j = 0; j < mp.qp.n(); ++j) ((j % kNu) == 3 ? yc : tc).push_back(j);
  SplitResult out;
  out.x = Eigen::VectorXd::Zero(mp.qp.n());
  out.y = Eigen::VectorXd::Zero(mp.qp.m());
  for (const auto* cols : {&tc, &yc}) {
    const SubQp sub = restrict_qp(mp.qp, *cols);
    Eigen::VectorXd wx, wy;
    const Eigen::VectorXd *px = nullptr, *py = nullptr;
    if (warm_x && warm_x->size() == mp.qp.n()) {
      wx.resize(static_cast<Eigen::Index>(cols->size()));
      for (std::size_t a = 0; a < cols->size(); ++a) wx(static_cast<Eigen::Index>(a)) = (*warm_x)((*cols)[a]);
      px = &wx;
    }
    if (warm_y && warm_y->size() == mp.qp.m()) {
      wy.resize(static_cast<Eigen::Index>(sub.rows.size()));
      for (std::size_t r = 0; r < sub.rows.size(); ++r) wy(static_cast<Eigen::Index>(r)) = (*warm_y)(sub.rows[r]);
      py = &wy;
    }
    const QpResult r = solve_qp(sub.qp, s, px, py);
    out.iterations += r.iterations;
    out.active_constraints += r.active_constraints;
    if (!r.ok()) {
      out.status = r.status;
      return out;
    }
    for (std::size_t a = 0; a < cols->size(); ++a) out.x((*cols)[a]) = r.x(static_cast<Eigen::Index>(a));
    for (std::size_t k = 0; k < sub.rows.size(); ++k) out.y(sub.rows[k]) = r.y(static_cast<Eigen::Index>(k));
  }
  return out;
}

/// Builds the condensed QP. Decision vector U = [u_0; ...; u_{N-1}], each
/// u_k = [jerk; yaw_rate]. Yaw enters the cost only through the surrogate
/// in local coordinates psi_k - psi_0 (and the fixed-rate term if set).
inline MpcProblem assemble_qp(const UavState& x0, const std::vector<UavState>& refs, const MpcWeights& w,
                              const MpcConfig& cfg, const QuadraticFit& fit, const SafeCorridor& sfc,
                              const InputVec& u_prev = InputVec::Zero()) {
  cfg.validate();
  w.validate();
  const int N = cfg.N, nU = kNu * N;
  if (static_cast<int>(refs.size()) < N + 1) throw ConfigError("assemble_qp: need N+1 reference states");
  const DynamicsModel dyn(cfg.dt);

  MpcProblem mp;
  mp.N = N;
  mp.Gamma = Eigen::MatrixXd::Zero(kNx * N, nU);
  mp.free.resize(kNx * N);
  std::vector<MatA> Apow(static_cast<std::size_t>(N + 1));
  Apow[0] = MatA::Identity();
  for (int k = 1; k <= N; ++k) Apow[static_cast<std::size_t>(k)] = dyn.A * Apow[static_cast<std::size_t>(k - 1)];
  StateVec x0v = x0.vec();
  x0v(9) = 0.0;  // yaw in local coordinates about psi_0
  for (int k = 1; k <= N; ++k) {
    mp.free.segment<kNx>(kNx * (k - 1)) = Apow[static_cast<std::size_t>(k)] * x0v;
    for (int i = 0; i < k; ++i)
      mp.Gamma.block<kNx, kNu>(kNx * (k - 1), kNu * i) = Apow[static_cast<std::size_t>(k - 1 - i)] * dyn.B;
  }

  // Tracking on x_1..x_N; the last stage carries the terminal weight.
  Eigen::VectorXd qdiag = Eigen::VectorXd::Zero(kNx * N), e(kNx * N);
  const double lF = cfg.terminal_factor * w.lambda_p;
  for (int k = 1; k <= N; ++k) {
    const int o = kNx * (k - 1);
    const bool term = k == N;
    for (int i = 0; i < 3; ++i) {
      qdiag(o + i) = term ? lF : w.lambda_p;
      qdiag(o + 3 + i) = term ? lF : w.lambda_v;
      qdiag(o + 6 + i) = term ? lF : w.lambda_a;
    }
    StateVec r = refs[static_cast<std::size_t>(k)].vec();
    r(9) = 0.0;
    e.segment<kNx>(o) = mp.free.segment<kNx>(o) - r;
  }
  Eigen::MatrixXd H = 2.0 * mp.Gamma.transpose() * qdiag.asDiagonal() * mp.Gamma;
  Eigen::VectorXd g = 2.0 * mp.Gamma.transpose() * qdiag.cwiseProduct(e);

  // Effort and smoothness.
  H.diagonal().array() += 2.0 * cfg.lambda_R;
  for (int k = 0; k < N; ++k) H(yaw_index(k), yaw_index(k)) += 2.0 * w.lambda_yawrate;
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < kNu; ++j) {
      const int a = kNu * k + j;
      H(a, a) += 2.0 * cfg.lambda_Rcon;
      if (k > 0) {
        const int b = a - kNu;
        H(b, b) += 2.0 * cfg.lambda_Rcon;
        H(a, b) -= 2.0 * cfg.lambda_Rcon;
        H(b, a) -= 2.0 * cfg.lambda_Rcon;
      }
    }
  }
  g.segment<kNu>(0) -= 2.0 * cfg.lambda_Rcon * u_prev;

  // Observability surrogate on psi_k - psi_0 = dt * sum_{i<k} yaw_rate_i.
  if (w.lambda_obs > 0) {
    for (int k = 1; k <= N; ++k)
      for (int i = 0; i < k; ++i) {
        g(yaw_index(i)) += w.lambda_obs * fit.g_obs * cfg.dt;
        for (int j = 0; j < k; ++j) H(yaw_index(i), yaw_index(j)) += w.lambda_obs * fit.h_obs * cfg.dt * cfg.dt;
      }
  }
  if (cfg.track_yaw_rate) {
    // Effort on the yaw rate is measured about omega so the steady rate is
    // exactly omega rather than shrunk toward zero.
    const double om = *cfg.track_yaw_rate;
    for (int k = 0; k < N; ++k) {
      H(yaw_index(k), yaw_index(k)) += 2.0 * cfg.lambda_track;
      g(yaw_index(k)) -= 2.0 * (cfg.lambda_track + cfg.lambda_R + w.lambda_yawrate) * om;
    }
  }
  H = 0.5 * (H + H.transpose());

  // Constraints: input box, velocity/acceleration bounds, corridor.
  const int nsfc = static_cast<int>(sfc.halfspaces.size());
  const int m = nU + 6 * N + nsfc * N;
  QpProblem& qp = mp.qp;
  qp.P = H;
  qp.q = g;
  qp.A = Eigen::MatrixXd::Zero(m, nU);
  qp.l.resize(m);
  qp.u.resize(m);
  int row = 0;
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < kNu; ++j, ++row) {
      qp.A(row, kNu * k + j) = 1.0;
      const double lim = j < 3 ? cfg.j_max : cfg.yaw_rate_max;
      qp.l(row) = -lim;
      qp.u(row) = lim;
    }
  for (int k = 1; k <= N; ++k)
    for (int j = 0; j < 6; ++j, ++row) {
      const int sx = kNx * (k - 1) + 3 + j;
      const double lim = j < 3 ? cfg.v_max : cfg.a_max;
      qp.A.row(row) = mp.Gamma.row(sx);
      qp.l(row) = -lim - mp.free(sx);
      qp.u(row) = lim - mp.free(sx);
    }
  mp.sfc_rows_begin = row;
  mp.sfc_rows = nsfc * N;
  for (int k = 1; k <= N; ++k)
    for (const auto& h : sfc.halfspaces) {
      const int o = kNx * (k - 1);
      qp.A.row(row) = h.a.transpose() * mp.Gamma.block(o, 0, 3, nU);
      qp.l(row) = -kQpInf;
      qp.u(row) = h.b - h.a.dot(mp.free.segment<3>(o));
      ++row;
    }
  return mp;
}

/// Decelerate: jerk drives acceleration toward -v / tau, yaw held.
inline ControlInput braking_input(const UavState& x, const MpcConfig& cfg) {
  ControlInput u;
  for (int i = 0; i < 3; ++i) {
    const double a_des = std::clamp(-x.v(i) / cfg.braking_tau, -cfg.a_max, cfg.a_max);
    u.jerk(i) = std::clamp((a_des - x.a(i)) / cfg.dt, -cfg.j_max, cfg.j_max);
  }
  u.yaw_rate = 0.0;
  return u;
}

struct MpcDiagnostics {
  ObservabilityCurve curve;
  QuadraticFit fit;
  SafeCorridor sfc;
  QpStatus status = QpStatus::Solved;
  int iterations = 0;
  int active_constraints = 0;
  bool fallback = false;
  bool corridor_error = false;
  double solve_ms = 0.0;
  std::vector<StateVec> predicted;  // local-yaw states x_1..x_N
};

struct MpcOutput {
  ControlInput u;
  MpcDiagnostics diag;
};

/// Stateful wrapper holding the previous input and warm start.
class MpcController {
 public:
  explicit MpcController(MpcConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const MpcConfig& config() const { return cfg_; }
  MpcConfig& mutable_config() { return cfg_; }
  void reset() {
    u_prev_.setZero();
    warm_x_.resize(0);
    warm_y_.resize(0);
  }

  /// One control step. `curve` is the sweep at the current heading; null
  /// means no panorama yet, which gives a flat curve and no steering.
  MpcOutput step(const UavState& x0, const PilotCommand& cmd, const MpcWeights& w, const PointMap& map,
                 const ObservabilityCurve* curve) {
    using clock = std::chrono::steady_clock;
    MpcOutput out;
    auto& d = out.diag;
    if (curve) {
      d.curve = *curve;
    } else {
      d.curve.yaws = sweep_yaws(cfg_.sweep.candidates);
      d.curve.costs.assign(d.curve.yaws.size(), 6.0 / cfg_.sweep.reg);
    }
    d.fit = cfg_.global_steering ? steering_fit(d.curve, 0.0, cfg_.fit_half_width, cfg_.fit_n_local)
                                 : fit_quadratic(d.curve, 0.0, cfg_.fit_half_width, cfg_.fit_n_local);
    const auto t1 = clock::now();
    try {
      d.sfc = build_sfc(map, x0.p, cfg_.sfc);
    } catch (const CorridorError&) {
      d.corridor_error = true;
      d.fallback = true;
      out.u = braking_input(x0, cfg_);
      u_prev_ = out.u.vec();
      warm_x_.resize(0);
      return out;
    }
    const auto refs = build_reference(x0, cmd, cfg_.N, cfg_.dt);
    const MpcProblem mp = assemble_qp(x0, refs, w, cfg_, d.fit, d.sfc, u_prev_);
    const Eigen::VectorXd* wx = warm_x_.size() == mp.qp.n() ? &warm_x_ : nullptr;
    const Eigen::VectorXd* wy = warm_y_.size() == mp.qp.m() ? &warm_y_ : nullptr;
    const SplitResult r = solve_split(mp, cfg_.qp, wx, wy);
    d.solve_ms = std::chrono::duration<double, std::milli>(clock::now() - t1).count();
    d.status = r.status;
    d.iterations = r.iterations;
    d.active_constraints = r.active_constraints;
    if (!r.ok() || !r.x.allFinite()) {
      d.fallback = true;
      out.u = braking_input(x0, cfg_);
      warm_x_.resize(0);
      warm_y_.resize(0);
    } else {
      out.u = ControlInput::from_vec(r.x.head<kNu>());
      // Clip the ADMM tolerance slack so the applied input is in bounds.
      out.u.jerk = out.u.jerk.cwiseMax(-cfg_.j_max).cwiseMin(cfg_.j_max);
      out.u.yaw_rate = std::clamp(out.u.yaw_rate, -cfg_.yaw_rate_max, cfg_.yaw_rate_max);
      d.predicted = mp.predict(r.x);
      // Shift the horizon for the next warm start.
      warm_x_.resize(r.x.size());
      warm_x_.head(r.x.size() - kNu) = r.x.tail(r.x.size() - kNu);
      warm_x_.tail<kNu>() = r.x.tail<kNu>();
      warm_y_ = r.y;
    }
    u_prev_ = out.u.vec();
    return out;
  }

 private:
  MpcConfig cfg_;
  InputVec u_prev_ = InputVec::Zero();
  Eigen::VectorXd warm_x_, warm_y_;
};

}  // namespace aware
