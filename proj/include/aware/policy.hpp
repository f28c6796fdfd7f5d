#pragma once

// RL meta-controller: shared depth encoder, Gaussian actor, critic, the
// action-to-weight map, rewards, running statistics, GAE and PPO.

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "aware/mlp.hpp"
#include "aware/mpc.hpp"

namespace aware {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// Running statistics (Welford), rewards, action mapping.

struct RunningStat {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double x) {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }
  /// Chan et al. parallel combination.
  void merge(const RunningStat& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double n = count + o.count, d = o.mean - mean;
    mean += d * o.count / n;
    m2 += o.m2 + d * d * count * o.count / n;
    count = n;
  }
  double variance() const { return count > 0 ? std::max(0.0, m2 / count) : 0.0; }
};

inline double normalize(double r, const RunningStat& s) { return (r - s.mean) / std::sqrt(s.variance() + 1e-8); }

struct RewardConfig {
  double alpha1 = 1.0;
  double alpha2 = 0.5;
  double alpha3 = 0.5;
  int rte_window = 50;
  double voxel_size_exp = 0.5;

  void validate() const {
    if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0 || alpha1 + alpha2 + alpha3 <= 0)
      throw ConfigError("reward: alphas must be >= 0 and not all zero");
    if (rte_window < 2) throw ConfigError("reward: rte window must be >= 2");
    if (!(voxel_size_exp > 0)) throw ConfigError("reward: exploration voxel size must be positive");
  }
};

struct RewardParts {
  double total = 0.0;
  double acc = 0.0;
  double exp = 0.0;
  double smooth = 0.0;
};

inline RewardParts reward(double rte_val, double n_new, double n_total, const std::vector<double>& yaw_rates,
                          const RewardConfig& cfg) {
  if (rte_val < 0 || n_new < 0 || n_total < 0) throw ConfigError("reward: negative input");
  if (n_new > n_total) throw ConfigError("reward: more new voxels than total");
  RewardParts p;
  p.acc = std::exp(-300.0 * rte_val);
  p.exp = n_total >= 1 ? std::sqrt(n_new / n_total) : 0.0;
  double var = 0.0;
  if (yaw_rates.size() >= 2) {
    const double n = static_cast<double>(yaw_rates.size());
    const double m = std::accumulate(yaw_rates.begin(), yaw_rates.end(), 0.0) / n;
    for (double w : yaw_rates) var += (w - m) * (w - m);
    var /= n;
  }
  p.smooth = std::exp(-var);
  p.total = cfg.alpha1 * p.acc + cfg.alpha2 * p.exp + cfg.alpha3 * p.smooth;
  return p;
}

struct WeightBounds {
  std::array<double, 5> lo{1.0, 0.1, 0.01, 0.1, 0.0};
  std::array<double, 5> hi{50.0, 10.0, 1.0, 10.0, 2000.0};

  void validate() const {
    for (std::size_t i = 0; i < 5; ++i)
      if (!(lo[i] >= 0) || !(lo[i] <= hi[i])) throw ConfigError("weight bounds: need 0 <= lo <= hi");
  }
};

inline MpcWeights map_action(const VectorXd& ac, const WeightBounds& b) {
  if (ac.size() != 5) throw ConfigError("map_action: action must have 5 entries");
  std::array<double, 5> w{};
  for (std::size_t i = 0; i < 5; ++i) {
    const double a = std::clamp(ac(static_cast<Eigen::Index>(i)), -1.0, 1.0);
    w[i] = a == -1.0 ? b.lo[i] : a == 1.0 ? b.hi[i] : b.lo[i] + (a + 1.0) / 2.0 * (b.hi[i] - b.lo[i]);
  }
  return MpcWeights::from_array(w);
}

/// Inverse of map_action, used to seed actions from static weights.
inline VectorXd unmap_action(const MpcWeights& w, const WeightBounds& b) {
  const auto a = w.as_array();
  VectorXd ac(5);
  for (std::size_t i = 0; i < 5; ++i) {
    const double span = b.hi[i] - b.lo[i];
    ac(static_cast<Eigen::Index>(i)) = span > 0 ? std::clamp(2.0 * (a[i] - b.lo[i]) / span - 1.0, -1.0, 1.0) : 0.0;
  }
  return ac;
}

// ---------------------------------------------------------------------------
// GAE.

struct GaeResult {
  VectorXd advantages;
  VectorXd returns;
};

/// dones[t] marks that the episode ended after step t (no bootstrap across
/// it); last_value bootstraps the step after the buffer end.
inline GaeResult gae(const VectorXd& rewards, const VectorXd& values, const std::vector<uint8_t>& dones,
                     double last_value, double gamma, double lam) {
  const Eigen::Index T = rewards.size();
  if (values.size() != T || static_cast<Eigen::Index>(dones.size()) != T)
    throw ConfigError("gae: rewards, values and dones must have equal lengths");
  GaeResult r;
  r.advantages.resize(T);
  double next_adv = 0.0, next_value = last_value;
  for (Eigen::Index t = T; t-- > 0;) {
    const double nonterm = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double delta = rewards(t) + gamma * next_value * nonterm - values(t);
    next_adv = delta + gamma * lam * nonterm * next_adv;
    r.advantages(t) = next_adv;
    next_value = values(t);
  }
  r.returns = r.advantages + values;
  return r;
}

// ---------------------------------------------------------------------------
// Actor-critic.

struct PolicyArch {
  int s_int = 47;
  int v_raw = 3200;
  std::vector<int> enc_hidden{512};
  int enc_out = 128;
  std::vector<int> head_hidden{256, 256, 128};
  int act_dim = 5;
  double init_log_std = -0.5;
};

inline constexpr double kLog2Pi = 1.8378770664093453;

struct ActionSample {
  VectorXd action;  // clamped to [-1, 1]
  VectorXd raw;     // pre-clamp sample, used for log-probabilities
  VectorXd mean;
  double logprob = 0.0;
  double entropy = 0.0;
  double value = 0.0;
};

class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(const PolicyArch& arch, uint64_t seed) : arch_(arch) {
    std::mt19937_64 rng(seed);
    std::vector<int> we{arch.v_raw};
    we.insert(we.end(), arch.enc_hidden.begin(), arch.enc_hidden.end());
    we.push_back(arch.enc_out);
    enc_ = Mlp(we, true, rng);
    std::vector<int> wh{arch.s_int + arch.enc_out};
    wh.insert(wh.end(), arch.head_hidden.begin(), arch.head_hidden.end());
    std::vector<int> wa = wh, wc = wh;
    wa.push_back(arch.act_dim);
    wc.push_back(1);
    actor_ = Mlp(wa, false, rng, 0.01);
    critic_ = Mlp(wc, false, rng, 1.0);
    log_std_ = VectorXd::Constant(arch.act_dim, arch.init_log_std);
  }

  /// Rebuilds from explicit networks (checkpoint loading).
  ActorCritic(Mlp enc, Mlp actor, Mlp critic, VectorXd log_std)
      : enc_(std::move(enc)), actor_(std::move(actor)), critic_(std::move(critic)), log_std_(std::move(log_std)) {
    arch_.v_raw = enc_.in_dim();
    arch_.enc_out = enc_.out_dim();
    arch_.s_int = actor_.in_dim() - enc_.out_dim();
    arch_.act_dim = actor_.out_dim();
    arch_.enc_hidden.assign(enc_.widths().begin() + 1, enc_.widths().end() - 1);
    arch_.head_hidden.assign(actor_.widths().begin() + 1, actor_.widths().end() - 1);
    if (arch_.s_int < 0 || critic_.in_dim() != actor_.in_dim() || critic_.out_dim() != 1 ||
        log_std_.size() != arch_.act_dim)
      throw ConfigError("actor-critic: inconsistent network shapes");
  }

  const PolicyArch& arch() const { return arch_; }
  const Mlp& encoder() const { return enc_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const VectorXd& log_std() const { return log_std_; }
  VectorXd& log_std() { return log_std_; }

  MatrixXd encode(const MatrixXd& V) const { return enc_.forward(V); }

  struct Forward {
    Mlp::Cache ce, ca, cc;
    MatrixXd mean;   // act_dim x B
    VectorXd value;  // B
  };

  Forward forward(const MatrixXd& S, const MatrixXd& V) const {
    if (S.rows() != arch_.s_int || V.rows() != arch_.v_raw || S.cols() != V.cols())
      throw ConfigError("actor-critic: observation dimension mismatch");
    Forward f;
    const MatrixXd e = enc_.forward(V, &f.ce);
    MatrixXd h(S.rows() + e.rows(), S.cols());
    h << S, e;
    f.mean = actor_.forward(h, &f.ca);
    f.value = critic_.forward(h, &f.cc).row(0).transpose();
    return f;
  }

  double entropy() const { return log_std_.sum() + 0.5 * static_cast<double>(log_std_.size()) * (1.0 + kLog2Pi); }

  double logprob(const VectorXd& raw, const VectorXd& mean) const {
    const VectorXd z = (raw - mean).cwiseQuotient(log_std_.array().exp().matrix());
    return -0.5 * z.squaredNorm() - log_std_.sum() - 0.5 * static_cast<double>(raw.size()) * kLog2Pi;
  }

  ActionSample act(const VectorXd& s, const VectorXd& v, bool stochastic, std::mt19937_64& rng) const {
    const Forward f = forward(MatrixXd(s), MatrixXd(v));
    ActionSample a;
    a.mean = f.mean.col(0);
    a.value = f.value(0);
    if (!a.mean.allFinite() || !std::isfinite(a.value)) throw PolicyFault("policy produced a non-finite output");
    a.raw = a.mean;
    if (stochastic) {
      std::normal_distribution<double> N01;
      for (Eigen::Index i = 0; i < a.raw.size(); ++i) a.raw(i) += std::exp(log_std_(i)) * N01(rng);
    }
    a.action = a.raw.cwiseMax(-1.0).cwiseMin(1.0);
    a.logprob = logprob(a.raw, a.mean);
    a.entropy = entropy();
    return a;
  }

  std::size_t num_params() const {
    return enc_.num_params() + actor_.num_params() + critic_.num_params() + static_cast<std::size_t>(log_std_.size());
  }

  VectorXd params() const {
    VectorXd p(static_cast<Eigen::Index>(num_params()));
    Eigen::Index off = 0;
    enc_.pack(p, off);
    actor_.pack(p, off);
    critic_.pack(p, off);
    p.segment(off, log_std_.size()) = log_std_;
    return p;
  }

  void set_params(const VectorXd& p) {
    if (p.size() != static_cast<Eigen::Index>(num_params())) throw ConfigError("actor-critic: parameter size mismatch");
    Eigen::Index off = 0;
    enc_.unpack(p, off);
    actor_.unpack(p, off);
    critic_.unpack(p, off);
    log_std_ = p.segment(off, log_std_.size());
  }

  /// Backpropagates dL/dmean, dL/dvalue and dL/dlog_std into a flat
  /// gradient laid out like params().
  VectorXd backward(const Forward& f, const MatrixXd& dmean, const VectorXd& dvalue, const VectorXd& dlog_std) const {
    MlpGrad ge = enc_.zero_grad(), ga = actor_.zero_grad(), gc = critic_.zero_grad();
    const MatrixXd dha = actor_.backward(f.ca, dmean, ga);
    const MatrixXd dhc = critic_.backward(f.cc, MatrixXd(dvalue.transpose()), gc);
    const MatrixXd de = dha.bottomRows(arch_.enc_out) + dhc.bottomRows(arch_.enc_out);
    enc_.backward(f.ce, de, ge);
    VectorXd g(static_cast<Eigen::Index>(num_params()));
    Eigen::Index off = 0;
    Mlp::pack_grad(ge, g, off);
    Mlp::pack_grad(ga, g, off);
    Mlp::pack_grad(gc, g, off);
    g.segment(off, dlog_std.size()) = dlog_std;
    return g;
  }

 private:
  PolicyArch arch_;
  Mlp enc_, actor_, critic_;
  VectorXd log_std_;
};

// ---------------------------------------------------------------------------
// PPO.

struct PpoConfig {
  long total_steps = 3000000;
  double lr_start = 3e-4;
  double lr_end = 1e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double kl_limit = 0.01;
  int rollout = 1024;
  int batch = 512;
  int epochs = 8;
  double value_coef = 0.6;
  double entropy_coef = 1e-4;
  double max_grad_norm = 0.5;

  double lr_at(long step) const {
    const double f = total_steps > 0 ? std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0) : 1.0;
    return lr_start + (lr_end - lr_start) * f;
  }
  void validate() const {
    if (rollout < 1 || batch < 1 || epochs < 1) throw ConfigError("ppo: rollout, batch and epochs must be >= 1");
    if (!(clip > 0) || !(kl_limit > 0) || !(gamma > 0 && gamma <= 1) || !(gae_lambda >= 0 && gae_lambda <= 1))
      throw ConfigError("ppo: invalid clip, kl limit, gamma or lambda");
  }
};

/// One PPO minibatch (columns are samples).
struct PpoBatch {
  MatrixXd s_int, v_raw, raw_actions;
  VectorXd old_logp, advantages, returns;
  Eigen::Index size() const { return old_logp.size(); }

  PpoBatch select(const std::vector<Eigen::Index>& idx) const {
    PpoBatch b;
    const auto n = static_cast<Eigen::Index>(idx.size());
    b.s_int.resize(s_int.rows(), n);
    b.v_raw.resize(v_raw.rows(), n);
    b.raw_actions.resize(raw_actions.rows(), n);
    b.old_logp.resize(n);
    b.advantages.resize(n);
    b.returns.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index i = idx[static_cast<std::size_t>(j)];
      b.s_int.col(j) = s_int.col(i);
      b.v_raw.col(j) = v_raw.col(i);
      b.raw_actions.col(j) = raw_actions.col(i);
      b.old_logp(j) = old_logp(i);
      b.advantages(j) = advantages(i);
      b.returns(j) = returns(i);
    }
    return b;
  }
};

struct PpoLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
};

/// Clipped surrogate + value_coef * MSE - entropy_coef * entropy, with the
/// analytic gradient when requested.
inline PpoLoss ppo_loss(const ActorCritic& ac, const PpoBatch& b, const PpoConfig& cfg, VectorXd* grad = nullptr) {
  const Eigen::Index B = b.size();
  if (B == 0) throw ConfigError("ppo_loss: empty batch");
  const auto f = ac.forward(b.s_int, b.v_raw);
  const VectorXd inv_var = (-2.0 * ac.log_std()).array().exp().matrix();
  const double nb = static_cast<double>(B);
  PpoLoss L;
  const int A = static_cast<int>(ac.log_std().size());
  MatrixXd dmean = MatrixXd::Zero(A, B);
  VectorXd dlogstd = VectorXd::Zero(A);
  VectorXd dvalue(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const VectorXd diff = b.raw_actions.col(j) - f.mean.col(j);
    const double logp = ac.logprob(b.raw_actions.col(j), f.mean.col(j));
    const double lr = logp - b.old_logp(j);
    const double ratio = std::exp(lr);
    const double adv = b.advantages(j);
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
    L.policy -= std::min(unclipped, clipped) / nb;
    L.approx_kl += ((ratio - 1.0) - lr) / nb;
    const bool clip_active = (adv >= 0 && ratio > 1.0 + cfg.clip) || (adv < 0 && ratio < 1.0 - cfg.clip);
    if (clip_active) L.clip_frac += 1.0 / nb;
    const double err = f.value(j) - b.returns(j);
    L.value += err * err / nb;
    dvalue(j) = cfg.value_coef * 2.0 * err / nb;
    if (!clip_active) {
      // d(-ratio*adv)/dlogp = -ratio*adv
      const double dlogp = -ratio * adv / nb;
      dmean.col(j) = dlogp * diff.cwiseProduct(inv_var);
      dlogstd += dlogp * (diff.array().square() * inv_var.array() - 1.0).matrix();
    }
  }
  L.entropy = ac.entropy();
  L.total = L.policy + cfg.value_coef * L.value - cfg.entropy_coef * L.entropy;
  if (grad) {
    dlogstd.array() -= cfg.entropy_coef;
    *grad = ac.backward(f, dmean, dvalue, dlogstd);
  }
  return L;
}

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v_(VectorXd::Zero(static_cast<Eigen::Index>(n))),
        b1_(beta1),
        b2_(beta2),
        eps_(eps) {}

  void step(VectorXd& params, const VectorXd& grad, double lr) {
    ++t_;
    m_ = b1_ * m_ + (1 - b1_) * grad;
    v_ = b2_ * v_ + (1 - b2_) * grad.cwiseAbs2();
    const double c1 = 1 - std::pow(b1_, static_cast<double>(t_)), c2 = 1 - std::pow(b2_, static_cast<double>(t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  VectorXd& m() { return m_; }
  VectorXd& v() { return v_; }
  const VectorXd& m() const { return m_; }
  const VectorXd& v() const { return v_; }
  uint64_t t() const { return t_; }
  void set_t(uint64_t t) { t_ = t; }

 private:
  VectorXd m_, v_;
  double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  uint64_t t_ = 0;
};

struct PpoReport {
  PpoLoss last;
  double kl = 0.0;  // on the full buffer after the update
  int minibatches = 0;
  int epochs_run = 0;
  bool early_stop = false;
  bool rolled_back = false;
  bool aborted = false;
  double lr = 0.0;
};

inline double buffer_kl(const ActorCritic& ac, const PpoBatch& buf) {
  const auto f = ac.forward(buf.s_int, buf.v_raw);
  double kl = 0.0;
  for (Eigen::Index j = 0; j < buf.size(); ++j) {
    const double lr = ac.logprob(buf.raw_actions.col(j), f.mean.col(j)) - buf.old_logp(j);
    kl += (std::exp(lr) - 1.0) - lr;
  }
  return kl / static_cast<double>(buf.size());
}

/// Advantages in buf must already be standardized. Stops once the buffer KL
/// exceeds the limit; a step that overshoots twice the limit is undone.
inline PpoReport ppo_update(ActorCritic& ac, Adam& opt, const PpoBatch& buf, const PpoConfig& cfg, long global_step,
                            std::mt19937_64& rng) {
  cfg.validate();
  PpoReport rep;
  rep.lr = cfg.lr_at(global_step);
  const VectorXd start = ac.params();
  const Adam opt_start = opt;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(buf.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (int ep = 0; ep < cfg.epochs && !rep.early_stop; ++ep) {
    std::shuffle(idx.begin(), idx.end(), rng);
    rep.epochs_run = ep + 1;
    for (std::size_t s = 0; s < idx.size() && !rep.early_stop; s += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t e = std::min(idx.size(), s + static_cast<std::size_t>(cfg.batch));
      const PpoBatch mb = buf.select({idx.begin() + static_cast<std::ptrdiff_t>(s), idx.begin() + static_cast<std::ptrdiff_t>(e)});
      VectorXd g;
      const PpoLoss L = ppo_loss(ac, mb, cfg, &g);
      if (!std::isfinite(L.total) || !g.allFinite()) {
        ac.set_params(start);
        opt = opt_start;
        rep.aborted = true;
        return rep;
      }
      const double gn = g.norm();
      if (cfg.max_grad_norm > 0 && gn > cfg.max_grad_norm) g *= cfg.max_grad_norm / gn;
      const VectorXd before = ac.params();
      const Adam opt_before = opt;
      VectorXd p = before;
      opt.step(p, g, rep.lr);
      ac.set_params(p);
      ++rep.minibatches;
      rep.last = L;
      rep.kl = buffer_kl(ac, buf);
      if (rep.kl > 2.0 * cfg.kl_limit) {
        ac.set_params(before);
        opt = opt_before;
        rep.kl = buffer_kl(ac, buf);
        rep.rolled_back = true;
        rep.early_stop = true;
      } else if (rep.kl > cfg.kl_limit) {
        rep.early_stop = true;
      }
    }
  }
  return rep;
}

/// Standardizes advantages in place (zero mean, unit variance).
inline void standardize(VectorXd& a) {
  if (a.size() < 2) return;
  const double m = a.mean();
  const double sd = std::sqrt((a.array() - m).square().mean());
  a = (a.array() - m) / (sd + 1e-8);
}

// ---------------------------------------------------------------------------
// AWPK1 checkpoints.

struct Checkpoint {
  ActorCritic policy;
  Adam opt;
  long global_step = 0;
  RunningStat reward_stat;
};

namespace detail {

template <class T>
void put(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

template <class T>
T get(const std::string& s, std::size_t& off) {
  if (off + sizeof(T) > s.size()) throw ParseError("checkpoint truncated", off);
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

inline void put_mlp(std::string& s, const Mlp& m) {
  put<uint32_t>(s, static_cast<uint32_t>(m.widths().size()));
  for (int w : m.widths()) put<int32_t>(s, w);
  put<uint8_t>(s, m.tanh_output() ? 1 : 0);
  for (std::size_t l = 0; l < m.layers(); ++l) {
    const MatrixXd& W = m.weights()[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) put<float>(s, static_cast<float>(W(i, j)));
    for (Eigen::Index i = 0; i < m.biases()[l].size(); ++i) put<float>(s, static_cast<float>(m.biases()[l](i)));
  }
}

inline Mlp get_mlp(const std::string& s, std::size_t& off) {
  const auto nw = get<uint32_t>(s, off);
  if (nw < 2 || nw > 64) throw ParseError("checkpoint: bad layer count", off);
  std::vector<int> widths;
  for (uint32_t i = 0; i < nw; ++i) {
    const auto w = get<int32_t>(s, off);
    if (w < 1 || w > (1 << 20)) throw ParseError("checkpoint: bad layer width", off);
    widths.push_back(w);
  }
  const bool tanh_out = get<uint8_t>(s, off) != 0;
  std::mt19937_64 rng(0);
  Mlp m(widths, tanh_out, rng);
  for (std::size_t l = 0; l < m.layers(); ++l) {
    MatrixXd& W = m.weights()[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = get<float>(s, off);
    for (Eigen::Index i = 0; i < m.biases()[l].size(); ++i) m.biases()[l](i) = get<float>(s, off);
  }
  return m;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
  std::string s = "AWPK1";
  detail::put<uint32_t>(s, 1);  // format version
  detail::put_mlp(s, c.policy.encoder());
  detail::put_mlp(s, c.policy.actor());
  detail::put_mlp(s, c.policy.critic());
  detail::put<uint32_t>(s, static_cast<uint32_t>(c.policy.log_std().size()));
  for (Eigen::Index i = 0; i < c.policy.log_std().size(); ++i) detail::put<float>(s, static_cast<float>(c.policy.log_std()(i)));
  detail::put<uint64_t>(s, c.opt.t());
  detail::put<uint64_t>(s, static_cast<uint64_t>(c.opt.m().size()));
  for (Eigen::Index i = 0; i < c.opt.m().size(); ++i) detail::put<float>(s, static_cast<float>(c.opt.m()(i)));
  for (Eigen::Index i = 0; i < c.opt.v().size(); ++i) detail::put<float>(s, static_cast<float>(c.opt.v()(i)));
  detail::put<int64_t>(s, c.global_step);
  detail::put<double>(s, c.reward_stat.count);
  detail::put<double>(s, c.reward_stat.mean);
  detail::put<double>(s, c.reward_stat.m2);
  return s;
}

inline Checkpoint decode_checkpoint(const std::string& s) {
  if (s.size() < 9 || s.compare(0, 5, "AWPK1") != 0) throw ParseError("checkpoint: bad magic", 0);
  std::size_t off = 5;
  if (detail::get<uint32_t>(s, off) != 1) throw ParseError("checkpoint: unsupported version", 5);
  Mlp enc = detail::get_mlp(s, off), actor = detail::get_mlp(s, off), critic = detail::get_mlp(s, off);
  const auto na = detail::get<uint32_t>(s, off);
  if (na > 1024) throw ParseError("checkpoint: bad action dimension", off);
  VectorXd ls(na);
  for (uint32_t i = 0; i < na; ++i) ls(i) = detail::get<float>(s, off);
  Checkpoint c;
  c.policy = ActorCritic(std::move(enc), std::move(actor), std::move(critic), std::move(ls));
  const auto t = detail::get<uint64_t>(s, off);
  const auto n = detail::get<uint64_t>(s, off);
  if (n != 0 && n != c.policy.num_params()) throw ParseError("checkpoint: optimizer size mismatch", off);
  c.opt = Adam(c.policy.num_params());
  c.opt.set_t(t);
  for (uint64_t i = 0; i < n; ++i) c.opt.m()(static_cast<Eigen::Index>(i)) = detail::get<float>(s, off);
  for (uint64_t i = 0; i < n; ++i) c.opt.v()(static_cast<Eigen::Index>(i)) = detail::get<float>(s, off);
  c.global_step = detail::get<int64_t>(s, off);
  c.reward_stat.count = detail::get<double>(s, off);
  c.reward_stat.mean = detail::get<double>(s, off);
  c.reward_stat.m2 = detail::get<double>(s, off);
  if (off != s.size()) throw ParseError("checkpoint: trailing bytes", off);
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp);
    const std::string s = encode_checkpoint(c);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!f) throw Error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot rename checkpoint to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace aware
