#pragma once

// Dense tanh MLP with batched forward and reverse-mode backward passes.
// Samples are columns: X is (in x B).

#include <Eigen/Core>

#include <random>
#include <vector>

#include "aware/common.hpp"

namespace aware {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MlpGrad {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;

  void set_zero() {
    for (auto& w : dW) w.setZero();
    for (auto& b : db) b.setZero();
  }
};

class Mlp {
 public:
  Mlp() = default;

  /// Hidden layers use tanh; the last layer is linear unless tanh_output.
  Mlp(std::vector<int> widths, bool tanh_output, std::mt19937_64& rng, double out_scale = 1.0)
      : widths_(std::move(widths)), tanh_output_(tanh_output) {
    if (widths_.size() < 2) throw ConfigError("mlp: need at least input and output widths");
    for (int w : widths_)
      if (w < 1) throw ConfigError("mlp: widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const int in = widths_[l], out = widths_[l + 1];
      // Glorot-uniform weights, zero biases.
      const double lim = std::sqrt(6.0 / (in + out)) * (l + 2 == widths_.size() ? out_scale : 1.0);
      std::uniform_real_distribution<double> U(-lim, lim);
      MatrixXd W(out, in);
      for (int j = 0; j < in; ++j)
        for (int i = 0; i < out; ++i) W(i, j) = U(rng);
      W_.push_back(std::move(W));
      b_.push_back(VectorXd::Zero(out));
    }
  }

  const std::vector<int>& widths() const { return widths_; }
  bool tanh_output() const { return tanh_output_; }
  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  std::size_t layers() const { return W_.size(); }
  std::vector<MatrixXd>& weights() { return W_; }
  std::vector<VectorXd>& biases() { return b_; }
  const std::vector<MatrixXd>& weights() const { return W_; }
  const std::vector<VectorXd>& biases() const { return b_; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += static_cast<std::size_t>(W_[l].size() + b_[l].size());
    return n;
  }

  struct Cache {
    std::vector<MatrixXd> act;  // act[0] = input, act[l+1] = output of layer l
  };

  MatrixXd forward(const MatrixXd& X, Cache* cache = nullptr) const {
    if (X.rows() != in_dim()) throw ConfigError("mlp: input dimension mismatch");
    MatrixXd h = X;
    if (cache) {
      cache->act.clear();
      cache->act.push_back(X);
    }
    for (std::size_t l = 0; l < W_.size(); ++l) {
      MatrixXd z = W_[l] * h;
      z.colwise() += b_[l];
      if (l + 1 < W_.size() || tanh_output_) z = z.array().tanh().matrix();
      h = std::move(z);
      if (cache) cache->act.push_back(h);
    }
    return h;
  }

  VectorXd forward_one(const VectorXd& x) const { return forward(MatrixXd(x)).col(0); }

  MlpGrad zero_grad() const {
    MlpGrad g;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      g.dW.push_back(MatrixXd::Zero(W_[l].rows(), W_[l].cols()));
      g.db.push_back(VectorXd::Zero(b_[l].size()));
    }
    return g;
  }

  /// Accumulates parameter gradients into g and returns dL/dX.
  MatrixXd backward(const Cache& cache, const MatrixXd& dout, MlpGrad& g) const {
    MatrixXd d = dout;
    for (std::size_t li = W_.size(); li-- > 0;) {
      const MatrixXd& y = cache.act[li + 1];
      if (li + 1 < W_.size() || tanh_output_) d = d.cwiseProduct((1.0 - y.array().square()).matrix());
      g.dW[li].noalias() += d * cache.act[li].transpose();
      g.db[li] += d.rowwise().sum();
      d = W_[li].transpose() * d;
    }
    return d;
  }

  // Flat parameter views, layer by layer: W column-major then b.
  void pack(VectorXd& out, Eigen::Index& off) const {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      out.segment(off, W_[l].size()) = Eigen::Map<const VectorXd>(W_[l].data(), W_[l].size());
      off += W_[l].size();
      out.segment(off, b_[l].size()) = b_[l];
      off += b_[l].size();
    }
  }
  void unpack(const VectorXd& in, Eigen::Index& off) {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      Eigen::Map<VectorXd>(W_[l].data(), W_[l].size()) = in.segment(off, W_[l].size());
      off += W_[l].size();
      b_[l] = in.segment(off, b_[l].size());
      off += b_[l].size();
    }
  }
  static void pack_grad(const MlpGrad& g, VectorXd& out, Eigen::Index& off) {
    for (std::size_t l = 0; l < g.dW.size(); ++l) {
      out.segment(off, g.dW[l].size()) = Eigen::Map<const VectorXd>(g.dW[l].data(), g.dW[l].size());
      off += g.dW[l].size();
      out.segment(off, g.db[l].size()) = g.db[l];
      off += g.db[l].size();
    }
  }

 private:
  std::vector<int> widths_;
  bool tanh_output_ = false;
  std::vector<MatrixXd> W_;
  std::vector<VectorXd> b_;
};

}  // namespace aware
