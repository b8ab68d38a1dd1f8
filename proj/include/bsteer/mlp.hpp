#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "bsteer/barrier.hpp"
#include "bsteer/rng.hpp"

namespace bsteer {

inline constexpr double kLayerNormEps = 1e-5;

// Exact GELU and its derivative (erf form, not the tanh approximation).
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_derivative(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  return cdf + x * pdf;
}

// One hidden stage: affine map, layer normalization, GELU.
struct DenseBlock {
  Mat W;
  Vec b;
  Vec ln_gain;
  Vec ln_shift;
};

// Per-block activations cached by the training-time forward pass.
struct BlockCache {
  Vec x;     // block input
  Vec z;     // W x + b
  Vec xhat;  // normalized pre-activation
  Vec y;     // ln_gain * xhat + ln_shift
  Vec a;     // gelu(y)
  double inv_std = 0.0;
};

struct MlpWorkspace {
  std::vector<BlockCache> blocks;
};

// Parameter-shaped gradient accumulator (same tensor shapes as the network).
struct MlpGradients {
  std::vector<DenseBlock> blocks;
  Vec head_w;
  double head_b = 0.0;

  void set_zero() {
    for (auto& g : blocks) {
      g.W.setZero();
      g.b.setZero();
      g.ln_gain.setZero();
      g.ln_shift.setZero();
    }
    head_w.setZero();
    head_b = 0.0;
  }
};

// Scalar barrier head realized as an MLP: a chain of DenseBlocks followed by
// a linear readout. With no blocks the head is purely linear, which makes
// analytically known barriers exactly representable in the same container.
class MlpBarrier final : public Barrier {
 public:
  std::vector<DenseBlock> blocks;
  Vec head_w;
  double head_b = 0.0;

  MlpBarrier() = default;

  MlpBarrier(Eigen::Index input_dim, const std::vector<int>& hidden_dims) {
    Eigen::Index prev = input_dim;
    for (int d : hidden_dims) {
      if (d <= 0) throw DataError("hidden layer width must be positive");
      DenseBlock blk;
      blk.W = Mat::Zero(d, prev);
      blk.b = Vec::Zero(d);
      blk.ln_gain = Vec::Ones(d);
      blk.ln_shift = Vec::Zero(d);
      blocks.push_back(std::move(blk));
      prev = d;
    }
    head_w = Vec::Zero(prev);
    input_dim_ = input_dim;
  }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) on affine weights; layer norm
  // starts as the identity.
  void random_init(Rng& rng) {
    for (auto& blk : blocks) {
      double bound = 1.0 / std::sqrt(static_cast<double>(blk.W.cols()));
      for (Eigen::Index r = 0; r < blk.W.rows(); ++r)
        for (Eigen::Index c = 0; c < blk.W.cols(); ++c)
          blk.W(r, c) = rng.uniform(-bound, bound);
      for (Eigen::Index r = 0; r < blk.b.size(); ++r) blk.b[r] = rng.uniform(-bound, bound);
      blk.ln_gain.setOnes();
      blk.ln_shift.setZero();
    }
    double bound = 1.0 / std::sqrt(static_cast<double>(head_w.size()));
    for (Eigen::Index r = 0; r < head_w.size(); ++r) head_w[r] = rng.uniform(-bound, bound);
    head_b = rng.uniform(-bound, bound);
  }

  Eigen::Index input_dim() const override { return input_dim_; }

  void set_input_dim(Eigen::Index d) { input_dim_ = d; }

  std::vector<int> hidden_dims() const {
    std::vector<int> dims;
    for (const auto& blk : blocks) dims.push_back(static_cast<int>(blk.W.rows()));
    return dims;
  }

  double value(const Vec& h) const override {
    Vec a = h;
    Vec z, xhat;
    for (const auto& blk : blocks) {
      z.noalias() = blk.W * a;
      z += blk.b;
      double mu = z.mean();
      double var = (z.array() - mu).square().mean();
      double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      xhat = (z.array() - mu) * inv_std;
      a = (blk.ln_gain.array() * xhat.array() + blk.ln_shift.array())
              .unaryExpr([](double y) { return gelu(y); })
              .matrix();
    }
    return head_w.dot(a) + head_b;
  }

  double forward(const Vec& h, MlpWorkspace& ws) const {
    ws.blocks.resize(blocks.size());
    Vec a = h;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& blk = blocks[i];
      auto& c = ws.blocks[i];
      c.x = a;
      c.z.noalias() = blk.W * a;
      c.z += blk.b;
      double mu = c.z.mean();
      double var = (c.z.array() - mu).square().mean();
      c.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      c.xhat = (c.z.array() - mu) * c.inv_std;
      c.y = (blk.ln_gain.array() * c.xhat.array() + blk.ln_shift.array()).matrix();
      c.a = c.y.unaryExpr([](double y) { return gelu(y); });
      a = c.a;
    }
    return head_w.dot(a) + head_b;
  }

  // Reverse pass for d(out)/d(input) and, optionally, parameter gradients.
  // `dout` is the upstream scalar sensitivity. Parameter gradients are
  // accumulated (+=) so batches can share one MlpGradients.
  void backward(const Vec& h, const MlpWorkspace& ws, double dout, Vec* dinput,
                MlpGradients* dparams) const {
    const Vec& last = blocks.empty() ? h : ws.blocks.back().a;
    if (dparams) {
      dparams->head_w += dout * last;
      dparams->head_b += dout;
    }
    Vec da = dout * head_w;
    for (std::size_t idx = blocks.size(); idx-- > 0;) {
      const auto& blk = blocks[idx];
      const auto& c = ws.blocks[idx];
      Vec dy = (da.array() * c.y.unaryExpr([](double y) { return gelu_derivative(y); }).array())
                   .matrix();
      if (dparams) {
        dparams->blocks[idx].ln_gain += (dy.array() * c.xhat.array()).matrix();
        dparams->blocks[idx].ln_shift += dy;
      }
      Vec dxhat = (dy.array() * blk.ln_gain.array()).matrix();
      // Layer-norm backward over the feature dimension.
      double m1 = dxhat.mean();
      double m2 = (dxhat.array() * c.xhat.array()).mean();
      Vec dz = ((dxhat.array() - m1 - c.xhat.array() * m2) * c.inv_std).matrix();
      if (dparams) {
        dparams->blocks[idx].W += dz * c.x.transpose();
        dparams->blocks[idx].b += dz;
      }
      da.noalias() = blk.W.transpose() * dz;
    }
    if (dinput) *dinput = std::move(da);
  }

  double value_and_gradient(const Vec& h, Vec& grad) const override {
    MlpWorkspace ws;
    double v = forward(h, ws);
    backward(h, ws, 1.0, &grad, nullptr);
    return v;
  }

  MlpGradients make_gradients() const {
    MlpGradients g;
    g.blocks.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      g.blocks[i].W = Mat::Zero(blocks[i].W.rows(), blocks[i].W.cols());
      g.blocks[i].b = Vec::Zero(blocks[i].b.size());
      g.blocks[i].ln_gain = Vec::Zero(blocks[i].ln_gain.size());
      g.blocks[i].ln_shift = Vec::Zero(blocks[i].ln_shift.size());
    }
    g.head_w = Vec::Zero(head_w.size());
    g.head_b = 0.0;
    return g;
  }

 private:
  Eigen::Index input_dim_ = 0;
};

// Desk-scale default: the reference stack's shape at 1/32 width.
inline std::vector<int> default_hidden_dims() { return {64, 32, 16}; }

// Full-scale stack: input projection to 2048 and three narrowing blocks.
inline std::vector<int> reference_hidden_dims() { return {2048, 1024, 512, 256}; }

}  // namespace bsteer
