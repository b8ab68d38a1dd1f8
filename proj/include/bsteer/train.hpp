#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bsteer/mlp.hpp"

namespace bsteer {

// Mutable K-head network container used for training and serialization. For
// steering and verification it is viewed through the immutable BarrierBank.
struct MlpBank {
  std::vector<MlpBarrier> heads;
  std::vector<std::string> category_names;

  Eigen::Index dim() const { return heads.empty() ? 0 : heads[0].input_dim(); }

  Vec values(const Vec& h) const {
    Vec out(static_cast<Eigen::Index>(heads.size()));
    for (std::size_t k = 0; k < heads.size(); ++k)
      out[static_cast<Eigen::Index>(k)] = heads[k].value(h);
    return out;
  }

  BarrierBank as_barrier_bank() const {
    std::vector<std::shared_ptr<const Barrier>> ptrs;
    for (const auto& head : heads) ptrs.push_back(std::make_shared<MlpBarrier>(head));
    return BarrierBank(std::move(ptrs), category_names);
  }
};

inline MlpBank make_mlp_bank(int heads, Eigen::Index input_dim,
                             const std::vector<int>& hidden_dims, std::uint64_t seed,
                             std::vector<std::string> names = {}) {
  if (heads < 1) throw DataError("bank needs at least one head");
  MlpBank bank;
  Rng rng(seed);
  for (int k = 0; k < heads; ++k) {
    MlpBarrier net(input_dim, hidden_dims);
    net.random_init(rng);
    bank.heads.push_back(std::move(net));
  }
  if (names.empty())
    for (int k = 0; k < heads; ++k) names.push_back("head" + std::to_string(k));
  if (names.size() != static_cast<std::size_t>(heads))
    throw DataError("category name count does not match head count");
  bank.category_names = std::move(names);
  return bank;
}

// --- hinge losses ------------------------------------------------------
// Safe states pay for any head that dips negative; unsafe states pay until
// at least one head clears the margin below zero.

inline double hinge_safe(const Vec& barrier_values) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < barrier_values.size(); ++k)
    s += std::max(-barrier_values[k], 0.0);
  return s;
}

inline double hinge_unsafe(const Vec& barrier_values, double epsilon) {
  if (barrier_values.size() == 0) throw DataError("hinge_unsafe: empty value vector");
  return std::max(barrier_values.minCoeff() + epsilon, 0.0);
}

template <class Bank>
inline double loss_safe(const Bank& bank, const std::vector<LabeledState>& batch) {
  double s = 0.0;
  for (const auto& r : batch) {
    if (r.label != SafetyLabel::Safe)
      throw DataError("loss_safe received an unsafe-labeled state");
    s += hinge_safe(bank.values(r.state));
  }
  return s;
}

template <class Bank>
inline double loss_unsafe(const Bank& bank, const std::vector<LabeledState>& batch,
                          double epsilon) {
  if (!(epsilon > 0)) throw DataError("epsilon margin must be positive");
  double s = 0.0;
  for (const auto& r : batch) {
    if (r.label != SafetyLabel::Unsafe)
      throw DataError("loss_unsafe received a safe-labeled state");
    s += hinge_unsafe(bank.values(r.state), epsilon);
  }
  return s;
}

template <class Bank>
inline double total_loss(const Bank& bank, const std::vector<LabeledState>& safe_batch,
                         const std::vector<LabeledState>& unsafe_batch, double lambda_unsafe,
                         double epsilon) {
  return loss_safe(bank, safe_batch) + lambda_unsafe * loss_unsafe(bank, unsafe_batch, epsilon);
}

// --- training ----------------------------------------------------------

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
  int epochs = 100;
  int batch_size = 512;
  double learning_rate = 1e-2;
  double lambda_unsafe = 1.0;
  double epsilon_margin = 0.1;
  int heads = 4;
  std::vector<int> hidden_dims = default_hidden_dims();
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw DataError("learning_rate must be positive");
    if (!(lambda_unsafe >= 0)) throw DataError("lambda_unsafe must be non-negative");
    if (!(epsilon_margin > 0)) throw DataError("epsilon_margin must be positive");
    if (heads < 1) throw DataError("heads must be >= 1");
  }
};

struct TrainResult {
  double initial_loss = 0.0;
  std::vector<double> loss_history;  // full-dataset total loss after each epoch
};

namespace detail {

struct AdamState {
  std::vector<MlpGradients> m, v;
  long step = 0;
};

inline void adam_update(double lr, double b1, double b2, double eps, long t, Vec& p,
                        const Vec& g, Vec& m, Vec& v) {
  double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

inline void adam_update(double lr, double b1, double b2, double eps, long t, Mat& p,
                        const Mat& g, Mat& m, Mat& v) {
  double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    m(j) = b1 * m(j) + (1 - b1) * g(j);
    v(j) = b2 * v(j) + (1 - b2) * g(j) * g(j);
    p(j) -= lr * (m(j) / c1) / (std::sqrt(v(j) / c2) + eps);
  }
}

inline void sgd_update(double lr, Vec& p, const Vec& g) { p -= lr * g; }
inline void sgd_update(double lr, Mat& p, const Mat& g) { p -= lr * g; }

}  // namespace detail

// Full-dataset loss as defined by the objective (sums, not means).
inline double dataset_loss(const MlpBank& bank, const SafetyDataset& data,
                           const TrainConfig& cfg) {
  double s = 0.0;
  for (const auto& r : data.records) {
    Vec vals = bank.values(r.state);
    if (r.label == SafetyLabel::Safe)
      s += hinge_safe(vals);
    else
      s += cfg.lambda_unsafe * hinge_unsafe(vals, cfg.epsilon_margin);
  }
  return s;
}

// Mini-batch training of a fresh bank on the labeled dataset. Deterministic:
// a fixed-seed shuffle per epoch, sequential accumulation, no concurrency.
inline std::pair<MlpBank, TrainResult> train(const SafetyDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  std::size_t n_safe = data.count(SafetyLabel::Safe);
  std::size_t n_unsafe = data.records.size() - n_safe;
  if (n_safe == 0 || n_unsafe == 0)
    throw DataError("training requires both safe and unsafe examples (got " +
                    std::to_string(n_safe) + " safe, " + std::to_string(n_unsafe) + " unsafe)");

  MlpBank bank = make_mlp_bank(cfg.heads, data.dim, cfg.hidden_dims, cfg.seed);
  const std::size_t K = bank.heads.size();

  detail::AdamState opt;
  if (cfg.optimizer == Optimizer::Adam) {
    for (const auto& head : bank.heads) {
      opt.m.push_back(head.make_gradients());
      opt.v.push_back(head.make_gradients());
    }
  }
  std::vector<MlpGradients> grads;
  for (const auto& head : bank.heads) grads.push_back(head.make_gradients());

  TrainResult result;
  result.initial_loss = dataset_loss(bank, data, cfg);

  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(data.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<MlpWorkspace> ws(K);
  Vec vals(static_cast<Eigen::Index>(K));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (auto& g : grads) g.set_zero();
      for (std::size_t i = start; i < stop; ++i) {
        const auto& rec = data.records[order[i]];
        for (std::size_t k = 0; k < K; ++k)
          vals[static_cast<Eigen::Index>(k)] = bank.heads[k].forward(rec.state, ws[k]);
        if (rec.label == SafetyLabel::Safe) {
          for (std::size_t k = 0; k < K; ++k)
            if (vals[static_cast<Eigen::Index>(k)] < 0.0)
              bank.heads[k].backward(rec.state, ws[k], -1.0, nullptr, &grads[k]);
        } else {
          Eigen::Index kmin = 0;
          vals.minCoeff(&kmin);
          if (vals[kmin] + cfg.epsilon_margin > 0.0)
            bank.heads[static_cast<std::size_t>(kmin)].backward(
                rec.state, ws[static_cast<std::size_t>(kmin)], cfg.lambda_unsafe, nullptr,
                &grads[static_cast<std::size_t>(kmin)]);
        }
      }
      if (cfg.optimizer == Optimizer::Adam) {
        ++opt.step;
        for (std::size_t k = 0; k < K; ++k) {
          auto& head = bank.heads[k];
          for (std::size_t b = 0; b < head.blocks.size(); ++b) {
            detail::adam_update(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, opt.step,
                                head.blocks[b].W, grads[k].blocks[b].W, opt.m[k].blocks[b].W,
                                opt.v[k].blocks[b].W);
            detail::adam_update(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, opt.step,
                                head.blocks[b].b, grads[k].blocks[b].b, opt.m[k].blocks[b].b,
                                opt.v[k].blocks[b].b);
            detail::adam_update(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, opt.step,
                                head.blocks[b].ln_gain, grads[k].blocks[b].ln_gain,
                                opt.m[k].blocks[b].ln_gain, opt.v[k].blocks[b].ln_gain);
            detail::adam_update(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, opt.step,
                                head.blocks[b].ln_shift, grads[k].blocks[b].ln_shift,
                                opt.m[k].blocks[b].ln_shift, opt.v[k].blocks[b].ln_shift);
          }
          detail::adam_update(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, opt.step,
                              head.head_w, grads[k].head_w, opt.m[k].head_w, opt.v[k].head_w);
          double gb = grads[k].head_b;
          double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
          double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
          opt.m[k].head_b = cfg.beta1 * opt.m[k].head_b + (1 - cfg.beta1) * gb;
          opt.v[k].head_b = cfg.beta2 * opt.v[k].head_b + (1 - cfg.beta2) * gb * gb;
          head.head_b -= cfg.learning_rate * (opt.m[k].head_b / c1) /
                         (std::sqrt(opt.v[k].head_b / c2) + cfg.adam_eps);
        }
      } else {
        for (std::size_t k = 0; k < K; ++k) {
          auto& head = bank.heads[k];
          for (std::size_t b = 0; b < head.blocks.size(); ++b) {
            detail::sgd_update(cfg.learning_rate, head.blocks[b].W, grads[k].blocks[b].W);
            detail::sgd_update(cfg.learning_rate, head.blocks[b].b, grads[k].blocks[b].b);
            detail::sgd_update(cfg.learning_rate, head.blocks[b].ln_gain, grads[k].blocks[b].ln_gain);
            detail::sgd_update(cfg.learning_rate, head.blocks[b].ln_shift, grads[k].blocks[b].ln_shift);
          }
          detail::sgd_update(cfg.learning_rate, head.head_w, grads[k].head_w);
          head.head_b -= cfg.learning_rate * grads[k].head_b;
        }
      }
    }
    double epoch_loss = dataset_loss(bank, data, cfg);
    if (!std::isfinite(epoch_loss))
      throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) +
                          "; try a smaller learning rate");
    result.loss_history.push_back(epoch_loss);
  }
  return {std::move(bank), std::move(result)};
}

// Safety predicate the classifier columns in reports are based on.
inline bool classify_safe(const MlpBank& bank, const Vec& h, double delta = 0.0) {
  return bank.values(h).minCoeff() >= delta;
}

inline double accuracy(const MlpBank& bank, const SafetyDataset& data, double delta = 0.0) {
  if (data.records.empty()) throw DataError("accuracy over an empty dataset");
  std::size_t correct = 0;
  for (const auto& r : data.records) {
    bool predicted_safe = classify_safe(bank, r.state, delta);
    if (predicted_safe == (r.label == SafetyLabel::Safe)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.records.size());
}

}  // namespace bsteer
