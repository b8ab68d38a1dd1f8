#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bsteer/core.hpp"

namespace bsteer {

// A barrier head: scalar function b(h) whose sign (relative to the threshold
// delta) encodes safety of a latent state. Implementations must be
// deterministic and C^1 almost everywhere.
class Barrier {
 public:
  virtual ~Barrier() = default;

  virtual Eigen::Index input_dim() const = 0;

  virtual double value(const Vec& h) const = 0;

  // Returns b(h) and writes db/dh into grad (resized as needed).
  virtual double value_and_gradient(const Vec& h, Vec& grad) const = 0;
};

inline Vec input_gradient(const Barrier& b, const Vec& h) {
  Vec g;
  b.value_and_gradient(h, g);
  return g;
}

// b(h) = w.h + c. Safe side is the half-space w.h + c >= delta.
class HalfSpaceBarrier final : public Barrier {
 public:
  HalfSpaceBarrier(Vec normal, double offset)
      : normal_(std::move(normal)), offset_(offset) {
    require_finite(normal_, "HalfSpaceBarrier normal");
  }

  Eigen::Index input_dim() const override { return normal_.size(); }

  double value(const Vec& h) const override { return normal_.dot(h) + offset_; }

  double value_and_gradient(const Vec& h, Vec& grad) const override {
    grad = normal_;
    return normal_.dot(h) + offset_;
  }

  const Vec& normal() const { return normal_; }
  double offset() const { return offset_; }

 private:
  Vec normal_;
  double offset_;
};

// b(h) = R^2 - |h - c|^2. Safe inside the ball.
class SphereBarrier final : public Barrier {
 public:
  SphereBarrier(Vec center, double radius)
      : center_(std::move(center)), radius_(radius) {
    require_finite(center_, "SphereBarrier center");
    if (!(radius > 0)) throw DataError("SphereBarrier radius must be positive");
  }

  Eigen::Index input_dim() const override { return center_.size(); }

  double value(const Vec& h) const override {
    return radius_ * radius_ - (h - center_).squaredNorm();
  }

  double value_and_gradient(const Vec& h, Vec& grad) const override {
    grad = -2.0 * (h - center_);
    return radius_ * radius_ - (h - center_).squaredNorm();
  }

 private:
  Vec center_;
  double radius_;
};

// K heads over one latent space. Heads are immutable once banked; category
// names are optional labels carried through reports.
class BarrierBank {
 public:
  BarrierBank() = default;

  explicit BarrierBank(std::vector<std::shared_ptr<const Barrier>> heads,
                       std::vector<std::string> names = {})
      : heads_(std::move(heads)), names_(std::move(names)) {
    if (heads_.empty()) throw DataError("barrier bank needs at least one head");
    dim_ = heads_[0]->input_dim();
    for (const auto& b : heads_)
      if (b->input_dim() != dim_)
        throw DataError("barrier bank heads disagree on input dimension");
    if (!names_.empty() && names_.size() != heads_.size())
      throw DataError("category name count does not match head count");
    if (names_.empty())
      for (std::size_t k = 0; k < heads_.size(); ++k)
        names_.push_back("head" + std::to_string(k));
  }

  std::size_t size() const { return heads_.size(); }
  Eigen::Index dim() const { return dim_; }
  const Barrier& head(std::size_t k) const { return *heads_[k]; }
  std::shared_ptr<const Barrier> head_ptr(std::size_t k) const { return heads_[k]; }
  const std::vector<std::string>& category_names() const { return names_; }

  Vec values(const Vec& h) const {
    Vec out(static_cast<Eigen::Index>(heads_.size()));
    for (std::size_t k = 0; k < heads_.size(); ++k)
      out[static_cast<Eigen::Index>(k)] = heads_[k]->value(h);
    return out;
  }

  // min_k b_k(h) - delta: the margin the safety predicate is based on.
  double min_margin(const Vec& h, double delta) const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : heads_) m = std::min(m, b->value(h) - delta);
    return m;
  }

  BarrierBank single_head(std::size_t k) const {
    return BarrierBank({heads_.at(k)}, {names_.at(k)});
  }

 private:
  std::vector<std::shared_ptr<const Barrier>> heads_;
  std::vector<std::string> names_;
  Eigen::Index dim_ = 0;
};

}  // namespace bsteer
