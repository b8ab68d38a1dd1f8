#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "bsteer/barrier.hpp"
#include "bsteer/qp_solver.hpp"

namespace bsteer {

// One linearized safety constraint at the pre-step state:
//
//   gradient . u + alpha * (value - threshold) >= 0
//
// keeps the barrier's linear model above threshold while decaying the
// current margin at rate alpha.
struct ConstraintRow {
  Vec gradient;      // db/dh at h_prev
  double value;      // b(h_prev)
  double threshold;  // delta
};

inline double row_margin(const ConstraintRow& row) { return row.value - row.threshold; }

inline double linearized_residual(const ConstraintRow& row, const Vec& u, double alpha) {
  return row.gradient.dot(u) + alpha * row_margin(row);
}

inline std::vector<ConstraintRow> build_constraints(const BarrierBank& bank, const Vec& h_prev,
                                                    const SteeringConfig& cfg) {
  cfg.validate();
  if (h_prev.size() != bank.dim())
    throw DataError("build_constraints: state dimension " + std::to_string(h_prev.size()) +
                    " does not match bank dimension " + std::to_string(bank.dim()));
  require_finite(h_prev, "build_constraints: state");
  std::vector<ConstraintRow> rows;
  rows.reserve(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) {
    ConstraintRow row;
    row.value = bank.head(k).value_and_gradient(h_prev, row.gradient);
    row.threshold = cfg.delta;
    if (!std::isfinite(row.value) || !row.gradient.allFinite())
      throw DataError("barrier head " + std::to_string(k) + " produced a non-finite value");
    rows.push_back(std::move(row));
  }
  return rows;
}

// Indices (0-based) of the rows whose linearized condition fails under the
// nominal control, worst margin first, ties to the lower index, at most two.
inline std::vector<int> select_top2(const std::vector<ConstraintRow>& rows, const Vec& u_nom,
                                    const SteeringConfig& cfg) {
  std::vector<int> candidates;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (linearized_residual(rows[k], u_nom, cfg.alpha) < 0.0)
      candidates.push_back(static_cast<int>(k));
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    double ma = row_margin(rows[static_cast<std::size_t>(a)]);
    double mb = row_margin(rows[static_cast<std::size_t>(b)]);
    if (ma != mb) return ma < mb;
    return a < b;
  });
  if (candidates.size() > 2) candidates.resize(2);
  return candidates;
}

// Intermediates of the two-constraint closed form, kept in the convention of
// the derivation that motivated it: negated barrier gradients and residuals
// at the nominal control. The correction itself is applied along +grad(b)
// with non-negative multipliers.
struct ClosedFormIntermediates {
  int index1 = -1, index2 = -1;
  Vec g1, g2;                    // negated gradients of the selected rows
  double h1 = 0.0, h2 = 0.0;     // alpha * margin
  Vec u_hat;                     // nominal control
  double h1_hat = 0.0, h2_hat = 0.0;  // residuals at the nominal control
  double gram11 = 0.0, gram12 = 0.0, gram22 = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0;
  // 0: passthrough, 1: only row 1 active, 2: only row 2 active, 3: both.
  int kkt_case = 0;
};

namespace detail {

inline Vec single_row_correction(const Vec& u_nom, const Vec& grad, double residual) {
  return u_nom + (std::max(-residual, 0.0) / grad.squaredNorm()) * grad;
}

inline Vec collect_values(const std::vector<ConstraintRow>& rows) {
  Vec v(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) v[static_cast<Eigen::Index>(k)] = rows[k].value;
  return v;
}

}  // namespace detail

// Closed-form correction restricted to the two worst rows. Rows beyond the
// selected pair may stay violated; that is the accepted cost of this mode.
inline SteeringOutcome steer_top2(const Vec& h_prev, const Vec& u_nom,
                                  const std::vector<ConstraintRow>& rows,
                                  const SteeringConfig& cfg,
                                  ClosedFormIntermediates* audit = nullptr) {
  cfg.validate();
  require_same_dim(h_prev, u_nom, "steer_top2");
  SteeringOutcome out;
  out.mode_used = SteerMode::Top2;
  out.barrier_values_before = detail::collect_values(rows);

  std::vector<int> sel = select_top2(rows, u_nom, cfg);
  const double floor2 = cfg.grad_floor * cfg.grad_floor;
  std::vector<int> usable;
  for (int k : sel) {
    if (rows[static_cast<std::size_t>(k)].gradient.squaredNorm() < floor2)
      out.fallback_triggered = true;  // row dropped: no usable direction
    else
      usable.push_back(k);
  }

  if (audit) {
    *audit = ClosedFormIntermediates{};
    audit->u_hat = u_nom;
    if (!usable.empty()) {
      const auto& r1 = rows[static_cast<std::size_t>(usable[0])];
      audit->index1 = usable[0];
      audit->g1 = -r1.gradient;
      audit->h1 = cfg.alpha * row_margin(r1);
      audit->h1_hat = linearized_residual(r1, u_nom, cfg.alpha);
      audit->gram11 = r1.gradient.squaredNorm();
    }
    if (usable.size() > 1) {
      const auto& r2 = rows[static_cast<std::size_t>(usable[1])];
      audit->index2 = usable[1];
      audit->g2 = -r2.gradient;
      audit->h2 = cfg.alpha * row_margin(r2);
      audit->h2_hat = linearized_residual(r2, u_nom, cfg.alpha);
      audit->gram22 = r2.gradient.squaredNorm();
      audit->gram12 = rows[static_cast<std::size_t>(usable[0])].gradient.dot(
          rows[static_cast<std::size_t>(usable[1])].gradient);
    }
  }

  if (usable.empty()) {
    out.u_star = u_nom;
    out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
    return out;
  }

  if (usable.size() == 1) {
    const auto& row = rows[static_cast<std::size_t>(usable[0])];
    double r = linearized_residual(row, u_nom, cfg.alpha);
    out.u_star = detail::single_row_correction(u_nom, row.gradient, r);
    out.active_constraints = {usable[0]};
    if (audit) {
      audit->lambda1 = std::max(-r, 0.0) / row.gradient.squaredNorm();
      audit->kkt_case = 1;
    }
    out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
    return out;
  }

  const auto& r1 = rows[static_cast<std::size_t>(usable[0])];
  const auto& r2 = rows[static_cast<std::size_t>(usable[1])];
  const double G11 = r1.gradient.squaredNorm();
  const double G22 = r2.gradient.squaredNorm();
  const double G12 = r1.gradient.dot(r2.gradient);
  const double det = G11 * G22 - G12 * G12;

  if (det < cfg.grad_floor * G11 * G22) {
    // Numerically collinear pair: enforce only the worse row.
    double r = linearized_residual(r1, u_nom, cfg.alpha);
    out.u_star = detail::single_row_correction(u_nom, r1.gradient, r);
    out.active_constraints = {usable[0]};
    out.fallback_triggered = true;
    if (audit) {
      audit->lambda1 = std::max(-r, 0.0) / G11;
      audit->kkt_case = 1;
    }
    out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
    return out;
  }

  // Violations (positive when the row fails at the nominal control).
  const double v1 = -linearized_residual(r1, u_nom, cfg.alpha);
  const double v2 = -linearized_residual(r2, u_nom, cfg.alpha);
  double lambda1 = 0.0, lambda2 = 0.0;
  int kkt_case;
  if (G12 * std::max(v2, 0.0) - G22 * v1 >= 0.0) {
    // Row 1 already satisfied at the row-2-only correction.
    lambda2 = std::max(v2, 0.0) / G22;
    kkt_case = 2;
  } else if (G12 * std::max(v1, 0.0) - G11 * v2 >= 0.0) {
    lambda1 = std::max(v1, 0.0) / G11;
    kkt_case = 1;
  } else {
    lambda1 = std::max((G22 * v1 - G12 * v2) / det, 0.0);
    lambda2 = std::max((G11 * v2 - G12 * v1) / det, 0.0);
    kkt_case = 3;
  }

  out.u_star = u_nom + lambda1 * r1.gradient + lambda2 * r2.gradient;
  if (lambda1 > 0.0) out.active_constraints.push_back(usable[0]);
  if (lambda2 > 0.0) out.active_constraints.push_back(usable[1]);
  std::sort(out.active_constraints.begin(), out.active_constraints.end());
  if (audit) {
    audit->lambda1 = lambda1;
    audit->lambda2 = lambda2;
    audit->kkt_case = kkt_case;
  }
  out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
  return out;
}

// Full-bank correction: enforce every row at once through the min-norm QP.
inline SteeringOutcome steer_qp(const Vec& h_prev, const Vec& u_nom,
                                const std::vector<ConstraintRow>& rows,
                                const SteeringConfig& cfg) {
  cfg.validate();
  require_same_dim(h_prev, u_nom, "steer_qp");
  SteeringOutcome out;
  out.mode_used = SteerMode::Qp;
  out.barrier_values_before = detail::collect_values(rows);

  const double floor2 = cfg.grad_floor * cfg.grad_floor;
  std::vector<Vec> g;
  std::vector<int> row_of;  // solver row -> original index
  bool dropped = false, dropped_violated = false;
  std::vector<double> viol;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    double resid = linearized_residual(rows[k], u_nom, cfg.alpha);
    if (rows[k].gradient.squaredNorm() < floor2) {
      dropped = true;
      if (resid < -cfg.qp_tol) dropped_violated = true;
      continue;
    }
    g.push_back(rows[k].gradient);
    row_of.push_back(static_cast<int>(k));
    viol.push_back(-resid);
  }
  if (dropped && (g.empty() || dropped_violated)) out.fallback_triggered = true;

  // Feasible nominal control passes through untouched (bitwise), not as
  // u_nom plus a zero correction.
  bool any_violated = false;
  for (double value : viol) any_violated = any_violated || value > 0.0;
  if (g.empty() || !any_violated) {
    out.u_star = u_nom;
    out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
    return out;
  }

  Vec v = Eigen::Map<Vec>(viol.data(), static_cast<Eigen::Index>(viol.size()));
  detail::QpResult sol = detail::solve_min_norm_qp(g, v, cfg.qp_tol);
  out.u_star = u_nom + sol.w;
  if (!sol.feasible) out.fallback_triggered = true;
  for (int i : sol.active) out.active_constraints.push_back(row_of[static_cast<std::size_t>(i)]);
  out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
  return out;
}

// --- smooth merge -------------------------------------------------------

// B(h) = -(1/kappa) ln sum_k exp(-kappa (b_k - delta)). Under-approximates
// the worst margin by at most ln(K)/kappa and is >= 0 only inside the safe
// set.
inline double compose_lse(const Vec& values, double delta, double kappa) {
  if (values.size() == 0) throw DataError("compose_lse: empty value vector");
  if (!(kappa > 0)) throw DataError("kappa must be positive");
  if (!values.allFinite()) throw DataError("compose_lse: non-finite barrier value");
  const double M = values.minCoeff() - delta;
  double s = 0.0;
  for (Eigen::Index k = 0; k < values.size(); ++k)
    s += std::exp(-kappa * (values[k] - delta - M));
  return M - std::log(s) / kappa;
}

// Softmin weights of the merge; they sum to one and concentrate on the worst
// margin as kappa grows.
inline Vec lse_softmin_weights(const Vec& values, double delta, double kappa) {
  if (values.size() == 0) throw DataError("lse_softmin_weights: empty value vector");
  if (!(kappa > 0)) throw DataError("kappa must be positive");
  const double M = values.minCoeff() - delta;
  Vec w(values.size());
  double s = 0.0;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    w[k] = std::exp(-kappa * (values[k] - delta - M));
    s += w[k];
  }
  return w / s;
}

// Weights below this contribute nothing at double precision; their backward
// passes are skipped.
inline constexpr double kLseWeightCutoff = 1e-16;

// One forward pass per head for the values, then a single weighted backward
// accumulation into one gradient vector. Per-head gradient vectors are never
// materialized.
inline double lse_value_and_gradient(const BarrierBank& bank, const Vec& h, double delta,
                                     double kappa, Vec& grad, Vec* values_out = nullptr) {
  Vec values = bank.values(h);
  if (!values.allFinite()) throw DataError("lse_value_and_gradient: non-finite barrier value");
  Vec weights = lse_softmin_weights(values, delta, kappa);
  grad = Vec::Zero(h.size());
  Vec scratch;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    double wk = weights[static_cast<Eigen::Index>(k)];
    if (wk < kLseWeightCutoff) continue;
    bank.head(k).value_and_gradient(h, scratch);
    grad += wk * scratch;
  }
  double B = compose_lse(values, delta, kappa);
  if (values_out) *values_out = std::move(values);
  return B;
}

// Single-constraint correction on the merged barrier.
inline SteeringOutcome steer_lse(const Vec& h_prev, const Vec& u_nom, const BarrierBank& bank,
                                 const SteeringConfig& cfg) {
  cfg.validate();
  require_same_dim(h_prev, u_nom, "steer_lse");
  SteeringOutcome out;
  out.mode_used = SteerMode::Lse;
  Vec grad;
  Vec values;
  double B = lse_value_and_gradient(bank, h_prev, cfg.delta, cfg.kappa, grad, &values);
  out.barrier_values_before = std::move(values);
  double r = grad.dot(u_nom) + cfg.alpha * B;
  if (r >= 0.0) {
    out.u_star = u_nom;
    out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
    return out;
  }
  if (grad.squaredNorm() < cfg.grad_floor * cfg.grad_floor) {
    out.u_star = u_nom;
    out.fallback_triggered = true;
    out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
    return out;
  }
  out.u_star = detail::single_row_correction(u_nom, grad, r);
  Eigen::Index worst = 0;
  out.barrier_values_before.minCoeff(&worst);
  out.active_constraints = {static_cast<int>(worst)};
  out.corrected_state = apply_update(h_prev, out.u_star, cfg.dt);
  return out;
}

// --- session ------------------------------------------------------------

// Binds a bank to a configuration and dispatches on the configured mode.
// steer() additionally reports the head values at the corrected state, which
// the low-level entry points cannot (they never see the bank).
class SteeringSession {
 public:
  SteeringSession(BarrierBank bank, SteeringConfig cfg)
      : bank_(std::move(bank)), cfg_(cfg) {
    cfg_.validate();
  }

  const BarrierBank& bank() const { return bank_; }
  const SteeringConfig& config() const { return cfg_; }

  SteeringOutcome steer_core(const Vec& h_prev, const Vec& u_nom) const {
    switch (cfg_.mode) {
      case SteerMode::Qp:
        return steer_qp(h_prev, u_nom, build_constraints(bank_, h_prev, cfg_), cfg_);
      case SteerMode::Top2:
        return steer_top2(h_prev, u_nom, build_constraints(bank_, h_prev, cfg_), cfg_);
      case SteerMode::Lse:
        return steer_lse(h_prev, u_nom, bank_, cfg_);
    }
    throw DataError("unknown steering mode");
  }

  SteeringOutcome steer(const Vec& h_prev, const Vec& u_nom) const {
    SteeringOutcome out = steer_core(h_prev, u_nom);
    out.barrier_values_after = bank_.values(out.corrected_state);
    return out;
  }

 private:
  BarrierBank bank_;
  SteeringConfig cfg_;
};

// --- linear baselines ----------------------------------------------------

// h + coeff * direction.
inline Vec baseline_activation_addition(const Vec& h, const Vec& direction, double coeff) {
  require_same_dim(h, direction, "baseline_activation_addition");
  return h + coeff * direction;
}

// Remove the component of h along the direction: h - d (d.h) / (d.d).
inline Vec baseline_directional_ablation(const Vec& h, const Vec& direction,
                                         double grad_floor = 1e-12) {
  require_same_dim(h, direction, "baseline_directional_ablation");
  double n2 = direction.squaredNorm();
  if (n2 < grad_floor * grad_floor)
    throw DataError("ablation direction is numerically zero");
  return h - direction * (direction.dot(h) / n2);
}

// Difference of class means: mean(safe) - mean(unsafe).
inline Vec steering_direction_from_data(const SafetyDataset& data) {
  data.validate();
  Vec sum_safe = Vec::Zero(data.dim), sum_unsafe = Vec::Zero(data.dim);
  std::size_t n_safe = 0, n_unsafe = 0;
  for (const auto& r : data.records) {
    if (r.label == SafetyLabel::Safe) {
      sum_safe += r.state;
      ++n_safe;
    } else {
      sum_unsafe += r.state;
      ++n_unsafe;
    }
  }
  if (n_safe == 0 || n_unsafe == 0)
    throw DataError("steering direction needs both classes (got " + std::to_string(n_safe) +
                    " safe, " + std::to_string(n_unsafe) + " unsafe)");
  return sum_safe / static_cast<double>(n_safe) - sum_unsafe / static_cast<double>(n_unsafe);
}

}  // namespace bsteer
