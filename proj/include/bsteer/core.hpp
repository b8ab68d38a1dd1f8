#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsteer/errors.hpp"

namespace bsteer {

// Latent states and control inputs are both vectors in R^{d_h}; the alias
// names record which role a value plays at an interface.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using LatentState = Vec;
using ControlInput = Vec;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw DataError(std::string(what) + " contains a non-finite value");
}

inline void require_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size())
    throw DataError(std::string(what) + ": dimension mismatch (" +
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

// +1 marks a state that should be preserved, -1 one the steering layer is
// meant to repel. Stored as a signed byte in the on-disk dump format.
enum class SafetyLabel : std::int8_t { Unsafe = -1, Safe = +1 };

inline SafetyLabel label_from_int(int v) {
  if (v == 1) return SafetyLabel::Safe;
  if (v == -1) return SafetyLabel::Unsafe;
  throw DataError("safety label must be +1 or -1, got " + std::to_string(v));
}

inline int label_to_int(SafetyLabel l) { return static_cast<int>(l); }

struct LabeledState {
  Vec state;
  SafetyLabel label = SafetyLabel::Safe;
  std::string source_id;  // sequence/run the state was captured from
};

struct SafetyDataset {
  Eigen::Index dim = 0;
  std::uint32_t layer_index = 0;
  std::vector<LabeledState> records;

  std::size_t size() const { return records.size(); }

  std::size_t count(SafetyLabel l) const {
    std::size_t n = 0;
    for (const auto& r : records)
      if (r.label == l) ++n;
    return n;
  }

  void validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].state.size() != dim)
        throw DataError("record " + std::to_string(i) + " has dimension " +
                        std::to_string(records[i].state.size()) + ", expected " +
                        std::to_string(dim));
      if (!records[i].state.allFinite())
        throw DataError("record " + std::to_string(i) + " contains a non-finite value");
    }
  }
};

enum class SteerMode { Qp, Top2, Lse };

inline const char* mode_name(SteerMode m) {
  switch (m) {
    case SteerMode::Qp: return "qp";
    case SteerMode::Top2: return "top2";
    case SteerMode::Lse: return "lse";
  }
  return "?";
}

inline SteerMode mode_from_name(const std::string& s) {
  if (s == "qp") return SteerMode::Qp;
  if (s == "top2") return SteerMode::Top2;
  if (s == "lse") return SteerMode::Lse;
  throw DataError("unknown steering mode '" + s + "' (expected qp, top2, or lse)");
}

struct SteeringConfig {
  double alpha = 0.3;        // decay rate of the barrier condition
  double delta = 0.0;        // safety threshold applied to every head
  double kappa = 10.0;       // sharpness of the smooth merge
  double dt = 1.0;           // latent step size
  SteerMode mode = SteerMode::Lse;
  double grad_floor = 1e-12; // below this gradient norm a row is unusable
  double qp_tol = 1e-9;      // feasibility/duality tolerance of the solver

  void validate() const {
    if (!(alpha > 0)) throw DataError("alpha must be positive");
    if (!(kappa > 0)) throw DataError("kappa must be positive");
    if (!(dt > 0)) throw DataError("dt must be positive");
    if (!(grad_floor >= 0)) throw DataError("grad_floor must be non-negative");
    if (!(qp_tol > 0)) throw DataError("qp_tol must be positive");
    if (!std::isfinite(delta)) throw DataError("delta must be finite");
  }
};

struct SteeringOutcome {
  ControlInput u_star;
  LatentState corrected_state;
  Vec barrier_values_before;        // raw head values at the pre-step state
  Vec barrier_values_after;         // raw head values at the corrected state
  std::vector<int> active_constraints;  // 0-based indices of binding rows
  SteerMode mode_used = SteerMode::Lse;
  bool fallback_triggered = false;
};

// Finite-difference velocity the generating model implied between two
// consecutive latent states.
inline ControlInput nominal_control(const LatentState& h_prev, const LatentState& h_t,
                                    double dt) {
  if (!(dt > 0)) throw DataError("dt must be positive");
  require_same_dim(h_prev, h_t, "nominal_control");
  require_finite(h_prev, "nominal_control: h_prev");
  require_finite(h_t, "nominal_control: h_t");
  return (h_t - h_prev) / dt;
}

// The single state-update expression used by every steering path; keeping it
// in one place makes corrected_state == h_prev + u*dt an exact identity.
inline LatentState apply_update(const LatentState& h_prev, const ControlInput& u, double dt) {
  return h_prev + u * dt;
}

}  // namespace bsteer
