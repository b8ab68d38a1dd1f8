#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "bsteer/steering.hpp"

namespace bsteer {

// Stand-ins for the generating model's proposed latent motion.

struct LinearDynamics {
  Mat A;  // u_nom = A h
};

struct DriftToTarget {
  Vec target;
  double gain = 1.0;  // u_nom = gain * (target - h)
};

// Replays a recorded control sequence (e.g. finite differences of a logged
// trajectory); the rollout may not outrun it.
struct ReplayDynamics {
  std::vector<Vec> controls;
};

using NominalDynamics = std::variant<LinearDynamics, DriftToTarget, ReplayDynamics>;

inline Vec nominal_at(const NominalDynamics& dyn, const Vec& h, int t) {
  if (const auto* lin = std::get_if<LinearDynamics>(&dyn)) {
    if (lin->A.cols() != h.size()) throw DataError("linear dynamics dimension mismatch");
    return lin->A * h;
  }
  if (const auto* drift = std::get_if<DriftToTarget>(&dyn)) {
    require_same_dim(drift->target, h, "drift dynamics");
    return drift->gain * (drift->target - h);
  }
  const auto& replay = std::get<ReplayDynamics>(dyn);
  if (t < 0 || static_cast<std::size_t>(t) >= replay.controls.size())
    throw DataError("replay dynamics has no control for step " + std::to_string(t));
  require_same_dim(replay.controls[static_cast<std::size_t>(t)], h, "replay dynamics");
  return replay.controls[static_cast<std::size_t>(t)];
}

struct LatentTrajectory {
  std::vector<Vec> states;                  // steps + 1 entries
  std::vector<Vec> controls;                // steps entries
  Mat barrier_trace;                        // (steps + 1) x K raw head values
  Vec composed_trace;                       // merged margin per state
  std::vector<std::uint8_t> fallback_steps; // steering fallbacks per step
  double dt = 1.0;

  int steps() const { return static_cast<int>(controls.size()); }
};

namespace detail {

inline LatentTrajectory rollout_impl(const Vec& h0, const NominalDynamics& dyn,
                                     const BarrierBank& bank, const SteeringConfig& cfg,
                                     int steps, bool steered) {
  cfg.validate();
  if (steps < 1) throw DataError("rollout needs at least one step");
  if (h0.size() != bank.dim()) throw DataError("rollout: start dimension does not match bank");
  require_finite(h0, "rollout start");

  const Eigen::Index K = static_cast<Eigen::Index>(bank.size());
  LatentTrajectory traj;
  traj.dt = cfg.dt;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.controls.reserve(static_cast<std::size_t>(steps));
  traj.fallback_steps.assign(static_cast<std::size_t>(steps), 0);
  traj.barrier_trace.resize(steps + 1, K);
  traj.composed_trace.resize(steps + 1);

  Vec h = h0;
  traj.states.push_back(h);
  for (int t = 0; t < steps; ++t) {
    Vec u_nom = nominal_at(dyn, h, t);
    if (!u_nom.allFinite()) throw RolloutError("nominal control is non-finite", t);
    Vec values;
    Vec u_star;
    bool fell_back = false;
    if (steered) {
      SteeringOutcome out;
      switch (cfg.mode) {
        case SteerMode::Qp:
          out = steer_qp(h, u_nom, build_constraints(bank, h, cfg), cfg);
          break;
        case SteerMode::Top2:
          out = steer_top2(h, u_nom, build_constraints(bank, h, cfg), cfg);
          break;
        case SteerMode::Lse:
          out = steer_lse(h, u_nom, bank, cfg);
          break;
      }
      values = std::move(out.barrier_values_before);
      u_star = std::move(out.u_star);
      fell_back = out.fallback_triggered;
      h = std::move(out.corrected_state);
    } else {
      values = bank.values(h);
      u_star = u_nom;
      h = apply_update(h, u_star, cfg.dt);
    }
    if (!h.allFinite()) throw RolloutError("state became non-finite", t);
    // A state can stay finite while its barrier values overflow (a norm of a
    // huge vector, say); that is still a mid-run blow-up, not a data error.
    if (!values.allFinite()) throw RolloutError("barrier values became non-finite", t);
    traj.barrier_trace.row(t) = values.transpose();
    traj.composed_trace[t] = compose_lse(values, cfg.delta, cfg.kappa);
    traj.controls.push_back(std::move(u_star));
    traj.fallback_steps[static_cast<std::size_t>(t)] = fell_back ? 1 : 0;
    traj.states.push_back(h);
  }
  Vec final_values = bank.values(h);
  if (!final_values.allFinite())
    throw RolloutError("barrier values became non-finite", steps - 1);
  traj.barrier_trace.row(steps) = final_values.transpose();
  traj.composed_trace[steps] = compose_lse(final_values, cfg.delta, cfg.kappa);
  return traj;
}

}  // namespace detail

// Closed-loop rollout: each step steers the nominal control before applying
// the state update.
inline LatentTrajectory rollout(const Vec& h0, const NominalDynamics& dyn,
                                const BarrierBank& bank, const SteeringConfig& cfg, int steps) {
  return detail::rollout_impl(h0, dyn, bank, cfg, steps, true);
}

// Open-loop rollout of the nominal dynamics with barrier bookkeeping only;
// the negative control for verification harnesses.
inline LatentTrajectory rollout_nominal(const Vec& h0, const NominalDynamics& dyn,
                                        const BarrierBank& bank, const SteeringConfig& cfg,
                                        int steps) {
  return detail::rollout_impl(h0, dyn, bank, cfg, steps, false);
}

}  // namespace bsteer
