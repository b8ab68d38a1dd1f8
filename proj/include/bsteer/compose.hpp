#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bsteer/steering.hpp"

namespace bsteer {

// Composition of independently trained banks: concatenate heads over the
// same latent space and steer against all of them at once.

inline BarrierBank merge_banks(const std::vector<BarrierBank>& banks) {
  if (banks.empty()) throw DataError("merge_banks: no banks given");
  std::vector<std::shared_ptr<const Barrier>> heads;
  std::vector<std::string> names;
  for (std::size_t b = 0; b < banks.size(); ++b) {
    if (banks[b].dim() != banks[0].dim())
      throw DataError("merge_banks: bank " + std::to_string(b) + " has dimension " +
                      std::to_string(banks[b].dim()) + ", expected " +
                      std::to_string(banks[0].dim()));
    for (std::size_t k = 0; k < banks[b].size(); ++k) {
      heads.push_back(banks[b].head_ptr(k));
      names.push_back(banks[b].category_names()[k]);
    }
  }
  return BarrierBank(std::move(heads), std::move(names));
}

struct ComposeConfig {
  int steps = 40;            // steering iterations per state
  double violation_tol = 1e-3;
  std::vector<SteerMode> modes = {SteerMode::Qp, SteerMode::Top2, SteerMode::Lse};
  bool per_category = true;
};

struct ComposeModeStat {
  std::string name;
  long violations = 0;
  double rate = 0.0;
};

struct ComposeReport {
  long n_states = 0;
  std::vector<ComposeModeStat> composed;      // one entry per mode + "original"
  std::vector<ComposeModeStat> per_category;  // single-head steering, merged metric
};

namespace detail {

// Steer one state for a fixed number of steps with zero nominal control and
// report whether it still violates the merged bank.
inline bool still_violating(const BarrierBank& steer_bank, const BarrierBank& metric_bank,
                            const Vec& start, const SteeringConfig& cfg, int steps, double tol) {
  SteeringSession session(steer_bank, cfg);
  Vec h = start;
  Vec u_nom = Vec::Zero(h.size());
  for (int s = 0; s < steps; ++s) {
    SteeringOutcome out = session.steer_core(h, u_nom);
    h = std::move(out.corrected_state);
  }
  return metric_bank.min_margin(h, cfg.delta) < -tol;
}

}  // namespace detail

// Violation rates after iterated steering, per mode and (optionally) per
// individual category head. Per-category rows steer with one head but are
// scored against the full merged bank, which is what makes composition
// visible: a single head cannot fix the other categories' violations.
inline ComposeReport evaluate_composition(const BarrierBank& merged,
                                          const std::vector<Vec>& states,
                                          const SteeringConfig& base_cfg,
                                          const ComposeConfig& cc) {
  if (states.empty()) throw DataError("evaluate_composition: no states");
  ComposeReport report;
  report.n_states = static_cast<long>(states.size());

  ComposeModeStat original;
  original.name = "original";
  for (const auto& h : states)
    if (merged.min_margin(h, base_cfg.delta) < -cc.violation_tol) ++original.violations;
  original.rate = static_cast<double>(original.violations) / static_cast<double>(states.size());

  for (SteerMode mode : cc.modes) {
    SteeringConfig cfg = base_cfg;
    cfg.mode = mode;
    ComposeModeStat stat;
    stat.name = mode_name(mode);
    for (const auto& h : states)
      if (detail::still_violating(merged, merged, h, cfg, cc.steps, cc.violation_tol))
        ++stat.violations;
    stat.rate = static_cast<double>(stat.violations) / static_cast<double>(states.size());
    report.composed.push_back(std::move(stat));
  }
  report.composed.push_back(std::move(original));

  if (cc.per_category) {
    for (std::size_t k = 0; k < merged.size(); ++k) {
      SteeringConfig cfg = base_cfg;
      cfg.mode = SteerMode::Lse;  // single head: all modes coincide
      BarrierBank one = merged.single_head(k);
      ComposeModeStat stat;
      stat.name = merged.category_names()[k];
      for (const auto& h : states)
        if (detail::still_violating(one, merged, h, cfg, cc.steps, cc.violation_tol))
          ++stat.violations;
      stat.rate = static_cast<double>(stat.violations) / static_cast<double>(states.size());
      report.per_category.push_back(std::move(stat));
    }
  }
  return report;
}

}  // namespace bsteer
