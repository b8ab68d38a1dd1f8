#pragma once

#include <cmath>
#include <string>

#include "bsteer/core.hpp"
#include "bsteer/rng.hpp"

namespace bsteer {

// Synthetic safety datasets with known geometry. All coordinates are
// quantized to single precision at generation time, so a round trip through
// the f32 dump format is lossless.

enum class SyntheticFamily { TwoMoons2D, GaussianClusters, AnnulusVsCore };

inline const char* family_name(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::TwoMoons2D: return "two-moons";
    case SyntheticFamily::GaussianClusters: return "gaussian-clusters";
    case SyntheticFamily::AnnulusVsCore: return "annulus-vs-core";
  }
  return "?";
}

inline SyntheticFamily family_from_name(const std::string& s) {
  if (s == "two-moons") return SyntheticFamily::TwoMoons2D;
  if (s == "gaussian-clusters") return SyntheticFamily::GaussianClusters;
  if (s == "annulus-vs-core") return SyntheticFamily::AnnulusVsCore;
  throw DataError("unknown synthetic family '" + s +
                  "' (expected two-moons, gaussian-clusters, or annulus-vs-core)");
}

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::TwoMoons2D;
  int n_per_class = 1000;
  int dim = 2;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::uint32_t layer_index = 0;

  void validate() const {
    if (n_per_class < 1) throw DataError("n_per_class must be >= 1");
    if (dim < 2) throw DataError("synthetic dimension must be >= 2");
    if (!(noise >= 0)) throw DataError("noise must be non-negative");
  }
};

namespace detail {

inline double q32(double x) { return static_cast<double>(static_cast<float>(x)); }

inline void fill_extra_dims(Vec& v, int from, Rng& rng, double noise) {
  for (int i = from; i < v.size(); ++i) v[i] = q32(rng.normal(0.0, noise));
}

}  // namespace detail

// Two interleaved half-moon arcs; the second arc is lifted into the first's
// bowl far enough that no hyperplane separates the classes well. Arc
// parameter runs uniformly over [0, pi] (a single point sits at t = 0).
inline constexpr double kMoonVerticalOffset = 0.6;

inline SafetyDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SafetyDataset data;
  data.dim = spec.dim;
  data.layer_index = spec.layer_index;
  Rng rng(spec.seed);
  const int n = spec.n_per_class;
  const double pi = 3.14159265358979323846;

  auto push = [&](Vec v, SafetyLabel label, const char* cls, int i) {
    LabeledState rec;
    rec.state = std::move(v);
    rec.label = label;
    rec.source_id = std::string(family_name(spec.family)) + "/" + cls + "/" + std::to_string(i);
    data.records.push_back(std::move(rec));
  };

  switch (spec.family) {
    case SyntheticFamily::TwoMoons2D: {
      for (int i = 0; i < n; ++i) {
        double t = (n == 1) ? 0.0 : pi * i / (n - 1);
        Vec v(spec.dim);
        v[0] = detail::q32(std::cos(t) + rng.normal(0.0, spec.noise));
        v[1] = detail::q32(std::sin(t) + rng.normal(0.0, spec.noise));
        detail::fill_extra_dims(v, 2, rng, spec.noise);
        push(std::move(v), SafetyLabel::Safe, "safe", i);
      }
      for (int i = 0; i < n; ++i) {
        double t = (n == 1) ? 0.0 : pi * i / (n - 1);
        Vec v(spec.dim);
        v[0] = detail::q32(1.0 - std::cos(t) + rng.normal(0.0, spec.noise));
        v[1] = detail::q32(kMoonVerticalOffset - std::sin(t) + rng.normal(0.0, spec.noise));
        detail::fill_extra_dims(v, 2, rng, spec.noise);
        push(std::move(v), SafetyLabel::Unsafe, "unsafe", i);
      }
      break;
    }
    case SyntheticFamily::GaussianClusters: {
      // Antipodal cluster centers at distance 3 regardless of dimension.
      double c = 1.5 / std::sqrt(static_cast<double>(spec.dim));
      for (int i = 0; i < n; ++i) {
        Vec v(spec.dim);
        for (int j = 0; j < spec.dim; ++j) v[j] = detail::q32(c + rng.normal(0.0, spec.noise));
        push(std::move(v), SafetyLabel::Safe, "safe", i);
      }
      for (int i = 0; i < n; ++i) {
        Vec v(spec.dim);
        for (int j = 0; j < spec.dim; ++j) v[j] = detail::q32(-c + rng.normal(0.0, spec.noise));
        push(std::move(v), SafetyLabel::Unsafe, "unsafe", i);
      }
      break;
    }
    case SyntheticFamily::AnnulusVsCore: {
      // Safe core (radius <= 0.8) against an unsafe shell (radius in
      // [1.2, 2.0]); radial gap 0.4 before noise.
      auto direction = [&](Vec& v) {
        double norm2 = 0.0;
        for (int j = 0; j < spec.dim; ++j) {
          v[j] = rng.normal();
          norm2 += v[j] * v[j];
        }
        double norm = std::sqrt(norm2);
        if (norm < 1e-12) {
          v.setZero();
          v[0] = 1.0;
        } else {
          v /= norm;
        }
      };
      for (int i = 0; i < n; ++i) {
        Vec v(spec.dim);
        direction(v);
        double radius = rng.uniform(0.0, 0.8);
        for (int j = 0; j < spec.dim; ++j)
          v[j] = detail::q32(v[j] * radius + rng.normal(0.0, spec.noise));
        push(std::move(v), SafetyLabel::Safe, "safe", i);
      }
      for (int i = 0; i < n; ++i) {
        Vec v(spec.dim);
        direction(v);
        double radius = rng.uniform(1.2, 2.0);
        for (int j = 0; j < spec.dim; ++j)
          v[j] = detail::q32(v[j] * radius + rng.normal(0.0, spec.noise));
        push(std::move(v), SafetyLabel::Unsafe, "unsafe", i);
      }
      break;
    }
  }
  return data;
}

}  // namespace bsteer
