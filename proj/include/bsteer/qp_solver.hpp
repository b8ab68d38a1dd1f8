#pragma once

#include <algorithm>
#include <vector>

#include "bsteer/core.hpp"

namespace bsteer::detail {

// Minimum-norm correction under linear lower bounds:
//
//   minimize ||w||^2   subject to   g_k . w >= v_k
//
// Strict convexity makes the optimum unique, so any KKT-consistent active
// set identifies it. Small systems are solved by enumerating active sets;
// beyond kEnumerationLimit rows a projected dual coordinate ascent takes
// over. Infeasible systems fall back to a least-violating point.

inline constexpr int kEnumerationLimit = 12;

struct QpResult {
  Vec w;
  std::vector<int> active;  // rows with positive multiplier
  bool feasible = true;     // false: w is the least-violating fallback
  double max_violation = 0.0;
};

inline QpResult least_violating(const std::vector<Vec>& g, const Vec& v, const Mat& gram) {
  const int K = static_cast<int>(g.size());
  const Eigen::Index d = g[0].size();
  Vec w = Vec::Zero(d);
  auto max_violation = [&](const Vec& u) {
    double m = 0.0;
    for (int k = 0; k < K; ++k) m = std::max(m, v[k] - g[static_cast<std::size_t>(k)].dot(u));
    return m;
  };
  Vec best_w = w;
  double best_m = max_violation(w);
  double ridge = 1e-10 * std::max(1.0, gram.diagonal().maxCoeff());
  for (int pass = 0; pass < 2 * K + 2; ++pass) {
    std::vector<int> bad;
    for (int k = 0; k < K; ++k)
      if (g[static_cast<std::size_t>(k)].dot(w) < v[k] - 1e-12) bad.push_back(k);
    if (bad.empty()) break;
    const int m = static_cast<int>(bad.size());
    Mat gs(m, m);
    Vec rhs(m);
    for (int i = 0; i < m; ++i) {
      rhs[i] = v[bad[static_cast<std::size_t>(i)]] - g[static_cast<std::size_t>(bad[static_cast<std::size_t>(i)])].dot(w);
      for (int j = 0; j < m; ++j) gs(i, j) = gram(bad[static_cast<std::size_t>(i)], bad[static_cast<std::size_t>(j)]);
    }
    gs.diagonal().array() += ridge;
    Vec beta = gs.ldlt().solve(rhs);
    Vec step = Vec::Zero(d);
    for (int i = 0; i < m; ++i) step += beta[i] * g[static_cast<std::size_t>(bad[static_cast<std::size_t>(i)])];
    if (step.squaredNorm() < 1e-30) break;
    w += step;
    double cur = max_violation(w);
    if (cur < best_m) {
      best_m = cur;
      best_w = w;
    }
  }
  QpResult out;
  out.w = best_w;
  out.feasible = false;
  out.max_violation = best_m;
  for (int k = 0; k < K; ++k)
    if (g[static_cast<std::size_t>(k)].dot(best_w) < v[k] - 1e-9) out.active.push_back(k);
  return out;
}

inline QpResult solve_min_norm_qp(const std::vector<Vec>& g, const Vec& v, double tol) {
  const int K = static_cast<int>(g.size());
  QpResult out;
  if (K == 0) {
    out.w = Vec();
    return out;
  }
  const Eigen::Index d = g[0].size();
  Mat gram(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = i; j < K; ++j)
      gram(i, j) = gram(j, i) = g[static_cast<std::size_t>(i)].dot(g[static_cast<std::size_t>(j)]);

  double vscale = 1.0 + v.cwiseAbs().maxCoeff();

  if (v.maxCoeff() <= tol * vscale) {
    out.w = Vec::Zero(d);
    return out;
  }

  if (K <= kEnumerationLimit) {
    for (std::uint32_t mask = 1; mask < (1u << K); ++mask) {
      std::vector<int> S;
      for (int k = 0; k < K; ++k)
        if (mask >> k & 1u) S.push_back(k);
      const int m = static_cast<int>(S.size());
      Mat gs(m, m);
      Vec vs(m);
      for (int i = 0; i < m; ++i) {
        vs[i] = v[S[static_cast<std::size_t>(i)]];
        for (int j = 0; j < m; ++j)
          gs(i, j) = gram(S[static_cast<std::size_t>(i)], S[static_cast<std::size_t>(j)]);
      }
      Vec lambda = gs.ldlt().solve(vs);
      if ((gs * lambda - vs).cwiseAbs().maxCoeff() > tol * vscale) continue;  // singular subset
      double lscale = 1.0 + lambda.cwiseAbs().maxCoeff();
      if (lambda.minCoeff() < -tol * lscale) continue;  // dual infeasible
      Vec w = Vec::Zero(d);
      for (int i = 0; i < m; ++i)
        w += std::max(lambda[i], 0.0) * g[static_cast<std::size_t>(S[static_cast<std::size_t>(i)])];
      bool primal_ok = true;
      for (int k = 0; k < K && primal_ok; ++k)
        if (g[static_cast<std::size_t>(k)].dot(w) < v[k] - tol * vscale * lscale) primal_ok = false;
      if (!primal_ok) continue;
      out.w = std::move(w);
      for (int i = 0; i < m; ++i)
        if (lambda[i] > tol) out.active.push_back(S[static_cast<std::size_t>(i)]);
      return out;
    }
    return least_violating(g, v, gram);
  }

  // Projected dual coordinate ascent; mu_k are the (halved) multipliers.
  Vec mu = Vec::Zero(K);
  const int max_sweeps = 200 * K;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (int k = 0; k < K; ++k) {
      if (gram(k, k) < 1e-300) continue;
      double s = v[k] - (gram.row(k).dot(mu) - gram(k, k) * mu[k]);
      double nk = std::max(0.0, s / gram(k, k));
      change = std::max(change, std::abs(nk - mu[k]) * std::sqrt(gram(k, k)));
      mu[k] = nk;
    }
    if (change <= tol) break;
    if (mu.cwiseAbs().maxCoeff() > 1e14) break;  // diverging: infeasible
  }
  Vec w = Vec::Zero(d);
  for (int k = 0; k < K; ++k) w += mu[k] * g[static_cast<std::size_t>(k)];
  double worst = 0.0;
  for (int k = 0; k < K; ++k) worst = std::max(worst, v[k] - g[static_cast<std::size_t>(k)].dot(w));
  if (worst > std::max(1e-6, tol * vscale * (1.0 + mu.cwiseAbs().maxCoeff())))
    return least_violating(g, v, gram);
  out.w = std::move(w);
  out.max_violation = worst;
  for (int k = 0; k < K; ++k)
    if (mu[k] > tol) out.active.push_back(k);
  return out;
}

}  // namespace bsteer::detail
