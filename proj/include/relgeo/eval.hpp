// Retrieval and agreement metrics.
#pragma once

#include <numeric>

#include "relgeo/numerics.hpp"
#include "relgeo/parallel.hpp"

namespace relgeo {

struct MrrResult {
  double mrr = 0.0;
  IndexVector ranks;  // 1-based rank of the true counterpart per query row
  bool symmetric = false;
};

struct MrrOptions {
  bool higher_is_better = true;
  bool symmetric = false;
  bool exclude_self = false;  // drop column i from query i (same-space diagnostics)
};

/// Mean reciprocal rank of ground_truth[i] within row i of `scores`.
///
/// Ties rank pessimistically: rank = 1 + #strictly better + #equal at a
/// smaller column index. With `symmetric`, scores are replaced by (D + Dᵀ)/2.
inline MrrResult mrr(const Matrix& scores, std::span<const std::size_t> ground_truth,
                     const MrrOptions& opt = {}) {
  if (ground_truth.size() != scores.rows())
    throw DimensionError("mrr: one ground-truth index per query row is required");
  Matrix d = scores;
  if (opt.symmetric) {
    if (scores.rows() != scores.cols()) throw DimensionError("mrr: symmetric variant needs a square matrix");
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) = 0.5 * (scores(i, j) + scores(j, i));
  }
  MrrResult out;
  out.symmetric = opt.symmetric;
  out.ranks.resize(d.rows());
  parallel_for(d.rows(), [&](std::size_t i) {
    const std::size_t gt = ground_truth[i];
    if (gt >= d.cols()) throw DimensionError("mrr: ground-truth index out of range");
    const double target = d(i, gt);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < d.cols(); ++j) {
      if (j == gt || (opt.exclude_self && j == i)) continue;
      const double v = d(i, j);
      const bool better = opt.higher_is_better ? v > target : v < target;
      if (better || (v == target && j < gt)) ++rank;
    }
    out.ranks[i] = rank;
  });
  double total = 0.0;
  for (std::size_t r : out.ranks) total += 1.0 / static_cast<double>(r);
  out.mrr = out.ranks.empty() ? 0.0 : total / static_cast<double>(out.ranks.size());
  return out;
}

/// MRR with the identity correspondence (query i ↔ column i).
inline MrrResult mrr_identity(const Matrix& scores, const MrrOptions& opt = {}) {
  IndexVector gt(scores.rows());
  std::iota(gt.begin(), gt.end(), 0);
  return mrr(scores, gt, opt);
}

/// Average (fractional) ranks, 1-based.
inline Vector fractional_ranks(std::span<const double> x) {
  IndexVector order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Vector ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("pearson: need two equal-length vectors of size >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation (Pearson on average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equal-length vectors of size >= 2");
  const Vector rx = fractional_ranks(x);
  const Vector ry = fractional_ranks(y);
  return pearson(rx, ry);
}

inline double reconstruction_mse(const Matrix& xhat, const Matrix& x) {
  if (xhat.rows() != x.rows() || xhat.cols() != x.cols())
    throw DimensionError("reconstruction_mse: shape mismatch");
  if (x.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = xhat.data()[k] - x.data()[k];
    s += e * e;
  }
  return s / static_cast<double>(x.size());
}

/// Mean and (population) standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / n)};
}

}  // namespace relgeo
