// Anchor selection and relative representations.
//
// A relative representation describes each sample by its relation to a fixed
// set of anchors: cosine similarity of latent codes, or the decoded
// straight-line length/energy to each anchor under a pullback metric. The
// latter is unchanged when the latent space is reparametrized and the output
// space moved by an isometry, which is what makes it comparable across models.
#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relgeo/geometry.hpp"
#include "relgeo/models.hpp"
#include "relgeo/parallel.hpp"

namespace relgeo {

enum class AnchorScheme { Uniform, Fps, Kmeans };

inline std::string to_string(AnchorScheme s) {
  switch (s) {
    case AnchorScheme::Uniform: return "uniform";
    case AnchorScheme::Fps: return "fps";
    case AnchorScheme::Kmeans: return "kmeans";
  }
  return "uniform";
}

inline AnchorScheme parse_anchor_scheme(const std::string& name) {
  if (name == "uniform") return AnchorScheme::Uniform;
  if (name == "fps") return AnchorScheme::Fps;
  if (name == "kmeans") return AnchorScheme::Kmeans;
  throw Error("unknown anchor scheme '" + name + "'");
}

/// Identifies an anchor set by its dataset indices (not its latent codes), so
/// the same anchors encoded by different models share a fingerprint.
inline std::uint64_t anchor_fingerprint(std::span<const std::size_t> indices) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t idx : indices) {
    auto v = static_cast<std::uint64_t>(idx);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

struct AnchorSet {
  IndexVector indices;
  Matrix latent;  // anchors x latent-dim
  AnchorScheme scheme = AnchorScheme::Uniform;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return indices.size(); }
  std::uint64_t fingerprint() const { return anchor_fingerprint(indices); }
};

/// Anchors at `indices` of `z` (e.g. the same anchors seen by another model).
inline AnchorSet anchors_from_indices(const Matrix& z, IndexVector indices,
                                      AnchorScheme scheme = AnchorScheme::Uniform,
                                      std::uint64_t seed = 0) {
  std::set<std::size_t> seen;
  for (std::size_t i : indices) {
    if (i >= z.rows()) throw Error("anchor index " + std::to_string(i) + " out of range");
    if (!seen.insert(i).second) throw Error("duplicate anchor index " + std::to_string(i));
  }
  AnchorSet a;
  a.latent = select_rows(z, indices);
  a.indices = std::move(indices);
  a.scheme = scheme;
  a.seed = seed;
  return a;
}

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace detail

/// Greedy max-min farthest point sampling starting at `first`; ties go to the
/// smallest index.
inline IndexVector farthest_point_sampling(const Matrix& z, std::size_t k, std::size_t first) {
  if (k > z.rows()) throw Error("fps: k exceeds number of points");
  if (k == 0) return {};
  if (first >= z.rows()) throw Error("fps: first index out of range");
  IndexVector picked{first};
  Vector min_d(z.rows(), std::numeric_limits<double>::infinity());
  std::size_t last = first;
  while (picked.size() < k) {
    std::size_t best = z.rows();
    double best_d = -1.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      min_d[i] = std::min(min_d[i], detail::squared_distance(z.row(i), z.row(last)));
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    picked.push_back(best);
    last = best;
  }
  return picked;
}

/// Lloyd's k-means (50 iterations from k random data points); each centroid is
/// replaced by its nearest data point, duplicates removed, and the set topped
/// up uniformly at random.
inline IndexVector kmeans_anchor_indices(const Matrix& z, std::size_t k, RngStream& rng,
                                         int iterations = 50) {
  if (k > z.rows()) throw Error("kmeans: k exceeds number of points");
  const std::size_t d = z.cols();
  Matrix centroids = select_rows(z, rng.sample_without_replacement(z.rows(), k));
  std::vector<std::size_t> assign(z.rows(), 0);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = detail::squared_distance(z.row(i), centroids.row(c));
        if (dist < best) {
          best = dist;
          assign[i] = c;
        }
      }
    }
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sums(assign[i], j) += z(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
  }
  IndexVector picked;
  std::set<std::size_t> seen;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best_i = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const double dist = detail::squared_distance(z.row(i), centroids.row(c));
      if (dist < best) {
        best = dist;
        best_i = i;
      }
    }
    if (seen.insert(best_i).second) picked.push_back(best_i);
  }
  if (picked.size() < k) {
    IndexVector rest;
    for (std::size_t i = 0; i < z.rows(); ++i)
      if (!seen.count(i)) rest.push_back(i);
    for (std::size_t pos : rng.sample_without_replacement(rest.size(), k - picked.size()))
      picked.push_back(rest[pos]);
  }
  return picked;
}

inline AnchorSet select_anchors(const Matrix& z, std::size_t k, AnchorScheme scheme, RngStream& rng) {
  if (k > z.rows()) {
    throw Error("select_anchors: k = " + std::to_string(k) + " exceeds " + std::to_string(z.rows()) +
                " samples");
  }
  IndexVector idx;
  switch (scheme) {
    case AnchorScheme::Uniform: idx = rng.sample_without_replacement(z.rows(), k); break;
    case AnchorScheme::Fps:
      idx = k == 0 ? IndexVector{} : farthest_point_sampling(z, k, rng.uniform_index(z.rows()));
      break;
    case AnchorScheme::Kmeans: idx = kmeans_anchor_indices(z, k, rng); break;
  }
  return anchors_from_indices(z, std::move(idx), scheme, rng.seed());
}

/// Union of per-model selections, subsampled uniformly to k.
inline IndexVector combine_anchor_selections(const std::vector<IndexVector>& selections, std::size_t k,
                                             RngStream& rng) {
  std::set<std::size_t> pool;
  for (const auto& s : selections) pool.insert(s.begin(), s.end());
  IndexVector all(pool.begin(), pool.end());
  if (k > all.size()) throw Error("combine anchors: union smaller than k");
  IndexVector out;
  for (std::size_t pos : rng.sample_without_replacement(all.size(), k)) out.push_back(all[pos]);
  return out;
}

// ---------------------------------------------------------------------------

enum class RelRepMode { Cosine, GeoLength, GeoEnergy };

inline std::string to_string(RelRepMode m) {
  switch (m) {
    case RelRepMode::Cosine: return "cosine";
    case RelRepMode::GeoLength: return "geo-length";
    case RelRepMode::GeoEnergy: return "geo-energy";
  }
  return "cosine";
}

inline RelRepMode parse_relrep_mode(const std::string& name) {
  if (name == "cosine") return RelRepMode::Cosine;
  if (name == "geo-length" || name == "length") return RelRepMode::GeoLength;
  if (name == "geo-energy" || name == "energy") return RelRepMode::GeoEnergy;
  throw Error("unknown relrep mode '" + name + "'");
}

struct RelRepMatrix {
  Matrix values;  // samples x anchors
  RelRepMode mode = RelRepMode::Cosine;
  std::optional<MetricSpec> metric;
  std::optional<std::size_t> steps;
  std::uint64_t anchor_fingerprint = 0;
  std::vector<std::string> warnings;
};

inline RelRepMatrix relrep_cosine(const Matrix& z, const AnchorSet& anchors) {
  if (z.cols() != anchors.latent.cols() && anchors.size() > 0)
    throw DimensionError("relrep_cosine: latent dims differ");
  RelRepMatrix r;
  r.mode = RelRepMode::Cosine;
  r.anchor_fingerprint = anchors.fingerprint();
  r.values = Matrix(z.rows(), anchors.size());
  Vector anchor_norms(anchors.size());
  for (std::size_t j = 0; j < anchors.size(); ++j) anchor_norms[j] = norm(anchors.latent.row(j));
  std::size_t zero_rows = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double ni = norm(z.row(i));
    if (ni == 0.0) ++zero_rows;
    for (std::size_t j = 0; j < anchors.size(); ++j) {
      const double den = ni * anchor_norms[j];
      r.values(i, j) = den == 0.0 ? 0.0 : std::clamp(dot(z.row(i), anchors.latent.row(j)) / den, -1.0, 1.0);
    }
  }
  if (zero_rows > 0 || std::any_of(anchor_norms.begin(), anchor_norms.end(), [](double n) { return n == 0.0; })) {
    r.warnings.push_back("zero-norm latent vectors present; their cosine entries are 0");
  }
  return r;
}

/// values(i, j) = decoded straight-line length or energy from z_i to anchor j.
inline RelRepMatrix relrep_geodesic(const Matrix& z, const AnchorSet& anchors, const Decoder& dec,
                                    const MetricSpec& metric, std::size_t steps,
                                    CurveQuantity quantity = CurveQuantity::Length) {
  if (z.rows() > 0 && z.cols() != dec.input_dim())
    throw DimensionError("relrep_geodesic: latent dim " + std::to_string(z.cols()) +
                         " does not match decoder input " + std::to_string(dec.input_dim()));
  if (anchors.size() > 0 && anchors.latent.cols() != dec.input_dim())
    throw DimensionError("relrep_geodesic: anchor dim does not match decoder input");
  if (steps == 0) throw Error("relrep_geodesic: steps must be >= 1");
  RelRepMatrix r;
  r.mode = quantity == CurveQuantity::Length ? RelRepMode::GeoLength : RelRepMode::GeoEnergy;
  r.metric = metric;
  r.steps = steps;
  r.anchor_fingerprint = anchors.fingerprint();
  r.values = Matrix(z.rows(), anchors.size());
  parallel_for(z.rows(), [&](std::size_t i) {
    for (std::size_t j = 0; j < anchors.size(); ++j) {
      try {
        const CurveMeasure m = measure_straight_line(dec, metric, z.row(i), anchors.latent.row(j), steps);
        r.values(i, j) = quantity == CurveQuantity::Length ? m.length : m.energy;
      } catch (const std::exception& e) {
        throw Error("relrep_geodesic: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                    "): " + e.what());
      }
    }
  });
  return r;
}

}  // namespace relgeo
