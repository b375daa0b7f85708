// Desk-scale experiment protocols shared by the CLI and the acceptance suite:
// straight-line vs optimized geodesic energies, cross-model retrieval, anchor
// count sweeps and correspondence-based stitching.
#pragma once

#include <string>
#include <vector>

#include "relgeo/alignment.hpp"
#include "relgeo/eval.hpp"
#include "relgeo/geometry.hpp"
#include "relgeo/parallel.hpp"
#include "relgeo/relrep.hpp"
#include "relgeo/synthbench.hpp"
#include "relgeo/training.hpp"

namespace relgeo {

struct AutoencoderArchitecture {
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{32, 32};
};

inline std::pair<MlpSpec, MlpSpec> autoencoder_specs(std::size_t data_dim, const AutoencoderArchitecture& arch) {
  MlpSpec enc, dec;
  enc.widths.push_back(data_dim);
  for (std::size_t h : arch.hidden) {
    enc.widths.push_back(h);
    enc.activations.push_back(Activation::Tanh);
  }
  enc.widths.push_back(arch.latent_dim);
  enc.activations.push_back(Activation::Identity);
  dec.widths.push_back(arch.latent_dim);
  for (auto it = arch.hidden.rbegin(); it != arch.hidden.rend(); ++it) {
    dec.widths.push_back(*it);
    dec.activations.push_back(Activation::Tanh);
  }
  dec.widths.push_back(data_dim);
  dec.activations.push_back(Activation::Identity);
  return {enc, dec};
}

inline AutoencoderResult train_mlp_autoencoder(const Matrix& x, const AutoencoderArchitecture& arch,
                                               const TrainConfig& cfg) {
  const auto [enc, dec] = autoencoder_specs(x.cols(), arch);
  return train_autoencoder(x, enc, dec, cfg);
}

/// First `per_class` samples of each label, ordered by label.
inline IndexVector per_class_samples(std::span<const std::size_t> labels, std::size_t per_class) {
  std::size_t classes = 0;
  for (std::size_t l : labels) classes = std::max(classes, l + 1);
  IndexVector out;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t taken = 0;
    for (std::size_t i = 0; i < labels.size() && taken < per_class; ++i) {
      if (labels[i] == c) {
        out.push_back(i);
        ++taken;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GeodesicComparison {
  Matrix line_energy;    // pairwise straight-line energies
  Matrix oracle_energy;  // pairwise optimized energies
  double spearman = 0.0; // over the strict upper triangle
};

/// Pairwise straight-line energies (line_steps) against optimized discrete
/// geodesic energies for the latent codes `z`.
inline GeodesicComparison compare_geodesic_energies(const Decoder& dec, const MetricSpec& metric, const Matrix& z,
                                                    std::size_t line_steps, const OracleOptions& oracle) {
  const std::size_t n = z.rows();
  GeodesicComparison out{Matrix(n, n), Matrix(n, n), 0.0};
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  Vector line(pairs.size()), opt(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    line[p] = measure_straight_line(dec, metric, z.row(i), z.row(j), line_steps).energy;
    opt[p] = geodesic_oracle(dec, metric, z.row(i), z.row(j), oracle).energy;
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    out.line_energy(i, j) = out.line_energy(j, i) = line[p];
    out.oracle_energy(i, j) = out.oracle_energy(j, i) = opt[p];
  }
  if (pairs.size() >= 2) out.spearman = spearman(line, opt);
  return out;
}

// ---------------------------------------------------------------------------

/// One model's view of a shared dataset: latent codes and the decoder used
/// for the pullback metric.
struct ModelView {
  Matrix latent;
  const Decoder* decoder = nullptr;
};

struct RelRepSettings {
  RelRepMode mode = RelRepMode::GeoLength;
  MetricSpec metric = EuclideanMetric{};
  std::size_t steps = 8;
};

inline RelRepMatrix relative_representation(const ModelView& view, const IndexVector& anchor_idx,
                                            const RelRepSettings& s) {
  const AnchorSet anchors = anchors_from_indices(view.latent, anchor_idx);
  if (s.mode == RelRepMode::Cosine) return relrep_cosine(view.latent, anchors);
  if (!view.decoder) throw Error("geodesic relative representation needs a decoder");
  return relrep_geodesic(view.latent, anchors, *view.decoder, s.metric, s.steps,
                         s.mode == RelRepMode::GeoLength ? CurveQuantity::Length : CurveQuantity::Energy);
}

/// MRR of retrieving sample i of model 2 from sample i of model 1 via cosine
/// similarity of their relative representations.
inline MrrResult cross_model_mrr(const ModelView& a, const ModelView& b, const IndexVector& anchor_idx,
                                 const RelRepSettings& s, bool symmetric = false) {
  const RelRepMatrix ra = relative_representation(a, anchor_idx, s);
  const RelRepMatrix rb = relative_representation(b, anchor_idx, s);
  MrrOptions opt;
  opt.symmetric = symmetric;
  return mrr_identity(crossspace_similarity(ra, rb), opt);
}

struct SweepRow {
  std::size_t k = 0;
  std::string mode;
  Vector per_repeat;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Anchor-count sweep: for each k and repeat r, anchors are drawn in model a's
/// latent space from stream "anchors:rep-r:k-K" and shared with model b.
inline std::vector<SweepRow> anchor_sweep(const ModelView& a, const ModelView& b, std::span<const std::size_t> ks,
                                          std::size_t repeats, std::uint64_t seed, AnchorScheme scheme,
                                          const std::vector<RelRepSettings>& settings, bool symmetric = false) {
  std::vector<SweepRow> rows;
  for (std::size_t k : ks) {
    std::vector<IndexVector> draws;
    for (std::size_t r = 0; r < repeats; ++r) {
      RngStream rng(seed, "anchors:rep-" + std::to_string(r) + ":k-" + std::to_string(k));
      draws.push_back(select_anchors(a.latent, k, scheme, rng).indices);
    }
    for (const RelRepSettings& s : settings) {
      SweepRow row;
      row.k = k;
      row.mode = to_string(s.mode);
      for (const IndexVector& idx : draws) row.per_repeat.push_back(cross_model_mrr(a, b, idx, s, symmetric).mrr);
      std::tie(row.mean, row.stddev) = mean_std(row.per_repeat);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

struct StitchReport {
  Correspondence correspondence;
  AlignmentMap map;
  double correspondence_accuracy = 0.0;  // fraction matched to the true counterpart
  double stitched_mse = 0.0;             // D2(T·E1(x) + t) vs x
  double native_mse = 0.0;               // D2(E2(x)) vs x
  double unmapped_mse = 0.0;             // D2(E1(x)) vs x
};

/// Correspondence from relative representations, then a fitted map
/// E1-latent -> E2-latent, then x̃ = D2(T·E1(x) + t).
inline StitchReport stitch_via_correspondence(const Mlp& enc1, const Decoder& dec1, const Mlp& enc2,
                                              const Decoder& dec2, const Matrix& x, const IndexVector& anchor_idx,
                                              const RelRepSettings& s, MapKind kind = MapKind::Linear,
                                              bool center = false, std::optional<double> min_score = std::nullopt) {
  const ModelView a{enc1.forward_batch(x), &dec1};
  const ModelView b{enc2.forward_batch(x), &dec2};
  const Matrix d = crossspace_similarity(relative_representation(a, anchor_idx, s),
                                         relative_representation(b, anchor_idx, s));
  StitchReport rep;
  rep.correspondence = extract_correspondence(d);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rep.correspondence.target.size(); ++i)
    if (rep.correspondence.target[i] == i) ++correct;
  rep.correspondence_accuracy = x.rows() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(x.rows());
  const auto [src, dst] = matched_pairs(a.latent, b.latent, rep.correspondence, min_score);
  rep.map = kind == MapKind::Orthogonal ? fit_orthogonal(src, dst, center) : fit_linear(src, dst, center);
  rep.stitched_mse = reconstruction_mse(stitch(enc1, rep.map, dec2, x), x);
  rep.native_mse = reconstruction_mse(dec2.forward_batch(b.latent), x);
  if (dec2.input_dim() == a.latent.cols()) rep.unmapped_mse = reconstruction_mse(dec2.forward_batch(a.latent), x);
  return rep;
}

}  // namespace relgeo
