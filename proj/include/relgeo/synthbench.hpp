// Synthetic datasets and "same manifold, different parametrization" decoder
// pairs with known ground truth.
#pragma once

#include <string>

#include "relgeo/models.hpp"
#include "relgeo/numerics.hpp"

namespace relgeo {

enum class LatentMapKind { Identity, Affine, Smooth };

inline std::string to_string(LatentMapKind k) {
  switch (k) {
    case LatentMapKind::Identity: return "identity";
    case LatentMapKind::Affine: return "affine";
    case LatentMapKind::Smooth: return "smooth";
  }
  return "identity";
}

/// decoder2 = compose(decoder1, pre = φ⁻¹, post = isometry), so that
/// decoder2(φ(z)) = Q·decoder1(z) + t for every z.
struct ManifoldPair {
  Decoder decoder1;
  Decoder decoder2;
  std::optional<LatentMap> encoder_map;  // φ: latent of model 1 -> latent of model 2
  OutputIsometry isometry;
  Matrix z1;
  std::string descriptor;

  Vector map_latent(std::span<const double> z) const {
    return encoder_map ? encoder_map->apply(z) : Vector(z.begin(), z.end());
  }

  Matrix z2() const {
    Matrix out(z1.rows(), z1.cols());
    for (std::size_t i = 0; i < z1.rows(); ++i) {
      const Vector v = map_latent(z1.row(i));
      std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
  }

  /// max over probes of ‖decoder2(φ(z)) − (Q·decoder1(z) + t)‖_∞.
  double invariant_error(const Matrix& probes) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < probes.rows(); ++i) {
      const Vector lhs = decoder2.forward(map_latent(probes.row(i)));
      const Vector rhs = isometry.apply(decoder1.forward(probes.row(i)));
      for (std::size_t k = 0; k < lhs.size(); ++k) worst = std::max(worst, std::abs(lhs[k] - rhs[k]));
    }
    return worst;
  }
};

struct ManifoldPairOptions {
  std::size_t samples = 500;
  double latent_scale = 1.0;      // latent samples ~ N(0, scale²)
  double smooth_contraction = 0.5;
  bool random_isometry = true;
};

inline ManifoldPair make_manifold_pair(const Decoder& base, LatentMapKind kind, RngStream& rng,
                                       const ManifoldPairOptions& opt = {}) {
  const std::size_t d = base.input_dim();
  const std::size_t out = base.output_dim();
  RngStream map_rng = rng.split("latent-map");
  RngStream iso_rng = rng.split("isometry");
  RngStream sample_rng = rng.split("samples");

  std::optional<LatentMap> phi;
  if (kind == LatentMapKind::Affine) {
    Matrix q1 = random_orthogonal(d, map_rng);
    Matrix q2 = random_orthogonal(d, map_rng);
    Vector s(d);
    for (double& v : s) v = map_rng.uniform(0.5, 2.0);
    phi = LatentMap::affine(matmul(matmul(q1, Matrix::diagonal(s)), q2), map_rng.normal_vector(d));
  } else if (kind == LatentMapKind::Smooth) {
    Matrix w = map_rng.normal_matrix(d, d);
    const Svd svd = thin_svd(w);
    w = scale(w, 1.0 / svd.s.front());
    phi = LatentMap::residual(std::move(w), map_rng.normal_vector(d, 0.5), opt.smooth_contraction);
  }

  OutputIsometry iso = OutputIsometry::identity(out);
  if (kind != LatentMapKind::Identity && opt.random_isometry)
    iso = OutputIsometry::make(random_orthogonal(out, iso_rng), iso_rng.normal_vector(out));

  ManifoldPair pair{base,
                    compose(base, phi ? std::optional<LatentMap>(phi->inverse()) : std::nullopt,
                            kind == LatentMapKind::Identity ? std::nullopt : std::optional(iso)),
                    phi,
                    iso,
                    sample_rng.normal_matrix(opt.samples, d, opt.latent_scale),
                    "base " + std::to_string(d) + "->" + std::to_string(out) + ", latent map " +
                        to_string(kind)};

  const Matrix probes = rng.split("probes").normal_matrix(32, d, opt.latent_scale);
  const double tol = kind == LatentMapKind::Smooth ? 1e-6 : 1e-10;
  const double err = pair.invariant_error(probes);
  if (!(err <= tol)) {
    throw Error("make_manifold_pair: defining invariant violated by " + std::to_string(err));
  }
  return pair;
}

// ---------------------------------------------------------------------------

enum class DatasetKind { GaussianMixture, SwissRoll, SpherePatch };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::GaussianMixture: return "gaussian-mixture";
    case DatasetKind::SwissRoll: return "swiss-roll";
    case DatasetKind::SpherePatch: return "sphere-patch";
  }
  return "gaussian-mixture";
}

inline DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gaussian-mixture" || name == "mixture") return DatasetKind::GaussianMixture;
  if (name == "swiss-roll") return DatasetKind::SwissRoll;
  if (name == "sphere-patch") return DatasetKind::SpherePatch;
  throw Error("unknown dataset kind '" + name + "'");
}

struct SyntheticDataset {
  Matrix x;           // ambient data
  Matrix z;           // generating latent
  IndexVector labels;
  double noise_sigma = 0.0;
};

inline constexpr std::size_t kMixtureComponents = 10;

inline std::size_t latent_dim_of(DatasetKind kind) {
  return kind == DatasetKind::GaussianMixture ? 2 : 3;
}

/// Latent points of the given kind pushed through a fixed random smooth
/// embedding x = P·z + W₂·tanh(W₁·z + b₁) (P with orthonormal columns), plus
/// isotropic Gaussian noise. Labels: mixture component (sample i gets i mod 10)
/// or one of 10 bins along the manifold's main coordinate.
inline SyntheticDataset make_dataset(DatasetKind kind, std::size_t n, std::size_t ambient_dim, double noise,
                                     RngStream& rng) {
  if (n == 0) throw Error("make_dataset: n must be >= 1");
  const std::size_t latent = latent_dim_of(kind);
  if (ambient_dim < latent) {
    throw Error("make_dataset: ambient dim " + std::to_string(ambient_dim) + " < latent dim " +
                std::to_string(latent));
  }
  RngStream latent_rng = rng.split("latent");
  RngStream embed_rng = rng.split("embedding");
  RngStream noise_rng = rng.split("noise");

  SyntheticDataset ds;
  ds.noise_sigma = noise;
  ds.z = Matrix(n, latent);
  ds.labels.resize(n);
  const double two_pi = 2.0 * M_PI;
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case DatasetKind::GaussianMixture: {
        const std::size_t c = i % kMixtureComponents;
        const double angle = two_pi * static_cast<double>(c) / static_cast<double>(kMixtureComponents);
        ds.z(i, 0) = 3.0 * std::cos(angle) + 0.5 * latent_rng.normal();
        ds.z(i, 1) = 3.0 * std::sin(angle) + 0.5 * latent_rng.normal();
        ds.labels[i] = c;
        break;
      }
      case DatasetKind::SwissRoll: {
        const double u = latent_rng.uniform();
        const double t = 1.5 * M_PI * (1.0 + 2.0 * u);
        const double h = latent_rng.uniform(-1.0, 1.0);
        const double s = 1.0 / (1.5 * M_PI);
        ds.z(i, 0) = s * t * std::cos(t);
        ds.z(i, 1) = 2.0 * h;
        ds.z(i, 2) = s * t * std::sin(t);
        ds.labels[i] = std::min<std::size_t>(kMixtureComponents - 1, static_cast<std::size_t>(u * kMixtureComponents));
        break;
      }
      case DatasetKind::SpherePatch: {
        const double u = latent_rng.uniform();
        const double theta = latent_rng.uniform(M_PI / 4.0, 3.0 * M_PI / 4.0);
        const double phi = M_PI * u;
        ds.z(i, 0) = 2.0 * std::sin(theta) * std::cos(phi);
        ds.z(i, 1) = 2.0 * std::sin(theta) * std::sin(phi);
        ds.z(i, 2) = 2.0 * std::cos(theta);
        ds.labels[i] = std::min<std::size_t>(kMixtureComponents - 1, static_cast<std::size_t>(u * kMixtureComponents));
        break;
      }
    }
  }

  const std::size_t hidden = 2 * ambient_dim;
  const Matrix q = random_orthogonal(ambient_dim, embed_rng);
  const Matrix w1 = embed_rng.normal_matrix(hidden, latent, 1.0 / std::sqrt(static_cast<double>(latent)));
  const Vector b1 = embed_rng.normal_vector(hidden);
  const Matrix w2 = embed_rng.normal_matrix(ambient_dim, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));

  ds.x = Matrix(n, ambient_dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto zi = ds.z.row(i);
    Vector h = matvec(w1, zi);
    for (std::size_t k = 0; k < hidden; ++k) h[k] = std::tanh(h[k] + b1[k]);
    const Vector nonlinear = matvec(w2, h);
    for (std::size_t a = 0; a < ambient_dim; ++a) {
      double v = nonlinear[a];
      for (std::size_t l = 0; l < latent; ++l) v += q(a, l) * zi[l];
      ds.x(i, a) = v + (noise > 0.0 ? noise * noise_rng.normal() : 0.0);
    }
  }
  return ds;
}

}  // namespace relgeo
