// Cross-space similarity, correspondence extraction, map fitting and stitching.
//
// Maps act on row vectors: apply(X) = X·T + t.
#pragma once

#include <optional>

#include "relgeo/models.hpp"
#include "relgeo/numerics.hpp"
#include "relgeo/parallel.hpp"
#include "relgeo/relrep.hpp"

namespace relgeo {

enum class MapKind { Orthogonal, Linear };

inline std::string to_string(MapKind k) { return k == MapKind::Orthogonal ? "orthogonal" : "linear"; }

inline MapKind parse_map_kind(const std::string& name) {
  if (name == "orthogonal") return MapKind::Orthogonal;
  if (name == "linear") return MapKind::Linear;
  throw Error("unknown map kind '" + name + "'");
}

struct AlignmentMap {
  MapKind kind = MapKind::Linear;
  Matrix t;            // source-dim x target-dim
  Vector translation;  // target-dim
  double fit_residual = 0.0;  // ‖X·T + t − Y‖_F on the fitting data
  bool underdetermined = false;

  Matrix apply(const Matrix& x) const {
    Matrix y = matmul(x, t);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += translation[j];
    return y;
  }

  Vector apply(std::span<const double> x) const {
    Vector y = matvec_transposed(t, x);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += translation[j];
    return y;
  }
};

struct Correspondence {
  IndexVector target;  // target[i] = matched column for source row i
  Vector score;
};

/// D(i, j) = cosine between row i of r1 and row j of r2.
inline Matrix crossspace_similarity(const RelRepMatrix& r1, const RelRepMatrix& r2) {
  if (r1.values.cols() != r2.values.cols()) {
    throw DimensionError("crossspace_similarity: " + std::to_string(r1.values.cols()) + " vs " +
                         std::to_string(r2.values.cols()) + " anchors");
  }
  if (r1.anchor_fingerprint != 0 && r2.anchor_fingerprint != 0 &&
      r1.anchor_fingerprint != r2.anchor_fingerprint) {
    throw Error("crossspace_similarity: relative representations use different anchor sets");
  }
  const Matrix& a = r1.values;
  const Matrix& b = r2.values;
  Vector nb(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) nb[j] = norm(b.row(j));
  Matrix d(a.rows(), b.rows());
  parallel_for(a.rows(), [&](std::size_t i) {
    const double na = norm(a.row(i));
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double den = na * nb[j];
      d(i, j) = den == 0.0 ? 0.0 : dot(a.row(i), b.row(j)) / den;
    }
  });
  return d;
}

/// Row-wise argmax; ties go to the smallest column index.
inline Correspondence extract_correspondence(const Matrix& d) {
  Correspondence c;
  c.target.resize(d.rows());
  c.score.resize(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    if (d.cols() == 0) throw DimensionError("extract_correspondence: no columns");
    std::size_t best = 0;
    for (std::size_t j = 1; j < d.cols(); ++j)
      if (d(i, j) > d(i, best)) best = j;
    c.target[i] = best;
    c.score[i] = d(i, best);
  }
  return c;
}

namespace detail {

inline double fit_residual(const Matrix& x, const Matrix& y, const AlignmentMap& m) {
  return frobenius_norm(subtract(m.apply(x), y));
}

}  // namespace detail

/// Orthogonal Procrustes: T = U·Vᵀ from the SVD of XᵀY (after optional
/// mean-centering), minimizing ‖X·T − Y‖_F over orthogonal T.
inline AlignmentMap fit_orthogonal(const Matrix& x, const Matrix& y, bool center = true) {
  if (x.rows() != y.rows()) throw DimensionError("fit_orthogonal: row counts differ");
  if (x.cols() != y.cols()) throw DimensionError("fit_orthogonal: orthogonal maps need equal dimensions");
  Vector mx(x.cols(), 0.0), my(y.cols(), 0.0);
  Matrix xc = x, yc = y;
  if (center) {
    mx = column_means(x);
    my = column_means(y);
    xc = subtract_row(x, mx);
    yc = subtract_row(y, my);
  }
  const Svd svd = thin_svd(matmul(transpose(xc), yc));
  if (svd.s.empty() || svd.s.front() <= 1e-300) throw Error("fit_orthogonal: cross-covariance has rank 0");
  AlignmentMap m;
  m.kind = MapKind::Orthogonal;
  m.t = matmul(svd.u, svd.vt);
  m.translation.assign(y.cols(), 0.0);
  if (center) {
    const Vector shifted = matvec_transposed(m.t, mx);
    for (std::size_t j = 0; j < y.cols(); ++j) m.translation[j] = my[j] - shifted[j];
  }
  m.underdetermined = x.rows() < x.cols();
  m.fit_residual = detail::fit_residual(x, y, m);
  return m;
}

/// Least-squares linear map. With `center` the data are mean-centered;
/// otherwise a bias column is appended so the translation is still fitted.
inline AlignmentMap fit_linear(const Matrix& x, const Matrix& y, bool center = false) {
  if (x.rows() != y.rows()) throw DimensionError("fit_linear: row counts differ");
  AlignmentMap m;
  m.kind = MapKind::Linear;
  m.translation.assign(y.cols(), 0.0);
  if (center) {
    const Vector mx = column_means(x);
    const Vector my = column_means(y);
    const LstsqResult ls = lstsq(subtract_row(x, mx), subtract_row(y, my));
    m.t = ls.x;
    m.underdetermined = ls.underdetermined;
    const Vector shifted = matvec_transposed(m.t, mx);
    for (std::size_t j = 0; j < y.cols(); ++j) m.translation[j] = my[j] - shifted[j];
  } else {
    Matrix xb(x.rows(), x.cols() + 1, 1.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
      std::copy(x.row(i).begin(), x.row(i).end(), xb.row(i).begin());
    const LstsqResult ls = lstsq(xb, y);
    m.underdetermined = ls.underdetermined;
    m.t = Matrix(x.cols(), y.cols());
    for (std::size_t r = 0; r < x.cols(); ++r)
      std::copy(ls.x.row(r).begin(), ls.x.row(r).end(), m.t.row(r).begin());
    std::copy(ls.x.row(x.cols()).begin(), ls.x.row(x.cols()).end(), m.translation.begin());
  }
  m.fit_residual = detail::fit_residual(x, y, m);
  return m;
}

/// Pairs (X[i], Y[target[i]]) for fitting from a correspondence, optionally
/// keeping only matches with score >= min_score.
inline std::pair<Matrix, Matrix> matched_pairs(const Matrix& x, const Matrix& y, const Correspondence& c,
                                               std::optional<double> min_score = std::nullopt) {
  if (c.target.size() != x.rows()) throw DimensionError("matched_pairs: correspondence length mismatch");
  IndexVector src, dst;
  for (std::size_t i = 0; i < c.target.size(); ++i) {
    if (min_score && c.score[i] < *min_score) continue;
    src.push_back(i);
    dst.push_back(c.target[i]);
  }
  return {select_rows(x, src), select_rows(y, dst)};
}

/// Row-wise dec2(T·enc1(x) + t).
inline Matrix stitch(const Mlp& enc1, const AlignmentMap& map, const Decoder& dec2, const Matrix& x) {
  if (x.rows() == 0) return Matrix(0, dec2.output_dim());
  if (enc1.output_dim() != map.t.rows())
    throw DimensionError("stitch: encoder output does not feed the alignment map");
  if (map.t.cols() != dec2.input_dim())
    throw DimensionError("stitch: alignment map output does not feed the decoder");
  return dec2.forward_batch(map.apply(enc1.forward_batch(x)));
}

}  // namespace relgeo
