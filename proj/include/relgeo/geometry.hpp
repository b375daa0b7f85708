// Output-space metrics, straight-line pullback energy/length and a discrete
// geodesic solver used as a reference.
//
// A curve is discretized by N+1 latent points γ_0..γ_N with decoded outputs
// y_j = D(γ_j) and per-segment output distances s_j = d_Y(y_j, y_{j-1}):
//
//   length = Σ_j s_j          energy = (N/2) Σ_j s_j²
//
// With Δt = 1/N this is the finite-difference form of L = ∫‖γ̇‖_G dt and
// E = ½∫‖γ̇‖²_G dt, so discrete L² ≤ 2E holds exactly (Cauchy–Schwarz on the
// sums) and both are invariant under output isometries.
#pragma once

#include <optional>
#include <string>
#include <variant>

#include "relgeo/models.hpp"
#include "relgeo/numerics.hpp"

namespace relgeo {

struct EuclideanMetric {};

/// Great-circle distance between the radial projections onto the unit sphere.
struct SphericalMetric {};

/// Fisher-Rao distance between categorical distributions,
/// d(p, q) = 2·arccos(Σ √(p_i q_i)). Inputs are clamped to [eps, 1] and
/// renormalized; with `from_logits` a softmax is applied first.
struct FisherRaoMetric {
  double eps = 1e-6;
  bool from_logits = false;
};

class MetricSpec {
 public:
  using Variant = std::variant<EuclideanMetric, SphericalMetric, FisherRaoMetric>;

  MetricSpec() = default;
  MetricSpec(EuclideanMetric m) : impl_(m) {}
  MetricSpec(SphericalMetric m) : impl_(m) {}
  MetricSpec(FisherRaoMetric m) : impl_(m) {
    if (!(m.eps > 0.0)) throw Error("fisher-rao metric: eps must be positive");
  }

  static MetricSpec parse(const std::string& name) {
    if (name == "euclidean" || name == "l2") return EuclideanMetric{};
    if (name == "spherical") return SphericalMetric{};
    if (name == "fisher-rao" || name == "fisher") return FisherRaoMetric{};
    if (name == "fisher-rao-logits") return FisherRaoMetric{1e-6, true};
    throw Error("unknown metric '" + name + "'");
  }

  std::string name() const {
    if (is<EuclideanMetric>()) return "euclidean";
    if (is<SphericalMetric>()) return "spherical";
    return std::get<FisherRaoMetric>(impl_).from_logits ? "fisher-rao-logits" : "fisher-rao";
  }

  template <typename T>
  bool is() const noexcept { return std::holds_alternative<T>(impl_); }
  const Variant& variant() const noexcept { return impl_; }

 private:
  Variant impl_;
};

namespace detail {

// Angle between unit vectors u, v as 2·atan2(‖u−v‖, ‖u+v‖); accurate for both
// tiny and near-antipodal separations, unlike acos of the dot product.
inline double unit_angle(std::span<const double> u, std::span<const double> v) {
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    diff += (u[i] - v[i]) * (u[i] - v[i]);
    sum += (u[i] + v[i]) * (u[i] + v[i]);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

inline Vector sqrt_probabilities(std::span<const double> x, const FisherRaoMetric& m) {
  Vector p(x.begin(), x.end());
  if (m.from_logits) {
    const double mx = *std::max_element(p.begin(), p.end());
    for (double& v : p) v = std::exp(v - mx);
  } else {
    for (double v : p)
      if (v < -1e-9) throw Error("fisher-rao metric: negative probability " + std::to_string(v));
  }
  double total = 0.0;
  for (double& v : p) {
    v = std::clamp(v, m.eps, 1.0);
    total += v;
  }
  for (double& v : p) v = std::sqrt(v / total);
  return p;
}

}  // namespace detail

/// Distance between two output points under `metric`.
inline double segment_output_distance(const MetricSpec& metric, std::span<const double> a,
                                      std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("segment distance: dimension mismatch");
  if (metric.is<EuclideanMetric>()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  if (metric.is<SphericalMetric>()) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw Error("spherical metric: zero vector has no direction");
    Vector ua(a.size()), ub(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ua[i] = a[i] / na;
      ub[i] = b[i] / nb;
    }
    return detail::unit_angle(ua, ub);
  }
  const auto& fr = std::get<FisherRaoMetric>(metric.variant());
  const Vector sp = detail::sqrt_probabilities(a, fr);
  const Vector sq = detail::sqrt_probabilities(b, fr);
  // 2·arccos(Σ√(p q)) where √p, √q are unit vectors.
  return 2.0 * detail::unit_angle(sp, sq);
}

enum class CurveQuantity { Length, Energy };

inline std::string to_string(CurveQuantity q) {
  return q == CurveQuantity::Length ? "length" : "energy";
}

struct CurveSpec {
  Vector z0;
  Vector z1;
  std::size_t steps = 8;
};

struct CurveMeasure {
  double length = 0.0;
  double energy = 0.0;
};

/// Length and energy of the discrete curve whose rows are γ_0..γ_N.
inline CurveMeasure measure_curve(const Decoder& dec, const MetricSpec& metric, const Matrix& points) {
  if (points.rows() < 2) throw Error("measure_curve: need at least two points");
  const std::size_t n = points.rows() - 1;
  Vector prev(dec.output_dim()), cur(dec.output_dim());
  dec.forward(points.row(0), prev);
  CurveMeasure m;
  double sum_sq = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    dec.forward(points.row(j), cur);
    const double s = segment_output_distance(metric, cur, prev);
    m.length += s;
    sum_sq += s * s;
    std::swap(prev, cur);
  }
  m.energy = 0.5 * static_cast<double>(n) * sum_sq;
  return m;
}

/// Points γ_j = ((N−j)/N)·z0 + (j/N)·z1, j = 0..N.
inline Matrix straight_line_points(std::span<const double> z0, std::span<const double> z1,
                                   std::size_t steps) {
  if (steps == 0) throw Error("straight line: steps must be >= 1");
  if (z0.size() != z1.size()) throw DimensionError("straight line: endpoint dimension mismatch");
  Matrix pts(steps + 1, z0.size());
  const double n = static_cast<double>(steps);
  for (std::size_t j = 0; j <= steps; ++j) {
    const double w1 = static_cast<double>(j) / n;
    const double w0 = static_cast<double>(steps - j) / n;
    for (std::size_t d = 0; d < z0.size(); ++d) pts(j, d) = w0 * z0[d] + w1 * z1[d];
  }
  return pts;
}

inline CurveMeasure measure_straight_line(const Decoder& dec, const MetricSpec& metric,
                                          std::span<const double> z0, std::span<const double> z1,
                                          std::size_t steps) {
  if (z0.size() != dec.input_dim() || z1.size() != dec.input_dim())
    throw DimensionError("straight line: endpoint dimension does not match decoder input");
  return measure_curve(dec, metric, straight_line_points(z0, z1, steps));
}

/// Length or energy of the decoded straight segment from z0 to z1.
inline double straight_line_quantity(const Decoder& dec, const MetricSpec& metric,
                                     const CurveSpec& curve, CurveQuantity mode) {
  const CurveMeasure m = measure_straight_line(dec, metric, curve.z0, curve.z1, curve.steps);
  return mode == CurveQuantity::Length ? m.length : m.energy;
}

// ---------------------------------------------------------------------------
// Discrete geodesic reference

struct DiscreteCurve {
  Matrix points;  // (N+1) x latent-dim, endpoints fixed
};

struct OracleOptions {
  std::size_t steps = 16;
  std::size_t iterations = 500;
  double learning_rate = 1e-2;
  double fd_step = 1e-5;  // central differences for non-Euclidean metrics
};

struct OracleResult {
  DiscreteCurve curve;
  double energy = 0.0;
  double length = 0.0;
  double initial_energy = 0.0;
};

/// Minimizes the discrete energy over the interior points with Adam, starting
/// from the straight line. Returns the lowest-energy curve visited, so the
/// result never exceeds the straight-line energy.
inline OracleResult geodesic_oracle(const Decoder& dec, const MetricSpec& metric,
                                    std::span<const double> z0, std::span<const double> z1,
                                    const OracleOptions& opt = {}) {
  if (opt.steps < 2) throw Error("geodesic oracle: steps must be >= 2");
  if (z0.size() != dec.input_dim() || z1.size() != dec.input_dim())
    throw DimensionError("geodesic oracle: endpoint dimension does not match decoder input");
  const std::size_t n = opt.steps;
  const std::size_t d = z0.size();
  const std::size_t out_dim = dec.output_dim();
  const double scale = static_cast<double>(n);
  const bool euclidean = metric.is<EuclideanMetric>();

  Matrix pts = straight_line_points(z0, z1, n);
  Matrix ys(n + 1, out_dim);
  for (std::size_t j = 0; j <= n; ++j) dec.forward(pts.row(j), ys.row(j));

  auto energy_of = [&](const Matrix& y) {
    double sum_sq = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double s = segment_output_distance(metric, y.row(j), y.row(j - 1));
      sum_sq += s * s;
    }
    return 0.5 * scale * sum_sq;
  };

  OracleResult result;
  result.initial_energy = energy_of(ys);
  double best_energy = result.initial_energy;
  Matrix best = pts;

  // Adam state over interior points.
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Matrix m1(n + 1, d), m2(n + 1, d), grad(n + 1, d);
  Vector u(out_dim), y_probe(out_dim), probe(d);
  double b1t = 1.0, b2t = 1.0;

  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t j = 1; j < n; ++j) {
      if (euclidean) {
        // ∂E/∂y_j = N·(2y_j − y_{j−1} − y_{j+1}); pulled back through J_Dᵀ.
        for (std::size_t k = 0; k < out_dim; ++k)
          u[k] = scale * (2.0 * ys(j, k) - ys(j - 1, k) - ys(j + 1, k));
        const Vector g = dec.vjp(pts.row(j), u);
        std::copy(g.begin(), g.end(), grad.row(j).begin());
      } else {
        auto local = [&](std::span<const double> y) {
          const double a = segment_output_distance(metric, y, ys.row(j - 1));
          const double b = segment_output_distance(metric, ys.row(j + 1), y);
          return 0.5 * scale * (a * a + b * b);
        };
        for (std::size_t k = 0; k < d; ++k) {
          std::copy(pts.row(j).begin(), pts.row(j).end(), probe.begin());
          const double h = opt.fd_step * std::max(1.0, std::abs(probe[k]));
          probe[k] = pts(j, k) + h;
          dec.forward(probe, y_probe);
          const double ep = local(y_probe);
          probe[k] = pts(j, k) - h;
          dec.forward(probe, y_probe);
          const double em = local(y_probe);
          grad(j, k) = (ep - em) / (2.0 * h);
        }
      }
    }
    b1t *= beta1;
    b2t *= beta2;
    for (std::size_t j = 1; j < n; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        const double g = grad(j, k);
        m1(j, k) = beta1 * m1(j, k) + (1.0 - beta1) * g;
        m2(j, k) = beta2 * m2(j, k) + (1.0 - beta2) * g * g;
        const double mhat = m1(j, k) / (1.0 - b1t);
        const double vhat = m2(j, k) / (1.0 - b2t);
        pts(j, k) -= opt.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
      dec.forward(pts.row(j), ys.row(j));
    }
    const double e = energy_of(ys);
    if (!std::isfinite(e) || !pts.all_finite()) {
      throw Error("geodesic oracle: non-finite energy at iteration " + std::to_string(it));
    }
    if (e < best_energy) {
      best_energy = e;
      best = pts;
    }
  }

  result.curve.points = std::move(best);
  const CurveMeasure final_measure = measure_curve(dec, metric, result.curve.points);
  result.energy = final_measure.energy;
  result.length = final_measure.length;
  return result;
}

/// Re-evaluates the piecewise-linear latent curve at monotone parameters
/// `params` (in [0, 1], first 0 and last 1).
inline Matrix resample_curve(const DiscreteCurve& curve, std::span<const double> params) {
  const std::size_t n = curve.points.rows() - 1;
  Matrix out(params.size(), curve.points.cols());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double s = std::clamp(params[k], 0.0, 1.0) * static_cast<double>(n);
    const std::size_t seg = std::min<std::size_t>(static_cast<std::size_t>(s), n - 1);
    const double w = s - static_cast<double>(seg);
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(k, c) = (1.0 - w) * curve.points(seg, c) + w * curve.points(seg + 1, c);
  }
  return out;
}

struct BoundsCheck {
  double geodesic_distance = 0.0;  // length of the optimized curve
  double line_length = 0.0;
  double line_energy = 0.0;
  double oracle_length = 0.0;
  double oracle_energy = 0.0;
  bool holds = false;
};

/// Checks d² ≤ L² ≤ 2E for the straight line, with tolerance
/// 1e-6·max(1, 2E). The oracle runs at the same N as the line; a finer
/// discretization of the same curve would report a longer length.
inline BoundsCheck check_bounds(const Decoder& dec, const MetricSpec& metric,
                                std::span<const double> z0, std::span<const double> z1,
                                std::size_t steps, OracleOptions opt = {}) {
  const CurveMeasure line = measure_straight_line(dec, metric, z0, z1, steps);
  opt.steps = std::max<std::size_t>(steps, 2);
  const OracleResult oracle = geodesic_oracle(dec, metric, z0, z1, opt);
  BoundsCheck out;
  out.line_length = line.length;
  out.line_energy = line.energy;
  out.oracle_length = oracle.length;
  out.oracle_energy = oracle.energy;
  out.geodesic_distance = oracle.length;
  const double tol = 1e-6 * std::max(1.0, 2.0 * line.energy);
  const double d2 = out.geodesic_distance * out.geodesic_distance;
  const double l2 = line.length * line.length;
  out.holds = d2 <= l2 + tol && l2 <= 2.0 * line.energy + tol;
  return out;
}

}  // namespace relgeo
