// Feed-forward models, analytic test decoders, latent reparametrizations and
// output isometries.
//
// A Decoder maps latent codes to output space and exposes vector-Jacobian
// products, which is all the geometry code needs from it. Composed decoders
// pre-compose a LatentMap and post-compose an OutputIsometry:
//
//   forward(compose(D, pre, post), z) = Q · D(pre(z)) + t
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "relgeo/numerics.hpp"

namespace relgeo {

enum class Activation { Identity, ReLU, Tanh, Sigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw Error("unknown activation '" + name + "'");
}

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

/// Derivative from the pre-activation and its activated value. ReLU uses the
/// subgradient 0 at the origin.
inline double activation_derivative(Activation act, double pre, double post) {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - post * post;
    case Activation::Sigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // empty for bias-free layers
  Activation activation = Activation::Identity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
  bool has_bias() const noexcept { return !bias.empty(); }
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t max_width() const {
    std::size_t w = input_dim();
    for (const auto& l : layers_) w = std::max(w, l.out_dim());
    return w;
  }

  void validate() const {
    if (layers_.empty()) throw Error("mlp: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      if (layer.weight.empty()) throw Error("mlp: layer " + std::to_string(l) + " has no weights");
      if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim()) {
        throw DimensionError("mlp: layer " + std::to_string(l) + " expects " +
                             std::to_string(layer.in_dim()) + " inputs, previous layer gives " +
                             std::to_string(layers_[l - 1].out_dim()));
      }
      if (layer.has_bias() && layer.bias.size() != layer.out_dim()) {
        throw DimensionError("mlp: bias length mismatch in layer " + std::to_string(l));
      }
      if (!layer.weight.all_finite() ||
          !std::all_of(layer.bias.begin(), layer.bias.end(), [](double v) { return std::isfinite(v); })) {
        throw Error("mlp: non-finite parameter in layer " + std::to_string(l));
      }
    }
  }

  void forward(std::span<const double> z, std::span<double> out) const {
    if (z.size() != input_dim()) {
      throw DimensionError("mlp forward: input of " + std::to_string(z.size()) + ", expected " +
                           std::to_string(input_dim()));
    }
    thread_local Vector a, b;
    a.assign(z.begin(), z.end());
    for (const Layer& layer : layers_) {
      b.resize(layer.out_dim());
      for (std::size_t i = 0; i < layer.out_dim(); ++i) {
        const double pre = dot(layer.weight.row(i), a) + (layer.has_bias() ? layer.bias[i] : 0.0);
        b[i] = activate(layer.activation, pre);
      }
      std::swap(a, b);
    }
    std::copy(a.begin(), a.end(), out.begin());
  }

  Vector forward(std::span<const double> z) const {
    Vector out(output_dim());
    forward(z, out);
    return out;
  }

  Matrix forward_batch(const Matrix& z) const {
    if (z.rows() > 0 && z.cols() != input_dim()) {
      throw DimensionError("mlp forward_batch: input width " + std::to_string(z.cols()));
    }
    Matrix out(z.rows(), output_dim());
    for (std::size_t i = 0; i < z.rows(); ++i) forward(z.row(i), out.row(i));
    return out;
  }

  /// J(z)ᵀ u by reverse-mode accumulation.
  Vector vjp(std::span<const double> z, std::span<const double> u) const {
    if (z.size() != input_dim() || u.size() != output_dim()) {
      throw DimensionError("mlp vjp: dimension mismatch");
    }
    std::vector<Vector> pre(layers_.size()), post(layers_.size());
    Vector a(z.begin(), z.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      pre[l] = matvec(layer.weight, a);
      if (layer.has_bias())
        for (std::size_t i = 0; i < pre[l].size(); ++i) pre[l][i] += layer.bias[i];
      post[l].resize(pre[l].size());
      for (std::size_t i = 0; i < pre[l].size(); ++i) post[l][i] = activate(layer.activation, pre[l][i]);
      a = post[l];
    }
    Vector g(u.begin(), u.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Layer& layer = layers_[l];
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] *= activation_derivative(layer.activation, pre[l][i], post[l][i]);
      g = matvec_transposed(layer.weight, g);
    }
    return g;
  }

  /// Layers [first, last) as a standalone network.
  Mlp slice(std::size_t first, std::size_t last) const {
    if (first >= last || last > layers_.size()) throw Error("mlp slice: bad range");
    return Mlp(std::vector<Layer>(layers_.begin() + first, layers_.begin() + last));
  }

 private:
  std::vector<Layer> layers_;
};

/// Stacks `tail` after `head`.
inline Mlp chain(const Mlp& head, const Mlp& tail) {
  std::vector<Layer> layers = head.layers();
  layers.insert(layers.end(), tail.layers().begin(), tail.layers().end());
  return Mlp(std::move(layers));
}

// ---------------------------------------------------------------------------
// Latent reparametrizations

/// z ↦ A z + b, A invertible.
struct AffineMap {
  Matrix a;
  Vector b;
};

/// z ↦ z + α·tanh(W z + b) with α‖W‖₂ < 0.9, hence a smooth bijection.
struct ResidualMap {
  Matrix w;
  Vector b;
  double alpha = 1.0;
};

class LatentMap {
 public:
  static constexpr double kMaxContraction = 0.9;
  static constexpr int kInversionIterations = 200;
  static constexpr double kInversionTolerance = 1e-10;

  static LatentMap affine(Matrix a, Vector b) {
    if (a.rows() != a.cols() || b.size() != a.rows())
      throw DimensionError("affine latent map: A must be square and match b");
    if (std::abs(determinant(a)) <= 1e-12) throw Error("affine latent map: A is not invertible");
    LatentMap m;
    m.a_inv_ = relgeo::inverse(a);
    m.map_ = AffineMap{std::move(a), std::move(b)};
    return m;
  }

  static LatentMap residual(Matrix w, Vector b, double alpha) {
    if (w.rows() != w.cols() || b.size() != w.rows())
      throw DimensionError("residual latent map: W must be square and match b");
    const double lipschitz = std::abs(alpha) * spectral_norm_estimate(w, 50);
    if (!(lipschitz < kMaxContraction)) {
      throw Error("residual latent map: contraction " + std::to_string(lipschitz) +
                  " is not below " + std::to_string(kMaxContraction));
    }
    LatentMap m;
    m.map_ = ResidualMap{std::move(w), std::move(b), alpha};
    return m;
  }

  std::size_t dim() const {
    return std::visit([](const auto& m) -> std::size_t {
      if constexpr (std::is_same_v<std::decay_t<decltype(m)>, AffineMap>) return m.a.rows();
      else return m.w.rows();
    }, map_);
  }

  bool is_inverted() const noexcept { return inverted_; }
  bool is_affine() const noexcept { return std::holds_alternative<AffineMap>(map_); }
  const std::variant<AffineMap, ResidualMap>& map() const noexcept { return map_; }

  /// Same map, opposite direction.
  LatentMap inverse() const {
    LatentMap m = *this;
    m.inverted_ = !inverted_;
    return m;
  }

  Vector apply(std::span<const double> z) const {
    check(z.size());
    return inverted_ ? backward(z) : forward(z);
  }

  Vector apply_inverse(std::span<const double> z) const {
    check(z.size());
    return inverted_ ? forward(z) : backward(z);
  }

  /// J(z)ᵀ u for the map in its current direction.
  Vector vjp(std::span<const double> z, std::span<const double> u) const {
    check(z.size());
    check(u.size());
    if (const auto* am = std::get_if<AffineMap>(&map_)) {
      return inverted_ ? matvec_transposed(a_inv_, u) : matvec_transposed(am->a, u);
    }
    const auto& rm = std::get<ResidualMap>(map_);
    if (!inverted_) return residual_forward_vjp(rm, z, u);
    // Inverse direction: J_{φ⁻¹}(y)ᵀ u = J_φ(x)⁻ᵀ u with x = φ⁻¹(y).
    const Vector x = backward(z);
    return solve(transpose(residual_jacobian(rm, x)), u);
  }

 private:
  void check(std::size_t n) const {
    if (n != dim()) {
      throw DimensionError("latent map: vector of " + std::to_string(n) + ", expected " +
                           std::to_string(dim()));
    }
  }

  static Matrix residual_jacobian(const ResidualMap& rm, std::span<const double> x) {
    const std::size_t n = rm.w.rows();
    Matrix j = Matrix::identity(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = std::tanh(dot(rm.w.row(i), x) + rm.b[i]);
      const double d = rm.alpha * (1.0 - t * t);
      for (std::size_t k = 0; k < n; ++k) j(i, k) += d * rm.w(i, k);
    }
    return j;
  }

  static Vector residual_forward_vjp(const ResidualMap& rm, std::span<const double> z,
                                     std::span<const double> u) {
    Vector g(rm.w.rows());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = std::tanh(dot(rm.w.row(i), z) + rm.b[i]);
      g[i] = rm.alpha * (1.0 - t * t) * u[i];
    }
    Vector out = matvec_transposed(rm.w, g);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += u[i];
    return out;
  }

  Vector forward(std::span<const double> z) const {
    if (const auto* am = std::get_if<AffineMap>(&map_)) {
      Vector y = matvec(am->a, z);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += am->b[i];
      return y;
    }
    const auto& rm = std::get<ResidualMap>(map_);
    Vector y(z.begin(), z.end());
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] += rm.alpha * std::tanh(dot(rm.w.row(i), z) + rm.b[i]);
    return y;
  }

  Vector backward(std::span<const double> y) const {
    if (const auto* am = std::get_if<AffineMap>(&map_)) {
      Vector shifted(y.begin(), y.end());
      for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] -= am->b[i];
      return matvec(a_inv_, shifted);
    }
    // Fixed point x = y − α tanh(W x + b); a contraction since α‖W‖₂ < 1.
    const auto& rm = std::get<ResidualMap>(map_);
    Vector x(y.begin(), y.end());
    Vector next(x.size());
    double step = 0.0;
    for (int it = 0; it < kInversionIterations; ++it) {
      step = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        next[i] = y[i] - rm.alpha * std::tanh(dot(rm.w.row(i), x) + rm.b[i]);
        step = std::max(step, std::abs(next[i] - x[i]));
      }
      std::swap(x, next);
      if (step <= kInversionTolerance) return x;
    }
    throw ConvergenceError("residual latent map: fixed-point inversion did not converge", step);
  }

  std::variant<AffineMap, ResidualMap> map_;
  Matrix a_inv_;
  bool inverted_ = false;
};

/// y ↦ Q y + t with Q orthogonal.
struct OutputIsometry {
  Matrix q;
  Vector t;

  static OutputIsometry make(Matrix q, Vector t) {
    if (q.rows() != q.cols() || t.size() != q.rows())
      throw DimensionError("output isometry: Q must be square and match t");
    const double err = max_abs_diff(matmul(transpose(q), q), Matrix::identity(q.rows()));
    if (err > 1e-10) throw Error("output isometry: QᵀQ deviates from I by " + std::to_string(err));
    return {std::move(q), std::move(t)};
  }

  static OutputIsometry identity(std::size_t n) { return {Matrix::identity(n), Vector(n, 0.0)}; }

  Vector apply(std::span<const double> y) const {
    Vector out = matvec(q, y);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
    return out;
  }
};

// ---------------------------------------------------------------------------
// Decoders

/// y = A z + offset.
struct LinearDecoder {
  Matrix a;
  Vector offset;
};

/// (θ, φ) ↦ r·(sinθ cosφ, sinθ sinφ, cosθ).
struct SphereChart {
  double radius = 1.0;
};

/// (t, h) ↦ scale·(t cos t, h, t sin t).
struct SwissRoll {
  double scale = 1.0;
};

class Decoder;

namespace detail {
template <class... Ts>
struct Overload : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;
}  // namespace detail

struct ComposedDecoder {
  std::shared_ptr<const Decoder> inner;
  std::optional<LatentMap> pre;
  std::optional<OutputIsometry> post;
};

class Decoder {
 public:
  using Variant = std::variant<Mlp, LinearDecoder, SphereChart, SwissRoll, ComposedDecoder>;

  Decoder(Mlp mlp) : impl_(std::move(mlp)) {}
  Decoder(LinearDecoder lin) : impl_(std::move(lin)) {
    if (impl_linear().offset.empty()) impl_linear().offset.assign(impl_linear().a.rows(), 0.0);
    if (impl_linear().offset.size() != impl_linear().a.rows())
      throw DimensionError("linear decoder: offset length mismatch");
  }
  Decoder(SphereChart s) : impl_(s) {}
  Decoder(SwissRoll s) : impl_(s) {}
  Decoder(ComposedDecoder c) : impl_(std::move(c)) {}

  static Decoder identity(std::size_t n) { return LinearDecoder{Matrix::identity(n), Vector(n, 0.0)}; }

  const Variant& variant() const noexcept { return impl_; }

  std::size_t input_dim() const {
    return std::visit(detail::Overload{
        [](const Mlp& m) { return m.input_dim(); },
        [](const LinearDecoder& l) { return l.a.cols(); },
        [](const SphereChart&) { return std::size_t{2}; },
        [](const SwissRoll&) { return std::size_t{2}; },
        [](const ComposedDecoder& c) { return c.pre ? c.pre->dim() : c.inner->input_dim(); },
    }, impl_);
  }

  std::size_t output_dim() const {
    return std::visit(detail::Overload{
        [](const Mlp& m) { return m.output_dim(); },
        [](const LinearDecoder& l) { return l.a.rows(); },
        [](const SphereChart&) { return std::size_t{3}; },
        [](const SwissRoll&) { return std::size_t{3}; },
        [](const ComposedDecoder& c) { return c.inner->output_dim(); },
    }, impl_);
  }

  void forward(std::span<const double> z, std::span<double> out) const {
    if (z.size() != input_dim()) {
      throw DimensionError("decoder forward: latent of " + std::to_string(z.size()) +
                           ", expected " + std::to_string(input_dim()));
    }
    std::visit(detail::Overload{
        [&](const Mlp& m) { m.forward(z, out); },
        [&](const LinearDecoder& l) {
          for (std::size_t i = 0; i < l.a.rows(); ++i) out[i] = dot(l.a.row(i), z) + l.offset[i];
        },
        [&](const SphereChart& s) {
          const double st = std::sin(z[0]);
          out[0] = s.radius * st * std::cos(z[1]);
          out[1] = s.radius * st * std::sin(z[1]);
          out[2] = s.radius * std::cos(z[0]);
        },
        [&](const SwissRoll& s) {
          out[0] = s.scale * z[0] * std::cos(z[0]);
          out[1] = s.scale * z[1];
          out[2] = s.scale * z[0] * std::sin(z[0]);
        },
        [&](const ComposedDecoder& c) {
          if (c.pre) {
            const Vector inner_z = c.pre->apply(z);
            c.inner->forward(inner_z, out);
          } else {
            c.inner->forward(z, out);
          }
          if (c.post) {
            const Vector y = c.post->apply(out);
            std::copy(y.begin(), y.end(), out.begin());
          }
        },
    }, impl_);
  }

  Vector forward(std::span<const double> z) const {
    Vector out(output_dim());
    forward(z, out);
    return out;
  }

  Matrix forward_batch(const Matrix& z) const {
    if (z.rows() == 0) return Matrix(0, output_dim());
    Matrix out(z.rows(), output_dim());
    for (std::size_t i = 0; i < z.rows(); ++i) forward(z.row(i), out.row(i));
    return out;
  }

  /// J_D(z)ᵀ u.
  Vector vjp(std::span<const double> z, std::span<const double> u) const {
    if (z.size() != input_dim() || u.size() != output_dim())
      throw DimensionError("decoder vjp: dimension mismatch");
    return std::visit(detail::Overload{
        [&](const Mlp& m) { return m.vjp(z, u); },
        [&](const LinearDecoder& l) { return matvec_transposed(l.a, u); },
        [&](const SphereChart& s) {
          const double st = std::sin(z[0]), ct = std::cos(z[0]);
          const double sp = std::sin(z[1]), cp = std::cos(z[1]);
          return Vector{s.radius * (ct * cp * u[0] + ct * sp * u[1] - st * u[2]),
                        s.radius * (-st * sp * u[0] + st * cp * u[1])};
        },
        [&](const SwissRoll& s) {
          const double t = z[0];
          const double dx = std::cos(t) - t * std::sin(t);
          const double dz = std::sin(t) + t * std::cos(t);
          return Vector{s.scale * (dx * u[0] + dz * u[2]), s.scale * u[1]};
        },
        [&](const ComposedDecoder& c) {
          const Vector v = c.post ? matvec_transposed(c.post->q, u) : Vector(u.begin(), u.end());
          if (!c.pre) return c.inner->vjp(z, v);
          const Vector inner_z = c.pre->apply(z);
          return c.pre->vjp(z, c.inner->vjp(inner_z, v));
        },
    }, impl_);
  }

 private:
  LinearDecoder& impl_linear() { return std::get<LinearDecoder>(impl_); }

  Variant impl_;
};

/// Decoder whose forward is post(inner(pre(z))).
inline Decoder compose(const Decoder& inner, std::optional<LatentMap> pre = std::nullopt,
                       std::optional<OutputIsometry> post = std::nullopt) {
  if (pre && pre->dim() != inner.input_dim()) {
    throw DimensionError("compose: latent map of dim " + std::to_string(pre->dim()) +
                         " does not feed decoder input " + std::to_string(inner.input_dim()));
  }
  if (post && post->q.rows() != inner.output_dim()) {
    throw DimensionError("compose: isometry of dim " + std::to_string(post->q.rows()) +
                         " does not match decoder output " + std::to_string(inner.output_dim()));
  }
  return ComposedDecoder{std::make_shared<const Decoder>(inner), std::move(pre), std::move(post)};
}

}  // namespace relgeo
