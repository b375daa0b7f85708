// Dense linear algebra and seeded random streams used by every other header.
//
// Matrices are row-major, double precision and small (desk scale: a few
// hundred rows/columns at most). Everything here is value-semantic and pure
// except RngStream, which advances as it is drawn from.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace relgeo {

using Vector = std::vector<double>;
using IndexVector = std::vector<std::size_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

namespace detail {

inline std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("matrix payload of " + std::to_string(data_.size()) +
                           " values does not fit " + detail::dims(rows_, cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  static Matrix from_rows(const std::vector<Vector>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols()) throw DimensionError("ragged row list");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  Vector row_vector(std::size_t i) const {
    auto r = row(i);
    return {r.begin(), r.end()};
  }
  Vector col_vector(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Basic operations

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + detail::dims(a.rows(), a.cols()) + " by " +
                         detail::dims(b.rows(), b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// y = A x.
inline Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: " + detail::dims(a.rows(), a.cols()) +
                         " by vector of " + std::to_string(x.size()));
  }
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

/// y = Aᵀ x.
inline Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) {
    throw DimensionError("matvec_transposed: " + detail::dims(a.rows(), a.cols()) +
                         " by vector of " + std::to_string(x.size()));
  }
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("add: shape mismatch");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] += b.data()[k];
  return c;
}

inline Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("subtract: shape mismatch");
  Matrix c = a;
  for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] -= b.data()[k];
  return c;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("vector subtract: length mismatch");
  Vector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

inline double frobenius_norm(const Matrix& a) { return norm(a.data()); }

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

inline Vector column_means(const Matrix& a) {
  Vector mean(a.cols(), 0.0);
  if (a.rows() == 0) return mean;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) mean[j] += a(i, j);
  for (double& m : mean) m /= static_cast<double>(a.rows());
  return mean;
}

/// Subtracts `offset` from every row.
inline Matrix subtract_row(const Matrix& a, std::span<const double> offset) {
  if (offset.size() != a.cols()) throw DimensionError("subtract_row: width mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) -= offset[j];
  return c;
}

inline Matrix select_rows(const Matrix& a, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a.rows()) throw DimensionError("select_rows: index out of range");
    std::copy(a.row(idx[r]).begin(), a.row(idx[r]).end(), out.row(r).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Square solves

/// Solves A X = B by Gaussian elimination with partial pivoting.
inline Matrix solve(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.rows() != n) throw DimensionError("solve: shape mismatch");
  Matrix lu = a;
  Matrix x = b;
  double scale_ref = 0.0;
  for (double v : a.data()) scale_ref = std::max(scale_ref, std::abs(v));
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (std::abs(lu(piv, k)) <= 1e-300 + 1e-15 * scale_ref) throw Error("solve: matrix is singular");
    if (piv != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(piv).begin());
      std::swap_ranges(x.row(k).begin(), x.row(k).end(), x.row(piv).begin());
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
      for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) -= f * x(k, j);
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = x(k, j);
      for (std::size_t i = k + 1; i < n; ++i) s -= lu(k, i) * x(i, j);
      x(k, j) = s / lu(k, k);
    }
  }
  return x;
}

inline Vector solve(const Matrix& a, std::span<const double> b) {
  Matrix rhs(b.size(), 1, Vector(b.begin(), b.end()));
  return solve(a, rhs).col_vector(0);
}

inline Matrix inverse(const Matrix& a) { return solve(a, Matrix::identity(a.rows())); }

inline double determinant(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("determinant: matrix not square");
  Matrix lu = a;
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (lu(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(piv).begin());
      det = -det;
    }
    det *= lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      for (std::size_t j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
    }
  }
  return det;
}

// ---------------------------------------------------------------------------
// Thin SVD (one-sided Jacobi)

struct Svd {
  Matrix u;   // m x k
  Vector s;   // k, non-negative, descending
  Matrix vt;  // k x n
};

namespace detail {

// Fills unit columns of `cols` (stored as rows, length m) flagged in `missing`
// with vectors orthonormal to all others.
inline void complete_orthonormal(Matrix& cols, const std::vector<bool>& missing) {
  const std::size_t m = cols.cols();
  std::size_t candidate = 0;
  for (std::size_t c = 0; c < cols.rows(); ++c) {
    if (!missing[c]) continue;
    for (; candidate < m; ++candidate) {
      Vector v(m, 0.0);
      v[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < cols.rows(); ++o) {
          if (o == c || (missing[o] && o > c)) continue;
          const double p = dot(v, cols.row(o));
          for (std::size_t i = 0; i < m; ++i) v[i] -= p * cols(o, i);
        }
      }
      const double nv = norm(v);
      if (nv > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) cols(c, i) = v[i] / nv;
        ++candidate;
        break;
      }
    }
  }
}

inline Svd jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  // Columns of A and V stored as rows for contiguous access.
  Matrix work = transpose(a);
  Matrix v = Matrix::identity(n);
  const std::size_t max_sweeps = 100 * std::max<std::size_t>(n, 1);
  constexpr double tol = 1e-15;
  bool converged = n < 2;
  for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto ap = work.row(p);
        auto aq = work.row(q);
        const double alpha = dot(ap, ap);
        const double beta = dot(aq, aq);
        const double gamma = dot(ap, aq);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = ap[i];
          const double y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        auto vp = v.row(p);
        auto vq = v.row(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::pow(dot(work.row(p), work.row(q)), 2);
    throw ConvergenceError("thin_svd: Jacobi sweeps exceeded cap", std::sqrt(off));
  }

  Vector s(n);
  for (std::size_t j = 0; j < n; ++j) s[j] = norm(work.row(j));
  const double smax = n == 0 ? 0.0 : *std::max_element(s.begin(), s.end());
  std::vector<bool> missing(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    if (s[j] <= 1e-300 || s[j] <= 1e-13 * smax) {
      missing[j] = true;
    } else {
      for (double& x : work.row(j)) x /= s[j];
    }
  }
  complete_orthonormal(work, missing);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });
  Svd out{Matrix(m, n), Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = s[j];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = work(j, i);
    std::copy(v.row(j).begin(), v.row(j).end(), out.vt.row(k).begin());
  }
  return out;
}

}  // namespace detail

/// Thin SVD a = U·diag(s)·Vt with k = min(rows, cols).
inline Svd thin_svd(const Matrix& a) {
  if (!a.all_finite()) throw Error("thin_svd: non-finite input");
  if (a.rows() >= a.cols()) return detail::jacobi_svd_tall(a);
  Svd t = detail::jacobi_svd_tall(transpose(a));
  return {transpose(t.vt), std::move(t.s), transpose(t.u)};
}

inline Matrix reconstruct(const Svd& svd) {
  Matrix us = svd.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= svd.s[k];
  return matmul(us, svd.vt);
}

// ---------------------------------------------------------------------------
// Least squares

struct LstsqResult {
  Matrix x;
  std::size_t rank = 0;
  bool underdetermined = false;  // rank < unknowns: solution not unique, minimum-norm one returned
};

/// Minimum-norm minimizer of ‖a·x − b‖_F via the SVD pseudoinverse
/// (singular values below 1e-12·max(s) are treated as zero).
inline LstsqResult lstsq(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("lstsq: " + std::to_string(a.rows()) + " rows vs " +
                         std::to_string(b.rows()));
  }
  LstsqResult result;
  const Svd svd = thin_svd(a);
  const double smax = svd.s.empty() ? 0.0 : svd.s.front();
  const double cutoff = 1e-12 * smax;
  // x = V diag(1/s) Uᵀ b
  Matrix utb = matmul(transpose(svd.u), b);
  for (std::size_t k = 0; k < svd.s.size(); ++k) {
    const bool keep = svd.s[k] > cutoff && svd.s[k] > 0.0;
    if (keep) ++result.rank;
    for (double& v : utb.row(k)) v = keep ? v / svd.s[k] : 0.0;
  }
  result.x = matmul(transpose(svd.vt), utb);
  result.underdetermined = result.rank < a.cols();
  return result;
}

// ---------------------------------------------------------------------------
// Random streams

/// FNV-1a; used to turn named stream ids ("anchors:rep-3") into integers.
inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Deterministic generator identified by (seed, stream id). Distinct stream ids
/// give statistically independent sequences; nothing is shared globally.
class RngStream {
 public:
  RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
    engine_.seed(seq);
  }
  RngStream(std::uint64_t seed, std::string_view stream_name)
      : RngStream(seed, hash_name(stream_name)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// New stream sharing this seed.
  RngStream split(std::string_view name) const {
    return RngStream(seed_, hash_name(name) ^ (stream_ * 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw Error("uniform_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via Box-Muller (both variates used).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = stddev * normal();
    return m;
  }

  Vector normal_vector(std::size_t n, double stddev = 1.0) {
    Vector v(n);
    for (double& x : v) x = stddev * normal();
    return v;
  }

  /// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  IndexVector sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw Error("sample_without_replacement: k > n");
    IndexVector pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
inline Matrix random_orthogonal(std::size_t n, RngStream& rng) {
  if (n == 0) throw Error("random_orthogonal: n must be >= 1");
  // Rows of `q` are the orthonormalized columns.
  Matrix q = rng.normal_matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    auto qj = q.row(j);
    const double original_norm = norm(qj);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        const double p = dot(qj, q.row(k));
        for (std::size_t i = 0; i < n; ++i) qj[i] -= p * q(k, i);
      }
    }
    const double r_jj = norm(qj);  // positive R diagonal makes the draw Haar
    if (r_jj <= 1e-10 * original_norm) throw Error("random_orthogonal: degenerate draw");
    for (double& x : qj) x /= r_jj;
  }
  return transpose(q);
}

/// Largest singular value estimate by power iteration on WᵀW.
inline double spectral_norm_estimate(const Matrix& w, int iterations = 50) {
  if (w.empty()) return 0.0;
  Vector x(w.cols());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + 0.37 * static_cast<double>(i % 7);
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector y = matvec_transposed(w, matvec(w, x));
    const double ny = norm(y);
    if (ny == 0.0) return 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] / ny;
    sigma = std::sqrt(ny);
  }
  return sigma;
}

}  // namespace relgeo
