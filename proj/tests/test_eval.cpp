#include "test_util.hpp"

namespace relgeo {
namespace {

// Rank of column `gt` in `row` via a full stable sort: better scores first,
// equal scores ordered by index, with the true column placed after every
// equal-scored column of smaller index.
std::size_t sort_rank(std::span<const double> row, std::size_t gt, bool higher_is_better) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return higher_is_better ? row[a] > row[b] : row[a] < row[b];
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), gt) - order.begin()) + 1;
}

// O(n²) average ranks.
Vector naive_ranks(std::span<const double> x) {
  Vector r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] < x[i]) less += 1.0;
      if (x[j] == x[i]) equal += 1.0;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

TEST(Mrr, PerfectDiagonalIsOne) {
  Matrix d = Matrix::identity(5);
  EXPECT_EQ(mrr_identity(d).mrr, 1.0);
}

TEST(Mrr, RanksOneTwoFour) {
  // Row 0: truth best; row 1: one better; row 2: three better.
  const Matrix d = Matrix::from_rows({{0.9, 0.1, 0.2, 0.3},
                                      {0.8, 0.5, 0.1, 0.2},
                                      {0.9, 0.8, 0.1, 0.7}});
  const MrrResult r = mrr(d, IndexVector{0, 1, 2});
  EXPECT_EQ(r.ranks, (IndexVector{1, 2, 4}));
  EXPECT_NEAR(r.mrr, (1.0 + 0.5 + 0.25) / 3.0, 1e-15);
}

TEST(Mrr, TiesArePessimisticForSmallerIndices) {
  const Matrix d = Matrix::from_rows({{0.5, 0.5, 0.5}});
  EXPECT_EQ(mrr(d, IndexVector{0}).ranks[0], 1u);
  EXPECT_EQ(mrr(d, IndexVector{2}).ranks[0], 3u);
}

TEST(Mrr, MatchesSortOracleOnRandomMatrix) {
  RngStream rng(1, "mrr");
  Matrix d = rng.normal_matrix(50, 50);
  // Inject ties.
  for (std::size_t i = 0; i < 50; i += 7) d(i, (i + 3) % 50) = d(i, i);
  IndexVector gt(50);
  for (std::size_t i = 0; i < 50; ++i) gt[i] = rng.uniform_index(50);
  for (bool higher : {true, false}) {
    MrrOptions opt;
    opt.higher_is_better = higher;
    const MrrResult r = mrr(d, gt, opt);
    double sum = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
      const std::size_t expected = sort_rank(d.row(i), gt[i], higher);
      EXPECT_EQ(r.ranks[i], expected) << "row " << i;
      sum += 1.0 / static_cast<double>(expected);
    }
    EXPECT_EQ(r.mrr, sum / 50.0);
  }
}

TEST(Mrr, SymmetricEqualsExplicitSymmetrization) {
  RngStream rng(2, "mrr-sym");
  const Matrix d = rng.normal_matrix(20, 20);
  Matrix sym(20, 20);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) sym(i, j) = 0.5 * (d(i, j) + d(j, i));
  MrrOptions opt;
  opt.symmetric = true;
  const MrrResult a = mrr_identity(d, opt);
  const MrrResult b = mrr_identity(sym);
  EXPECT_TRUE(a.symmetric);
  EXPECT_EQ(a.ranks, b.ranks);
  EXPECT_EQ(a.mrr, b.mrr);
}

TEST(Mrr, SymmetricRequiresSquare) {
  MrrOptions opt;
  opt.symmetric = true;
  EXPECT_THROW(mrr(Matrix(2, 3), IndexVector{0, 1}, opt), Error);
}

TEST(Mrr, GroundTruthOutOfRangeThrows) {
  EXPECT_THROW(mrr(Matrix(2, 2), IndexVector{0, 2}), Error);
}

TEST(Mrr, ExcludeSelfSkipsDiagonal) {
  const Matrix d = Matrix::from_rows({{1.0, 0.2, 0.9}, {0.3, 1.0, 0.1}, {0.4, 0.8, 1.0}});
  MrrOptions opt;
  opt.exclude_self = true;
  // Query 0 seeks column 2: only the diagonal would outrank it.
  EXPECT_EQ(mrr(d, IndexVector{2, 0, 1}, opt).ranks, (IndexVector{1, 1, 1}));
  EXPECT_EQ(mrr(d, IndexVector{2, 0, 1}).ranks, (IndexVector{2, 2, 2}));
}

TEST(MrrProperty, InvariantUnderMonotoneTransform) {
  RngStream rng(3, "mrr-monotone");
  const Matrix d = rng.normal_matrix(30, 30);
  Matrix t = d;
  for (double& v : t.data()) v = std::exp(3.0 * v) + 2.0;
  EXPECT_EQ(mrr_identity(d).mrr, mrr_identity(t).mrr);
}

TEST(Spearman, IdentityAndReversal) {
  const Vector x{1, 5, 2, 8, 3};
  Vector neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
  EXPECT_NEAR(spearman(x, x), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, neg), -1.0, 1e-15);
}

TEST(Spearman, FractionalRanksMatchNaiveOracle) {
  RngStream rng(4, "ranks");
  Vector x(40);
  for (double& v : x) v = static_cast<double>(rng.uniform_index(10));  // many ties
  EXPECT_EQ(fractional_ranks(x), naive_ranks(x));
}

TEST(Spearman, WithTiesMatchesPearsonOfNaiveRanks) {
  RngStream rng(5, "spearman");
  Vector x(60), y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    x[i] = static_cast<double>(rng.uniform_index(8));
    y[i] = x[i] + rng.normal();
  }
  EXPECT_NEAR(spearman(x, y), pearson(naive_ranks(x), naive_ranks(y)), 1e-12);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  RngStream rng(6, "spearman-mono");
  Vector x = rng.normal_vector(30), y = rng.normal_vector(30);
  Vector tx(30), ty(30);
  for (std::size_t i = 0; i < 30; ++i) {
    tx[i] = std::exp(x[i]);
    ty[i] = y[i] * y[i] * y[i];
  }
  EXPECT_NEAR(spearman(x, y), spearman(tx, ty), 1e-12);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman(Vector{1, 1, 1}, Vector{1, 2, 3}), Error);
  EXPECT_THROW(spearman(Vector{1}, Vector{2}), Error);
  EXPECT_THROW(spearman(Vector{1, 2}, Vector{1, 2, 3}), Error);
}

TEST(ReconstructionMse, Examples) {
  RngStream rng(7, "mse");
  const Matrix x = rng.normal_matrix(6, 4);
  EXPECT_EQ(reconstruction_mse(x, x), 0.0);
  Matrix shifted = x;
  for (double& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(reconstruction_mse(shifted, x), 1.0, 1e-12);
  const Matrix y = rng.normal_matrix(6, 4);
  double s = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) s += (y(i, j) - x(i, j)) * (y(i, j) - x(i, j));
  EXPECT_NEAR(reconstruction_mse(y, x), s / 24.0, 1e-12);
  EXPECT_THROW(reconstruction_mse(Matrix(2, 2), Matrix(2, 3)), DimensionError);
}

TEST(MeanStd, PopulationStandardDeviation) {
  const auto [m, s] = mean_std(Vector{1, 2, 3, 4});
  EXPECT_NEAR(m, 2.5, 1e-15);
  EXPECT_NEAR(s, std::sqrt(1.25), 1e-15);
}

}  // namespace
}  // namespace relgeo
