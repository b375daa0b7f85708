#include <set>
#include <thread>

#include "test_util.hpp"

namespace relgeo {
namespace {

using testing::max_abs;
using testing::naive_matmul;
using testing::orthogonality_error;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  RngStream rng(1, "matmul");
  const Matrix a = rng.normal_matrix(3, 4);
  EXPECT_EQ(matmul(Matrix::identity(3), a), a);
}

TEST(Matmul, HandArithmetic) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{1}, {1}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop) {
  RngStream rng(2, "matmul");
  const Matrix a = rng.normal_matrix(5, 7), b = rng.normal_matrix(7, 3);
  EXPECT_LE(max_abs(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST(Matrix, RejectsBadShapes) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST(Svd, DiagonalCase) {
  const Svd svd = thin_svd(Matrix::diagonal(Vector{3, 2, 1}));
  ASSERT_EQ(svd.s.size(), 3u);
  EXPECT_NEAR(svd.s[0], 3.0, 1e-14);
  EXPECT_NEAR(svd.s[1], 2.0, 1e-14);
  EXPECT_NEAR(svd.s[2], 1.0, 1e-14);
}

TEST(Svd, UnsortedDiagonalComesOutDescending) {
  const Svd svd = thin_svd(Matrix::diagonal(Vector{1, 5, 2}));
  EXPECT_NEAR(svd.s[0], 5.0, 1e-14);
  EXPECT_NEAR(svd.s[1], 2.0, 1e-14);
  EXPECT_NEAR(svd.s[2], 1.0, 1e-14);
  EXPECT_LE(max_abs(reconstruct(svd), Matrix::diagonal(Vector{1, 5, 2})), 1e-14);
}

TEST(Svd, ZeroMatrix) {
  const Svd svd = thin_svd(Matrix(4, 3));
  for (double s : svd.s) EXPECT_EQ(s, 0.0);
  EXPECT_LE(orthogonality_error(svd.u), 1e-10);
  EXPECT_LE(orthogonality_error(transpose(svd.vt)), 1e-10);
}

void expect_valid_svd(const Matrix& a) {
  const Svd svd = thin_svd(a);
  const double scale = std::max(frobenius_norm(a), 1e-300);
  EXPECT_LE(frobenius_norm(subtract(reconstruct(svd), a)), 1e-8 * scale) << a.rows() << "x" << a.cols();
  EXPECT_LE(orthogonality_error(svd.u), 1e-10);
  EXPECT_LE(orthogonality_error(transpose(svd.vt)), 1e-10);
  for (std::size_t i = 0; i < svd.s.size(); ++i) {
    EXPECT_GE(svd.s[i], 0.0);
    if (i > 0) EXPECT_LE(svd.s[i], svd.s[i - 1]);
  }
}

TEST(Svd, Random6x4Reconstructs) {
  RngStream rng(3, "svd");
  expect_valid_svd(rng.normal_matrix(6, 4));
}

TEST(Svd, WideMatrix) {
  RngStream rng(4, "svd");
  expect_valid_svd(rng.normal_matrix(3, 7));
}

TEST(Svd, RankDeficient) {
  RngStream rng(5, "svd");
  const Matrix a = matmul(rng.normal_matrix(8, 2), rng.normal_matrix(2, 5));
  expect_valid_svd(a);
  const Svd svd = thin_svd(a);
  EXPECT_LE(svd.s[2], 1e-12 * svd.s[0]);
}

TEST(SvdProperty, HundredRandomMatricesUpTo64) {
  RngStream rng(6, "svd-property");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.uniform_index(64), c = 1 + rng.uniform_index(64);
    expect_valid_svd(rng.normal_matrix(r, c));
  }
}

TEST(Lstsq, IdentityReturnsRhs) {
  RngStream rng(7, "lstsq");
  const Matrix b = rng.normal_matrix(4, 3);
  const LstsqResult r = lstsq(Matrix::identity(4), b);
  EXPECT_LE(max_abs(r.x, b), 1e-12);
  EXPECT_EQ(r.rank, 4u);
  EXPECT_FALSE(r.underdetermined);
}

TEST(Lstsq, RecoversPlantedSolution) {
  RngStream rng(8, "lstsq");
  const Matrix a = rng.normal_matrix(20, 5), x0 = rng.normal_matrix(5, 3);
  EXPECT_LE(max_abs(lstsq(a, matmul(a, x0)).x, x0), 1e-9);
}

TEST(Lstsq, RankDeficientMatchesPseudoinverseOracle) {
  RngStream rng(9, "lstsq");
  const Matrix a = matmul(rng.normal_matrix(12, 3), rng.normal_matrix(3, 6));
  const Matrix b = rng.normal_matrix(12, 2);
  const LstsqResult r = lstsq(a, b);
  EXPECT_EQ(r.rank, 3u);
  EXPECT_TRUE(r.underdetermined);
  // Normal-equations oracle: the residual is orthogonal to range(a).
  const Matrix resid = subtract(matmul(a, r.x), b);
  EXPECT_LE(max_abs(matmul(transpose(a), resid), Matrix(6, 2)), 1e-8);
  // Minimum norm: x lies in the row space of a, so x = V_r V_rᵀ x.
  const Svd svd = thin_svd(a);
  Matrix vr(6, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 3; ++k) vr(i, k) = svd.vt(k, i);
  EXPECT_LE(max_abs(matmul(vr, matmul(transpose(vr), r.x)), r.x), 1e-8);
}

TEST(LstsqProperty, NeverWorseThanZero) {
  RngStream rng(10, "lstsq-property");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(6), m = n + rng.uniform_index(10);
    const Matrix a = rng.normal_matrix(m, n), b = rng.normal_matrix(m, 2);
    const Matrix resid = subtract(matmul(a, lstsq(a, b).x), b);
    EXPECT_LE(frobenius_norm(resid), frobenius_norm(b) + 1e-12);
  }
}

TEST(Lstsq, RowCountMismatchThrows) {
  EXPECT_THROW(lstsq(Matrix(3, 2), Matrix(4, 1)), DimensionError);
}

TEST(Solve, MatchesInverse) {
  RngStream rng(11, "solve");
  const Matrix a = rng.normal_matrix(5, 5), b = rng.normal_matrix(5, 2);
  EXPECT_LE(max_abs(matmul(a, solve(a, b)), b), 1e-10);
  EXPECT_LE(max_abs(matmul(a, inverse(a)), Matrix::identity(5)), 1e-10);
}

TEST(Solve, SingularThrows) {
  EXPECT_THROW(solve(Matrix(2, 2), Matrix(2, 1)), Error);
}

TEST(Determinant, KnownValues) {
  EXPECT_NEAR(determinant(Matrix::from_rows({{1, 2}, {3, 4}})), -2.0, 1e-12);
  EXPECT_NEAR(determinant(Matrix::diagonal(Vector{2, 3, 4})), 24.0, 1e-12);
}

TEST(RandomOrthogonal, OneByOneIsPlusMinusOne) {
  RngStream rng(12, "orth");
  const Matrix q = random_orthogonal(1, rng);
  EXPECT_EQ(std::abs(q(0, 0)), 1.0);
}

TEST(RandomOrthogonal, Sixteen) {
  RngStream rng(13, "orth");
  const Matrix q = random_orthogonal(16, rng);
  EXPECT_LE(orthogonality_error(q), 1e-10);
  EXPECT_NEAR(std::abs(determinant(q)), 1.0, 1e-10);
}

TEST(RandomOrthogonal, DeterministicForSeed) {
  RngStream a(14, "orth"), b(14, "orth");
  EXPECT_EQ(random_orthogonal(8, a), random_orthogonal(8, b));
}

TEST(Rng, SameSeedAndStreamReproduce) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  RngStream a(42, "anchors:rep-0"), b(42, "anchors:rep-1");
  int same = 0;
  for (int i = 0; i < 32; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_LT(same, 2);
}

TEST(Rng, SplitIsDeterministicAndIndependentOfParentPosition) {
  RngStream a(5, "root"), b(5, "root");
  b.next_u64();
  RngStream ca = a.split("child"), cb = b.split("child");
  EXPECT_EQ(ca.next_u64(), cb.next_u64());
}

TEST(Rng, SameDrawsAcrossThreads) {
  std::vector<std::uint64_t> here, there;
  RngStream a(9, "thread");
  for (int i = 0; i < 10; ++i) here.push_back(a.next_u64());
  std::thread t([&] {
    RngStream b(9, "thread");
    for (int i = 0; i < 10; ++i) there.push_back(b.next_u64());
  });
  t.join();
  EXPECT_EQ(here, there);
}

TEST(Rng, UniformInRangeAndNormalMoments) {
  RngStream rng(15, "moments");
  double sum = 0.0, sum_sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.05);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  RngStream rng(16, "sample");
  const IndexVector s = rng.sample_without_replacement(50, 20);
  EXPECT_EQ(s.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 20u);
  for (std::size_t i : s) EXPECT_LT(i, 50u);
  EXPECT_THROW(rng.sample_without_replacement(3, 4), Error);
}

TEST(SpectralNorm, MatchesLargestSingularValue) {
  RngStream rng(17, "spectral");
  const Matrix w = rng.normal_matrix(6, 6);
  EXPECT_NEAR(spectral_norm_estimate(w, 500), thin_svd(w).s[0], 1e-6 * thin_svd(w).s[0]);
}

TEST(Parallel, ForCoversEveryIndexOnce) {
  set_thread_count(4);
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  set_thread_count(0);
}

TEST(Parallel, RethrowsSmallestFailingIndex) {
  set_thread_count(3);
  try {
    parallel_for(100, [](std::size_t i) {
      if (i == 17 || i == 60) throw Error("fail " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "fail 17");
  }
  set_thread_count(0);
}

}  // namespace
}  // namespace relgeo
