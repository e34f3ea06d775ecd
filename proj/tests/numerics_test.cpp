/*
 * Copyright 2026 The xmhash Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <sstream>

#include "xmhash/numerics.hpp"
#include "xmhash/reference.hpp"
#include "xmhash/rng.hpp"

namespace xmhash {
namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e)
    d = std::max(d, std::abs(a.data()[e] - b.data()[e]));
  return d;
}

TEST(Numerics, MatmulSmallExample) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
}

TEST(Numerics, TransposedProductsMatchExplicitTranspose) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 1 + rng.below(6), p = 1 + rng.below(6), c = 1 + rng.below(6);
    const Matrix a = random_matrix(rng, p, r), b = random_matrix(rng, p, c);
    EXPECT_LE(max_abs_diff(matmul_tn(a, b), reference::matmul(transpose(a), b)), 1e-12);
    const Matrix x = random_matrix(rng, r, p), y = random_matrix(rng, c, p);
    EXPECT_LE(max_abs_diff(matmul_nt(x, y), reference::matmul(x, transpose(y))), 1e-12);
  }
}

TEST(Numerics, MatmulShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ContractViolation);
}

TEST(Numerics, IdentityIsNeutral) {
  Rng rng(2);
  const Matrix a = random_matrix(rng, 4, 3);
  EXPECT_EQ(matmul(Matrix::identity(4), a), a);
  EXPECT_EQ(matmul(a, Matrix::identity(3)), a);
}

TEST(Numerics, FrobeniusAndDot) {
  const Matrix a{{3, 4}};
  EXPECT_DOUBLE_EQ(frobenius_sq(a), 25.0);
  const std::vector<double> x{1, 2, 3}, y{4, -5, 6};
  EXPECT_DOUBLE_EQ(dot(x, y), 12.0);
}

TEST(Numerics, AxpyAndGather) {
  Matrix a{{1, 1}, {1, 1}};
  axpy(2.0, Matrix{{1, 2}, {3, 4}}, a);
  EXPECT_EQ(a, (Matrix{{3, 5}, {7, 9}}));
  const std::vector<std::size_t> idx{1, 0, 1};
  EXPECT_EQ(gather_rows(a, idx), (Matrix{{7, 9}, {3, 5}, {7, 9}}));
}

TEST(Numerics, SolveSpdRecoversKnownSolution) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(8), c = 1 + rng.below(4);
    const Matrix g = random_matrix(rng, n + 2, n);
    Matrix a = matmul_tn(g, g);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.5;
    const Matrix x = random_matrix(rng, n, c);
    const Matrix solved = solve_spd(a, matmul(a, x));
    EXPECT_LE(max_abs_diff(solved, x), 1e-9);
  }
}

TEST(Numerics, SolveSpdRejectsIndefinite) {
  EXPECT_THROW(solve_spd(Matrix{{1, 2}, {2, 1}}, Matrix{{1}, {1}}), SingularSystemError);
  EXPECT_THROW(solve_spd(Matrix{{0, 0}, {0, 0}}, Matrix{{1}, {1}}), SingularSystemError);
}

TEST(Numerics, SolveSpdRejectsAsymmetric) {
  EXPECT_THROW(solve_spd(Matrix{{2, 1}, {0, 2}}, Matrix{{1}, {1}}), ContractViolation);
}

TEST(Numerics, MatrixBinaryRoundTrip) {
  Rng rng(4);
  const Matrix a = random_matrix(rng, 3, 5);
  std::stringstream ss;
  write_matrix(ss, a);
  EXPECT_EQ(ss.str().size(), 16u + 15u * 8u);
  EXPECT_EQ(read_matrix(ss), a);
}

TEST(Numerics, MatrixBinaryIsLittleEndian) {
  std::stringstream ss;
  write_matrix(ss, Matrix{{1.0}});
  const std::string s = ss.str();
  EXPECT_EQ(static_cast<unsigned char>(s[0]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(s[23]), 0x3fu);  // 1.0 = 0x3ff0...
}

TEST(Numerics, TruncatedMatrixThrows) {
  std::stringstream ss;
  write_matrix(ss, Matrix(2, 2, 1.0));
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  EXPECT_THROW(read_matrix(cut), ParseError);
}

TEST(Numerics, AllFinite) {
  Matrix a(2, 2, 1.0);
  EXPECT_TRUE(all_finite(a));
  a(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(all_finite(a));
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Rng, DistributionMoments) {
  Rng rng(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  int heads = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    heads += rng.coin();
    EXPECT_LT(rng.below(7), 7u);
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
  EXPECT_NEAR(static_cast<double>(heads) / n, 0.5, 0.005);
}

}  // namespace
}  // namespace xmhash
