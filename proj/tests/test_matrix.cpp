#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "ldsa/gradcheck.hpp"
#include "ldsa/matrix.hpp"
#include "ldsa/rng.hpp"

using namespace ldsa;

namespace {

// Independent softmax oracle: plain exp/sum, no max-subtraction. Agreement
// with the stabilized implementation is itself part of the contract.
Matrix softmax_oracle(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) sum += std::exp(m(i, j));
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = std::exp(m(i, j)) / sum;
  }
  return out;
}

// Two-pass mean/variance oracle for layer_norm.
Matrix layer_norm_oracle(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                         double eps) {
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j)
      out(i, j) = gamma(0, j) * (x(i, j) - mean) / std::sqrt(var + eps) + beta(0, j);
  }
  return out;
}

}  // namespace

TEST_CASE("matmul identity, zero and hand-expanded products") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(max_abs_diff(matmul(Matrix::identity(2), a), a) == 0.0);

  const Matrix zero(2, 2);
  CHECK(max_abs(matmul(a, zero)) == 0.0);

  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  const Matrix expected = Matrix::from_rows({{19, 22}, {43, 50}});
  CHECK(max_abs_diff(matmul(a, b), expected) == 0.0);
}

TEST_CASE("matmul rejects mismatched shapes and names both") {
  const Matrix a(3, 4);
  const Matrix b(5, 2);
  CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: shape mismatch 3x4 * 5x2", ShapeError);
}

TEST_CASE("matmul associativity and distributivity on random triples") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.uniform_matrix(4, 4, -2.0, 2.0);
    const Matrix b = rng.uniform_matrix(4, 4, -2.0, 2.0);
    const Matrix c = rng.uniform_matrix(4, 4, -2.0, 2.0);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-10);
    CHECK(max_abs_diff(matmul(a, b + c), matmul(a, b) + matmul(a, c)) < 1e-10);
  }
}

TEST_CASE("row_softmax forced values") {
  const Matrix uniform = row_softmax(Matrix::from_rows({{0, 0, 0}}));
  for (std::size_t j = 0; j < 3; ++j) CHECK(uniform(0, j) == doctest::Approx(1.0 / 3.0));

  const Matrix two = row_softmax(Matrix::from_rows({{std::log(2.0), 0.0}}));
  CHECK(two(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("row_softmax matches the unstabilized oracle") {
  Rng rng(5);
  const Matrix x = rng.uniform_matrix(3, 5, -4.0, 4.0);
  CHECK(max_abs_diff(row_softmax(x), softmax_oracle(x)) < 1e-14);
}

TEST_CASE("row_softmax rows sum to one, entries in (0,1], shift invariant") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = rng.uniform_matrix(4, 7, -30.0, 30.0);
    const Matrix s = row_softmax(x);
    for (std::size_t i = 0; i < s.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < s.cols; ++j) {
        CHECK(s(i, j) > 0.0);
        CHECK(s(i, j) <= 1.0);
        sum += s(i, j);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
    Matrix shifted = x;
    const double shift = rng.uniform(-10.0, 10.0);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) shifted(i, j) += shift;
    CHECK(max_abs_diff(row_softmax(shifted), s) < 1e-12);
  }
}

TEST_CASE("relu splits signs and matches the branch oracle") {
  const Matrix r = relu(Matrix::from_rows({{-1, 2}}));
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 2.0);

  CHECK(max_abs(relu(Matrix(3, 3))) == 0.0);

  Rng rng(23);
  const Matrix x = rng.uniform_matrix(6, 5, -3.0, 3.0);
  const Matrix y = relu(x);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(y.data[i] == (x.data[i] > 0.0 ? x.data[i] : 0.0));
  }
}

TEST_CASE("layer_norm forced rows") {
  const Matrix gamma(1, 4, 1.0);
  const Matrix beta(1, 4);
  const Matrix constant = Matrix::from_rows({{3, 3, 3, 3}});
  CHECK(max_abs(layer_norm(constant, gamma, beta, 1e-6)) == 0.0);

  const Matrix g2(1, 2, 1.0);
  const Matrix b2(1, 2);
  const Matrix pm = layer_norm(Matrix::from_rows({{1, -1}}), g2, b2, 1e-12);
  CHECK(pm(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(pm(0, 1) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("layer_norm matches the two-pass oracle") {
  Rng rng(31);
  const Matrix x = rng.uniform_matrix(5, 8, -5.0, 5.0);
  const Matrix gamma = rng.uniform_matrix(1, 8, 0.5, 2.0);
  const Matrix beta = rng.uniform_matrix(1, 8, -1.0, 1.0);
  CHECK(max_abs_diff(layer_norm(x, gamma, beta, 1e-6),
                     layer_norm_oracle(x, gamma, beta, 1e-6)) < 1e-12);
}

TEST_CASE("layer_norm output statistics") {
  Rng rng(37);
  const std::size_t d = 16;
  const Matrix gamma(1, d, 1.0);
  const Matrix beta = rng.uniform_matrix(1, d, -2.0, 2.0);
  double beta_mean = 0.0;
  for (std::size_t j = 0; j < d; ++j) beta_mean += beta(0, j);
  beta_mean /= static_cast<double>(d);

  const Matrix x = rng.uniform_matrix(10, d, -10.0, 10.0);
  const Matrix y = layer_norm(x, gamma, beta, 1e-6);
  for (std::size_t i = 0; i < y.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += y(i, j);
    mean /= static_cast<double>(d);
    CHECK(std::fabs(mean - beta_mean) < 1e-10);

    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j)
      var += (y(i, j) - beta(0, j)) * (y(i, j) - beta(0, j));
    var /= static_cast<double>(d);
    CHECK(std::fabs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm rejects mismatched params") {
  CHECK_THROWS_AS(layer_norm(Matrix(2, 4), Matrix(1, 3, 1.0), Matrix(1, 4), 1e-6), ShapeError);
}

TEST_CASE("xavier init is deterministic per seed and respects its bound") {
  Rng a(42), b(42);
  CHECK(max_abs_diff(xavier_uniform_init(2, 2, a), xavier_uniform_init(2, 2, b)) == 0.0);

  Rng rng(7);
  const Matrix big = xavier_uniform_init(1000, 1000, rng);
  CHECK(max_abs(big) <= std::sqrt(6.0 / 2000.0));
}

TEST_CASE("xavier init mean of a million draws is near zero") {
  Rng rng(99);
  const Matrix big = xavier_uniform_init(1000, 1000, rng);
  double mean = 0.0;
  for (double v : big.data) mean += v;
  mean /= static_cast<double>(big.data.size());
  const double bound = std::sqrt(6.0 / 2000.0);
  const double sigma = bound / std::sqrt(3.0);  // uniform std
  CHECK(std::fabs(mean) < 3.0 * sigma / 1000.0);
}

TEST_CASE("rng streams are identical across instances with one seed") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("central_diff_grad on a linear functional is exactly ones") {
  Rng rng(3);
  const Matrix x = rng.uniform_matrix(3, 3, -1.0, 1.0);
  const Matrix g = central_diff_grad(
      [](const Matrix& m) {
        double s = 0.0;
        for (double v : m.data) s += v;
        return s;
      },
      x);
  for (double v : g.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("central_diff_grad of half squared norm recovers x") {
  Rng rng(4);
  const Matrix x = rng.uniform_matrix(3, 4, -2.0, 2.0);
  const Matrix g = central_diff_grad(
      [](const Matrix& m) {
        double s = 0.0;
        for (double v : m.data) s += 0.5 * v * v;
        return s;
      },
      x);
  CHECK(max_abs_diff(g, x) < 1e-9);
}

TEST_CASE("central_diff_grad sees through the softmax row-sum constant") {
  Rng rng(6);
  const Matrix x = rng.uniform_matrix(3, 4, -1.0, 1.0);
  const Matrix g = central_diff_grad(
      [](const Matrix& m) {
        const Matrix s = row_softmax(m);
        double sum = 0.0;
        for (double v : s.data) sum += v;
        return sum;
      },
      x);
  CHECK(max_abs(g) < 1e-8);
}

TEST_CASE("csv io round-trips exactly") {
  Rng rng(55);
  Matrix x = rng.uniform_matrix(4, 3, -1e6, 1e6);
  x(0, 0) = 1.0 / 3.0;
  x(1, 2) = -2.718281828459045e-15;
  std::stringstream ss;
  write_csv(x, ss);
  const Matrix back = read_csv(ss);
  REQUIRE(back.same_shape(x));
  CHECK(max_abs_diff(back, x) == 0.0);
}

TEST_CASE("all public ops keep finite inputs finite") {
  Rng rng(77);
  const Matrix x = rng.uniform_matrix(6, 6, -100.0, 100.0);
  CHECK(all_finite(matmul(x, x)));
  CHECK(all_finite(row_softmax(x)));
  CHECK(all_finite(relu(x)));
  CHECK(all_finite(layer_norm(x, Matrix(1, 6, 1.0), Matrix(1, 6), 1e-6)));
}
