#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldsa {

// Thrown when operand shapes do not agree; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a sequence exceeds a fixed capacity (DSA's t_max).
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of 64-bit floats. The one tensor type of the
// library: sequences are T x d, row vectors (1 x n) double as vectors.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // length rows * cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> init);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape() const;  // e.g. "3x5"

  void fill(double v);

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix m, double s);
Matrix operator*(double s, Matrix m);

// Standard product; summation over the inner index runs left to right so
// results are reproducible run to run.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Row-wise softmax with max-subtraction; rows of the result are strictly
// positive and sum to 1.
Matrix row_softmax(const Matrix& m);

Matrix relu(const Matrix& m);

// Per-row normalization to zero mean / unit population variance (+eps inside
// the root), scaled by gamma and shifted by beta. gamma and beta are 1 x cols.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps);

// m + ones * row, i.e. add the 1 x cols row vector to every row of m.
Matrix add_row_broadcast(const Matrix& m, const Matrix& row);

// 1 x cols vector of column sums.
Matrix col_sum(const Matrix& m);

double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

// CSV text I/O, one row per line, 17 significant digits (round-trip exact).
void write_csv(const Matrix& m, std::ostream& out);
Matrix read_csv(std::istream& in);
void save_csv(const Matrix& m, const std::string& path);
Matrix load_csv(const std::string& path);

}  // namespace ldsa
