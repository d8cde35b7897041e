#include "ldsa/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ldsa {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> init) {
  Matrix m;
  m.rows = init.size();
  m.cols = m.rows ? init.begin()->size() : 0;
  m.data.reserve(m.rows * m.cols);
  for (const auto& row : init) {
    if (row.size() != m.cols) {
      throw ShapeError("from_rows: ragged initializer");
    }
    m.data.insert(m.data.end(), row.begin(), row.end());
  }
  return m;
}

std::string Matrix::shape() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void Matrix::fill(double v) { std::fill(data.begin(), data.end(), v); }

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "add");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_shape(*this, o, "sub");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix m, double s) { return m *= s; }
Matrix operator*(double s, Matrix m) { return m *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: shape mismatch " + a.shape() + " * " + b.shape());
  }
  Matrix c(a.rows, b.cols);
  // i-k-j order: for each output entry the k-sum still accumulates left to
  // right, and the inner j loop runs over contiguous rows of b and c.
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[i * a.cols];
    double* crow = &c.data[i * c.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

Matrix row_softmax(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = m(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      out(i, j) = std::exp(m(i, j) - mx);
      sum += out(i, j);
    }
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix relu(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
  if (gamma.rows != 1 || beta.rows != 1 || gamma.cols != x.cols || beta.cols != x.cols) {
    throw ShapeError("layer_norm: params " + gamma.shape() + "/" + beta.shape() +
                     " do not match input " + x.shape());
  }
  Matrix out(x.rows, x.cols);
  const double n = static_cast<double>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.cols; ++j) {
      out(i, j) = gamma(0, j) * (x(i, j) - mean) * inv + beta(0, j);
    }
  }
  return out;
}

Matrix add_row_broadcast(const Matrix& m, const Matrix& row) {
  if (row.rows != 1 || row.cols != m.cols) {
    throw ShapeError("add_row_broadcast: row " + row.shape() + " vs matrix " + m.shape());
  }
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) += row(0, j);
  return out;
}

Matrix col_sum(const Matrix& m) {
  Matrix s(1, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) s(0, j) += m(i, j);
  return s;
}

double max_abs(const Matrix& m) {
  double mx = 0.0;
  for (double v : m.data) mx = std::max(mx, std::fabs(v));
  return mx;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double mx = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    mx = std::max(mx, std::fabs(a.data[i] - b.data[i]));
  return mx;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

void write_csv(const Matrix& m, std::ostream& out) {
  char buf[40];
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols) out << ',';
    }
    out << '\n';
  }
}

Matrix read_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t n = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++n;
    }
    if (rows == 0) {
      cols = n;
    } else if (n != cols) {
      throw ShapeError("read_csv: ragged row, expected " + std::to_string(cols) +
                       " cells, got " + std::to_string(n));
    }
    ++rows;
  }
  Matrix m(rows, cols);
  m.data = std::move(values);
  return m;
}

void save_csv(const Matrix& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_csv: cannot open " + path);
  write_csv(m, f);
}

Matrix load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_csv: cannot open " + path);
  return read_csv(f);
}

}  // namespace ldsa
