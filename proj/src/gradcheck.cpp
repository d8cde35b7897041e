#include "ldsa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ldsa {

Matrix central_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double h) {
  Matrix grad(x.rows, x.cols);
  Matrix probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double fp = f(probe);
    probe.data[i] = orig - h;
    const double fm = f(probe);
    probe.data[i] = orig;
    grad.data[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double grad_rel_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max({max_abs(analytic), max_abs(numeric), 1e-12});
  return max_abs_diff(analytic, numeric) / scale;
}

}  // namespace ldsa
