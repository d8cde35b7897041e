#pragma once

#include <functional>

#include "ldsa/matrix.hpp"

namespace ldsa {

// Central-difference gradient of a scalar-valued function: per entry
// (f(x + h e) - f(x - h e)) / (2h). The finite-difference oracle every
// analytical backward pass is checked against.
Matrix central_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         double h = 1e-6);

// Block-scale relative error between an analytical and a numerical gradient:
// max |a - n| over the block, divided by max(||a||_inf, ||n||_inf, 1e-12).
double grad_rel_error(const Matrix& analytic, const Matrix& numeric);

}  // namespace ldsa
