#include "ldsa/optim.hpp"

#include <cmath>

namespace ldsa {

double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup, double scale) {
  if (step == 0) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (warmup == 0) throw std::invalid_argument("noam_lr: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  const double ramp = s * std::pow(w, -1.5);
  const double decay = 1.0 / std::sqrt(s);
  return scale / std::sqrt(static_cast<double>(d_model)) * std::min(decay, ramp);
}

void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::size_t step,
                 double lr, double beta1, double beta2, double eps) {
  if (!param.same_shape(grad)) {
    throw ShapeError("adam_update: grad " + grad.shape() + " vs param " + param.shape());
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i];
    m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
    v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace ldsa
