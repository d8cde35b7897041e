#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "ldsa/matrix.hpp"
#include "ldsa/param_visit.hpp"

namespace ldsa {

// Noam learning rate: scale * d_model^(-1/2) * min(step^(-1/2), step * warmup^(-3/2)).
// Rises linearly for warmup steps, then decays as 1/sqrt(step).
double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup, double scale);

struct NoamSchedule {
  std::size_t d_model = 320;
  std::size_t warmup = 400;  // desk-scale default; 25000 at full scale
  double scale = 1.0;

  double lr(std::size_t step) const { return noam_lr(step, d_model, warmup, scale); }
};

// Bias-corrected Adam. First/second moment accumulators are keyed by
// parameter name and created lazily (zeros) on first update.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t step = 0;
  std::map<std::string, Matrix> m, v;
};

// One update of a single parameter matrix; the caller supplies the moment
// slots. Exposed for tests; adam_step drives it across a whole container.
void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::size_t step,
                 double lr, double beta1, double beta2, double eps);

template <class P>
void adam_step(P& params, const P& grads, AdamState& state, double lr) {
  auto targets = collect_params(params);
  auto sources = collect_params(const_cast<P&>(grads));
  if (targets.size() != sources.size()) {
    throw ShapeError("adam_step: parameter/gradient containers do not match");
  }
  ++state.step;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Matrix& p = *targets[i].value;
    const Matrix& g = *sources[i].value;
    if (!p.same_shape(g)) {
      throw ShapeError("adam_step: grad " + g.shape() + " vs param " + p.shape() + " for " +
                       targets[i].name);
    }
    Matrix& m = state.m.try_emplace(targets[i].name, p.rows, p.cols).first->second;
    Matrix& v = state.v.try_emplace(targets[i].name, p.rows, p.cols).first->second;
    adam_update(p, g, m, v, state.step, lr, state.beta1, state.beta2, state.eps);
  }
}

}  // namespace ldsa
