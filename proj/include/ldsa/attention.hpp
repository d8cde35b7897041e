#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ldsa/matrix.hpp"
#include "ldsa/param_visit.hpp"
#include "ldsa/rng.hpp"

namespace ldsa {

enum class Variant { Sa, Dsa, Ldsa, Ha };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// Multi-head dot-product self-attention weights. Per head i: wq[i], wk[i],
// wv[i] of shape d x dk with dk = d / h; wo is the shared d x d output
// projection. Attention projections carry no biases.
struct SaParams {
  std::vector<Matrix> wq, wk, wv;
  Matrix wo;

  std::size_t heads() const { return wq.size(); }
  std::size_t model_dim() const { return wo.rows; }
  std::size_t head_dim() const { return wq.empty() ? 0 : wq[0].cols; }

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

// Dense synthesizer attention weights. Per head i: w1[i] (d x dk) feeds the
// ReLU layer, w2[i] (dk x t_max) predicts one logit per target position up to
// the fixed capacity t_max, w3[i] (d x dk) is the value projection.
struct DsaParams {
  std::vector<Matrix> w1, w2, w3;
  Matrix wo;
  std::size_t t_max = 0;

  std::size_t heads() const { return w1.size(); }
  std::size_t model_dim() const { return wo.rows; }
  std::size_t head_dim() const { return w1.empty() ? 0 : w1[0].cols; }

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

// Local dense synthesizer attention weights. Like DSA but w2[i] is dk x c:
// each frame predicts weights for a centered window of c neighbours only.
// c must be odd.
struct LdsaParams {
  std::vector<Matrix> w1, w2, w3;
  Matrix wo;
  std::size_t context = 0;

  std::size_t heads() const { return w1.size(); }
  std::size_t model_dim() const { return wo.rows; }
  std::size_t head_dim() const { return w1.empty() ? 0 : w1[0].cols; }

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

SaParams init_sa_params(std::size_t d, std::size_t h, Rng& rng);
DsaParams init_dsa_params(std::size_t d, std::size_t h, std::size_t t_max, Rng& rng);
LdsaParams init_ldsa_params(std::size_t d, std::size_t h, std::size_t context, Rng& rng);

// Forward result: y is T x d; weights holds one attention-weight matrix per
// head (T x T for SA/DSA, T x c for LDSA), each row summing to 1. Callers
// that only need y (the benchmark) pass keep_weights = false.
struct AttentionOutput {
  Matrix y;
  std::vector<Matrix> weights;
};

// One scaled dot-product head: Softmax(Q K^T / sqrt(dk)) V, no mask.
Matrix sdpa_head(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv);

AttentionOutput multihead_sa(const Matrix& x, const SaParams& p, bool keep_weights = true);

// B = Softmax(ReLU(X w1) w2[:, :T]); only the first T columns of w2
// participate. Throws CapacityError when T exceeds w2's capacity.
Matrix dsa_weights(const Matrix& x, const Matrix& w1, const Matrix& w2, std::size_t t);

AttentionOutput multihead_dsa(const Matrix& x, const DsaParams& p, bool keep_weights = true);

// B = Softmax(ReLU(X w1) w2), one row of c window logits per frame.
// B(t, j) weights the frame t + j - c/2.
Matrix ldsa_weights(const Matrix& x, const Matrix& w1, const Matrix& w2);

AttentionOutput ldsa_forward(const Matrix& x, const LdsaParams& p, bool keep_weights = true);

// Embeds a T x c local weight matrix into the full T x T banded matrix:
// full(t, t + j - c/2) = local(t, j) for in-range targets, 0 elsewhere.
// The LDSA forward must equal the full-matrix product through this map.
Matrix band_expand(const Matrix& b_local, std::size_t t, std::size_t c);

// Aggregation paths with injected attention weights, used to test the value
// path in isolation: per head U_i = B_i (X w3_i), heads concatenated, wo
// applied. The LDSA version reads b[i] as T x c window weights.
Matrix dsa_aggregate(const std::vector<Matrix>& b, const Matrix& x, const DsaParams& p);
Matrix ldsa_aggregate(const std::vector<Matrix>& b, const Matrix& x, const LdsaParams& p);

// Reverse-mode gradients for the scalar loss L = <dy, forward(x)>. Parameter
// gradients accumulate into grads (shaped like the params); the return value
// is dL/dx. Checked against central_diff_grad by the grad-check suite.
Matrix attention_backward(const Matrix& x, const SaParams& p, const Matrix& dy,
                          SaParams& grads);
Matrix attention_backward(const Matrix& x, const DsaParams& p, const Matrix& dy,
                          DsaParams& grads);
Matrix attention_backward(const Matrix& x, const LdsaParams& p, const Matrix& dy,
                          LdsaParams& grads);

}  // namespace ldsa
