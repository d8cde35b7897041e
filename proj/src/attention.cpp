#include "ldsa/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace ldsa {

namespace {

void check_width(const Matrix& x, std::size_t d, const char* what) {
  if (x.cols != d) {
    throw ShapeError(std::string(what) + ": input " + x.shape() + " does not match width " +
                     std::to_string(d));
  }
}

Matrix concat_heads(const std::vector<Matrix>& heads) {
  const std::size_t t = heads[0].rows;
  std::size_t d = 0;
  for (const Matrix& h : heads) d += h.cols;
  Matrix c(t, d);
  std::size_t col0 = 0;
  for (const Matrix& h : heads) {
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < h.cols; ++j) c(i, col0 + j) = h(i, j);
    col0 += h.cols;
  }
  return c;
}

Matrix head_slice(const Matrix& m, std::size_t head, std::size_t dk) {
  Matrix s(m.rows, dk);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < dk; ++j) s(i, j) = m(i, head * dk + j);
  return s;
}

// d(softmax)/d(logits) applied to an upstream gradient, row-wise:
// ds = a .* (da - rowdot(da, a)).
Matrix softmax_backward(const Matrix& a, const Matrix& da) {
  Matrix ds(a.rows, a.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) dot += da(i, j) * a(i, j);
    for (std::size_t j = 0; j < a.cols; ++j) ds(i, j) = a(i, j) * (da(i, j) - dot);
  }
  return ds;
}

Matrix relu_mask_backward(const Matrix& pre, const Matrix& d) {
  Matrix out = d;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (pre.data[i] <= 0.0) out.data[i] = 0.0;
  return out;
}

void require_odd_context(std::size_t c, const char* what) {
  if (c == 0 || c % 2 == 0) {
    throw ShapeError(std::string(what) + ": context width must be odd and >= 1, got " +
                     std::to_string(c));
  }
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "sa") return Variant::Sa;
  if (s == "dsa") return Variant::Dsa;
  if (s == "ldsa") return Variant::Ldsa;
  if (s == "ha") return Variant::Ha;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Sa: return "sa";
    case Variant::Dsa: return "dsa";
    case Variant::Ldsa: return "ldsa";
    case Variant::Ha: return "ha";
  }
  return "?";
}

void SaParams::visit(const ParamVisitor& f) {
  for (std::size_t i = 0; i < wq.size(); ++i) {
    const std::string n = std::to_string(i);
    f("wq" + n, wq[i]);
    f("wk" + n, wk[i]);
    f("wv" + n, wv[i]);
  }
  f("wo", wo);
}

void SaParams::visit(const ConstParamVisitor& f) const {
  const_cast<SaParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

void DsaParams::visit(const ParamVisitor& f) {
  for (std::size_t i = 0; i < w1.size(); ++i) {
    const std::string n = std::to_string(i);
    f("w1_" + n, w1[i]);
    f("w2_" + n, w2[i]);
    f("w3_" + n, w3[i]);
  }
  f("wo", wo);
}

void DsaParams::visit(const ConstParamVisitor& f) const {
  const_cast<DsaParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

void LdsaParams::visit(const ParamVisitor& f) {
  for (std::size_t i = 0; i < w1.size(); ++i) {
    const std::string n = std::to_string(i);
    f("w1_" + n, w1[i]);
    f("w2_" + n, w2[i]);
    f("w3_" + n, w3[i]);
  }
  f("wo", wo);
}

void LdsaParams::visit(const ConstParamVisitor& f) const {
  const_cast<LdsaParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

namespace {

void check_head_split(std::size_t d, std::size_t h, const char* what) {
  if (h == 0 || d % h != 0) {
    throw ShapeError(std::string(what) + ": width " + std::to_string(d) +
                     " not divisible by " + std::to_string(h) + " heads");
  }
}

}  // namespace

SaParams init_sa_params(std::size_t d, std::size_t h, Rng& rng) {
  check_head_split(d, h, "init_sa_params");
  const std::size_t dk = d / h;
  SaParams p;
  for (std::size_t i = 0; i < h; ++i) {
    p.wq.push_back(xavier_uniform_init(d, dk, rng));
    p.wk.push_back(xavier_uniform_init(d, dk, rng));
    p.wv.push_back(xavier_uniform_init(d, dk, rng));
  }
  p.wo = xavier_uniform_init(d, d, rng);
  return p;
}

DsaParams init_dsa_params(std::size_t d, std::size_t h, std::size_t t_max, Rng& rng) {
  check_head_split(d, h, "init_dsa_params");
  if (t_max < 1) throw ShapeError("init_dsa_params: t_max must be >= 1");
  const std::size_t dk = d / h;
  DsaParams p;
  p.t_max = t_max;
  for (std::size_t i = 0; i < h; ++i) {
    p.w1.push_back(xavier_uniform_init(d, dk, rng));
    p.w2.push_back(xavier_uniform_init(dk, t_max, rng));
    p.w3.push_back(xavier_uniform_init(d, dk, rng));
  }
  p.wo = xavier_uniform_init(d, d, rng);
  return p;
}

LdsaParams init_ldsa_params(std::size_t d, std::size_t h, std::size_t context, Rng& rng) {
  check_head_split(d, h, "init_ldsa_params");
  require_odd_context(context, "init_ldsa_params");
  const std::size_t dk = d / h;
  LdsaParams p;
  p.context = context;
  for (std::size_t i = 0; i < h; ++i) {
    p.w1.push_back(xavier_uniform_init(d, dk, rng));
    p.w2.push_back(xavier_uniform_init(dk, context, rng));
    p.w3.push_back(xavier_uniform_init(d, dk, rng));
  }
  p.wo = xavier_uniform_init(d, d, rng);
  return p;
}

Matrix sdpa_head(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv) {
  if (wq.rows != x.cols || !wq.same_shape(wk) || !wq.same_shape(wv)) {
    throw ShapeError("sdpa_head: projections " + wq.shape() + "/" + wk.shape() + "/" +
                     wv.shape() + " do not match input " + x.shape());
  }
  const Matrix q = matmul(x, wq);
  const Matrix k = matmul(x, wk);
  const Matrix v = matmul(x, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols));
  const Matrix a = row_softmax(matmul(q, transpose(k)) * scale);
  return matmul(a, v);
}

AttentionOutput multihead_sa(const Matrix& x, const SaParams& p, bool keep_weights) {
  check_width(x, p.model_dim(), "multihead_sa");
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.head_dim()));
  AttentionOutput out;
  std::vector<Matrix> heads;
  heads.reserve(p.heads());
  for (std::size_t i = 0; i < p.heads(); ++i) {
    const Matrix q = matmul(x, p.wq[i]);
    const Matrix k = matmul(x, p.wk[i]);
    const Matrix v = matmul(x, p.wv[i]);
    Matrix a = row_softmax(matmul(q, transpose(k)) * scale);
    heads.push_back(matmul(a, v));
    if (keep_weights) out.weights.push_back(std::move(a));
  }
  out.y = matmul(concat_heads(heads), p.wo);
  return out;
}

Matrix dsa_weights(const Matrix& x, const Matrix& w1, const Matrix& w2, std::size_t t) {
  if (t != x.rows) {
    throw ShapeError("dsa_weights: t " + std::to_string(t) + " does not match input " +
                     x.shape());
  }
  if (t > w2.cols) {
    throw CapacityError("dsa_weights: sequence length " + std::to_string(t) +
                        " exceeds capacity t_max=" + std::to_string(w2.cols));
  }
  const Matrix h = relu(matmul(x, w1));
  // Logits for the first t target positions only; the remaining columns of w2
  // never enter the softmax.
  Matrix logits(t, t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t k = 0; k < h.cols; ++k) {
      const double hik = h(i, k);
      for (std::size_t j = 0; j < t; ++j) logits(i, j) += hik * w2(k, j);
    }
  return row_softmax(logits);
}

AttentionOutput multihead_dsa(const Matrix& x, const DsaParams& p, bool keep_weights) {
  check_width(x, p.model_dim(), "multihead_dsa");
  AttentionOutput out;
  std::vector<Matrix> heads;
  heads.reserve(p.heads());
  for (std::size_t i = 0; i < p.heads(); ++i) {
    Matrix b = dsa_weights(x, p.w1[i], p.w2[i], x.rows);
    heads.push_back(matmul(b, matmul(x, p.w3[i])));
    if (keep_weights) out.weights.push_back(std::move(b));
  }
  out.y = matmul(concat_heads(heads), p.wo);
  return out;
}

Matrix ldsa_weights(const Matrix& x, const Matrix& w1, const Matrix& w2) {
  require_odd_context(w2.cols, "ldsa_weights");
  return row_softmax(matmul(relu(matmul(x, w1)), w2));
}

namespace {

// Y(t) = sum_j b(t, j) * V(t + j - c/2); out-of-range frames contribute the
// zero vector, no renormalization.
Matrix windowed_aggregate(const Matrix& b, const Matrix& v) {
  const std::size_t t_len = b.rows;
  const std::size_t c = b.cols;
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(c / 2);
  Matrix y(t_len, v.cols);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::ptrdiff_t s =
          static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - off;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(t_len)) continue;
      const double w = b(t, j);
      for (std::size_t k = 0; k < v.cols; ++k)
        y(t, k) += w * v(static_cast<std::size_t>(s), k);
    }
  }
  return y;
}

}  // namespace

AttentionOutput ldsa_forward(const Matrix& x, const LdsaParams& p, bool keep_weights) {
  check_width(x, p.model_dim(), "ldsa_forward");
  AttentionOutput out;
  std::vector<Matrix> heads;
  heads.reserve(p.heads());
  for (std::size_t i = 0; i < p.heads(); ++i) {
    Matrix b = ldsa_weights(x, p.w1[i], p.w2[i]);
    heads.push_back(windowed_aggregate(b, matmul(x, p.w3[i])));
    if (keep_weights) out.weights.push_back(std::move(b));
  }
  out.y = matmul(concat_heads(heads), p.wo);
  return out;
}

Matrix band_expand(const Matrix& b_local, std::size_t t, std::size_t c) {
  require_odd_context(c, "band_expand");
  if (b_local.rows != t || b_local.cols != c) {
    throw ShapeError("band_expand: local weights " + b_local.shape() + " do not match T=" +
                     std::to_string(t) + ", c=" + std::to_string(c));
  }
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(c / 2);
  Matrix full(t, t);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::ptrdiff_t s =
          static_cast<std::ptrdiff_t>(r) + static_cast<std::ptrdiff_t>(j) - off;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(t)) continue;
      full(r, static_cast<std::size_t>(s)) = b_local(r, j);
    }
  }
  return full;
}

Matrix dsa_aggregate(const std::vector<Matrix>& b, const Matrix& x, const DsaParams& p) {
  check_width(x, p.model_dim(), "dsa_aggregate");
  std::vector<Matrix> heads;
  heads.reserve(p.heads());
  for (std::size_t i = 0; i < p.heads(); ++i)
    heads.push_back(matmul(b[i], matmul(x, p.w3[i])));
  return matmul(concat_heads(heads), p.wo);
}

Matrix ldsa_aggregate(const std::vector<Matrix>& b, const Matrix& x, const LdsaParams& p) {
  check_width(x, p.model_dim(), "ldsa_aggregate");
  std::vector<Matrix> heads;
  heads.reserve(p.heads());
  for (std::size_t i = 0; i < p.heads(); ++i)
    heads.push_back(windowed_aggregate(b[i], matmul(x, p.w3[i])));
  return matmul(concat_heads(heads), p.wo);
}

Matrix attention_backward(const Matrix& x, const SaParams& p, const Matrix& dy,
                          SaParams& grads) {
  check_width(x, p.model_dim(), "attention_backward[sa]");
  if (dy.rows != x.rows || dy.cols != p.model_dim()) {
    throw ShapeError("attention_backward[sa]: dy " + dy.shape() + " vs output " +
                     std::to_string(x.rows) + "x" + std::to_string(p.model_dim()));
  }
  const std::size_t h = p.heads();
  const std::size_t dk = p.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Matrix xt = transpose(x);

  // Recompute per-head intermediates, then the concatenated output.
  std::vector<Matrix> q(h), k(h), v(h), a(h), u(h);
  for (std::size_t i = 0; i < h; ++i) {
    q[i] = matmul(x, p.wq[i]);
    k[i] = matmul(x, p.wk[i]);
    v[i] = matmul(x, p.wv[i]);
    a[i] = row_softmax(matmul(q[i], transpose(k[i])) * scale);
    u[i] = matmul(a[i], v[i]);
  }
  const Matrix concat = concat_heads(u);

  grads.wo += matmul(transpose(concat), dy);
  const Matrix dconcat = matmul(dy, transpose(p.wo));

  Matrix dx(x.rows, x.cols);
  for (std::size_t i = 0; i < h; ++i) {
    const Matrix du = head_slice(dconcat, i, dk);
    const Matrix da = matmul(du, transpose(v[i]));
    const Matrix dv = matmul(transpose(a[i]), du);
    const Matrix ds = softmax_backward(a[i], da);
    const Matrix dq = matmul(ds, k[i]) * scale;
    const Matrix dkm = matmul(transpose(ds), q[i]) * scale;
    grads.wq[i] += matmul(xt, dq);
    grads.wk[i] += matmul(xt, dkm);
    grads.wv[i] += matmul(xt, dv);
    dx += matmul(dq, transpose(p.wq[i]));
    dx += matmul(dkm, transpose(p.wk[i]));
    dx += matmul(dv, transpose(p.wv[i]));
  }
  return dx;
}

Matrix attention_backward(const Matrix& x, const DsaParams& p, const Matrix& dy,
                          DsaParams& grads) {
  check_width(x, p.model_dim(), "attention_backward[dsa]");
  const std::size_t t = x.rows;
  if (dy.rows != t || dy.cols != p.model_dim()) {
    throw ShapeError("attention_backward[dsa]: dy " + dy.shape() + " vs output " +
                     std::to_string(t) + "x" + std::to_string(p.model_dim()));
  }
  if (t > p.t_max) {
    throw CapacityError("attention_backward[dsa]: sequence length " + std::to_string(t) +
                        " exceeds capacity t_max=" + std::to_string(p.t_max));
  }
  const std::size_t h = p.heads();
  const std::size_t dk = p.head_dim();
  const Matrix xt = transpose(x);

  std::vector<Matrix> pre(h), hid(h), b(h), v(h), u(h), w2s(h);
  for (std::size_t i = 0; i < h; ++i) {
    pre[i] = matmul(x, p.w1[i]);
    hid[i] = relu(pre[i]);
    Matrix w2slice(dk, t);
    for (std::size_t r = 0; r < dk; ++r)
      for (std::size_t c = 0; c < t; ++c) w2slice(r, c) = p.w2[i](r, c);
    b[i] = row_softmax(matmul(hid[i], w2slice));
    v[i] = matmul(x, p.w3[i]);
    u[i] = matmul(b[i], v[i]);
    w2s[i] = std::move(w2slice);
  }
  const Matrix concat = concat_heads(u);

  grads.wo += matmul(transpose(concat), dy);
  const Matrix dconcat = matmul(dy, transpose(p.wo));

  Matrix dx(x.rows, x.cols);
  for (std::size_t i = 0; i < h; ++i) {
    const Matrix du = head_slice(dconcat, i, dk);
    const Matrix db = matmul(du, transpose(v[i]));
    const Matrix dv = matmul(transpose(b[i]), du);
    const Matrix dlogits = softmax_backward(b[i], db);
    const Matrix dw2s = matmul(transpose(hid[i]), dlogits);
    for (std::size_t r = 0; r < dk; ++r)
      for (std::size_t c = 0; c < t; ++c) grads.w2[i](r, c) += dw2s(r, c);
    const Matrix dhid = matmul(dlogits, transpose(w2s[i]));
    const Matrix dpre = relu_mask_backward(pre[i], dhid);
    grads.w1[i] += matmul(xt, dpre);
    grads.w3[i] += matmul(xt, dv);
    dx += matmul(dpre, transpose(p.w1[i]));
    dx += matmul(dv, transpose(p.w3[i]));
  }
  return dx;
}

Matrix attention_backward(const Matrix& x, const LdsaParams& p, const Matrix& dy,
                          LdsaParams& grads) {
  check_width(x, p.model_dim(), "attention_backward[ldsa]");
  const std::size_t t_len = x.rows;
  if (dy.rows != t_len || dy.cols != p.model_dim()) {
    throw ShapeError("attention_backward[ldsa]: dy " + dy.shape() + " vs output " +
                     std::to_string(t_len) + "x" + std::to_string(p.model_dim()));
  }
  const std::size_t h = p.heads();
  const std::size_t dk = p.head_dim();
  const std::size_t c = p.context;
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(c / 2);
  const Matrix xt = transpose(x);

  std::vector<Matrix> pre(h), hid(h), b(h), v(h), u(h);
  for (std::size_t i = 0; i < h; ++i) {
    pre[i] = matmul(x, p.w1[i]);
    hid[i] = relu(pre[i]);
    b[i] = row_softmax(matmul(hid[i], p.w2[i]));
    v[i] = matmul(x, p.w3[i]);
    u[i] = windowed_aggregate(b[i], v[i]);
  }
  const Matrix concat = concat_heads(u);

  grads.wo += matmul(transpose(concat), dy);
  const Matrix dconcat = matmul(dy, transpose(p.wo));

  Matrix dx(x.rows, x.cols);
  for (std::size_t i = 0; i < h; ++i) {
    const Matrix du = head_slice(dconcat, i, dk);
    // Window weights and values both receive gradient only through in-range
    // positions; out-of-range slots contributed the zero vector.
    Matrix db(t_len, c);
    Matrix dv(t_len, dk);
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::ptrdiff_t s =
            static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - off;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(t_len)) continue;
        const std::size_t su = static_cast<std::size_t>(s);
        double dot = 0.0;
        for (std::size_t k = 0; k < dk; ++k) {
          dot += du(t, k) * v[i](su, k);
          dv(su, k) += b[i](t, j) * du(t, k);
        }
        db(t, j) = dot;
      }
    }
    const Matrix dlogits = softmax_backward(b[i], db);
    grads.w2[i] += matmul(transpose(hid[i]), dlogits);
    const Matrix dhid = matmul(dlogits, transpose(p.w2[i]));
    const Matrix dpre = relu_mask_backward(pre[i], dhid);
    grads.w1[i] += matmul(xt, dpre);
    grads.w3[i] += matmul(xt, dv);
    dx += matmul(dpre, transpose(p.w1[i]));
    dx += matmul(dv, transpose(p.w3[i]));
  }
  return dx;
}

}  // namespace ldsa
