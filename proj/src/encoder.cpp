#include "ldsa/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace ldsa {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void require_odd(std::size_t k, const char* what) {
  if (k == 0 || k % 2 == 0) {
    throw ShapeError(std::string(what) + " must be odd and >= 1, got " + std::to_string(k));
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (d == 0 || h == 0 || d % h != 0) {
    throw ShapeError("EncoderConfig: d=" + std::to_string(d) + " not divisible by h=" +
                     std::to_string(h));
  }
  require_odd(c, "EncoderConfig: context width c");
  require_odd(conv_kernel, "EncoderConfig: conv_kernel");
  if (ffn_inner == 0 || t_max == 0 || feat_dim == 0) {
    throw ShapeError("EncoderConfig: ffn_inner, t_max and feat_dim must be >= 1");
  }
}

void FfnParams::visit(const ParamVisitor& f) {
  f("w_in", w_in);
  f("b_in", b_in);
  f("w_out", w_out);
  f("b_out", b_out);
}
void FfnParams::visit(const ConstParamVisitor& f) const {
  const_cast<FfnParams*>(this)->visit([&f](const std::string& n, Matrix& m) { f(n, m); });
}

void ConvModuleParams::visit(const ParamVisitor& f) {
  f("pointwise_in", pointwise_in);
  f("b_in", b_in);
  f("depthwise", depthwise);
  f("b_dw", b_dw);
  f("pointwise_out", pointwise_out);
  f("b_out", b_out);
}
void ConvModuleParams::visit(const ConstParamVisitor& f) const {
  const_cast<ConvModuleParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

void LayerNormParams::visit(const ParamVisitor& f) {
  f("gamma", gamma);
  f("beta", beta);
}
void LayerNormParams::visit(const ConstParamVisitor& f) const {
  const_cast<LayerNormParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

void FrontendParams::visit(const ParamVisitor& f) {
  f("conv1", conv1);
  f("b1", b1);
  f("conv2", conv2);
  f("b2", b2);
  f("proj", proj);
  f("b_proj", b_proj);
}
void FrontendParams::visit(const ConstParamVisitor& f) const {
  const_cast<FrontendParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

namespace {

template <class P>
void visit_prefixed(P& params, const std::string& prefix, const ParamVisitor& f) {
  params.visit([&](const std::string& n, Matrix& m) { f(prefix + n, m); });
}

}  // namespace

void BlockParams::visit(const ParamVisitor& f) {
  if (sa) visit_prefixed(*sa, "sa.", f);
  if (dsa) visit_prefixed(*dsa, "dsa.", f);
  if (ldsa) visit_prefixed(*ldsa, "ldsa.", f);
  if (conv) visit_prefixed(*conv, "conv.", f);
  visit_prefixed(ffn, "ffn.", f);
  visit_prefixed(norm1, "norm1.", f);
  visit_prefixed(norm2, "norm2.", f);
  visit_prefixed(norm3, "norm3.", f);
}
void BlockParams::visit(const ConstParamVisitor& f) const {
  const_cast<BlockParams*>(this)->visit([&f](const std::string& n, Matrix& m) { f(n, m); });
}

void EncoderParams::visit(const ParamVisitor& f) {
  visit_prefixed(frontend, "frontend.", f);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    visit_prefixed(blocks[i], "block" + std::to_string(i) + ".", f);
  }
}
void EncoderParams::visit(const ConstParamVisitor& f) const {
  const_cast<EncoderParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

FfnParams init_ffn_params(std::size_t d, std::size_t inner, Rng& rng) {
  FfnParams p;
  p.w_in = xavier_uniform_init(d, inner, rng);
  p.b_in = Matrix(1, inner);
  p.w_out = xavier_uniform_init(inner, d, rng);
  p.b_out = Matrix(1, d);
  return p;
}

ConvModuleParams init_conv_module_params(std::size_t d, std::size_t kernel, Rng& rng) {
  require_odd(kernel, "conv module kernel");
  ConvModuleParams p;
  p.pointwise_in = xavier_uniform_init(d, 2 * d, rng);
  p.b_in = Matrix(1, 2 * d);
  p.depthwise = xavier_uniform_init(kernel, d, rng);
  p.b_dw = Matrix(1, d);
  p.pointwise_out = xavier_uniform_init(d, d, rng);
  p.b_out = Matrix(1, d);
  return p;
}

LayerNormParams init_layer_norm_params(std::size_t d) {
  LayerNormParams p;
  p.gamma = Matrix(1, d, 1.0);
  p.beta = Matrix(1, d);
  return p;
}

FrontendParams init_frontend_params(std::size_t feat_dim, std::size_t d, Rng& rng,
                                    bool positional_encoding) {
  const std::size_t f2 = conv_downsampled_len(conv_downsampled_len(feat_dim));
  FrontendParams p;
  p.conv1 = xavier_uniform_init(kFrontendChannels, 9, rng);
  p.b1 = Matrix(1, kFrontendChannels);
  p.conv2 = xavier_uniform_init(kFrontendChannels, kFrontendChannels * 9, rng);
  p.b2 = Matrix(1, kFrontendChannels);
  p.proj = xavier_uniform_init(kFrontendChannels * f2, d, rng);
  p.b_proj = Matrix(1, d);
  p.positional_encoding = positional_encoding;
  return p;
}

BlockParams init_block_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  BlockParams p;
  switch (cfg.variant) {
    case Variant::Sa:
      p.sa = init_sa_params(cfg.d, cfg.h, rng);
      break;
    case Variant::Dsa:
      p.dsa = init_dsa_params(cfg.d, cfg.h, cfg.t_max, rng);
      break;
    case Variant::Ldsa:
      p.ldsa = init_ldsa_params(cfg.d, cfg.h, cfg.c, rng);
      break;
    case Variant::Ha:
      p.sa = init_sa_params(cfg.d, cfg.h, rng);
      break;
  }
  if (cfg.variant == Variant::Ha) {
    p.ldsa = init_ldsa_params(cfg.d, cfg.h, cfg.c, rng);
  } else {
    p.conv = init_conv_module_params(cfg.d, cfg.conv_kernel, rng);
  }
  p.ffn = init_ffn_params(cfg.d, cfg.ffn_inner, rng);
  p.norm1 = init_layer_norm_params(cfg.d);
  p.norm2 = init_layer_norm_params(cfg.d);
  p.norm3 = init_layer_norm_params(cfg.d);
  return p;
}

EncoderParams init_encoder_params(const EncoderConfig& cfg, Rng& rng,
                                  bool positional_encoding) {
  cfg.validate();
  EncoderParams p;
  p.frontend = init_frontend_params(cfg.feat_dim, cfg.d, rng, positional_encoding);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    p.blocks.push_back(init_block_params(cfg, rng));
  }
  return p;
}

Matrix ffn_forward(const Matrix& x, const FfnParams& p) {
  const Matrix hidden = relu(add_row_broadcast(matmul(x, p.w_in), p.b_in));
  return add_row_broadcast(matmul(hidden, p.w_out), p.b_out);
}

namespace {

// Depthwise temporal convolution with zero "same" padding.
Matrix depthwise_conv(const Matrix& v, const Matrix& kernel, const Matrix& bias) {
  const std::size_t t_len = v.rows;
  const std::size_t d = v.cols;
  const std::size_t k = kernel.rows;
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k / 2);
  Matrix w(t_len, d);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t ch = 0; ch < d; ++ch) w(t, ch) = bias(0, ch);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const std::ptrdiff_t s =
          static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) - off;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(t_len)) continue;
      const std::size_t su = static_cast<std::size_t>(s);
      for (std::size_t ch = 0; ch < d; ++ch) w(t, ch) += kernel(kk, ch) * v(su, ch);
    }
  }
  return w;
}

struct ConvModuleTrace {
  Matrix glu_a, glu_gate_sig, glu_out;  // T x d each
  Matrix dw_out;                        // pre-swish, T x d
  Matrix swish_out;                     // T x d
};

ConvModuleTrace conv_module_trace(const Matrix& x, const ConvModuleParams& p) {
  const std::size_t d = p.pointwise_out.rows;
  if (x.cols != d) {
    throw ShapeError("conv_module: input " + x.shape() + " does not match width " +
                     std::to_string(d));
  }
  const Matrix u = add_row_broadcast(matmul(x, p.pointwise_in), p.b_in);
  ConvModuleTrace tr;
  tr.glu_a = Matrix(x.rows, d);
  tr.glu_gate_sig = Matrix(x.rows, d);
  tr.glu_out = Matrix(x.rows, d);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double a = u(i, j);
      const double gs = sigmoid(u(i, d + j));
      tr.glu_a(i, j) = a;
      tr.glu_gate_sig(i, j) = gs;
      tr.glu_out(i, j) = a * gs;
    }
  }
  tr.dw_out = depthwise_conv(tr.glu_out, p.depthwise, p.b_dw);
  tr.swish_out = Matrix(x.rows, d);
  for (std::size_t i = 0; i < tr.dw_out.data.size(); ++i) {
    const double w = tr.dw_out.data[i];
    tr.swish_out.data[i] = w * sigmoid(w);
  }
  return tr;
}

}  // namespace

Matrix conv_module_forward(const Matrix& x, const ConvModuleParams& p) {
  const ConvModuleTrace tr = conv_module_trace(x, p);
  return add_row_broadcast(matmul(tr.swish_out, p.pointwise_out), p.b_out);
}

Matrix sublayer(const Matrix& x, const LayerNormParams& norm,
                const std::function<Matrix(const Matrix&)>& f) {
  return layer_norm(x + f(x), norm.gamma, norm.beta, kLayerNormEps);
}

namespace {

Matrix block_attention(const Matrix& x, Variant variant, const BlockParams& p) {
  switch (variant) {
    case Variant::Sa:
    case Variant::Ha:
      return multihead_sa(x, *p.sa, false).y;
    case Variant::Dsa:
      return multihead_dsa(x, *p.dsa, false).y;
    case Variant::Ldsa:
      return ldsa_forward(x, *p.ldsa, false).y;
  }
  throw std::logic_error("unreachable");
}

Matrix block_middle(const Matrix& x, Variant variant, const BlockParams& p) {
  if (variant == Variant::Ha) return ldsa_forward(x, *p.ldsa, false).y;
  return conv_module_forward(x, *p.conv);
}

}  // namespace

Matrix encoder_block_forward(const Matrix& x, Variant variant, const BlockParams& p) {
  Matrix z = sublayer(x, p.norm1,
                      [&](const Matrix& in) { return block_attention(in, variant, p); });
  z = sublayer(z, p.norm2, [&](const Matrix& in) { return block_middle(in, variant, p); });
  z = sublayer(z, p.norm3, [&](const Matrix& in) { return ffn_forward(in, p.ffn); });
  return z;
}

std::size_t conv_downsampled_len(std::size_t n) {
  if (n < 3) {
    throw ShapeError("conv_downsampled_len: length " + std::to_string(n) +
                     " too short for a 3-wide stride-2 kernel");
  }
  return (n - 1) / 2;
}

std::size_t frontend_out_len(std::size_t t) {
  if (t < 7) {
    throw ShapeError("frontend: input length " + std::to_string(t) +
                     " too short, need at least 7 frames");
  }
  return conv_downsampled_len(conv_downsampled_len(t));
}

Matrix positional_encoding(std::size_t t, std::size_t d) {
  Matrix pe(t, d);
  for (std::size_t pos = 0; pos < t; ++pos) {
    for (std::size_t i = 0; i + 1 < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
    if (d % 2 == 1) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(d - 1) / static_cast<double>(d));
      pe(pos, d - 1) = std::sin(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

namespace {

struct FrontendTrace {
  // Per-channel t x f planes for both stages, pre- and post-ReLU.
  std::vector<Matrix> pre1, out1, pre2, out2;
  Matrix flat;  // t2 x (channels * f2)
  std::size_t t1 = 0, f1 = 0, t2 = 0, f2 = 0;
};

FrontendTrace frontend_trace(const Matrix& features, const FrontendParams& p) {
  frontend_out_len(features.rows);  // validates the time axis up front
  FrontendTrace tr;
  tr.t1 = conv_downsampled_len(features.rows);
  tr.f1 = conv_downsampled_len(features.cols);
  tr.t2 = conv_downsampled_len(tr.t1);
  tr.f2 = conv_downsampled_len(tr.f1);
  const std::size_t ch = kFrontendChannels;

  tr.pre1.assign(ch, Matrix(tr.t1, tr.f1));
  tr.out1.assign(ch, Matrix(tr.t1, tr.f1));
  for (std::size_t co = 0; co < ch; ++co) {
    for (std::size_t t = 0; t < tr.t1; ++t) {
      for (std::size_t f = 0; f < tr.f1; ++f) {
        double acc = p.b1(0, co);
        for (std::size_t dt = 0; dt < 3; ++dt)
          for (std::size_t df = 0; df < 3; ++df)
            acc += p.conv1(co, dt * 3 + df) * features(2 * t + dt, 2 * f + df);
        tr.pre1[co](t, f) = acc;
        tr.out1[co](t, f) = acc > 0.0 ? acc : 0.0;
      }
    }
  }

  tr.pre2.assign(ch, Matrix(tr.t2, tr.f2));
  tr.out2.assign(ch, Matrix(tr.t2, tr.f2));
  for (std::size_t co = 0; co < ch; ++co) {
    for (std::size_t t = 0; t < tr.t2; ++t) {
      for (std::size_t f = 0; f < tr.f2; ++f) {
        double acc = p.b2(0, co);
        for (std::size_t ci = 0; ci < ch; ++ci)
          for (std::size_t dt = 0; dt < 3; ++dt)
            for (std::size_t df = 0; df < 3; ++df)
              acc += p.conv2(co, ci * 9 + dt * 3 + df) * tr.out1[ci](2 * t + dt, 2 * f + df);
        tr.pre2[co](t, f) = acc;
        tr.out2[co](t, f) = acc > 0.0 ? acc : 0.0;
      }
    }
  }

  tr.flat = Matrix(tr.t2, ch * tr.f2);
  for (std::size_t co = 0; co < ch; ++co)
    for (std::size_t t = 0; t < tr.t2; ++t)
      for (std::size_t f = 0; f < tr.f2; ++f) tr.flat(t, co * tr.f2 + f) = tr.out2[co](t, f);
  return tr;
}

}  // namespace

Matrix conv_frontend(const Matrix& features, const FrontendParams& p) {
  const FrontendTrace tr = frontend_trace(features, p);
  if (tr.flat.cols != p.proj.rows) {
    throw ShapeError("frontend: projection " + p.proj.shape() +
                     " does not match flattened width " + std::to_string(tr.flat.cols));
  }
  Matrix y = add_row_broadcast(matmul(tr.flat, p.proj), p.b_proj);
  if (p.positional_encoding) y += positional_encoding(y.rows, y.cols);
  return y;
}

Matrix encoder_forward(const Matrix& features, const EncoderConfig& cfg,
                       const EncoderParams& p) {
  cfg.validate();
  Matrix z = conv_frontend(features, p.frontend);
  for (const BlockParams& block : p.blocks) {
    z = encoder_block_forward(z, cfg.variant, block);
  }
  return z;
}

Matrix ffn_backward(const Matrix& x, const FfnParams& p, const Matrix& dy, FfnParams& g) {
  const Matrix pre = add_row_broadcast(matmul(x, p.w_in), p.b_in);
  const Matrix hidden = relu(pre);
  g.w_out += matmul(transpose(hidden), dy);
  g.b_out += col_sum(dy);
  Matrix dhidden = matmul(dy, transpose(p.w_out));
  for (std::size_t i = 0; i < dhidden.data.size(); ++i)
    if (pre.data[i] <= 0.0) dhidden.data[i] = 0.0;
  g.w_in += matmul(transpose(x), dhidden);
  g.b_in += col_sum(dhidden);
  return matmul(dhidden, transpose(p.w_in));
}

Matrix conv_module_backward(const Matrix& x, const ConvModuleParams& p, const Matrix& dy,
                            ConvModuleParams& g) {
  const ConvModuleTrace tr = conv_module_trace(x, p);
  const std::size_t t_len = x.rows;
  const std::size_t d = p.pointwise_out.rows;
  const std::size_t k = p.kernel();
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k / 2);

  g.pointwise_out += matmul(transpose(tr.swish_out), dy);
  g.b_out += col_sum(dy);
  const Matrix dswish = matmul(dy, transpose(p.pointwise_out));

  // swish'(w) = sig(w) * (1 + w * (1 - sig(w)))
  Matrix ddw(t_len, d);
  for (std::size_t i = 0; i < ddw.data.size(); ++i) {
    const double w = tr.dw_out.data[i];
    const double s = sigmoid(w);
    ddw.data[i] = dswish.data[i] * s * (1.0 + w * (1.0 - s));
  }

  g.b_dw += col_sum(ddw);
  Matrix dglu(t_len, d);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const std::ptrdiff_t s =
          static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) - off;
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(t_len)) continue;
      const std::size_t su = static_cast<std::size_t>(s);
      for (std::size_t ch = 0; ch < d; ++ch) {
        g.depthwise(kk, ch) += ddw(t, ch) * tr.glu_out(su, ch);
        dglu(su, ch) += ddw(t, ch) * p.depthwise(kk, ch);
      }
    }
  }

  Matrix du(t_len, 2 * d);
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double gs = tr.glu_gate_sig(i, j);
      du(i, j) = dglu(i, j) * gs;
      du(i, d + j) = dglu(i, j) * tr.glu_a(i, j) * gs * (1.0 - gs);
    }
  }
  g.pointwise_in += matmul(transpose(x), du);
  g.b_in += col_sum(du);
  return matmul(du, transpose(p.pointwise_in));
}

Matrix layer_norm_backward(const Matrix& x, const LayerNormParams& p, const Matrix& dy,
                           LayerNormParams& g, double eps) {
  if (!x.same_shape(dy)) {
    throw ShapeError("layer_norm_backward: dy " + dy.shape() + " vs x " + x.shape());
  }
  const std::size_t n = x.cols;
  const double dn = static_cast<double>(n);
  Matrix dx(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x(i, j);
    mean /= dn;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    var /= dn;
    const double inv = 1.0 / std::sqrt(var + eps);

    double dvar = 0.0, dmean = 0.0, centered_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double centered = x(i, j) - mean;
      const double dxhat = dy(i, j) * p.gamma(0, j);
      g.gamma(0, j) += dy(i, j) * centered * inv;
      g.beta(0, j) += dy(i, j);
      dvar += dxhat * centered;
      dmean -= dxhat;
      centered_sum += centered;
    }
    dvar *= -0.5 * inv * inv * inv;
    dmean = dmean * inv + dvar * (-2.0 / dn) * centered_sum;
    for (std::size_t j = 0; j < n; ++j) {
      const double dxhat = dy(i, j) * p.gamma(0, j);
      dx(i, j) = dxhat * inv + dvar * 2.0 * (x(i, j) - mean) / dn + dmean / dn;
    }
  }
  return dx;
}

namespace {

Matrix attention_backward_dispatch(const Matrix& x, Variant variant, const BlockParams& p,
                                   const Matrix& dy, BlockParams& g) {
  switch (variant) {
    case Variant::Sa:
    case Variant::Ha:
      return attention_backward(x, *p.sa, dy, *g.sa);
    case Variant::Dsa:
      return attention_backward(x, *p.dsa, dy, *g.dsa);
    case Variant::Ldsa:
      return attention_backward(x, *p.ldsa, dy, *g.ldsa);
  }
  throw std::logic_error("unreachable");
}

Matrix middle_backward_dispatch(const Matrix& x, Variant variant, const BlockParams& p,
                                const Matrix& dy, BlockParams& g) {
  if (variant == Variant::Ha) return attention_backward(x, *p.ldsa, dy, *g.ldsa);
  return conv_module_backward(x, *p.conv, dy, *g.conv);
}

}  // namespace

Matrix encoder_block_backward(const Matrix& x, Variant variant, const BlockParams& p,
                              const Matrix& dy, BlockParams& g) {
  // Recompute the three residual sums, then walk the sublayers in reverse.
  const Matrix sum1 = x + block_attention(x, variant, p);
  const Matrix z1 = layer_norm(sum1, p.norm1.gamma, p.norm1.beta, kLayerNormEps);
  const Matrix sum2 = z1 + block_middle(z1, variant, p);
  const Matrix z2 = layer_norm(sum2, p.norm2.gamma, p.norm2.beta, kLayerNormEps);
  const Matrix sum3 = z2 + ffn_forward(z2, p.ffn);

  const Matrix dsum3 = layer_norm_backward(sum3, p.norm3, dy, g.norm3);
  const Matrix dz2 = dsum3 + ffn_backward(z2, p.ffn, dsum3, g.ffn);
  const Matrix dsum2 = layer_norm_backward(sum2, p.norm2, dz2, g.norm2);
  const Matrix dz1 = dsum2 + middle_backward_dispatch(z1, variant, p, dsum2, g);
  const Matrix dsum1 = layer_norm_backward(sum1, p.norm1, dz1, g.norm1);
  return dsum1 + attention_backward_dispatch(x, variant, p, dsum1, g);
}

Matrix conv_frontend_backward(const Matrix& features, const FrontendParams& p,
                              const Matrix& dy, FrontendParams& g) {
  const FrontendTrace tr = frontend_trace(features, p);
  const std::size_t ch = kFrontendChannels;

  // Positional encoding is an additive constant: gradient passes through.
  g.proj += matmul(transpose(tr.flat), dy);
  g.b_proj += col_sum(dy);
  const Matrix dflat = matmul(dy, transpose(p.proj));

  std::vector<Matrix> dout2(ch, Matrix(tr.t2, tr.f2));
  for (std::size_t co = 0; co < ch; ++co)
    for (std::size_t t = 0; t < tr.t2; ++t)
      for (std::size_t f = 0; f < tr.f2; ++f) {
        dout2[co](t, f) = tr.pre2[co](t, f) > 0.0 ? dflat(t, co * tr.f2 + f) : 0.0;
      }

  std::vector<Matrix> dout1(ch, Matrix(tr.t1, tr.f1));
  for (std::size_t co = 0; co < ch; ++co) {
    double db = 0.0;
    for (std::size_t t = 0; t < tr.t2; ++t) {
      for (std::size_t f = 0; f < tr.f2; ++f) {
        const double dpre = dout2[co](t, f);
        if (dpre == 0.0) continue;
        db += dpre;
        for (std::size_t ci = 0; ci < ch; ++ci)
          for (std::size_t dt = 0; dt < 3; ++dt)
            for (std::size_t df = 0; df < 3; ++df) {
              g.conv2(co, ci * 9 + dt * 3 + df) += dpre * tr.out1[ci](2 * t + dt, 2 * f + df);
              dout1[ci](2 * t + dt, 2 * f + df) += dpre * p.conv2(co, ci * 9 + dt * 3 + df);
            }
      }
    }
    g.b2(0, co) += db;
  }

  for (std::size_t co = 0; co < ch; ++co)
    for (std::size_t t = 0; t < tr.t1; ++t)
      for (std::size_t f = 0; f < tr.f1; ++f)
        if (tr.pre1[co](t, f) <= 0.0) dout1[co](t, f) = 0.0;

  Matrix dfeat(features.rows, features.cols);
  for (std::size_t co = 0; co < ch; ++co) {
    double db = 0.0;
    for (std::size_t t = 0; t < tr.t1; ++t) {
      for (std::size_t f = 0; f < tr.f1; ++f) {
        const double dpre = dout1[co](t, f);
        if (dpre == 0.0) continue;
        db += dpre;
        for (std::size_t dt = 0; dt < 3; ++dt)
          for (std::size_t df = 0; df < 3; ++df) {
            g.conv1(co, dt * 3 + df) += dpre * features(2 * t + dt, 2 * f + df);
            dfeat(2 * t + dt, 2 * f + df) += dpre * p.conv1(co, dt * 3 + df);
          }
      }
    }
    g.b1(0, co) += db;
  }
  return dfeat;
}

Matrix encoder_backward(const Matrix& features, const EncoderConfig& cfg,
                        const EncoderParams& p, const Matrix& dy, EncoderParams& g) {
  cfg.validate();
  std::vector<Matrix> block_inputs;
  block_inputs.reserve(p.blocks.size());
  Matrix z = conv_frontend(features, p.frontend);
  for (const BlockParams& block : p.blocks) {
    block_inputs.push_back(z);
    z = encoder_block_forward(z, cfg.variant, block);
  }
  Matrix d = dy;
  for (std::size_t i = p.blocks.size(); i-- > 0;) {
    d = encoder_block_backward(block_inputs[i], cfg.variant, p.blocks[i], d, g.blocks[i]);
  }
  return conv_frontend_backward(features, p.frontend, d, g.frontend);
}

std::size_t ParamTable::total() const {
  std::size_t n = 0;
  for (const ParamEntry& e : entries) n += e.count();
  return n;
}

std::size_t ParamTable::total_weights() const {
  std::size_t n = 0;
  for (const ParamEntry& e : entries)
    if (e.kind == "weight") n += e.count();
  return n;
}

std::size_t ParamTable::component_total(const std::string& component,
                                        const std::string& kind) const {
  std::size_t n = 0;
  for (const ParamEntry& e : entries) {
    const bool match = e.component == component ||
                       (e.component.size() > component.size() &&
                        e.component.compare(0, component.size(), component) == 0 &&
                        e.component[component.size()] == '.');
    if (match && (kind.empty() || e.kind == kind)) n += e.count();
  }
  return n;
}

ParamTable count_attention_params(Variant variant, std::size_t d, std::size_t h,
                                  std::size_t c_or_tmax) {
  if (h == 0 || d % h != 0) {
    throw ShapeError("count_attention_params: d=" + std::to_string(d) +
                     " not divisible by h=" + std::to_string(h));
  }
  const std::size_t dk = d / h;
  ParamTable t;
  for (std::size_t i = 0; i < h; ++i) {
    const std::string n = std::to_string(i);
    if (variant == Variant::Sa || variant == Variant::Ha) {
      t.entries.push_back({"attention", "wq" + n, d, dk, "weight"});
      t.entries.push_back({"attention", "wk" + n, d, dk, "weight"});
      t.entries.push_back({"attention", "wv" + n, d, dk, "weight"});
    } else {
      t.entries.push_back({"attention", "w1_" + n, d, dk, "weight"});
      t.entries.push_back({"attention", "w2_" + n, dk, c_or_tmax, "weight"});
      t.entries.push_back({"attention", "w3_" + n, d, dk, "weight"});
    }
  }
  t.entries.push_back({"attention", "wo", d, d, "weight"});
  return t;
}

namespace {

void append_entries(ParamTable& dst, const ParamTable& src, const std::string& component) {
  for (ParamEntry e : src.entries) {
    e.component = component + (e.component.empty() ? "" : "." + e.component);
    dst.entries.push_back(e);
  }
}

ParamTable count_conv_module(std::size_t d, std::size_t kernel) {
  ParamTable t;
  t.entries.push_back({"conv_module", "pointwise_in", d, 2 * d, "weight"});
  t.entries.push_back({"conv_module", "b_in", 1, 2 * d, "bias"});
  t.entries.push_back({"conv_module", "depthwise", kernel, d, "weight"});
  t.entries.push_back({"conv_module", "b_dw", 1, d, "bias"});
  t.entries.push_back({"conv_module", "pointwise_out", d, d, "weight"});
  t.entries.push_back({"conv_module", "b_out", 1, d, "bias"});
  return t;
}

ParamTable count_ffn(std::size_t d, std::size_t inner) {
  ParamTable t;
  t.entries.push_back({"ffn", "w_in", d, inner, "weight"});
  t.entries.push_back({"ffn", "b_in", 1, inner, "bias"});
  t.entries.push_back({"ffn", "w_out", inner, d, "weight"});
  t.entries.push_back({"ffn", "b_out", 1, d, "bias"});
  return t;
}

void append_norm(ParamTable& t, const std::string& name, std::size_t d) {
  t.entries.push_back({name, "gamma", 1, d, "norm"});
  t.entries.push_back({name, "beta", 1, d, "norm"});
}

}  // namespace

ParamTable count_block_params(const EncoderConfig& cfg) {
  cfg.validate();
  ParamTable t;
  const Variant attn_variant = cfg.variant == Variant::Ha ? Variant::Sa : cfg.variant;
  const std::size_t cap = cfg.variant == Variant::Dsa ? cfg.t_max : cfg.c;
  append_entries(t, count_attention_params(attn_variant, cfg.d, cfg.h, cap), "block");
  if (cfg.variant == Variant::Ha) {
    ParamTable local = count_attention_params(Variant::Ldsa, cfg.d, cfg.h, cfg.c);
    for (ParamEntry e : local.entries) {
      e.component = "block.local";
      t.entries.push_back(e);
    }
  } else {
    append_entries(t, count_conv_module(cfg.d, cfg.conv_kernel), "block");
  }
  append_entries(t, count_ffn(cfg.d, cfg.ffn_inner), "block");
  append_norm(t, "block.norm1", cfg.d);
  append_norm(t, "block.norm2", cfg.d);
  append_norm(t, "block.norm3", cfg.d);
  return t;
}

ParamTable count_params(const EncoderConfig& cfg) {
  cfg.validate();
  ParamTable t;
  const std::size_t f2 = conv_downsampled_len(conv_downsampled_len(cfg.feat_dim));
  t.entries.push_back({"frontend", "conv1", kFrontendChannels, 9, "weight"});
  t.entries.push_back({"frontend", "b1", 1, kFrontendChannels, "bias"});
  t.entries.push_back({"frontend", "conv2", kFrontendChannels, kFrontendChannels * 9, "weight"});
  t.entries.push_back({"frontend", "b2", 1, kFrontendChannels, "bias"});
  t.entries.push_back({"frontend", "proj", kFrontendChannels * f2, cfg.d, "weight"});
  t.entries.push_back({"frontend", "b_proj", 1, cfg.d, "bias"});
  const ParamTable block = count_block_params(cfg);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string prefix = "block" + std::to_string(i);
    for (ParamEntry e : block.entries) {
      // Entries from count_block_params carry a "block" component prefix;
      // replace it with the indexed one.
      e.component = prefix + e.component.substr(std::string("block").size());
      t.entries.push_back(e);
    }
  }
  return t;
}

}  // namespace ldsa
