#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ldsa/attention.hpp"
#include "ldsa/matrix.hpp"
#include "ldsa/param_visit.hpp"
#include "ldsa/rng.hpp"

namespace ldsa {

// Full encoder hyperparameters. Defaults follow the large-scale setup; tests
// shrink everything.
struct EncoderConfig {
  Variant variant = Variant::Sa;
  std::size_t n_blocks = 12;
  std::size_t d = 320;
  std::size_t h = 4;
  std::size_t c = 31;            // LDSA context width (15 in the HA setup)
  std::size_t conv_kernel = 15;  // depthwise kernel of the convolution module
  std::size_t ffn_inner = 1280;  // position-wise FFN inner width (4d)
  std::size_t t_max = 2048;      // DSA capacity, post-frontend frames
  std::size_t feat_dim = 40;     // input feature width

  void validate() const;
};

// Position-wise feed-forward: ReLU(x w_in + b_in) w_out + b_out.
struct FfnParams {
  Matrix w_in, b_in;    // d x inner, 1 x inner
  Matrix w_out, b_out;  // inner x d, 1 x d

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

// Convolution module: pointwise d->2d, GLU gate back to d, depthwise
// convolution over time (odd kernel, zero "same" padding), swish, pointwise
// d->d.
struct ConvModuleParams {
  Matrix pointwise_in, b_in;    // d x 2d, 1 x 2d
  Matrix depthwise, b_dw;       // kernel x d (kernel-major), 1 x d
  Matrix pointwise_out, b_out;  // d x d, 1 x d

  std::size_t kernel() const { return depthwise.rows; }

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

struct LayerNormParams {
  Matrix gamma, beta;  // 1 x d each

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

// Down-sampling frontend: two 3x3 stride-2 convolutions with ReLU (valid
// padding, 32 channels each), channel-flattened linear projection to d, and
// an optional sinusoidal positional encoding.
struct FrontendParams {
  Matrix conv1, b1;    // 32 x 9  (out_channel x flattened 3x3 kernel), 1 x 32
  Matrix conv2, b2;    // 32 x 288 (out_channel x in_channel*3*3), 1 x 32
  Matrix proj, b_proj; // (32 * down-sampled feat dim) x d, 1 x d
  bool positional_encoding = true;

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

// One encoder sub-block. The attention slot depends on the variant:
// SA/DSA/LDSA blocks run (attention, conv module, FFN); the HA block runs
// (SA, LDSA, FFN) with the LDSA replacing the conv module.
struct BlockParams {
  std::optional<SaParams> sa;
  std::optional<DsaParams> dsa;
  std::optional<LdsaParams> ldsa;
  std::optional<ConvModuleParams> conv;
  FfnParams ffn;
  LayerNormParams norm1, norm2, norm3;

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

struct EncoderParams {
  FrontendParams frontend;
  std::vector<BlockParams> blocks;

  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

constexpr std::size_t kFrontendChannels = 32;
constexpr double kLayerNormEps = 1e-6;

FfnParams init_ffn_params(std::size_t d, std::size_t inner, Rng& rng);
ConvModuleParams init_conv_module_params(std::size_t d, std::size_t kernel, Rng& rng);
LayerNormParams init_layer_norm_params(std::size_t d);
FrontendParams init_frontend_params(std::size_t feat_dim, std::size_t d, Rng& rng,
                                    bool positional_encoding = true);
BlockParams init_block_params(const EncoderConfig& cfg, Rng& rng);
EncoderParams init_encoder_params(const EncoderConfig& cfg, Rng& rng,
                                  bool positional_encoding = true);

Matrix ffn_forward(const Matrix& x, const FfnParams& p);
Matrix conv_module_forward(const Matrix& x, const ConvModuleParams& p);

// Post-norm residual wrapper: layer_norm(x + f(x)).
Matrix sublayer(const Matrix& x, const LayerNormParams& norm,
                const std::function<Matrix(const Matrix&)>& f);

Matrix encoder_block_forward(const Matrix& x, Variant variant, const BlockParams& p);

// One valid 3x3 stride-2 pass shrinks a length n to (n-1)/2; the frontend
// applies two. Throws ShapeError for lengths below 7.
std::size_t conv_downsampled_len(std::size_t n);
std::size_t frontend_out_len(std::size_t t);

// Sinusoidal absolute positional encoding, t x d.
Matrix positional_encoding(std::size_t t, std::size_t d);

Matrix conv_frontend(const Matrix& features, const FrontendParams& p);

Matrix encoder_forward(const Matrix& features, const EncoderConfig& cfg,
                       const EncoderParams& p);

// Backward passes for the loss L = <dy, forward(x)>. Gradients accumulate
// into the matching grads container; the return value is dL/dx (dL/dfeatures
// for the frontend and full encoder).
Matrix ffn_backward(const Matrix& x, const FfnParams& p, const Matrix& dy, FfnParams& g);
Matrix conv_module_backward(const Matrix& x, const ConvModuleParams& p, const Matrix& dy,
                            ConvModuleParams& g);
Matrix layer_norm_backward(const Matrix& x, const LayerNormParams& p, const Matrix& dy,
                           LayerNormParams& g, double eps = kLayerNormEps);
Matrix encoder_block_backward(const Matrix& x, Variant variant, const BlockParams& p,
                              const Matrix& dy, BlockParams& g);
Matrix conv_frontend_backward(const Matrix& features, const FrontendParams& p,
                              const Matrix& dy, FrontendParams& g);
Matrix encoder_backward(const Matrix& features, const EncoderConfig& cfg,
                        const EncoderParams& p, const Matrix& dy, EncoderParams& g);

// Exact integer parameter accounting from config shapes alone.
struct ParamEntry {
  std::string component;  // "frontend", "block", "block.attention", ...
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string kind;  // "weight", "bias" or "norm"

  std::size_t count() const { return rows * cols; }
};

struct ParamTable {
  std::vector<ParamEntry> entries;

  std::size_t total() const;
  std::size_t total_weights() const;  // kind == "weight" only
  std::size_t component_total(const std::string& component, const std::string& kind = "") const;
};

// Counts for a single attention layer of the given variant.
ParamTable count_attention_params(Variant variant, std::size_t d, std::size_t h,
                                  std::size_t c_or_tmax);
// Counts for one encoder block of the given variant.
ParamTable count_block_params(const EncoderConfig& cfg);
// Full encoder table: frontend plus per-block entries (component "blockN...").
ParamTable count_params(const EncoderConfig& cfg);

}  // namespace ldsa
