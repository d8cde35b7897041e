#pragma once

#include <string>

#include "ldsa/attention.hpp"
#include "ldsa/encoder.hpp"

namespace ldsa {

// EncoderConfig <-> JSON with exactly these fields, in this order:
// variant, n_blocks, d, h, c, conv_kernel, ffn_inner, t_max, feat_dim.
std::string config_to_json(const EncoderConfig& cfg);
EncoderConfig config_from_json(const std::string& text);
void save_config(const EncoderConfig& cfg, const std::string& path);
EncoderConfig load_config(const std::string& path);

// Weight checkpoints: a directory holding manifest.json (shapes, head count,
// variant tag, deterministic field order) plus one CSV payload per matrix.
// Encoder checkpoints use the same manifest with block-indexed names.
void save_sa_params(const SaParams& p, const std::string& dir);
SaParams load_sa_params(const std::string& dir);
void save_dsa_params(const DsaParams& p, const std::string& dir);
DsaParams load_dsa_params(const std::string& dir);
void save_ldsa_params(const LdsaParams& p, const std::string& dir);
LdsaParams load_ldsa_params(const std::string& dir);

void save_encoder_params(const EncoderConfig& cfg, const EncoderParams& p,
                         const std::string& dir);
EncoderParams load_encoder_params(const EncoderConfig& cfg, const std::string& dir);

}  // namespace ldsa
