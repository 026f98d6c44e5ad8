// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include "json.hpp"

#include "seau/matrix.hpp"
#include "seau/optim.hpp"
#include "seau/tensor.hpp"

namespace seau::nn {

struct EncoderConfig {
  int n_blocks = 4;
  int model_dim = 64;
  int ffn_dim = 128;
  int n_heads = 4;
  int conv_kernel = 7;
  float dropout = 0.1f;
  float layerdrop = 0.0f;
  int projection_dim = 96;
  int input_dim = 40;
  int extractor_channels = 16;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  static EncoderConfig toy();
  // Published-scale architecture: 16 blocks, 512/2048, 8 heads, kernel 15,
  // projection 768, 40-dim fbank input.
  static EncoderConfig paper();
};

struct DecoderConfig {
  int n_layers = 2;
  int model_dim = 64;
  int ffn_dim = 128;
  int n_heads = 4;
  int vocab_size = 8;
  float dropout = 0.1f;
  int max_target_len = 512;

  void validate() const;
  nlohmann::json to_json() const;
  static DecoderConfig from_json(const nlohmann::json& j);
  static DecoderConfig toy(int vocab);
  static DecoderConfig paper(int vocab);
};

struct SpecAugmentConfig {
  int freq_mask_width = 8;   // max band width per mask
  int time_mask_width = 20;  // max span width per mask
  int n_freq_masks = 2;
  int n_time_masks = 2;

  void validate(int feature_dim) const;
  static SpecAugmentConfig paper();  // F=15, T=40
};

// Zeroes random feature bands and time spans in place.  Deterministic per
// stream; a zero-width draw masks nothing.
void specaugment_inplace(FloatMatrix& features, const SpecAugmentConfig& config, RngStream rng);

// Two stride-2 convolutions: T -> ceil(ceil(T/2)/2).
int64_t subsampled_length(int64_t t);
constexpr int kSubsampleFactor = 4;

// Sinusoidal absolute positional encoding, row-major T x dim.
std::vector<float> sinusoidal_positions(int64_t t, int64_t dim);

// ---- parameter bundles ----

struct Linear {
  ad::Tensor w, b;  // y = x.w + b
};
struct LayerNormParams {
  ad::Tensor g, b;
};
struct AttentionParams {
  LayerNormParams ln;
  Linear q, k, v, o;
};
struct FfnParams {
  LayerNormParams ln;
  Linear w1, w2;
};
struct ConvModuleParams {
  LayerNormParams ln;
  Linear pw1;  // d -> 2d, gated
  ad::Tensor dw_w, dw_b;
  LayerNormParams norm;
  Linear pw2;  // d -> d
};
struct ConformerBlockParams {
  FfnParams ffn1;
  AttentionParams attn;
  ConvModuleParams conv;
  FfnParams ffn2;
  LayerNormParams out_ln;
};

ad::Tensor linear(const ad::Tensor& x, const Linear& l);
ad::Tensor layer_norm_p(const ad::Tensor& x, const LayerNormParams& p);
ConformerBlockParams make_conformer_block_params(ad::ParameterGroup& group,
                                                 const std::string& name, int64_t dim,
                                                 int64_t ffn_dim, int kernel, RngStream rng);
// Macaron conformer block: x + 1/2 FFN, + MHSA, + conv module, + 1/2 FFN,
// then layer norm.  Deterministic in eval mode.
ad::Tensor conformer_block(const ad::Tensor& x, const ConformerBlockParams& p, int n_heads,
                           float dropout_p, bool train, RngStream rng);

// Conformer encoder with a 2-layer conv subsampling front
// and per-block hidden outputs for unit extraction.
class Encoder {
 public:
  Encoder(EncoderConfig config, RngStream init_rng);

  struct Forward {
    ad::Tensor final;                // output of the last block, T' x d
    std::vector<ad::Tensor> layers;  // one per block, block i at index i
    ad::Tensor extractor_out;        // subsampler output before masking, T' x d
  };
  // `mask`/`mask_emb` (both or neither) replace masked rows after the
  // subsampler, at the unit timescale.
  Forward forward(const FloatMatrix& features, bool train, RngStream rng,
                  const std::vector<uint8_t>* mask = nullptr,
                  const ad::Tensor* mask_emb = nullptr);

  const EncoderConfig& config() const { return config_; }
  ad::ParameterGroup& extractor_group() { return extractor_; }
  ad::ParameterGroup& block_group() { return blocks_; }
  std::vector<ad::ParameterGroup*> groups() { return {&extractor_, &blocks_}; }
  int64_t parameter_count() const;

 private:
  EncoderConfig config_;
  ad::ParameterGroup extractor_{"extractor"};
  ad::ParameterGroup blocks_{"encoder"};
  // extractor
  ad::Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  Linear in_proj_;
  std::vector<ConformerBlockParams> block_params_;
};

struct DecoderBlockParams {
  AttentionParams self_attn;
  AttentionParams cross_attn;
  FfnParams ffn;
};

// Transformer decoder with causal self-attention and cross-attention over the
// encoder output.
class Decoder {
 public:
  Decoder(DecoderConfig config, RngStream init_rng);

  // tokens_in are the teacher-forced inputs (BOS first); returns logits
  // [len(tokens_in), vocab].
  ad::Tensor forward(const ad::Tensor& encoder_hidden, const std::vector<int>& tokens_in,
                     bool train, RngStream rng);

  const DecoderConfig& config() const { return config_; }
  ad::ParameterGroup& group() { return params_; }
  int64_t parameter_count() const;

 private:
  DecoderConfig config_;
  ad::ParameterGroup params_{"decoder"};
  ad::Tensor embedding_;
  std::vector<DecoderBlockParams> block_params_;
  LayerNormParams out_ln_;
  Linear out_proj_;
};

int64_t count_params(const std::vector<const ad::ParameterGroup*>& groups);

}  // namespace seau::nn
