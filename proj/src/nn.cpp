// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/nn.hpp"

#include <cmath>

namespace seau::nn {

using ad::Tensor;

void EncoderConfig::validate() const {
  if (n_blocks < 1) throw ConfigError("encoder: n_blocks must be >= 1");
  if (model_dim % n_heads != 0) {
    throw ConfigError("encoder: model_dim " + std::to_string(model_dim) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (conv_kernel % 2 == 0) {
    throw ConfigError("encoder: conv_kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (layerdrop < 0.0f || layerdrop >= 1.0f) throw ConfigError("encoder: layerdrop in [0,1)");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("encoder: dropout in [0,1)");
  if (input_dim < 4 || model_dim < n_heads || ffn_dim < 1 || projection_dim < 1 ||
      extractor_channels < 1) {
    throw ConfigError("encoder: bad dimensions");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"n_blocks", n_blocks},       {"model_dim", model_dim},
          {"ffn_dim", ffn_dim},         {"n_heads", n_heads},
          {"conv_kernel", conv_kernel}, {"dropout", dropout},
          {"layerdrop", layerdrop},     {"projection_dim", projection_dim},
          {"input_dim", input_dim},     {"extractor_channels", extractor_channels}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.n_blocks = j.at("n_blocks");
  c.model_dim = j.at("model_dim");
  c.ffn_dim = j.at("ffn_dim");
  c.n_heads = j.at("n_heads");
  c.conv_kernel = j.at("conv_kernel");
  c.dropout = j.at("dropout");
  c.layerdrop = j.at("layerdrop");
  c.projection_dim = j.at("projection_dim");
  c.input_dim = j.at("input_dim");
  c.extractor_channels = j.at("extractor_channels");
  return c;
}

EncoderConfig EncoderConfig::toy() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::paper() {
  EncoderConfig c;
  c.n_blocks = 16;
  c.model_dim = 512;
  c.ffn_dim = 2048;
  c.n_heads = 8;
  c.conv_kernel = 15;
  c.dropout = 0.1f;
  c.layerdrop = 0.2f;
  c.projection_dim = 768;
  c.input_dim = 40;
  c.extractor_channels = 64;
  return c;
}

void DecoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("decoder: n_layers must be >= 1");
  if (model_dim % n_heads != 0) throw ConfigError("decoder: model_dim not divisible by n_heads");
  if (vocab_size < 4) throw ConfigError("decoder: vocab must include pad/bos/eos/unk");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("decoder: dropout in [0,1)");
  if (max_target_len < 2) throw ConfigError("decoder: max_target_len too small");
}

nlohmann::json DecoderConfig::to_json() const {
  return {{"n_layers", n_layers},     {"model_dim", model_dim}, {"ffn_dim", ffn_dim},
          {"n_heads", n_heads},       {"vocab_size", vocab_size}, {"dropout", dropout},
          {"max_target_len", max_target_len}};
}

DecoderConfig DecoderConfig::from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.n_layers = j.at("n_layers");
  c.model_dim = j.at("model_dim");
  c.ffn_dim = j.at("ffn_dim");
  c.n_heads = j.at("n_heads");
  c.vocab_size = j.at("vocab_size");
  c.dropout = j.at("dropout");
  c.max_target_len = j.at("max_target_len");
  return c;
}

DecoderConfig DecoderConfig::toy(int vocab) {
  DecoderConfig c;
  c.vocab_size = vocab;
  return c;
}

DecoderConfig DecoderConfig::paper(int vocab) {
  DecoderConfig c;
  c.n_layers = 6;
  c.model_dim = 512;
  c.ffn_dim = 2048;
  c.n_heads = 8;
  c.vocab_size = vocab;
  c.dropout = 0.1f;
  return c;
}

void SpecAugmentConfig::validate(int feature_dim) const {
  if (freq_mask_width >= feature_dim) {
    throw ConfigError("specaugment: freq mask width " + std::to_string(freq_mask_width) +
                      " must be below the feature dim " + std::to_string(feature_dim));
  }
  if (freq_mask_width < 0 || time_mask_width < 0 || n_freq_masks < 0 || n_time_masks < 0) {
    throw ConfigError("specaugment: negative mask parameter");
  }
}

SpecAugmentConfig SpecAugmentConfig::paper() {
  SpecAugmentConfig c;
  c.freq_mask_width = 15;
  c.time_mask_width = 40;
  c.n_freq_masks = 2;
  c.n_time_masks = 2;
  return c;
}

void specaugment_inplace(FloatMatrix& features, const SpecAugmentConfig& config, RngStream rng) {
  config.validate(static_cast<int>(features.cols));
  RngStream f_rng = rng.fork("freq");
  for (int m = 0; m < config.n_freq_masks; ++m) {
    int64_t w = f_rng.uniform_int(0, config.freq_mask_width + 1);
    if (w == 0) continue;
    int64_t start = f_rng.uniform_int(0, features.cols - w + 1);
    for (int64_t t = 0; t < features.rows; ++t) {
      for (int64_t d = start; d < start + w; ++d) features.at(t, d) = 0.0f;
    }
  }
  RngStream t_rng = rng.fork("time");
  for (int m = 0; m < config.n_time_masks; ++m) {
    int64_t w = t_rng.uniform_int(0, config.time_mask_width + 1);
    w = std::min<int64_t>(w, features.rows);
    if (w == 0) continue;
    int64_t start = t_rng.uniform_int(0, features.rows - w + 1);
    for (int64_t t = start; t < start + w; ++t) {
      for (int64_t d = 0; d < features.cols; ++d) features.at(t, d) = 0.0f;
    }
  }
}

int64_t subsampled_length(int64_t t) {
  int64_t once = (t + 1) / 2;
  return (once + 1) / 2;
}

std::vector<float> sinusoidal_positions(int64_t t, int64_t dim) {
  std::vector<float> pe(static_cast<size_t>(t * dim));
  const int64_t half = dim / 2;
  for (int64_t pos = 0; pos < t; ++pos) {
    for (int64_t i = 0; i < half; ++i) {
      double rate = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
      double angle = static_cast<double>(pos) * rate;
      pe[static_cast<size_t>(pos * dim + i)] = static_cast<float>(std::sin(angle));
      pe[static_cast<size_t>(pos * dim + half + i)] = static_cast<float>(std::cos(angle));
    }
  }
  return pe;
}

Tensor linear(const Tensor& x, const Linear& l) { return ad::add(ad::matmul(x, l.w), l.b); }

Tensor layer_norm_p(const Tensor& x, const LayerNormParams& p) {
  return ad::layer_norm(x, p.g, p.b);
}

namespace {

Linear make_linear(ad::ParameterGroup& g, const std::string& name, int64_t in, int64_t out,
                   RngStream rng, float stddev = -1.0f) {
  if (stddev < 0.0f) stddev = 1.0f / std::sqrt(static_cast<float>(in));
  Linear l;
  l.w = g.add(name + ".w", Tensor::randn({in, out}, rng.fork("w"), stddev));
  l.b = g.add(name + ".b", Tensor::zeros({out}, true));
  return l;
}

LayerNormParams make_ln(ad::ParameterGroup& g, const std::string& name, int64_t dim) {
  LayerNormParams p;
  p.g = g.add(name + ".g", Tensor::full({dim}, 1.0f, true));
  p.b = g.add(name + ".b", Tensor::zeros({dim}, true));
  return p;
}

AttentionParams make_attention(ad::ParameterGroup& g, const std::string& name, int64_t dim,
                               RngStream rng) {
  AttentionParams p;
  p.ln = make_ln(g, name + ".ln", dim);
  p.q = make_linear(g, name + ".q", dim, dim, rng.fork("q"));
  p.k = make_linear(g, name + ".k", dim, dim, rng.fork("k"));
  p.v = make_linear(g, name + ".v", dim, dim, rng.fork("v"));
  p.o = make_linear(g, name + ".o", dim, dim, rng.fork("o"));
  return p;
}

FfnParams make_ffn(ad::ParameterGroup& g, const std::string& name, int64_t dim, int64_t hidden,
                   RngStream rng) {
  FfnParams p;
  p.ln = make_ln(g, name + ".ln", dim);
  p.w1 = make_linear(g, name + ".w1", dim, hidden, rng.fork("w1"));
  p.w2 = make_linear(g, name + ".w2", hidden, dim, rng.fork("w2"));
  return p;
}

ConvModuleParams make_conv_module(ad::ParameterGroup& g, const std::string& name, int64_t dim,
                                  int kernel, RngStream rng) {
  ConvModuleParams p;
  p.ln = make_ln(g, name + ".ln", dim);
  p.pw1 = make_linear(g, name + ".pw1", dim, 2 * dim, rng.fork("pw1"));
  p.dw_w = g.add(name + ".dw.w", Tensor::randn({kernel, dim}, rng.fork("dw"),
                                               1.0f / std::sqrt(static_cast<float>(kernel))));
  p.dw_b = g.add(name + ".dw.b", Tensor::zeros({dim}, true));
  p.norm = make_ln(g, name + ".norm", dim);
  p.pw2 = make_linear(g, name + ".pw2", dim, dim, rng.fork("pw2"));
  return p;
}

}  // namespace

ConformerBlockParams make_conformer_block_params(ad::ParameterGroup& g, const std::string& name,
                                                 int64_t dim, int64_t ffn, int kernel,
                                                 RngStream rng) {
  ConformerBlockParams p;
  p.ffn1 = make_ffn(g, name + ".ffn1", dim, ffn, rng.fork("ffn1"));
  p.attn = make_attention(g, name + ".attn", dim, rng.fork("attn"));
  p.conv = make_conv_module(g, name + ".conv", dim, kernel, rng.fork("conv"));
  p.ffn2 = make_ffn(g, name + ".ffn2", dim, ffn, rng.fork("ffn2"));
  p.out_ln = make_ln(g, name + ".out_ln", dim);
  return p;
}

namespace {

// Multi-head attention over pre-normed queries; kv_src supplies keys/values
// (equal to q_src for self-attention).
Tensor attention(const Tensor& q_src, const Tensor& kv_src, const AttentionParams& p, int n_heads,
                 bool causal, float dropout_p, bool train, RngStream rng) {
  const int64_t dim = p.q.w.dim(0);
  const int64_t dh = dim / n_heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor q = linear(q_src, p.q);
  Tensor k = linear(kv_src, p.k);
  Tensor v = linear(kv_src, p.v);
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (causal) scores = ad::add_causal_mask(scores);
    heads.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  Tensor out = linear(ad::concat_cols(heads), p.o);
  return ad::dropout(out, dropout_p, rng.fork("out"), train);
}

// Half-step feed-forward: x + 1/2 * W2(swish(W1(LN(x)))).
Tensor half_ffn(const Tensor& x, const FfnParams& p, float dropout_p, bool train, RngStream rng) {
  Tensor h = ad::swish(linear(layer_norm_p(x, p.ln), p.w1));
  Tensor out = ad::dropout(linear(h, p.w2), dropout_p, rng.fork("out"), train);
  return ad::add(x, ad::scale(out, 0.5f));
}

Tensor conv_module(const Tensor& x, const ConvModuleParams& p, float dropout_p, bool train,
                   RngStream rng) {
  const int64_t dim = x.dim(1);
  Tensor h = linear(layer_norm_p(x, p.ln), p.pw1);
  // Gated linear unit over the doubled channels.
  Tensor a = ad::slice_cols(h, 0, dim);
  Tensor b = ad::slice_cols(h, dim, 2 * dim);
  Tensor glu = ad::mul(a, ad::sigmoid(b));
  Tensor conv = ad::depthwise_conv1d(glu, p.dw_w, p.dw_b);
  Tensor act = ad::swish(layer_norm_p(conv, p.norm));
  return ad::dropout(linear(act, p.pw2), dropout_p, rng.fork("out"), train);
}

}  // namespace

Tensor conformer_block(const Tensor& x, const ConformerBlockParams& p, int n_heads,
                       float dropout_p, bool train, RngStream rng) {
  Tensor h = half_ffn(x, p.ffn1, dropout_p, train, rng.fork("ffn1"));
  Tensor attn_in = layer_norm_p(h, p.attn.ln);
  h = ad::add(h, attention(attn_in, attn_in, p.attn, n_heads, false, dropout_p, train,
                           rng.fork("attn")));
  h = ad::add(h, conv_module(h, p.conv, dropout_p, train, rng.fork("conv")));
  h = half_ffn(h, p.ffn2, dropout_p, train, rng.fork("ffn2"));
  return layer_norm_p(h, p.out_ln);
}

Encoder::Encoder(EncoderConfig config, RngStream init_rng) : config_(config) {
  config_.validate();
  const int ch = config_.extractor_channels;
  const int64_t d = config_.model_dim;
  RngStream rng = init_rng.fork("encoder_init");

  const float conv1_std = std::sqrt(2.0f / (1 * 3 * 3));
  const float conv2_std = std::sqrt(2.0f / (static_cast<float>(ch) * 3 * 3));
  conv1_w_ = extractor_.add("conv1.w", Tensor::randn({ch, 1, 3, 3}, rng.fork("c1"), conv1_std));
  conv1_b_ = extractor_.add("conv1.b", Tensor::zeros({ch}, true));
  conv2_w_ = extractor_.add("conv2.w", Tensor::randn({ch, ch, 3, 3}, rng.fork("c2"), conv2_std));
  conv2_b_ = extractor_.add("conv2.b", Tensor::zeros({ch}, true));
  const int64_t flat = ch * subsampled_length(config_.input_dim);
  in_proj_ = make_linear(extractor_, "proj", flat, d, rng.fork("proj"));

  block_params_.reserve(static_cast<size_t>(config_.n_blocks));
  for (int i = 0; i < config_.n_blocks; ++i) {
    block_params_.push_back(make_conformer_block_params(blocks_, "block" + std::to_string(i), d,
                                                        config_.ffn_dim, config_.conv_kernel,
                                                        rng.fork("block").fork(i)));
  }
}

Encoder::Forward Encoder::forward(const FloatMatrix& features, bool train, RngStream rng,
                                  const std::vector<uint8_t>* mask, const ad::Tensor* mask_emb) {
  if (features.rows < kSubsampleFactor) {
    throw DataError("encoder: input of " + std::to_string(features.rows) +
                    " frames is too short (need >= " + std::to_string(kSubsampleFactor) + ")");
  }
  if (features.cols != config_.input_dim) {
    throw ShapeError("encoder: input dim " + std::to_string(features.cols) + " != configured " +
                     std::to_string(config_.input_dim));
  }
  if ((mask == nullptr) != (mask_emb == nullptr)) {
    throw ConfigError("encoder: mask and mask embedding must be supplied together");
  }

  Tensor x = Tensor::from_values({1, features.rows, features.cols},
                                 std::vector<float>(features.data));
  x = ad::relu(ad::conv2d(x, conv1_w_, conv1_b_, 2, 1));
  x = ad::relu(ad::conv2d(x, conv2_w_, conv2_b_, 2, 1));
  x = ad::move_channels_last(x);  // T' x (ch * ceil(input_dim/4))
  Tensor extractor_out = linear(x, in_proj_);
  const int64_t t_sub = extractor_out.dim(0);

  Tensor h = extractor_out;
  if (mask != nullptr) {
    if (static_cast<int64_t>(mask->size()) != t_sub) {
      throw ShapeError("encoder: mask length " + std::to_string(mask->size()) +
                       " != subsampled length " + std::to_string(t_sub));
    }
    h = ad::mask_rows(h, *mask, *mask_emb);
  }
  h = ad::add_const(h, sinusoidal_positions(t_sub, config_.model_dim));
  h = ad::dropout(h, config_.dropout, rng.fork("input_drop"), train);

  Forward out;
  out.extractor_out = extractor_out;
  out.layers.reserve(static_cast<size_t>(config_.n_blocks));
  RngStream drop_rng = rng.fork("layerdrop");
  for (int i = 0; i < config_.n_blocks; ++i) {
    const bool skip =
        train && config_.layerdrop > 0.0f && drop_rng.fork(i).uniform() < config_.layerdrop;
    if (!skip) {
      h = conformer_block(h, block_params_[static_cast<size_t>(i)], config_.n_heads,
                          config_.dropout, train, rng.fork("block").fork(i));
    }
    out.layers.push_back(h);
  }
  out.final = h;
  return out;
}

int64_t Encoder::parameter_count() const { return count_params({&extractor_, &blocks_}); }

Decoder::Decoder(DecoderConfig config, RngStream init_rng) : config_(config) {
  config_.validate();
  const int64_t d = config_.model_dim;
  RngStream rng = init_rng.fork("decoder_init");
  embedding_ = params_.add("embedding",
                           Tensor::randn({config_.vocab_size, d}, rng.fork("emb"),
                                         1.0f / std::sqrt(static_cast<float>(d))));
  block_params_.reserve(static_cast<size_t>(config_.n_layers));
  for (int i = 0; i < config_.n_layers; ++i) {
    const std::string name = "layer" + std::to_string(i);
    RngStream lr = rng.fork("layer").fork(i);
    DecoderBlockParams p;
    p.self_attn = make_attention(params_, name + ".self", d, lr.fork("self"));
    p.cross_attn = make_attention(params_, name + ".cross", d, lr.fork("cross"));
    p.ffn = make_ffn(params_, name + ".ffn", d, config_.ffn_dim, lr.fork("ffn"));
    block_params_.push_back(std::move(p));
  }
  out_ln_ = make_ln(params_, "out_ln", d);
  // Small output head keeps initial logits near zero.
  out_proj_ = make_linear(params_, "out_proj", d, config_.vocab_size, rng.fork("out"), 0.02f);
}

Tensor Decoder::forward(const Tensor& encoder_hidden, const std::vector<int>& tokens_in,
                        bool train, RngStream rng) {
  if (!encoder_hidden.defined() || encoder_hidden.rank() != 2 || encoder_hidden.dim(0) < 1) {
    throw DataError("decoder: empty encoder output");
  }
  if (encoder_hidden.dim(1) != config_.model_dim) {
    throw ShapeError("decoder: encoder hidden dim " + std::to_string(encoder_hidden.dim(1)) +
                     " != model_dim " + std::to_string(config_.model_dim));
  }
  if (tokens_in.empty()) throw DataError("decoder: empty target sequence");
  if (static_cast<int>(tokens_in.size()) > config_.max_target_len) {
    throw ConfigError("decoder: target length " + std::to_string(tokens_in.size()) +
                      " exceeds max_target_len " + std::to_string(config_.max_target_len));
  }

  const int64_t d = config_.model_dim;
  Tensor h = ad::scale(ad::embedding_lookup(embedding_, tokens_in),
                       std::sqrt(static_cast<float>(d)));
  h = ad::add_const(h, sinusoidal_positions(static_cast<int64_t>(tokens_in.size()), d));
  h = ad::dropout(h, config_.dropout, rng.fork("input_drop"), train);

  for (int i = 0; i < config_.n_layers; ++i) {
    const DecoderBlockParams& p = block_params_[static_cast<size_t>(i)];
    RngStream lr = rng.fork("layer").fork(i);
    Tensor q = layer_norm_p(h, p.self_attn.ln);
    h = ad::add(h, attention(q, q, p.self_attn, config_.n_heads, /*causal=*/true, config_.dropout,
                             train, lr.fork("self")));
    Tensor cq = layer_norm_p(h, p.cross_attn.ln);
    h = ad::add(h, attention(cq, encoder_hidden, p.cross_attn, config_.n_heads, /*causal=*/false,
                             config_.dropout, train, lr.fork("cross")));
    Tensor f = ad::gelu(linear(layer_norm_p(h, p.ffn.ln), p.ffn.w1));
    f = ad::dropout(linear(f, p.ffn.w2), config_.dropout, lr.fork("ffn"), train);
    h = ad::add(h, f);
  }
  return linear(layer_norm_p(h, out_ln_), out_proj_);
}

int64_t Decoder::parameter_count() const { return count_params({&params_}); }

int64_t count_params(const std::vector<const ad::ParameterGroup*>& groups) {
  int64_t n = 0;
  for (const auto* g : groups) {
    for (const Tensor& t : g->params) n += t.numel();
  }
  return n;
}

}  // namespace seau::nn
