#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tsfm/encoder.hpp"
#include "tsfm/nn.hpp"
#include "tsfm/random.hpp"
#include "tsfm/signal.hpp"

namespace tsfm::mantis {

struct MantisConfig {
  std::size_t token_dim = 256;
  std::size_t n_patches = 32;
  std::size_t input_len = 512;
  std::size_t scalar_dim = 64;
  std::size_t n_blocks = 6;
  std::size_t n_heads = 8;
  double dropout = 0.1;
  std::size_t conv_kernel = 16;
  std::size_t mlp_ratio = 4;

  void validate() const;
  std::size_t patch_width() const { return input_len / n_patches; }
  std::size_t concat_width() const { return 2 * token_dim + scalar_dim; }

  // Two blocks at width 32 with the full-size tokenizer geometry.
  static MantisConfig mini();
};

nlohmann::json to_json(const MantisConfig& cfg);
MantisConfig mantis_config_from_json(const nlohmann::json& j);

// Per-channel token matrix before and after the class token is prepended.
struct TokenSequence {
  Tensor tokens;    // [n_patches, token_dim]
  Tensor with_cls;  // [n_patches + 1, token_dim], positional encoding added
};

// Model-ready arrays for N independent channel series.
struct PreparedChannels {
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<double> normalized;  // [N, length]
  std::vector<double> difference;  // [N, length]
  std::vector<double> stats;       // [N, n_patches, 2] as (mu, sigma)
};

// resize → patch stats on the resized raw series → standardize → difference.
PreparedChannels prepare_channels(const SignalBatch& x, const MantisConfig& cfg);
// Same but from already resized (raw, normalized) single channel arrays.
PreparedChannels prepare_channel(std::span<const double> x_norm, std::span<const double> x_raw, const MantisConfig& cfg);

// Interleaved sin/cos, base 10000: P[pos, 2i] = sin(pos / 10000^(2i/dim)).
std::vector<double> sinusoidal_pe(std::size_t len, std::size_t dim);

struct AugmentConfig {
  double crop_min = 0.8;
  double crop_max = 1.0;
  double jitter = 0.05;  // noise σ as a fraction of each channel's std

  void validate() const;
};

nlohmann::json to_json(const AugmentConfig& cfg);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

// Random crop of crop_min..crop_max of the support (same window for all
// channels), linear resize back to the original length, then Gaussian jitter.
signal::TimeSeriesSample augment(const signal::TimeSeriesSample& x, Rng& rng, const AugmentConfig& cfg = {});
SignalBatch augment(const SignalBatch& x, Rng& rng, const AugmentConfig& cfg = {});

// Channel-independent tokenizer plus transformer encoder. Each channel is
// encoded to a token_dim descriptor (its class-token output); descriptors are
// concatenated in channel order.
class MantisModel final : public Encoder {
 public:
  MantisModel(MantisConfig cfg, std::uint64_t seed);

  const MantisConfig& config() const { return cfg_; }

  TokenSequence tokenize_channel(std::span<const double> x_norm, std::span<const double> x_raw) const;
  Tensor encode_channel(const TokenSequence& seq, RunContext& ctx) const;
  // [token_dim · C] for one sample.
  Tensor encode_sample(const signal::TimeSeriesSample& x, RunContext& ctx) const;

  // Batched building blocks; N channel series at once.
  Tensor tokenize(const PreparedChannels& in) const;                    // [N·n_patches, D]
  Tensor add_class_token(const Tensor& tokens, std::size_t n) const;    // [N·(n_patches+1), D]
  Tensor encode_sequences(const Tensor& seq, std::size_t n, RunContext& ctx) const;  // [N, D]

  std::string kind() const override { return "mantis"; }
  Tensor encode(const SignalBatch& x, RunContext& ctx) const override;
  std::size_t feature_dim(std::size_t channels, std::size_t) const override { return channels * cfg_.token_dim; }
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override { return to_json(cfg_); }

  const Tensor& class_token() const { return cls_; }
  const Tensor& positional_encoding() const { return pe_; }
  const Linear& scalar_encoder() const { return scalar_; }

 private:
  MantisConfig cfg_;
  ParameterSet params_;
  Tensor conv_w_, conv_b_;
  Tensor diff_conv_w_, diff_conv_b_;
  Linear scalar_;
  Linear proj_;
  LayerNorm token_norm_;
  Tensor cls_;
  std::vector<TransformerBlock> blocks_;
  Tensor pe_;  // constant [n_patches + 1, D]
};

}  // namespace tsfm::mantis
