#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tsfm/encoder.hpp"
#include "tsfm/nn.hpp"
#include "tsfm/random.hpp"
#include "tsfm/signal.hpp"

namespace tsfm::cbramod {

struct CBraModConfig {
  std::size_t patch_len = 200;
  std::size_t embed_dim = 200;
  std::size_t n_blocks = 12;
  std::size_t n_heads = 8;
  double mask_ratio = 0.5;
  std::size_t conv_channels = 8;
  std::size_t conv_kernel = 7;
  std::size_t acpe_time_kernel = 7;
  std::size_t acpe_channel_kernel = 3;
  std::size_t mlp_ratio = 4;
  double dropout = 0.1;
  // Per-sample, per-channel standardization before patching.
  bool standardize_input = true;

  void validate() const;
  // Two blocks, d = t = 40, four heads.
  static CBraModConfig mini();
};

nlohmann::json to_json(const CBraModConfig& cfg);
CBraModConfig cbramod_config_from_json(const nlohmann::json& j);

struct MaskSpec {
  std::size_t channels = 0;
  std::size_t patches = 0;
  std::vector<std::uint8_t> mask;  // [channels × patches], 1 = masked
  std::size_t n_masked = 0;
};

// Exactly floor(ratio·C·p) patches, drawn uniformly without replacement.
MaskSpec mask_patches(std::size_t channels, std::size_t patches, double ratio, Rng& rng);

// Patches of B samples as rows ordered (sample, channel, patch): [B·C·p, t].
struct PatchBatch {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t patches = 0;
  std::size_t patch_len = 0;
  std::vector<double> values;

  std::size_t rows() const { return batch * channels * patches; }
  Tensor tensor() const { return Tensor({rows(), patch_len}, values); }
};

PatchBatch make_patch_batch(const SignalBatch& x, const CBraModConfig& cfg);
PatchBatch make_patch_batch(const signal::PatchGrid& grid);

// Q/K/V projections only; the criss-cross block fuses both branches with one
// output projection.
struct AttentionBranch {
  Linear q, k, v;
  std::size_t heads = 1;

  static AttentionBranch create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                                Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len) const;
};

struct CrissCrossBlock {
  LayerNorm norm1, norm2;
  AttentionBranch spatial, temporal;
  Linear fuse;  // 2d → d
  FeedForward mlp;
  double dropout_p = 0.0;

  static CrissCrossBlock create(ParameterSet& params, const std::string& name, const CBraModConfig& cfg, Rng& rng);
  // x: rows (b, c, p) of width d.
  Tensor operator()(const Tensor& x, std::size_t batch, std::size_t channels, std::size_t patches,
                    RunContext& ctx) const;
};

class CBraModModel final : public Encoder {
 public:
  CBraModModel(CBraModConfig cfg, std::uint64_t seed);

  const CBraModConfig& config() const { return cfg_; }

  // [rows, t] → [rows, d]; each patch independently.
  Tensor embed_patches(const PatchBatch& x) const;
  Tensor embed_patches(const Tensor& patches) const;
  Tensor acpe(const Tensor& e, std::size_t batch, std::size_t channels, std::size_t patches) const;
  Tensor crisscross_block(std::size_t index, const Tensor& o, std::size_t batch, std::size_t channels,
                          std::size_t patches, RunContext& ctx) const;
  // mask, when given, covers all rows of x (concatenated per-sample masks).
  Tensor encode_patches(const PatchBatch& x, std::span<const std::uint8_t> mask, RunContext& ctx) const;
  Tensor reconstruct(const Tensor& er) const;

  std::string kind() const override { return "cbramod"; }
  Tensor encode(const SignalBatch& x, RunContext& ctx) const override;
  std::size_t feature_dim(std::size_t channels, std::size_t length) const override {
    return channels * (length / cfg_.patch_len) * cfg_.embed_dim;
  }
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override { return to_json(cfg_); }

  const Tensor& mask_token() const { return mask_token_; }
  const Tensor& reconstruction_weight() const { return w_r_; }

 private:
  CBraModConfig cfg_;
  ParameterSet params_;
  Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
  Tensor w_fft_;
  Tensor mask_token_;
  Tensor acpe_time_w_, acpe_time_b_, acpe_chan_w_, acpe_chan_b_;
  std::vector<CrissCrossBlock> blocks_;
  Tensor w_r_;  // [t, d], no bias
};

// Mean squared error over the masked rows only.
Tensor mae_loss(const Tensor& x_hat, const Tensor& x, std::span<const std::uint8_t> mask);
// [B·C·p, d] → [B, C·p·d] in (channel, patch, dim) order.
Tensor classify_features(const Tensor& er, std::size_t batch);

}  // namespace tsfm::cbramod
