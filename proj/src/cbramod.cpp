#include "tsfm/cbramod.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsfm/errors.hpp"

namespace tsfm::cbramod {

void CBraModConfig::validate() const {
  if (embed_dim == 0 || n_heads == 0 || embed_dim % n_heads != 0) {
    throw ConfigError("cbramod: embed_dim " + std::to_string(embed_dim) + " must be divisible by n_heads " + std::to_string(n_heads));
  }
  if (patch_len != embed_dim) {
    throw ConfigError("cbramod: the convolutional embedding keeps the patch width, so patch_len (" + std::to_string(patch_len) +
                      ") must equal embed_dim (" + std::to_string(embed_dim) + ")");
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("cbramod: mask_ratio must lie in (0, 1)");
  for (std::size_t k : {conv_kernel, acpe_time_kernel, acpe_channel_kernel})
    if (k % 2 == 0) throw ConfigError("cbramod: kernel sizes must be odd");
  if (n_blocks == 0 || conv_channels == 0 || mlp_ratio == 0) throw ConfigError("cbramod: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("cbramod: dropout must be in [0, 1)");
}

CBraModConfig CBraModConfig::mini() {
  CBraModConfig c;
  c.patch_len = 40;
  c.embed_dim = 40;
  c.n_blocks = 2;
  c.n_heads = 4;
  return c;
}

nlohmann::json to_json(const CBraModConfig& c) {
  return {{"patch_len", c.patch_len},
          {"embed_dim", c.embed_dim},
          {"n_blocks", c.n_blocks},
          {"n_heads", c.n_heads},
          {"mask_ratio", c.mask_ratio},
          {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv_kernel},
          {"acpe_time_kernel", c.acpe_time_kernel},
          {"acpe_channel_kernel", c.acpe_channel_kernel},
          {"mlp_ratio", c.mlp_ratio},
          {"dropout", c.dropout},
          {"standardize_input", c.standardize_input}};
}

CBraModConfig cbramod_config_from_json(const nlohmann::json& j) {
  CBraModConfig c;
  if (j.is_string()) {
    if (j == "mini") return CBraModConfig::mini();
    if (j == "full") return c;
    throw ConfigError("unknown cbramod preset '" + j.get<std::string>() + "'");
  }
  if (j.contains("preset")) c = cbramod_config_from_json(j.at("preset"));
  c.patch_len = j.value("patch_len", c.patch_len);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.acpe_time_kernel = j.value("acpe_time_kernel", c.acpe_time_kernel);
  c.acpe_channel_kernel = j.value("acpe_channel_kernel", c.acpe_channel_kernel);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.dropout = j.value("dropout", c.dropout);
  c.standardize_input = j.value("standardize_input", c.standardize_input);
  c.validate();
  return c;
}

MaskSpec mask_patches(std::size_t channels, std::size_t patches, double ratio, Rng& rng) {
  const std::size_t n = channels * patches;
  if (n < 2) throw DataError("masking needs at least 2 patches, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask ratio must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  if (k == 0) throw DataError("mask ratio " + std::to_string(ratio) + " masks no patch of a " + std::to_string(n) + "-patch grid");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first k entries are the masked set.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  MaskSpec m{channels, patches, std::vector<std::uint8_t>(n, 0), k};
  for (std::size_t i = 0; i < k; ++i) m.mask[idx[i]] = 1;
  return m;
}

PatchBatch make_patch_batch(const SignalBatch& x, const CBraModConfig& cfg) {
  const std::size_t t = cfg.patch_len;
  if (x.values.size() != x.batch * x.channels * x.length) throw DimensionError("cbramod: malformed signal batch");
  if (x.length < t) {
    throw DimensionError("series length " + std::to_string(x.length) + " shorter than patch length " + std::to_string(t));
  }
  PatchBatch pb{x.batch, x.channels, x.length / t, t, {}};
  pb.values.reserve(pb.rows() * t);
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t c = 0; c < x.channels; ++c) {
      auto ch = x.channel(b, c);
      std::vector<double> v = cfg.standardize_input ? signal::instance_standardize(ch, 1, ch.size())
                                                    : std::vector<double>(ch.begin(), ch.end());
      pb.values.insert(pb.values.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(pb.patches * t));
    }
  return pb;
}

PatchBatch make_patch_batch(const signal::PatchGrid& grid) {
  return {1, grid.channels, grid.patches, grid.patch_len, grid.data};
}

AttentionBranch AttentionBranch::create(ParameterSet& params, const std::string& name, std::size_t dim,
                                        std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("attention width not divisible by head count");
  return {Linear::create(params, name + ".q", dim, dim, rng), Linear::create(params, name + ".k", dim, dim, rng),
          Linear::create(params, name + ".v", dim, dim, rng), heads};
}

Tensor AttentionBranch::operator()(const Tensor& x, std::size_t seq_len) const {
  return multihead_attention(q(x), k(x), v(x), seq_len, heads);
}

CrissCrossBlock CrissCrossBlock::create(ParameterSet& params, const std::string& name, const CBraModConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.embed_dim;
  CrissCrossBlock b;
  b.norm1 = LayerNorm::create(params, name + ".norm1", d);
  b.spatial = AttentionBranch::create(params, name + ".s_attn", d, cfg.n_heads, rng);
  b.temporal = AttentionBranch::create(params, name + ".t_attn", d, cfg.n_heads, rng);
  b.fuse = Linear::create(params, name + ".fuse", 2 * d, d, rng);
  b.norm2 = LayerNorm::create(params, name + ".norm2", d);
  b.mlp = FeedForward::create(params, name + ".mlp", d, cfg.mlp_ratio * d, rng);
  b.dropout_p = cfg.dropout;
  return b;
}

Tensor CrissCrossBlock::operator()(const Tensor& x, std::size_t batch, std::size_t channels, std::size_t patches,
                                   RunContext& ctx) const {
  const std::size_t rows = batch * channels * patches;
  if (x.rank() != 2 || x.dim(0) != rows) throw DimensionError("criss-cross block: input " + shape_str(x.shape()));
  const Tensor h = norm1(x);

  // Rows are (b, c, p); spatial attention needs (b, p, c) so that each
  // sequence is one time index across channels.
  std::vector<std::size_t> to_spatial(rows), from_spatial(rows);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < patches; ++p) {
        const std::size_t src = (b * channels + c) * patches + p;
        const std::size_t dst = (b * patches + p) * channels + c;
        to_spatial[dst] = src;
        from_spatial[src] = dst;
      }
  const Tensor s = gather_rows(spatial(gather_rows(h, to_spatial), channels), from_spatial);
  const Tensor t = temporal(h, patches);

  const Tensor y = add(x, dropout(fuse(concat({s, t}, 1)), dropout_p, ctx));
  return add(y, dropout(mlp(norm2(y), dropout_p, ctx), dropout_p, ctx));
}

CBraModModel::CBraModModel(CBraModConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, {0x636272616d6f64ULL}));
  const std::size_t t = cfg_.patch_len, d = cfg_.embed_dim, w = cfg_.conv_channels, k = cfg_.conv_kernel;
  auto conv_bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  conv1_w_ = uniform_param(params_, "cbramod.embed.conv1.weight", {w, 1, k}, conv_bound(k), rng);
  conv1_b_ = uniform_param(params_, "cbramod.embed.conv1.bias", {w}, conv_bound(k), rng);
  conv2_w_ = uniform_param(params_, "cbramod.embed.conv2.weight", {w, w, k}, conv_bound(w * k), rng);
  conv2_b_ = uniform_param(params_, "cbramod.embed.conv2.bias", {w}, conv_bound(w * k), rng);
  conv3_w_ = uniform_param(params_, "cbramod.embed.conv3.weight", {1, w, k}, conv_bound(w * k), rng);
  conv3_b_ = uniform_param(params_, "cbramod.embed.conv3.bias", {1}, conv_bound(w * k), rng);
  // Spectral magnitudes grow like sqrt(t) per bin, hence the extra 1/sqrt(t).
  w_fft_ = uniform_param(params_, "cbramod.embed.fft.weight", {d, t}, 1.0 / static_cast<double>(t), rng);
  mask_token_ = uniform_param(params_, "cbramod.mask_token", {d}, 0.02, rng);
  acpe_time_w_ = uniform_param(params_, "cbramod.acpe.time.weight", {d, cfg_.acpe_time_kernel},
                               conv_bound(cfg_.acpe_time_kernel), rng);
  acpe_time_b_ = constant_param(params_, "cbramod.acpe.time.bias", {d}, 0.0);
  acpe_chan_w_ = uniform_param(params_, "cbramod.acpe.channel.weight", {d, cfg_.acpe_channel_kernel},
                               conv_bound(cfg_.acpe_channel_kernel), rng);
  acpe_chan_b_ = constant_param(params_, "cbramod.acpe.channel.bias", {d}, 0.0);
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b)
    blocks_.push_back(CrissCrossBlock::create(params_, "cbramod.blocks." + std::to_string(b), cfg_, rng));
  w_r_ = uniform_param(params_, "cbramod.reconstruct.weight", {t, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
}

Tensor CBraModModel::embed_patches(const PatchBatch& x) const {
  if (x.patch_len != cfg_.patch_len) {
    throw ConfigError("cbramod: patch length " + std::to_string(x.patch_len) + " does not match the configured " +
                      std::to_string(cfg_.patch_len));
  }
  return embed_patches(x.tensor());
}

Tensor CBraModModel::embed_patches(const Tensor& patches) const {
  const std::size_t t = cfg_.patch_len;
  if (patches.rank() != 2 || patches.dim(1) != t) {
    throw ConfigError("cbramod: patches " + shape_str(patches.shape()) + " do not have the configured length " + std::to_string(t));
  }
  const std::size_t rows = patches.dim(0), pad = cfg_.conv_kernel / 2;
  Tensor h = reshape(patches, {rows, 1, t});
  h = gelu(conv1d(h, conv1_w_, conv1_b_, 1, pad, pad));
  h = gelu(conv1d(h, conv2_w_, conv2_b_, 1, pad, pad));
  h = conv1d(h, conv3_w_, conv3_b_, 1, pad, pad);
  const Tensor e_time = reshape(h, {rows, cfg_.embed_dim});
  const Tensor e_freq = linear(fft_magnitude(patches), w_fft_);
  return add(e_time, e_freq);
}

Tensor CBraModModel::acpe(const Tensor& e, std::size_t batch, std::size_t channels, std::size_t patches) const {
  const Tensor along_time = grid_depthwise_conv(e, acpe_time_w_, acpe_time_b_, batch, channels, patches, 1);
  const Tensor along_channels = grid_depthwise_conv(e, acpe_chan_w_, acpe_chan_b_, batch, channels, patches, 0);
  return add(e, add(along_time, along_channels));
}

Tensor CBraModModel::crisscross_block(std::size_t index, const Tensor& o, std::size_t batch, std::size_t channels,
                                      std::size_t patches, RunContext& ctx) const {
  if (index >= blocks_.size()) throw ConfigError("cbramod: block index " + std::to_string(index) + " out of range");
  return blocks_[index](o, batch, channels, patches, ctx);
}

Tensor CBraModModel::encode_patches(const PatchBatch& x, std::span<const std::uint8_t> mask, RunContext& ctx) const {
  Tensor e = embed_patches(x);
  if (!mask.empty()) {
    if (mask.size() != x.rows()) {
      throw DimensionError("cbramod: mask covers " + std::to_string(mask.size()) + " patches, batch has " + std::to_string(x.rows()));
    }
    e = replace_rows(e, mask, mask_token_);
  }
  e = acpe(e, x.batch, x.channels, x.patches);
  for (const auto& block : blocks_) e = block(e, x.batch, x.channels, x.patches, ctx);
  return e;
}

Tensor CBraModModel::reconstruct(const Tensor& er) const { return linear(er, w_r_); }

Tensor CBraModModel::encode(const SignalBatch& x, RunContext& ctx) const {
  const PatchBatch pb = make_patch_batch(x, cfg_);
  return classify_features(encode_patches(pb, {}, ctx), x.batch);
}

Tensor mae_loss(const Tensor& x_hat, const Tensor& x, std::span<const std::uint8_t> mask) {
  if (x_hat.shape() != x.shape() || x_hat.rank() != 2) {
    throw DimensionError("mae_loss: shapes " + shape_str(x_hat.shape()) + " and " + shape_str(x.shape()) + " differ");
  }
  if (mask.size() != x.dim(0)) throw DimensionError("mae_loss: mask length does not match the patch count");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) rows.push_back(i);
  if (rows.empty()) throw DataError("mae_loss: no masked patches");
  const Tensor diff = sub(gather_rows(x_hat, rows), gather_rows(x, rows));
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(diff.numel()));
}

Tensor classify_features(const Tensor& er, std::size_t batch) {
  if (batch == 0 || er.rank() != 2 || er.dim(0) % batch != 0) throw DimensionError("classify_features: " + shape_str(er.shape()));
  return reshape(er, {batch, er.numel() / batch});
}

}  // namespace tsfm::cbramod
