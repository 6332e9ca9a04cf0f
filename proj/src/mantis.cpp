#include "tsfm/mantis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsfm/errors.hpp"

namespace tsfm::mantis {

void MantisConfig::validate() const {
  if (token_dim == 0 || n_heads == 0 || token_dim % n_heads != 0) {
    throw ConfigError("mantis: token_dim " + std::to_string(token_dim) + " must be divisible by n_heads " + std::to_string(n_heads));
  }
  if (n_patches == 0 || input_len != 16 * n_patches) {
    throw ConfigError("mantis: input_len must equal 16 · n_patches (got " + std::to_string(input_len) + " and " + std::to_string(n_patches) + ")");
  }
  if (input_len % 32 != 0) throw ConfigError("mantis: input_len must be a multiple of 32");
  if (scalar_dim == 0 || n_blocks == 0 || conv_kernel == 0 || mlp_ratio == 0) throw ConfigError("mantis: dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("mantis: dropout must be in [0, 1)");
}

MantisConfig MantisConfig::mini() {
  MantisConfig c;
  c.token_dim = 32;
  c.scalar_dim = 8;
  c.n_blocks = 2;
  c.n_heads = 4;
  return c;
}

nlohmann::json to_json(const MantisConfig& c) {
  return {{"token_dim", c.token_dim}, {"n_patches", c.n_patches}, {"input_len", c.input_len},
          {"scalar_dim", c.scalar_dim}, {"n_blocks", c.n_blocks},   {"n_heads", c.n_heads},
          {"dropout", c.dropout},       {"conv_kernel", c.conv_kernel}, {"mlp_ratio", c.mlp_ratio}};
}

MantisConfig mantis_config_from_json(const nlohmann::json& j) {
  MantisConfig c;
  if (j.is_string()) {
    if (j == "mini") return MantisConfig::mini();
    if (j == "full") return c;
    throw ConfigError("unknown mantis preset '" + j.get<std::string>() + "'");
  }
  if (j.contains("preset")) c = mantis_config_from_json(j.at("preset"));
  c.token_dim = j.value("token_dim", c.token_dim);
  c.n_patches = j.value("n_patches", c.n_patches);
  c.input_len = j.value("input_len", c.input_len);
  c.scalar_dim = j.value("scalar_dim", c.scalar_dim);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.dropout = j.value("dropout", c.dropout);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.validate();
  return c;
}

PreparedChannels prepare_channels(const SignalBatch& x, const MantisConfig& cfg) {
  if (x.values.size() != x.batch * x.channels * x.length || x.length == 0) throw DimensionError("mantis: malformed signal batch");
  const std::size_t n = x.batch * x.channels, len = cfg.input_len, np = cfg.n_patches;
  PreparedChannels out;
  out.count = n;
  out.length = len;
  out.normalized.resize(n * len);
  out.difference.resize(n * len);
  out.stats.resize(n * np * 2);
  for (std::size_t b = 0; b < x.batch; ++b)
    for (std::size_t c = 0; c < x.channels; ++c) {
      const std::size_t i = b * x.channels + c;
      const auto resized = signal::resize_to_length(x.channel(b, c), len);
      const auto stats = signal::patch_stats(resized, np);
      const auto norm = signal::instance_standardize(resized, 1, len);
      const auto diff = signal::first_difference(norm);
      std::copy(norm.begin(), norm.end(), out.normalized.begin() + static_cast<std::ptrdiff_t>(i * len));
      std::copy(diff.begin(), diff.end(), out.difference.begin() + static_cast<std::ptrdiff_t>(i * len));
      for (std::size_t j = 0; j < np; ++j) {
        out.stats[(i * np + j) * 2] = stats.mu[j];
        out.stats[(i * np + j) * 2 + 1] = stats.sigma[j];
      }
    }
  return out;
}

PreparedChannels prepare_channel(std::span<const double> x_norm, std::span<const double> x_raw, const MantisConfig& cfg) {
  if (x_norm.size() != cfg.input_len || x_raw.size() != cfg.input_len) {
    throw DimensionError("mantis: channel inputs must have length " + std::to_string(cfg.input_len) + ", got " +
                         std::to_string(x_norm.size()) + " and " + std::to_string(x_raw.size()));
  }
  PreparedChannels out;
  out.count = 1;
  out.length = cfg.input_len;
  out.normalized.assign(x_norm.begin(), x_norm.end());
  out.difference = signal::first_difference(x_norm);
  const auto stats = signal::patch_stats(x_raw, cfg.n_patches);
  for (std::size_t j = 0; j < cfg.n_patches; ++j) {
    out.stats.push_back(stats.mu[j]);
    out.stats.push_back(stats.sigma[j]);
  }
  return out;
}

std::vector<double> sinusoidal_pe(std::size_t len, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("positional encoding width must be even");
  std::vector<double> p(len * dim);
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      p[pos * dim + 2 * i] = std::sin(angle);
      p[pos * dim + 2 * i + 1] = std::cos(angle);
    }
  return p;
}

void AugmentConfig::validate() const {
  if (!(crop_min > 0.0 && crop_min <= crop_max && crop_max <= 1.0)) throw ConfigError("augment: need 0 < crop_min <= crop_max <= 1");
  if (!(jitter >= 0.0)) throw ConfigError("augment: jitter must be non-negative");
}

nlohmann::json to_json(const AugmentConfig& c) {
  return {{"crop_min", c.crop_min}, {"crop_max", c.crop_max}, {"jitter", c.jitter}};
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig c;
  c.crop_min = j.value("crop_min", c.crop_min);
  c.crop_max = j.value("crop_max", c.crop_max);
  c.jitter = j.value("jitter", c.jitter);
  c.validate();
  return c;
}

namespace {

void augment_into(std::span<const double> src, std::size_t channels, std::size_t length, std::span<double> dst, Rng& rng,
                  const AugmentConfig& cfg) {
  const double frac = cfg.crop_min == cfg.crop_max ? cfg.crop_min : uniform(rng, cfg.crop_min, cfg.crop_max);
  const std::size_t crop = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(frac * static_cast<double>(length))),
                                                   std::min<std::size_t>(2, length), length);
  const std::size_t start = crop == length ? 0 : std::uniform_int_distribution<std::size_t>(0, length - crop)(rng);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto window = src.subspan(c * length + start, crop);
    auto resized = signal::interpolate_linear(window, length);
    if (cfg.jitter > 0.0) {
      double mu = std::accumulate(resized.begin(), resized.end(), 0.0) / static_cast<double>(length);
      double var = 0.0;
      for (double v : resized) var += (v - mu) * (v - mu);
      const double sd = std::sqrt(var / static_cast<double>(length)) * cfg.jitter;
      if (sd > 0.0)
        for (auto& v : resized) v += normal(rng, 0.0, sd);
    }
    std::copy(resized.begin(), resized.end(), dst.begin() + static_cast<std::ptrdiff_t>(c * length));
  }
}

}  // namespace

signal::TimeSeriesSample augment(const signal::TimeSeriesSample& x, Rng& rng, const AugmentConfig& cfg) {
  cfg.validate();
  x.validate();
  signal::TimeSeriesSample out = x;
  augment_into(x.data, x.channels, x.length, out.data, rng, cfg);
  return out;
}

SignalBatch augment(const SignalBatch& x, Rng& rng, const AugmentConfig& cfg) {
  cfg.validate();
  SignalBatch out = x;
  const std::size_t per = x.channels * x.length;
  for (std::size_t b = 0; b < x.batch; ++b) {
    augment_into(std::span<const double>(x.values).subspan(b * per, per), x.channels, x.length,
                 std::span<double>(out.values).subspan(b * per, per), rng, cfg);
  }
  return out;
}

MantisModel::MantisModel(MantisConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, {0x6d616e746973ULL}));
  const std::size_t d = cfg_.token_dim, k = cfg_.conv_kernel;
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(k));
  conv_w_ = uniform_param(params_, "mantis.tokenizer.conv.weight", {d, 1, k}, conv_bound, rng);
  conv_b_ = uniform_param(params_, "mantis.tokenizer.conv.bias", {d}, conv_bound, rng);
  diff_conv_w_ = uniform_param(params_, "mantis.tokenizer.diff_conv.weight", {d, 1, k}, conv_bound, rng);
  diff_conv_b_ = uniform_param(params_, "mantis.tokenizer.diff_conv.bias", {d}, conv_bound, rng);
  scalar_ = Linear::create(params_, "mantis.tokenizer.scalar", 2, cfg_.scalar_dim, rng);
  proj_ = Linear::create(params_, "mantis.tokenizer.proj", cfg_.concat_width(), d, rng);
  token_norm_ = LayerNorm::create(params_, "mantis.tokenizer.norm", d);
  cls_ = uniform_param(params_, "mantis.cls_token", {1, d}, 0.02, rng);
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    blocks_.push_back(TransformerBlock::create(params_, "mantis.blocks." + std::to_string(b), d, cfg_.n_heads,
                                               cfg_.mlp_ratio * d, cfg_.dropout, rng));
  }
  pe_ = Tensor({cfg_.n_patches + 1, d}, sinusoidal_pe(cfg_.n_patches + 1, d));
}

Tensor MantisModel::tokenize(const PreparedChannels& in) const {
  const std::size_t n = in.count, len = cfg_.input_len, np = cfg_.n_patches, d = cfg_.token_dim, k = cfg_.conv_kernel;
  if (in.length != len) throw DimensionError("mantis: prepared series length " + std::to_string(in.length) + " != " + std::to_string(len));
  const std::size_t pad_left = (k - 1) / 2, pad_right = k / 2;
  auto branch = [&](const std::vector<double>& series, const Tensor& w, const Tensor& b) {
    const Tensor x({n, 1, len}, series);
    const Tensor pooled = mean_pool(conv1d(x, w, b, 1, pad_left, pad_right), 2, cfg_.patch_width());
    return reshape(transpose_last(pooled), {n * np, d});
  };
  const Tensor base = branch(in.normalized, conv_w_, conv_b_);
  const Tensor diff = branch(in.difference, diff_conv_w_, diff_conv_b_);
  const Tensor scalars = gelu(scalar_(Tensor({n * np, 2}, in.stats)));
  return token_norm_(proj_(concat({base, diff, scalars}, 1)));
}

Tensor MantisModel::add_class_token(const Tensor& tokens, std::size_t n) const {
  const std::size_t np = cfg_.n_patches, seq = np + 1;
  if (tokens.shape() != Shape{n * np, cfg_.token_dim}) throw DimensionError("mantis: token block " + shape_str(tokens.shape()));
  const Tensor stacked = concat({cls_, tokens}, 0);
  std::vector<std::size_t> rows(n * seq);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i * seq] = 0;
    for (std::size_t j = 0; j < np; ++j) rows[i * seq + 1 + j] = 1 + i * np + j;
  }
  return add_tiled(gather_rows(stacked, rows), pe_);
}

Tensor MantisModel::encode_sequences(const Tensor& seq, std::size_t n, RunContext& ctx) const {
  const std::size_t len = cfg_.n_patches + 1;
  if (seq.shape() != Shape{n * len, cfg_.token_dim}) throw DimensionError("mantis: sequence block " + shape_str(seq.shape()));
  Tensor x = seq;
  for (const auto& block : blocks_) x = block(x, len, ctx);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i * len;
  return gather_rows(x, rows);
}

TokenSequence MantisModel::tokenize_channel(std::span<const double> x_norm, std::span<const double> x_raw) const {
  const auto prepared = prepare_channel(x_norm, x_raw, cfg_);
  TokenSequence s;
  s.tokens = tokenize(prepared);
  s.with_cls = add_class_token(s.tokens, 1);
  return s;
}

Tensor MantisModel::encode_channel(const TokenSequence& seq, RunContext& ctx) const {
  return reshape(encode_sequences(seq.with_cls, 1, ctx), {cfg_.token_dim});
}

Tensor MantisModel::encode_sample(const signal::TimeSeriesSample& x, RunContext& ctx) const {
  return reshape(encode(batch_from_sample(x), ctx), {x.channels * cfg_.token_dim});
}

Tensor MantisModel::encode(const SignalBatch& x, RunContext& ctx) const {
  const auto prepared = prepare_channels(x, cfg_);
  const std::size_t n = prepared.count;
  const Tensor z = encode_sequences(add_class_token(tokenize(prepared), n), n, ctx);
  return reshape(z, {x.batch, x.channels * cfg_.token_dim});
}

}  // namespace tsfm::mantis
