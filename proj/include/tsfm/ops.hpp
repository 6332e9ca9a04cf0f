#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tsfm/tensor.hpp"

namespace tsfm {

// Per-forward state: train/eval mode and the counters that make dropout
// masks a pure function of (seed, op index, step).
struct RunContext {
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t op_index = 0;

  static RunContext eval() { return {}; }
  static RunContext train(std::uint64_t seed, std::uint64_t step) { return {true, seed, step, 0}; }
};

// 2-D matrix product, a[m×k]·b[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in]·weightᵀ + bias with weight stored [out, in]. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Broadcast-add of a [d] vector along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x + pattern repeated to fill x (numel(x) must be a multiple of numel(pattern)).
Tensor add_tiled(const Tensor& x, const Tensor& pattern);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes.
Tensor transpose_last(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Selects slices along axis 0; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Rows of x[R, d] with mask[r] != 0 are replaced by token[d].
Tensor replace_rows(const Tensor& x, std::span<const std::uint8_t> mask, const Tensor& token);

Tensor gelu(const Tensor& x);
Tensor elu(const Tensor& x, double alpha = 1.0);
// Inverted dropout; identity when !ctx.training or p == 0.
Tensor dropout(const Tensor& x, double p, RunContext& ctx);
// Non-overlapping mean over windows of `window` along `axis`.
Tensor mean_pool(const Tensor& x, std::size_t axis, std::size_t window);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Cross-correlation. x is [N, c_in, len] (or [c_in, len]), kernels
// [c_out, c_in, k]; bias may be undefined.
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t pad_left,
              std::size_t pad_right);
Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding);

// Scaled dot-product attention on a single [n×d] sequence.
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);
// Rows of q/k/v ([G·seq_len, d]) form G independent sequences; columns split
// into n_heads contiguous heads.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t seq_len,
                           std::size_t n_heads);
// Softmax weights of single-head attention, [n×n]; not differentiable.
Tensor attention_weights(const Tensor& q, const Tensor& k);

// |DFT| along the last axis, full length (mirrored one-sided spectrum).
// Feature transform only: the result never carries gradient.
Tensor fft_magnitude(const Tensor& x);

Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);
// Mean negative log-softmax of the labelled class; logits [B, K].
Tensor cross_entropy(const Tensor& logits, std::span<const std::uint32_t> labels);

// Depthwise convolution over a (channel, patch) grid stored as rows
// [batch·channels·patches, d]; `axis` 0 runs along channels, 1 along patches.
// weight is [d, k] with odd k, zero padded to keep the grid size.
Tensor grid_depthwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t batch,
                           std::size_t channels, std::size_t patches, std::size_t axis);

}  // namespace tsfm
