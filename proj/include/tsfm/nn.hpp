#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tsfm/ops.hpp"
#include "tsfm/random.hpp"
#include "tsfm/tensor.hpp"

namespace tsfm {

// Ordered, named collection of trainable leaves. Names are dotted paths
// (e.g. "mantis.blocks.0.attn.q.weight") and double as checkpoint keys.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return items_.size(); }
  std::size_t numel() const;

  void zero_grad();

  using Snapshot = std::vector<std::vector<double>>;
  Snapshot snapshot() const;
  void restore(const Snapshot& values);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// U(-bound, bound) parameter.
Tensor uniform_param(ParameterSet& params, const std::string& name, Shape shape, double bound, Rng& rng);
Tensor constant_param(ParameterSet& params, const std::string& name, Shape shape, double value);

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or undefined

  static Linear create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm create(ParameterSet& params, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

// Multi-head self-attention with separate Q/K/V projections and an output
// projection. Rows of the input are grouped into sequences of seq_len.
struct SelfAttention {
  Linear q, k, v, out;
  std::size_t heads = 1;

  static SelfAttention create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);
  // Attention output before the output projection.
  Tensor attend(const Tensor& x, std::size_t seq_len) const;
  Tensor operator()(const Tensor& x, std::size_t seq_len) const { return out(attend(x, seq_len)); }
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x, double p, RunContext& ctx) const { return fc2(dropout(gelu(fc1(x)), p, ctx)); }
};

// Pre-norm encoder block:
//   h = x + drop(attn(norm1(x)));  y = h + drop(mlp(norm2(h)))
struct TransformerBlock {
  LayerNorm norm1, norm2;
  SelfAttention attn;
  FeedForward mlp;
  double dropout_p = 0.0;

  static TransformerBlock create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                                 std::size_t mlp_hidden, double dropout_p, Rng& rng);
  Tensor operator()(const Tensor& x, std::size_t seq_len, RunContext& ctx) const;
};

}  // namespace tsfm
