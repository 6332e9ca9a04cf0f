#include "tsfm/nn.hpp"

#include <cmath>

#include "tsfm/errors.hpp"

namespace tsfm {

Tensor ParameterSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!value.is_leaf() || !value.requires_grad()) throw ContractError("parameter '" + name + "' must be a requires_grad leaf");
  items_.emplace_back(name, value);
  return value;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& item : items_)
    if (item.first == name) return true;
  return false;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.second);
  return out;
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.second.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& item : items_) item.second.zero_grad();
}

ParameterSet::Snapshot ParameterSet::snapshot() const {
  Snapshot s;
  s.reserve(items_.size());
  for (const auto& item : items_) s.emplace_back(item.second.data().begin(), item.second.data().end());
  return s;
}

void ParameterSet::restore(const Snapshot& values) {
  if (values.size() != items_.size()) throw ContractError("snapshot does not match parameter set");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto dst = items_[i].second.mutable_data();
    if (dst.size() != values[i].size()) throw ContractError("snapshot size mismatch for '" + items_[i].first + "'");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Tensor uniform_param(ParameterSet& params, const std::string& name, Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, -bound, bound);
  return params.add(name, Tensor(std::move(shape), std::move(v), true));
}

Tensor constant_param(ParameterSet& params, const std::string& name, Shape shape, double value) {
  return params.add(name, Tensor::full(std::move(shape), value, true));
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = uniform_param(params, name + ".weight", {out, in}, bound, rng);
  if (with_bias) l.bias = uniform_param(params, name + ".bias", {out}, bound, rng);
  return l;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, std::size_t dim) {
  LayerNorm n;
  n.gamma = constant_param(params, name + ".gamma", {dim}, 1.0);
  n.beta = constant_param(params, name + ".beta", {dim}, 0.0);
  return n;
}

SelfAttention SelfAttention::create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t heads,
                                    Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
  SelfAttention a;
  a.q = Linear::create(params, name + ".q", dim, dim, rng);
  a.k = Linear::create(params, name + ".k", dim, dim, rng);
  a.v = Linear::create(params, name + ".v", dim, dim, rng);
  a.out = Linear::create(params, name + ".out", dim, dim, rng);
  a.heads = heads;
  return a;
}

Tensor SelfAttention::attend(const Tensor& x, std::size_t seq_len) const {
  return multihead_attention(q(x), k(x), v(x), seq_len, heads);
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& name, std::size_t dim, std::size_t hidden,
                                Rng& rng) {
  return {Linear::create(params, name + ".fc1", dim, hidden, rng), Linear::create(params, name + ".fc2", hidden, dim, rng)};
}

TransformerBlock TransformerBlock::create(ParameterSet& params, const std::string& name, std::size_t dim,
                                          std::size_t heads, std::size_t mlp_hidden, double dropout_p, Rng& rng) {
  TransformerBlock b;
  b.norm1 = LayerNorm::create(params, name + ".norm1", dim);
  b.attn = SelfAttention::create(params, name + ".attn", dim, heads, rng);
  b.norm2 = LayerNorm::create(params, name + ".norm2", dim);
  b.mlp = FeedForward::create(params, name + ".mlp", dim, mlp_hidden, rng);
  b.dropout_p = dropout_p;
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, std::size_t seq_len, RunContext& ctx) const {
  const Tensor h = add(x, dropout(attn(norm1(x), seq_len), dropout_p, ctx));
  return add(h, dropout(mlp(norm2(h), dropout_p, ctx), dropout_p, ctx));
}

}  // namespace tsfm
