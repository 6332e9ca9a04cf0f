#include <cmath>

#include "tsfm/cbramod.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/gradcheck.hpp"
#include "tsfm/mantis.hpp"
#include "tsfm/train.hpp"
#include "tsfm/workbench.hpp"

namespace tsfm::workbench {

std::unique_ptr<Encoder> make_encoder(const std::string& kind, const nlohmann::json& config, std::uint64_t seed) {
  if (kind == "mantis") return std::make_unique<mantis::MantisModel>(mantis::mantis_config_from_json(config), seed);
  if (kind == "cbramod") return std::make_unique<cbramod::CBraModModel>(cbramod::cbramod_config_from_json(config), seed);
  throw ConfigError("unknown model '" + kind + "' (expected mantis or cbramod)");
}

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

Tensor random_leaf(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng, 0.0, scale);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor random_const(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = normal(rng, 0.0, scale);
  return Tensor(std::move(shape), std::move(v));
}

// Contracts an arbitrary output with fixed random weights so every output
// coordinate contributes to the checked scalar.
Tensor project(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

GradCheckOptions opts(std::uint64_t seed, std::size_t coords = 0) { return {1e-5, coords, seed}; }

// Unary op on a random [m, n] input.
GradCheckCase unary(const std::string& name, std::function<Tensor(const Tensor&)> op) {
  return {name, "tensor-core", [op](std::uint64_t seed) {
            Rng rng(derive_seed(seed, {0x756eULL}));
            const Shape s{pick(rng, 1, 5), pick(rng, 1, 6)};
            const Tensor x = random_leaf(s, rng);
            Shape out_shape;
            {
              NoGradGuard ng;
              out_shape = op(x).shape();
            }
            const Tensor r = random_const(out_shape, rng);
            return grad_check([&] { return project(op(x), r); }, {x}, opts(seed));
          }};
}

std::vector<GradCheckCase> build_registry() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"matmul", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
                     const Tensor a = random_leaf({m, k}, rng), b = random_leaf({k, n}, rng), r = random_const({m, n}, rng);
                     return grad_check([&] { return project(matmul(a, b), r); }, {a, b}, opts(seed));
                   }});
  cases.push_back({"linear", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t m = pick(rng, 1, 5), in = pick(rng, 1, 5), out = pick(rng, 1, 5);
                     const Tensor x = random_leaf({m, in}, rng), w = random_leaf({out, in}, rng), b = random_leaf({out}, rng);
                     const Tensor r = random_const({m, out}, rng);
                     return grad_check([&] { return project(linear(x, w, b), r); }, {x, w, b}, opts(seed));
                   }});
  cases.push_back({"add_sub_mul", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
                     const Tensor a = random_leaf(s, rng), b = random_leaf(s, rng), c = random_leaf(s, rng);
                     const Tensor r = random_const(s, rng);
                     return grad_check([&] { return project(mul(sub(add(a, b), c), a), r); }, {a, b, c}, opts(seed));
                   }});
  cases.push_back({"add_bias_tiled", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t m = pick(rng, 1, 4), n = pick(rng, 1, 4);
                     const Tensor x = random_leaf({m, n}, rng), b = random_leaf({n}, rng), p = random_leaf({1, n}, rng);
                     const Tensor r = random_const({m, n}, rng);
                     return grad_check([&] { return project(add_tiled(add_bias(x, b), p), r); }, {x, b, p}, opts(seed));
                   }});
  cases.push_back(unary("scale_sum_mean", [](const Tensor& x) { return add(scale(sum(x), 0.3), mean(mul(x, x))); }));
  cases.push_back(unary("reshape_transpose", [](const Tensor& x) {
    return transpose_last(reshape(x, {1, x.dim(0), x.dim(1)}));
  }));
  cases.push_back(unary("gelu", [](const Tensor& x) { return gelu(x); }));
  cases.push_back(unary("elu", [](const Tensor& x) { return elu(x, 1.0); }));
  cases.push_back(unary("dropout_fixed_mask", [](const Tensor& x) {
    RunContext ctx = RunContext::train(7, 3);
    return dropout(x, 0.3, ctx);
  }));
  cases.push_back(unary("l2_normalize_rows", [](const Tensor& x) { return l2_normalize_rows(x); }));
  cases.push_back({"concat_gather_replace", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t m = pick(rng, 2, 5), n = pick(rng, 1, 4);
                     const Tensor a = random_leaf({m, n}, rng), b = random_leaf({m, n}, rng), tok = random_leaf({2 * n}, rng);
                     std::vector<std::size_t> rows;
                     for (std::size_t i = 0; i < 2 * m; ++i) rows.push_back(pick(rng, 0, m - 1));
                     std::vector<std::uint8_t> mask(2 * m);
                     for (auto& v : mask) v = static_cast<std::uint8_t>(pick(rng, 0, 1));
                     const Tensor r = random_const({2 * m, 2 * n}, rng);
                     return grad_check(
                         [&] { return project(replace_rows(gather_rows(concat({a, b}, 1), rows), mask, tok), r); }, {a, b, tok},
                         opts(seed));
                   }});
  cases.push_back({"mean_pool", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t c = pick(rng, 1, 3), w = pick(rng, 1, 4), n = pick(rng, 1, 4);
                     const Tensor x = random_leaf({c, w * n}, rng);
                     const Tensor r = random_const({c, n}, rng);
                     return grad_check([&] { return project(mean_pool(x, 1, w), r); }, {x}, opts(seed));
                   }});
  cases.push_back({"layer_norm", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t m = pick(rng, 1, 4), d = pick(rng, 2, 6);
                     const Tensor x = random_leaf({m, d}, rng), g = random_leaf({d}, rng), b = random_leaf({d}, rng);
                     const Tensor r = random_const({m, d}, rng);
                     return grad_check([&] { return project(layer_norm(x, g, b, 1e-5), r); }, {x, g, b}, opts(seed));
                   }});
  cases.push_back({"conv1d", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 4);
                     const std::size_t len = pick(rng, k, 9), stride = pick(rng, 1, 2), pl = pick(rng, 0, 2), pr = pick(rng, 0, 2);
                     const Tensor x = random_leaf({n, cin, len}, rng), w = random_leaf({cout, cin, k}, rng), b = random_leaf({cout}, rng);
                     const std::size_t lout = (len + pl + pr - k) / stride + 1;
                     const Tensor r = random_const({n, cout, lout}, rng);
                     return grad_check([&] { return project(conv1d(x, w, b, stride, pl, pr), r); }, {x, w, b}, opts(seed));
                   }});
  cases.push_back({"softmax_attention", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = pick(rng, 1, 5), d = pick(rng, 1, 4);
                     const Tensor q = random_leaf({n, d}, rng), k = random_leaf({n, d}, rng), v = random_leaf({n, d}, rng);
                     const Tensor r = random_const({n, d}, rng);
                     return grad_check([&] { return project(softmax_attention(q, k, v), r); }, {q, k, v}, opts(seed));
                   }});
  cases.push_back({"multihead_attention", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t g = pick(rng, 1, 3), len = pick(rng, 1, 4), h = pick(rng, 1, 3), dh = pick(rng, 1, 3);
                     const Shape s{g * len, h * dh};
                     const Tensor q = random_leaf(s, rng), k = random_leaf(s, rng), v = random_leaf(s, rng);
                     const Tensor r = random_const(s, rng);
                     return grad_check([&] { return project(multihead_attention(q, k, v, len, h), r); }, {q, k, v}, opts(seed));
                   }});
  cases.push_back({"fft_feature_projection", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t m = pick(rng, 1, 4), t = pick(rng, 2, 8), d = pick(rng, 1, 4);
                     const Tensor x = random_const({m, t}, rng), w = random_leaf({d, t}, rng), r = random_const({m, d}, rng);
                     return grad_check([&] { return project(linear(fft_magnitude(x), w), r); }, {w}, opts(seed));
                   }});
  cases.push_back({"grid_depthwise_conv", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t b = pick(rng, 1, 2), c = pick(rng, 1, 3), p = pick(rng, 1, 4), d = pick(rng, 1, 3);
                     const Tensor x = random_leaf({b * c * p, d}, rng);
                     const Tensor wt = random_leaf({d, 2 * pick(rng, 0, 2) + 1}, rng), bt = random_leaf({d}, rng);
                     const Tensor wc = random_leaf({d, 2 * pick(rng, 0, 1) + 1}, rng), bc = random_leaf({d}, rng);
                     const Tensor r = random_const({b * c * p, d}, rng);
                     return grad_check(
                         [&] {
                           return project(add(grid_depthwise_conv(x, wt, bt, b, c, p, 1), grid_depthwise_conv(x, wc, bc, b, c, p, 0)), r);
                         },
                         {x, wt, bt, wc, bc}, opts(seed));
                   }});
  cases.push_back({"cross_entropy", "tensor-core", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t b = pick(rng, 1, 5), k = pick(rng, 2, 5);
                     const Tensor z = random_leaf({b, k}, rng, 2.0);
                     std::vector<std::uint32_t> y(b);
                     for (auto& v : y) v = static_cast<std::uint32_t>(pick(rng, 0, k - 1));
                     return grad_check([&] { return cross_entropy(z, y); }, {z}, opts(seed));
                   }});

  cases.push_back({"info_nce", "training-harness", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const std::size_t n = pick(rng, 2, 5), d = pick(rng, 2, 6);
                     const Tensor a = random_leaf({n, d}, rng), b = random_leaf({n, d}, rng);
                     return grad_check([&] { return train::info_nce(a, b, 0.5); }, {a, b}, opts(seed));
                   }});
  for (auto kind : {train::HeadKind::linear_preln, train::HeadKind::mlp3}) {
    cases.push_back({"head_" + train::to_string(kind), "training-harness", [kind](std::uint64_t seed) {
                       Rng rng(seed);
                       const std::size_t b = pick(rng, 2, 4), in = pick(rng, 3, 8), k = pick(rng, 2, 4);
                       ParameterSet params;
                       train::HeadConfig hc{kind, {6, 5}, 0.2};
                       train::ClassifierHead head(params, in, k, hc, rng);
                       const Tensor z = random_leaf({b, in}, rng);
                       std::vector<std::uint32_t> y(b);
                       for (auto& v : y) v = static_cast<std::uint32_t>(pick(rng, 0, k - 1));
                       auto inputs = params.tensors();
                       inputs.push_back(z);
                       return grad_check(
                           [&] {
                             RunContext ctx = RunContext::train(seed, 1);
                             return cross_entropy(head(z, ctx), y);
                           },
                           inputs, opts(seed));
                     }});
  }

  cases.push_back({"mantis_mini_end_to_end", "mantis-model", [](std::uint64_t seed) {
                     Rng rng(seed);
                     mantis::MantisModel model(mantis::MantisConfig::mini(), seed);
                     SignalBatch x{2, 2, pick(rng, 64, 700), {}};
                     x.values.resize(x.batch * x.channels * x.length);
                     for (auto& v : x.values) v = normal(rng, 0.0, 20.0);
                     const Tensor r = random_const({x.batch, model.feature_dim(x.channels, x.length)}, rng);
                     return grad_check(
                         [&] {
                           RunContext ctx = RunContext::train(seed, 2);
                           return project(model.encode(x, ctx), r);
                         },
                         model.parameters().tensors(), opts(seed, 3));
                   }});
  cases.push_back({"cbramod_mini_end_to_end", "cbramod-model", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto cfg = cbramod::CBraModConfig::mini();
                     cbramod::CBraModModel model(cfg, seed);
                     SignalBatch x{1, 2, cfg.patch_len * 3, {}};
                     x.values.resize(x.batch * x.channels * x.length);
                     for (auto& v : x.values) v = normal(rng, 0.0, 1.0);
                     const auto pb = cbramod::make_patch_batch(x, cfg);
                     const auto mask = cbramod::mask_patches(pb.channels, pb.patches, cfg.mask_ratio, rng).mask;
                     return grad_check(
                         [&] {
                           RunContext ctx = RunContext::train(seed, 2);
                           const Tensor er = model.encode_patches(pb, mask, ctx);
                           return cbramod::mae_loss(model.reconstruct(er), pb.tensor(), mask);
                         },
                         model.parameters().tensors(), opts(seed, 3));
                   }});
  return cases;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_registry() {
  static const std::vector<GradCheckCase> cases = build_registry();
  return cases;
}

std::vector<GradCheckResult> run_gradchecks(const std::string& module_filter, std::size_t n_seeds) {
  std::vector<GradCheckResult> out;
  bool matched = false;
  for (const auto& c : gradcheck_registry()) {
    if (!module_filter.empty() && module_filter != c.module && module_filter != c.name) continue;
    matched = true;
    for (std::uint64_t s = 0; s < n_seeds; ++s) {
      const double err = c.run(s);
      out.push_back({c.name, c.module, s, err, std::isfinite(err) && err < kGradCheckTolerance});
    }
  }
  if (!matched) throw ConfigError("no gradient checks registered for '" + module_filter + "'");
  return out;
}

}  // namespace tsfm::workbench
