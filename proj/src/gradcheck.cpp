#include "tsfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tsfm/errors.hpp"

namespace tsfm {

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts) {
  if (!(opts.h > 0.0)) throw ConfigError("grad_check: step must be positive");
  std::vector<Tensor> params = inputs;
  for (auto& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) throw ContractError("grad_check: inputs must be requires_grad leaves");
    p.zero_grad();
  }
  const Tensor loss = f();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  std::mt19937_64 rng(opts.seed);
  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<std::size_t> coords(params[k].numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_input && coords.size() > opts.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_input);
    }
    for (auto i : coords) {
      const double saved = params[k].data()[i];
      params[k].mutable_data()[i] = saved + opts.h;
      const double up = f().item();
      params[k].mutable_data()[i] = saved - opts.h;
      const double down = f().item();
      params[k].mutable_data()[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace tsfm
