#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "tsfm/tensor.hpp"

namespace tsfm {

struct GradCheckOptions {
  double h = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

// Max over checked coordinates of |analytic − central difference| /
// max(1, |central difference|). `f` must rebuild its graph on every call and
// be deterministic (fixed dropout seed/step). Inputs must be requires_grad
// leaves.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts = {});

}  // namespace tsfm
