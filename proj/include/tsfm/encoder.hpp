#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "tsfm/dataset.hpp"
#include "tsfm/nn.hpp"
#include "tsfm/ops.hpp"

namespace tsfm {

// A foundation-model encoder F: R^{C×T} → R^Q applied to a batch.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::string kind() const = 0;
  // [batch, feature_dim(channels, length)]
  virtual Tensor encode(const SignalBatch& x, RunContext& ctx) const = 0;
  virtual std::size_t feature_dim(std::size_t channels, std::size_t length) const = 0;
  virtual ParameterSet& parameters() = 0;
  virtual const ParameterSet& parameters() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

}  // namespace tsfm
