#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsfm/signal.hpp"

namespace tsfm {

// Raw model input, row-major [batch × channels × length].
struct SignalBatch {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> values;

  std::span<const double> channel(std::size_t b, std::size_t c) const {
    return {values.data() + (b * channels + c) * length, length};
  }
  std::span<double> channel(std::size_t b, std::size_t c) { return {values.data() + (b * channels + c) * length, length}; }
};

// In-memory labelled dataset with fixed [channels × length] samples.
struct Dataset {
  std::size_t channels = 0;
  std::size_t length = 0;
  double sample_rate_hz = 0.0;
  std::vector<std::string> label_names;
  std::vector<double> data;
  std::vector<std::uint32_t> labels;
  std::vector<std::string> subject_ids;
  // Optional per-sample split tag ("train" / "val" / "test"); empty if unset.
  std::vector<std::string> split_tags;

  std::size_t size() const { return labels.size(); }
  std::size_t n_classes() const { return label_names.size(); }
  std::size_t sample_numel() const { return channels * length; }

  void validate() const;
  signal::TimeSeriesSample sample(std::size_t i) const;
  SignalBatch batch(std::span<const std::size_t> indices) const;
  SignalBatch all() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  void append(const signal::TimeSeriesSample& s);
  std::vector<std::string> subjects() const;  // distinct, first-appearance order
};

SignalBatch batch_from_sample(const signal::TimeSeriesSample& s);

}  // namespace tsfm
