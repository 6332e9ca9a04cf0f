#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tsfm::signal {

// Labelled multichannel window, row-major [channels × length].
struct TimeSeriesSample {
  std::size_t channels = 0;
  std::size_t length = 0;
  double sample_rate_hz = 0.0;
  std::vector<double> data;
  std::uint32_t label = 0;
  std::string subject_id;

  std::span<const double> channel(std::size_t c) const { return {data.data() + c * length, length}; }
  std::span<double> channel(std::size_t c) { return {data.data() + c * length, length}; }
  void validate() const;
};

// Unlabelled continuous recording, row-major [channels × length].
struct Recording {
  std::size_t channels = 0;
  std::size_t length = 0;
  double sample_rate_hz = 0.0;
  std::vector<double> data;
  std::string subject_id;
};

// Non-overlapping windows of one sample: [channels × patches × patch_len].
struct PatchGrid {
  std::size_t channels = 0;
  std::size_t patches = 0;
  std::size_t patch_len = 0;
  std::vector<double> data;

  double at(std::size_t c, std::size_t p, std::size_t k) const { return data[(c * patches + p) * patch_len + k]; }
};

struct PatchStats {
  std::vector<double> mu;
  std::vector<double> sigma;
};

inline constexpr std::size_t kLowpassTaps = 101;

// Hamming-windowed sinc, unit DC gain.
std::vector<double> design_lowpass(double cutoff_hz, double sample_rate_hz, std::size_t taps = kLowpassTaps);

// Zero-phase (forward-backward) FIR low-pass; output length equals input length.
std::vector<double> lowpass_filter(std::span<const double> x, double sample_rate_hz, double cutoff_hz = 30.0,
                                   std::size_t taps = kLowpassTaps);

// Band-limits when downsampling, then cubic-convolution interpolates onto the
// new grid (sample i sits at time i / to_hz). Constants and ramps pass through
// exactly. Output length round(T·to/from).
std::vector<double> resample(std::span<const double> x, double from_hz, double to_hz);

// Splits a recording into consecutive epoch_s windows, one label per window;
// the trailing partial window is dropped.
std::vector<TimeSeriesSample> epoch_segment(const Recording& record, std::span<const std::uint32_t> labels,
                                            double epoch_s = 30.0);

PatchGrid partition_patches(const TimeSeriesSample& x, std::size_t patch_len = 200);
// Flattens back to [channels × patches·patch_len].
std::vector<double> flatten_patches(const PatchGrid& grid);

// Linear interpolation onto `length` points spanning the original support
// (both endpoints preserved).
std::vector<double> interpolate_linear(std::span<const double> x, std::size_t length);
// interpolate_linear restricted to lengths that are multiples of 32.
std::vector<double> resize_to_length(std::span<const double> x, std::size_t length = 512);

// Per-channel zero mean / unit variance of a row-major [channels × length]
// block; the standard deviation is floored at eps.
std::vector<double> instance_standardize(std::span<const double> x, std::size_t channels, std::size_t length,
                                         double eps = 1e-8);

// y[0] = 0, y[i] = x[i] − x[i−1].
std::vector<double> first_difference(std::span<const double> x);

// Mean and population standard deviation of n equal contiguous windows.
PatchStats patch_stats(std::span<const double> x, std::size_t n = 32);

}  // namespace tsfm::signal
