#include "tsfm/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsfm/errors.hpp"

namespace tsfm::signal {

namespace {

std::vector<double> fir_causal(std::span<const double> x, std::span<const double> h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t kmax = std::min(h.size(), n + 1);
    double s = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) s += h[k] * x[n - k];
    y[n] = s;
  }
  return y;
}

}  // namespace

void TimeSeriesSample::validate() const {
  if (channels == 0 || length == 0) throw DimensionError("sample must have at least one channel and one time step");
  if (data.size() != channels * length) {
    throw DimensionError("sample data length " + std::to_string(data.size()) + " != " + std::to_string(channels) + "×" +
                         std::to_string(length));
  }
  if (!(sample_rate_hz > 0.0)) throw DataError("sample rate must be positive");
}

std::vector<double> design_lowpass(double cutoff_hz, double sample_rate_hz, std::size_t taps) {
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0) {
    throw ConfigError("low-pass cutoff " + std::to_string(cutoff_hz) + " Hz must lie in (0, Nyquist=" +
                      std::to_string(sample_rate_hz / 2.0) + " Hz)");
  }
  if (taps < 3 || taps % 2 == 0) throw ConfigError("low-pass tap count must be odd and >= 3");
  const double fc = cutoff_hz / sample_rate_hz;
  const double mid = static_cast<double>(taps - 1) / 2.0;
  std::vector<double> h(taps);
  double total = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double n = static_cast<double>(i) - mid;
    const double sinc = n == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(taps - 1));
    h[i] = sinc * window;
    total += h[i];
  }
  for (auto& v : h) v /= total;
  return h;
}

std::vector<double> lowpass_filter(std::span<const double> x, double sample_rate_hz, double cutoff_hz, std::size_t taps) {
  const auto h = design_lowpass(cutoff_hz, sample_rate_hz, taps);
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (n == 1) return {x[0]};
  // Odd reflection about each end keeps DC and linear trends intact.
  const std::size_t pad = std::min(taps - 1, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto y = fir_causal(ext, h);
  std::reverse(y.begin(), y.end());
  y = fir_causal(y, h);
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> resample(std::span<const double> x, double from_hz, double to_hz) {
  if (!(from_hz > 0.0) || !(to_hz > 0.0)) throw ConfigError("resample: rates must be positive");
  if (from_hz == to_hz) return {x.begin(), x.end()};
  if (x.empty()) return {};
  std::vector<double> src(x.begin(), x.end());
  if (to_hz < from_hz) src = lowpass_filter(src, from_hz, 0.45 * to_hz);
  const std::size_t n_out = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * to_hz / from_hz));
  std::vector<double> y(n_out);
  if (src.size() == 1) {
    std::fill(y.begin(), y.end(), src[0]);
    return y;
  }
  const std::size_t n = src.size();
  // Linear extrapolation outside the record keeps ramps exact at the edges.
  auto at = [&](std::ptrdiff_t j) {
    if (j < 0) return src[0] + static_cast<double>(j) * (src[1] - src[0]);
    if (j >= static_cast<std::ptrdiff_t>(n)) return src[n - 1] + static_cast<double>(j - static_cast<std::ptrdiff_t>(n) + 1) * (src[n - 1] - src[n - 2]);
    return src[static_cast<std::size_t>(j)];
  };
  const double ratio = from_hz / to_hz;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto k = static_cast<std::ptrdiff_t>(pos);
    const double t = pos - static_cast<double>(k);
    // Keys cubic convolution, a = -1/2.
    const double p0 = at(k - 1), p1 = at(k), p2 = at(k + 1), p3 = at(k + 2);
    y[i] = p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
  }
  return y;
}

std::vector<TimeSeriesSample> epoch_segment(const Recording& record, std::span<const std::uint32_t> labels, double epoch_s) {
  if (!(epoch_s > 0.0) || !(record.sample_rate_hz > 0.0)) throw ConfigError("epoch length and sample rate must be positive");
  if (record.data.size() != record.channels * record.length) throw DimensionError("recording data does not match its shape");
  const double exact = epoch_s * record.sample_rate_hz;
  const auto epoch_len = static_cast<std::size_t>(std::llround(exact));
  if (epoch_len == 0 || std::abs(exact - static_cast<double>(epoch_len)) > 1e-9) {
    throw ConfigError("epoch of " + std::to_string(epoch_s) + " s is not a whole number of samples");
  }
  const std::size_t n_epochs = record.length / epoch_len;
  if (labels.size() != n_epochs) {
    throw DataError("recording holds " + std::to_string(n_epochs) + " epochs but " + std::to_string(labels.size()) +
                    " labels were given");
  }
  std::vector<TimeSeriesSample> out;
  out.reserve(n_epochs);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    TimeSeriesSample s;
    s.channels = record.channels;
    s.length = epoch_len;
    s.sample_rate_hz = record.sample_rate_hz;
    s.label = labels[e];
    s.subject_id = record.subject_id;
    s.data.resize(record.channels * epoch_len);
    for (std::size_t c = 0; c < record.channels; ++c) {
      const double* src = record.data.data() + c * record.length + e * epoch_len;
      std::copy_n(src, epoch_len, s.data.data() + c * epoch_len);
    }
    out.push_back(std::move(s));
  }
  return out;
}

PatchGrid partition_patches(const TimeSeriesSample& x, std::size_t patch_len) {
  if (patch_len == 0) throw ConfigError("patch length must be positive");
  if (x.data.size() != x.channels * x.length) throw DimensionError("sample data does not match its shape");
  if (x.length < patch_len) {
    throw DimensionError("series length " + std::to_string(x.length) + " shorter than patch length " + std::to_string(patch_len));
  }
  PatchGrid g;
  g.channels = x.channels;
  g.patches = x.length / patch_len;
  g.patch_len = patch_len;
  g.data.resize(g.channels * g.patches * patch_len);
  for (std::size_t c = 0; c < x.channels; ++c)
    std::copy_n(x.data.data() + c * x.length, g.patches * patch_len, g.data.data() + c * g.patches * patch_len);
  return g;
}

std::vector<double> flatten_patches(const PatchGrid& grid) { return grid.data; }

std::vector<double> resize_to_length(std::span<const double> x, std::size_t length) {
  if (length == 0 || length % 32 != 0) throw ConfigError("target length " + std::to_string(length) + " is not a positive multiple of 32");
  return interpolate_linear(x, length);
}

std::vector<double> interpolate_linear(std::span<const double> x, std::size_t length) {
  if (length == 0) throw ConfigError("interpolation target length must be positive");
  if (x.empty()) throw DimensionError("cannot resize an empty signal");
  std::vector<double> y(length);
  if (x.size() == 1) {
    std::fill(y.begin(), y.end(), x[0]);
    return y;
  }
  if (x.size() == length) return {x.begin(), x.end()};
  if (length == 1) return {x[0]};
  const double step = static_cast<double>(x.size() - 1) / static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(i) * step;
    const std::size_t k = std::min(static_cast<std::size_t>(pos), x.size() - 2);
    const double frac = pos - static_cast<double>(k);
    y[i] = x[k] + (x[k + 1] - x[k]) * frac;
  }
  y.back() = x.back();
  return y;
}

std::vector<double> instance_standardize(std::span<const double> x, std::size_t channels, std::size_t length, double eps) {
  if (length < 2) throw DimensionError("instance standardization needs at least 2 time steps");
  if (x.size() != channels * length) throw DimensionError("standardize: data does not match channels × length");
  std::vector<double> y(x.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xr = x.data() + c * length;
    double mu = 0.0;
    for (std::size_t i = 0; i < length; ++i) mu += xr[i];
    mu /= static_cast<double>(length);
    double var = 0.0;
    for (std::size_t i = 0; i < length; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(length);
    // Flooring the std (rather than adding eps to the variance) keeps the
    // result exactly invariant to power-of-two rescaling.
    const double inv = 1.0 / std::max(std::sqrt(var), eps);
    for (std::size_t i = 0; i < length; ++i) y[c * length + i] = (xr[i] - mu) * inv;
  }
  return y;
}

std::vector<double> first_difference(std::span<const double> x) {
  if (x.size() < 2) throw DimensionError("first difference needs at least 2 samples");
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = 1; i < x.size(); ++i) y[i] = x[i] - x[i - 1];
  return y;
}

PatchStats patch_stats(std::span<const double> x, std::size_t n) {
  if (n == 0 || x.size() % n != 0) {
    throw DimensionError("signal length " + std::to_string(x.size()) + " not divisible into " + std::to_string(n) + " patches");
  }
  const std::size_t w = x.size() / n;
  PatchStats s;
  s.mu.resize(n);
  s.sigma.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < w; ++i) mu += x[j * w + i];
    mu /= static_cast<double>(w);
    double var = 0.0;
    for (std::size_t i = 0; i < w; ++i) var += (x[j * w + i] - mu) * (x[j * w + i] - mu);
    s.mu[j] = mu;
    s.sigma[j] = std::sqrt(var / static_cast<double>(w));
  }
  return s;
}

}  // namespace tsfm::signal
