#include "tsfm/dataset.hpp"

#include <algorithm>
#include <unordered_set>

#include "tsfm/errors.hpp"

namespace tsfm {

void Dataset::validate() const {
  if (channels == 0 || length == 0) throw DataError("dataset needs at least one channel and one time step");
  if (label_names.empty()) throw DataError("dataset has no label names");
  if (data.size() != size() * sample_numel()) {
    throw DataError("dataset holds " + std::to_string(data.size()) + " values, expected " +
                    std::to_string(size() * sample_numel()));
  }
  if (subject_ids.size() != size()) throw DataError("subject id count does not match sample count");
  if (!split_tags.empty() && split_tags.size() != size()) throw DataError("split tag count does not match sample count");
  for (auto l : labels) {
    if (l >= label_names.size()) throw DataError("label " + std::to_string(l) + " out of range for " + std::to_string(label_names.size()) + " classes");
  }
}

signal::TimeSeriesSample Dataset::sample(std::size_t i) const {
  if (i >= size()) throw DataError("sample index out of range");
  signal::TimeSeriesSample s;
  s.channels = channels;
  s.length = length;
  s.sample_rate_hz = sample_rate_hz;
  s.data.assign(data.begin() + static_cast<std::ptrdiff_t>(i * sample_numel()),
                data.begin() + static_cast<std::ptrdiff_t>((i + 1) * sample_numel()));
  s.label = labels[i];
  s.subject_id = subject_ids[i];
  return s;
}

SignalBatch Dataset::batch(std::span<const std::size_t> indices) const {
  SignalBatch b;
  b.batch = indices.size();
  b.channels = channels;
  b.length = length;
  b.values.resize(indices.size() * sample_numel());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw DataError("sample index out of range");
    std::copy_n(data.data() + indices[k] * sample_numel(), sample_numel(), b.values.data() + k * sample_numel());
  }
  return b;
}

SignalBatch Dataset::all() const {
  SignalBatch b;
  b.batch = size();
  b.channels = channels;
  b.length = length;
  b.values = data;
  return b;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.channels = channels;
  d.length = length;
  d.sample_rate_hz = sample_rate_hz;
  d.label_names = label_names;
  d.data = batch(indices).values;
  for (auto i : indices) {
    d.labels.push_back(labels[i]);
    d.subject_ids.push_back(subject_ids[i]);
    if (!split_tags.empty()) d.split_tags.push_back(split_tags[i]);
  }
  return d;
}

void Dataset::append(const signal::TimeSeriesSample& s) {
  if (s.channels != channels || s.length != length) throw DimensionError("appended sample shape differs from dataset");
  if (s.data.size() != sample_numel()) throw DimensionError("appended sample data does not match its shape");
  data.insert(data.end(), s.data.begin(), s.data.end());
  labels.push_back(s.label);
  subject_ids.push_back(s.subject_id);
}

std::vector<std::string> Dataset::subjects() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& s : subject_ids)
    if (seen.insert(s).second) out.push_back(s);
  return out;
}

SignalBatch batch_from_sample(const signal::TimeSeriesSample& s) {
  s.validate();
  SignalBatch b;
  b.batch = 1;
  b.channels = s.channels;
  b.length = s.length;
  b.values = s.data;
  return b;
}

}  // namespace tsfm
