#include <cmath>
#include <numbers>

#include "tsfm/errors.hpp"
#include "tsfm/random.hpp"
#include "tsfm/workbench.hpp"

namespace tsfm::workbench {

std::vector<std::vector<Band>> SynthSpec::default_signatures(std::size_t n_classes, double first_hz, double spacing_hz) {
  std::vector<std::vector<Band>> out(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) out[k] = {{first_hz + static_cast<double>(k) * spacing_hz, 1.0}};
  return out;
}

std::vector<std::vector<Band>> SynthSpec::signatures() const {
  return class_bands.empty() ? default_signatures(n_classes) : class_bands;
}

void SynthSpec::validate() const {
  if (n_subjects == 0) throw ConfigError("synthetic spec: n_subjects must be positive");
  if (n_classes == 0) throw ConfigError("synthetic spec: n_classes must be positive");
  if (samples_per_subject == 0 || channels == 0 || length == 0) throw ConfigError("synthetic spec: sizes must be positive");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("synthetic spec: sample_rate_hz must be positive");
  if (!(gain_min > 0.0 && gain_max >= gain_min)) throw ConfigError("synthetic spec: need 0 < gain_min <= gain_max");
  if (!(baseline_sigma >= 0.0 && noise_sigma >= 0.0)) throw ConfigError("synthetic spec: sigmas must be non-negative");
  const auto sig = signatures();
  if (sig.size() != n_classes) throw ConfigError("synthetic spec: one band list per class is required");
  for (std::size_t k = 0; k < sig.size(); ++k) {
    if (sig[k].empty()) throw ConfigError("synthetic spec: class " + std::to_string(k) + " has no bands");
    for (const auto& b : sig[k]) {
      if (!(b.freq_hz > 0.0 && b.freq_hz < sample_rate_hz / 2.0)) {
        throw ConfigError("synthetic spec: band at " + std::to_string(b.freq_hz) + " Hz is outside (0, Nyquist)");
      }
      if (!(b.amplitude > 0.0)) throw ConfigError("synthetic spec: band amplitudes must be positive");
    }
    for (std::size_t m = 0; m < k; ++m) {
      const bool same = sig[m].size() == sig[k].size() &&
                        std::equal(sig[m].begin(), sig[m].end(), sig[k].begin(), [](const Band& a, const Band& b) {
                          return a.freq_hz == b.freq_hz && a.amplitude == b.amplitude;
                        });
      if (same) throw ConfigError("synthetic spec: classes " + std::to_string(m) + " and " + std::to_string(k) + " share a signature");
    }
  }
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& cls : s.signatures()) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& b : cls) row.push_back({{"freq_hz", b.freq_hz}, {"amplitude", b.amplitude}});
    bands.push_back(row);
  }
  return {{"n_subjects", s.n_subjects},   {"samples_per_subject", s.samples_per_subject},
          {"channels", s.channels},       {"length", s.length},
          {"sample_rate_hz", s.sample_rate_hz}, {"n_classes", s.n_classes},
          {"class_bands", bands},         {"gain_min", s.gain_min},
          {"gain_max", s.gain_max},       {"baseline_sigma", s.baseline_sigma},
          {"noise_sigma", s.noise_sigma}, {"seed", s.seed},
          {"subject_prefix", s.subject_prefix}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.samples_per_subject = j.value("samples_per_subject", s.samples_per_subject);
    s.channels = j.value("channels", s.channels);
    s.length = j.value("length", s.length);
    s.sample_rate_hz = j.value("sample_rate_hz", s.sample_rate_hz);
    s.n_classes = j.value("n_classes", s.n_classes);
    if (j.contains("class_bands")) {
      for (const auto& cls : j.at("class_bands")) {
        std::vector<Band> bands;
        for (const auto& b : cls) bands.push_back({b.at("freq_hz").get<double>(), b.value("amplitude", 1.0)});
        s.class_bands.push_back(std::move(bands));
      }
    }
    s.gain_min = j.value("gain_min", s.gain_min);
    s.gain_max = j.value("gain_max", s.gain_max);
    s.baseline_sigma = j.value("baseline_sigma", s.baseline_sigma);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.subject_prefix = j.value("subject_prefix", s.subject_prefix);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

Dataset gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto sig = spec.signatures();
  Dataset ds;
  ds.channels = spec.channels;
  ds.length = spec.length;
  ds.sample_rate_hz = spec.sample_rate_hz;
  for (std::size_t k = 0; k < spec.n_classes; ++k) ds.label_names.push_back("class" + std::to_string(k));
  const std::size_t per = spec.channels * spec.length;
  ds.data.reserve(spec.n_subjects * spec.samples_per_subject * per);
  const int width = spec.n_subjects > 999 ? static_cast<int>(std::to_string(spec.n_subjects - 1).size()) : 3;

  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    Rng subject_rng(derive_seed(spec.seed, {0x7375626aULL, i}));
    const double gain = spec.gain_min == spec.gain_max ? spec.gain_min : uniform(subject_rng, spec.gain_min, spec.gain_max);
    std::vector<double> baseline(spec.channels, 0.0);
    if (spec.baseline_sigma > 0.0)
      for (auto& b : baseline) b = normal(subject_rng, 0.0, spec.baseline_sigma);
    std::string id = std::to_string(i);
    id = spec.subject_prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;

    for (std::size_t j = 0; j < spec.samples_per_subject; ++j) {
      Rng rng(derive_seed(spec.seed, {0x73616d70ULL, i, j}));
      const auto label = static_cast<std::uint32_t>((i + j) % spec.n_classes);
      for (std::size_t c = 0; c < spec.channels; ++c) {
        std::vector<double> phases;
        for (std::size_t b = 0; b < sig[label].size(); ++b) phases.push_back(uniform(rng, 0.0, 2.0 * std::numbers::pi));
        for (std::size_t t = 0; t < spec.length; ++t) {
          const double time = static_cast<double>(t) / spec.sample_rate_hz;
          double v = 0.0;
          for (std::size_t b = 0; b < sig[label].size(); ++b)
            v += sig[label][b].amplitude * std::sin(2.0 * std::numbers::pi * sig[label][b].freq_hz * time + phases[b]);
          v = v * gain + baseline[c];
          if (spec.noise_sigma > 0.0) v += normal(rng, 0.0, spec.noise_sigma);
          ds.data.push_back(v);
        }
      }
      ds.labels.push_back(label);
      ds.subject_ids.push_back(id);
    }
  }
  return ds;
}

}  // namespace tsfm::workbench
