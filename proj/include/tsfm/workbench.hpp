#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsfm/dataset.hpp"
#include "tsfm/encoder.hpp"

namespace tsfm::workbench {

struct Band {
  double freq_hz = 0.0;
  double amplitude = 1.0;
};

// Sample = Σ class bands (random phase per channel) × subject gain
//          + subject baseline + N(0, noise_sigma²).
struct SynthSpec {
  std::size_t n_subjects = 10;
  std::size_t samples_per_subject = 8;
  std::size_t channels = 2;
  std::size_t length = 512;
  double sample_rate_hz = 100.0;
  std::size_t n_classes = 2;
  // One signature per class; empty → default_signatures().
  std::vector<std::vector<Band>> class_bands;
  double gain_min = 0.8;
  double gain_max = 1.2;
  double baseline_sigma = 0.1;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  std::string subject_prefix = "S";

  void validate() const;
  // Class k: a single band at first_hz + k·spacing_hz, unit amplitude.
  static std::vector<std::vector<Band>> default_signatures(std::size_t n_classes, double first_hz = 3.0,
                                                           double spacing_hz = 4.0);
  std::vector<std::vector<Band>> signatures() const;
};

nlohmann::json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

// Sample j of subject i has label (i + j) mod K and is a pure function of
// (seed, i, j).
Dataset gen_synthetic(const SynthSpec& spec);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Shuffles subjects by seed and takes floor(f·n) subjects per split; leftover
// subjects go round-robin to train, val, test.
SplitIndices split_by_subject(const Dataset& ds, double train_frac = 0.6, double val_frac = 0.2, double test_frac = 0.2,
                              std::uint64_t seed = 0);

// Inclusive numeric subject ranges. The number is the trailing digits of the
// subject id ("S012" → 12). Subjects outside every range are left out.
struct SubjectRange {
  long first = 0;
  long last = 0;
};
SplitIndices split_by_subject_ranges(const Dataset& ds, SubjectRange train, SubjectRange val, SubjectRange test);
// "1-70,71-89,90-109"
std::vector<SubjectRange> parse_ranges(const std::string& text);
long subject_number(const std::string& id);

void apply_split_tags(Dataset& ds, const SplitIndices& split);
// Indices per tag; throws DataError if any subject carries more than one tag,
// a tag is unknown, or tags are missing.
SplitIndices split_from_tags(const Dataset& ds);
void check_split_leakage(const Dataset& ds);

// Model registry. `config` is a preset name ("full", "mini") or an object of
// overrides with an optional "preset" key.
std::unique_ptr<Encoder> make_encoder(const std::string& kind, const nlohmann::json& config, std::uint64_t seed);

struct GradCheckCase {
  std::string name;
  std::string module;  // tensor-core, mantis-model, cbramod-model, training-harness
  std::function<double(std::uint64_t seed)> run;
};

struct GradCheckResult {
  std::string name;
  std::string module;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;

const std::vector<GradCheckCase>& gradcheck_registry();
std::vector<GradCheckResult> run_gradchecks(const std::string& module_filter, std::size_t n_seeds);

// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 time limit
// exceeded, 4 verification failure (gradcheck).
int run_cli(int argc, const char* const* argv);

}  // namespace tsfm::workbench
