#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsfm/cbramod.hpp"
#include "tsfm/dataset.hpp"
#include "tsfm/encoder.hpp"
#include "tsfm/mantis.hpp"
#include "tsfm/nn.hpp"

namespace tsfm::train {

// ⟨a/‖a‖, b/‖b‖⟩ with norms floored at 1e-12.
double scos(std::span<const double> a, std::span<const double> b);

// Mean over rows of −log softmax_j(scos(z_i, z'_j)/τ)[i].
Tensor info_nce(const Tensor& z, const Tensor& z_prime, double temperature);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;
};

// One decoupled AdamW update of a flat parameter block:
//   θ ← θ − lr·wd·θ;  θ ← θ − lr·m̂/(√v̂ + eps)
void adamw_step(std::span<double> theta, std::span<const double> grad, AdamState& state, double lr,
                const AdamWConfig& cfg);

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);
  void step(double lr);
  std::uint64_t steps_taken() const { return states_.empty() ? 0 : states_.front().step; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<AdamState> states_;
};

// Linear 0 → base over the first floor(warmup_frac·total) steps, then half
// cosine down to 0 at total_steps.
double cosine_warmup_lr(std::size_t step, std::size_t total_steps, double warmup_frac, double base_lr);

// Scales all gradients by max_norm/‖g‖ when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm);
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

enum class HeadKind { linear_preln, mlp3 };
HeadKind head_kind_from_string(const std::string& s);
std::string to_string(HeadKind k);

struct HeadConfig {
  HeadKind kind = HeadKind::mlp3;
  std::vector<std::size_t> hidden{256, 128};
  double dropout = 0.1;
};

nlohmann::json to_json(const HeadConfig& cfg);
HeadConfig head_config_from_json(const nlohmann::json& j);

class ClassifierHead {
 public:
  ClassifierHead(ParameterSet& params, std::size_t in_dim, std::size_t n_classes, const HeadConfig& cfg, Rng& rng);
  // linear_preln: affine(layer_norm(z)); mlp3: (affine → ELU → dropout) ×2 → affine.
  Tensor operator()(const Tensor& z, RunContext& ctx) const;
  const HeadConfig& config() const { return cfg_; }
  std::size_t in_dim() const { return in_dim_; }

 private:
  HeadConfig cfg_;
  std::size_t in_dim_ = 0;
  LayerNorm norm_;
  std::vector<Linear> layers_;
};

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 64;
  double base_lr = 1e-4;
  double weight_decay = 0.01;
  double warmup_frac = 0.2;
  double clip_norm = 1.0;
  std::size_t patience = 5;
  double max_wallclock_hours = 5.0;
  std::uint64_t seed = 0;
  double temperature = 0.1;
  // Pretraining only.
  std::size_t pretrain_steps = 500;
  mantis::AugmentConfig augment;
  std::vector<std::string> metrics{"balanced_accuracy", "cohens_kappa", "weighted_f1", "auroc", "auc_pr"};

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

enum class FitStatus { converged, early_stopped, time_limit_exceeded };
std::string to_string(FitStatus s);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double wallclock_s = 0.0;
  std::map<std::string, double> val_metrics;
};

struct FitReport {
  FitStatus status = FitStatus::converged;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_metric = std::numeric_limits<double>::quiet_NaN();  // validation cross-entropy
  std::map<std::string, double> test_metrics;                          // NaN when the time cap was hit
  double wallclock_s = 0.0;
  std::vector<EpochRecord> history;
  // Split reads in order, e.g. "train:1", "val:1", …, "test:final".
  std::vector<std::string> access_log;
};

// Metrics are reported ×100 with two decimals; NaN becomes the string "NaN".
// Timing fields are omitted when include_timing is false so that runs can
// be compared byte for byte.
nlohmann::json to_json(const FitReport& r, bool include_timing = true);
std::string history_csv(const std::vector<EpochRecord>& history);

// Tracks the best validation loss; should_stop() once `patience`
// consecutive epochs fail to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  // Returns true when the value is a new best.
  bool update(double val_loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct Evaluation {
  double loss = 0.0;
  std::vector<double> probabilities;  // [n × K]
  std::vector<std::uint32_t> labels;
};

// Encoder + classification head trained end to end (the encoder is never
// frozen).
class FineTuner {
 public:
  FineTuner(Encoder& encoder, const HeadConfig& head, std::size_t channels, std::size_t length, std::size_t n_classes,
            std::uint64_t seed);

  Tensor logits(const SignalBatch& x, RunContext& ctx) const;
  std::vector<Tensor> parameters() const;
  const ParameterSet& head_parameters() const { return head_params_; }
  ParameterSet& head_parameters() { return head_params_; }
  std::size_t n_classes() const { return n_classes_; }

  Evaluation evaluate(const Dataset& data, std::size_t batch_size = 64) const;
  std::map<std::string, double> score(const Evaluation& ev, const std::vector<std::string>& names) const;

  FitReport fit(const Dataset& train, const Dataset& val, const Dataset& test, const TrainConfig& cfg);

 private:
  Encoder& encoder_;
  ParameterSet head_params_;
  std::unique_ptr<ClassifierHead> head_;
  std::size_t n_classes_;
};

// Throws DataError when a subject appears in more than one of the datasets
// or any of them is empty.
void check_disjoint_subjects(const Dataset& train, const Dataset& val, const Dataset& test);

struct PretrainReport {
  FitStatus status = FitStatus::converged;
  std::size_t steps_run = 0;
  std::vector<double> losses;  // loss at each step, before its update
  double wallclock_s = 0.0;
};

nlohmann::json to_json(const PretrainReport& r, bool include_timing = true);

// Two augmented views per sample, InfoNCE on the encoder outputs.
PretrainReport pretrain_contrastive(Encoder& encoder, const Dataset& data, const TrainConfig& cfg);
// 50% (config mask_ratio) patch masking, reconstruction loss on masked patches.
PretrainReport pretrain_mae(cbramod::CBraModModel& model, const Dataset& data, const TrainConfig& cfg);

// Batch indices drawn for a pretraining step: without replacement, a pure
// function of (seed, step).
std::vector<std::size_t> pretrain_batch(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step);

}  // namespace tsfm::train
