#include "tsfm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "tsfm/errors.hpp"
#include "tsfm/metrics.hpp"

namespace tsfm::train {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

bool over_budget(const Stopwatch& clock, double max_hours) { return clock.seconds() >= max_hours * 3600.0; }

nlohmann::json percent(double v) {
  if (std::isnan(v)) return "NaN";
  return std::round(v * 10000.0) / 100.0;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  return idx;
}

}  // namespace

double scos(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("scos: vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
}

Tensor info_nce(const Tensor& z, const Tensor& z_prime, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("info_nce: temperature must be positive");
  if (z.rank() != 2 || z.shape() != z_prime.shape() || z.dim(0) == 0) {
    throw DimensionError("info_nce: views " + shape_str(z.shape()) + " and " + shape_str(z_prime.shape()));
  }
  const Tensor sim = matmul(l2_normalize_rows(z), transpose_last(l2_normalize_rows(z_prime)));
  std::vector<std::uint32_t> diagonal(z.dim(0));
  std::iota(diagonal.begin(), diagonal.end(), 0U);
  return cross_entropy(scale(sim, 1.0 / temperature), diagonal);
}

void adamw_step(std::span<double> theta, std::span<const double> grad, AdamState& state, double lr,
                const AdamWConfig& cfg) {
  if (theta.size() != grad.size()) throw DimensionError("adamw_step: parameter and gradient sizes differ");
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  if (state.m.size() != theta.size()) throw DimensionError("adamw_step: optimizer state does not match parameter");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] -= lr * cfg.weight_decay * theta[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg), states_(params_.size()) {}

void AdamW::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    std::vector<double> g(p.numel(), 0.0);
    if (!p.grad().empty()) g.assign(p.grad().begin(), p.grad().end());
    adamw_step(p.mutable_data(), g, states_[i], lr, cfg_);
  }
}

double cosine_warmup_lr(std::size_t step, std::size_t total_steps, double warmup_frac, double base_lr) {
  if (total_steps == 0) throw ConfigError("cosine_warmup_lr: total_steps must be positive");
  if (step > total_steps) throw ConfigError("cosine_warmup_lr: step beyond total_steps");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("cosine_warmup_lr: warmup_frac must lie in [0, 1)");
  const auto warmup = static_cast<std::size_t>(std::floor(warmup_frac * static_cast<double>(total_steps)));
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto g : grads)
      for (double& v : g) v *= s;
  }
  return norm;
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  std::vector<std::span<double>> views;
  for (const auto& p : params)
    if (!p.grad().empty()) views.push_back(Tensor(p).mutable_grad());
  return clip_grad_norm(views, max_norm);
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "linear_preln") return HeadKind::linear_preln;
  if (s == "mlp3") return HeadKind::mlp3;
  throw ConfigError("unknown head '" + s + "' (expected linear_preln or mlp3)");
}

std::string to_string(HeadKind k) { return k == HeadKind::linear_preln ? "linear_preln" : "mlp3"; }

nlohmann::json to_json(const HeadConfig& c) {
  return {{"kind", to_string(c.kind)}, {"hidden", c.hidden}, {"dropout", c.dropout}};
}

HeadConfig head_config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  if (j.contains("kind")) c.kind = head_kind_from_string(j.at("kind").get<std::string>());
  c.hidden = j.value("hidden", c.hidden);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

ClassifierHead::ClassifierHead(ParameterSet& params, std::size_t in_dim, std::size_t n_classes, const HeadConfig& cfg,
                               Rng& rng)
    : cfg_(cfg), in_dim_(in_dim) {
  if (in_dim == 0 || n_classes < 2) throw ConfigError("classifier head needs a positive input width and at least 2 classes");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("head dropout must be in [0, 1)");
  if (cfg.kind == HeadKind::linear_preln) {
    norm_ = LayerNorm::create(params, "head.norm", in_dim);
    layers_.push_back(Linear::create(params, "head.out", in_dim, n_classes, rng));
    return;
  }
  if (cfg.hidden.size() != 2 || cfg.hidden[0] == 0 || cfg.hidden[1] == 0) {
    throw ConfigError("mlp3 head needs exactly two positive hidden widths");
  }
  layers_.push_back(Linear::create(params, "head.fc1", in_dim, cfg.hidden[0], rng));
  layers_.push_back(Linear::create(params, "head.fc2", cfg.hidden[0], cfg.hidden[1], rng));
  layers_.push_back(Linear::create(params, "head.out", cfg.hidden[1], n_classes, rng));
}

Tensor ClassifierHead::operator()(const Tensor& z, RunContext& ctx) const {
  if (z.rank() != 2 || z.dim(1) != in_dim_) {
    throw DimensionError("classifier head expects [B, " + std::to_string(in_dim_) + "], got " + shape_str(z.shape()));
  }
  if (cfg_.kind == HeadKind::linear_preln) return layers_[0](norm_(z));
  Tensor h = dropout(elu(layers_[0](z)), cfg_.dropout, ctx);
  h = dropout(elu(layers_[1](h)), cfg_.dropout, ctx);
  return layers_[2](h);
}

void TrainConfig::validate() const {
  if (max_epochs == 0 || batch_size == 0 || pretrain_steps == 0) throw ConfigError("epochs, batch size and steps must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(max_wallclock_hours >= 0.0)) throw ConfigError("max_wallclock_hours must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  augment.validate();
  for (const auto& m : metrics)
    if (std::find(metrics::metric_names().begin(), metrics::metric_names().end(), m) == metrics::metric_names().end())
      throw ConfigError("unknown metric '" + m + "'");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"weight_decay", c.weight_decay},
          {"warmup_frac", c.warmup_frac},
          {"clip_norm", c.clip_norm},
          {"patience", c.patience},
          {"max_wallclock_hours", c.max_wallclock_hours},
          {"seed", c.seed},
          {"temperature", c.temperature},
          {"pretrain_steps", c.pretrain_steps},
          {"augment", mantis::to_json(c.augment)},
          {"metrics", c.metrics}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.patience = j.value("patience", c.patience);
  c.max_wallclock_hours = j.value("max_wallclock_hours", c.max_wallclock_hours);
  c.seed = j.value("seed", c.seed);
  c.temperature = j.value("temperature", c.temperature);
  c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
  if (j.contains("augment")) c.augment = mantis::augment_config_from_json(j.at("augment"));
  c.metrics = j.value("metrics", c.metrics);
  c.validate();
  return c;
}

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::early_stopped: return "early_stopped";
    case FitStatus::time_limit_exceeded: return "time_limit_exceeded";
  }
  return "unknown";
}

nlohmann::json to_json(const FitReport& r, bool include_timing) {
  nlohmann::json tests = nlohmann::json::object();
  for (const auto& [k, v] : r.test_metrics) tests[k] = percent(v);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : r.history) {
    nlohmann::json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}};
    nlohmann::json vm = nlohmann::json::object();
    for (const auto& [k, v] : e.val_metrics) vm[k] = percent(v);
    row["val_metrics"] = vm;
    if (include_timing) row["wallclock_s"] = e.wallclock_s;
    history.push_back(row);
  }
  nlohmann::json j{{"status", to_string(r.status)},
                   {"epochs_run", r.epochs_run},
                   {"best_epoch", r.best_epoch},
                   {"best_val_metric", std::isnan(r.best_val_metric) ? nlohmann::json("NaN") : nlohmann::json(r.best_val_metric)},
                   {"test_metrics", tests},
                   {"history", history},
                   {"access_log", r.access_log}};
  if (include_timing) j["wallclock_s"] = r.wallclock_s;
  return j;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,lr,wallclock_s\n";
  char line[256];
  for (const auto& e : history) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.lr, e.wallclock_s);
    out << line;
  }
  return out.str();
}

bool EarlyStopping::update(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

void check_disjoint_subjects(const Dataset& train, const Dataset& val, const Dataset& test) {
  const std::pair<const char*, const Dataset*> splits[] = {{"train", &train}, {"val", &val}, {"test", &test}};
  std::map<std::string, std::string> owner;
  for (const auto& [name, ds] : splits) {
    if (ds->size() == 0) throw DataError(std::string(name) + " split is empty");
    for (const auto& s : ds->subjects()) {
      auto [it, fresh] = owner.emplace(s, name);
      if (!fresh) throw DataError("subject '" + s + "' appears in both " + it->second + " and " + name + " splits");
    }
  }
}

FineTuner::FineTuner(Encoder& encoder, const HeadConfig& head, std::size_t channels, std::size_t length,
                     std::size_t n_classes, std::uint64_t seed)
    : encoder_(encoder), n_classes_(n_classes) {
  Rng rng(derive_seed(seed, {0x68656164ULL}));
  head_ = std::make_unique<ClassifierHead>(head_params_, encoder.feature_dim(channels, length), n_classes, head, rng);
}

Tensor FineTuner::logits(const SignalBatch& x, RunContext& ctx) const { return (*head_)(encoder_.encode(x, ctx), ctx); }

std::vector<Tensor> FineTuner::parameters() const {
  auto all = encoder_.parameters().tensors();
  for (const auto& t : head_params_.tensors()) all.push_back(t);
  return all;
}

Evaluation FineTuner::evaluate(const Dataset& data, std::size_t batch_size) const {
  NoGradGuard no_grad;
  Evaluation ev;
  ev.labels = data.labels;
  ev.probabilities.reserve(data.size() * n_classes_);
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    RunContext ctx = RunContext::eval();
    const Tensor z = logits(data.batch(idx), ctx);
    std::vector<std::uint32_t> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.labels[idx[i]];
    total += cross_entropy(z, y).item() * static_cast<double>(idx.size());
    const auto v = z.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* row = v.data() + r * n_classes_;
      const double mx = *std::max_element(row, row + n_classes_);
      double s = 0.0;
      for (std::size_t c = 0; c < n_classes_; ++c) s += std::exp(row[c] - mx);
      for (std::size_t c = 0; c < n_classes_; ++c) ev.probabilities.push_back(std::exp(row[c] - mx) / s);
    }
  }
  ev.loss = total / static_cast<double>(data.size());
  return ev;
}

std::map<std::string, double> FineTuner::score(const Evaluation& ev, const std::vector<std::string>& names) const {
  std::map<std::string, double> out;
  for (const auto& name : names) {
    try {
      out[name] = metrics::compute(name, ev.labels, ev.probabilities, n_classes_);
    } catch (const DataError&) {
      // Ranking metrics are undefined when a split holds a single class.
      out[name] = kNaN;
    }
  }
  return out;
}

FitReport FineTuner::fit(const Dataset& train, const Dataset& val, const Dataset& test, const TrainConfig& cfg) {
  cfg.validate();
  check_disjoint_subjects(train, val, test);
  for (const Dataset* d : {&train, &val, &test})
    if (d->n_classes() != n_classes_) throw DataError("split class count does not match the classifier head");

  Stopwatch clock;
  FitReport report;
  auto nan_metrics = [&] {
    for (const auto& m : cfg.metrics) report.test_metrics[m] = kNaN;
  };

  ParameterSet& enc = encoder_.parameters();
  const auto params = parameters();
  AdamW opt(params, {0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.max_epochs * per_epoch;
  EarlyStopping stopper(cfg.patience);
  ParameterSet::Snapshot best_enc = enc.snapshot(), best_head = head_params_.snapshot();
  std::size_t step = 0;
  bool timed_out = false;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !timed_out; ++epoch) {
    if (over_budget(clock, cfg.max_wallclock_hours)) {
      timed_out = true;
      break;
    }
    report.access_log.push_back("train:" + std::to_string(epoch));
    const auto order = shuffled(train.size(), derive_seed(cfg.seed, {0x6f72646572ULL, epoch}));
    double loss_sum = 0.0, lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      std::vector<std::uint32_t> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = train.labels[idx[i]];
      RunContext ctx = RunContext::train(derive_seed(cfg.seed, {0x64726f70ULL}), step);
      enc.zero_grad();
      head_params_.zero_grad();
      Tensor loss = cross_entropy(logits(train.batch(idx), ctx), y);
      loss_sum += loss.item() * static_cast<double>(idx.size());
      loss.backward();
      clip_grad_norm(params, cfg.clip_norm);
      lr = cosine_warmup_lr(step, total_steps, cfg.warmup_frac, cfg.base_lr);
      opt.step(lr);
      ++step;
      if (over_budget(clock, cfg.max_wallclock_hours)) {
        timed_out = true;
        break;
      }
    }
    if (timed_out) break;

    report.access_log.push_back("val:" + std::to_string(epoch));
    const Evaluation ev = evaluate(val, cfg.batch_size);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), ev.loss, lr, clock.seconds(), score(ev, cfg.metrics)};
    report.history.push_back(rec);
    report.epochs_run = epoch;
    if (stopper.update(ev.loss)) {
      report.best_epoch = epoch;
      report.best_val_metric = ev.loss;
      best_enc = enc.snapshot();
      best_head = head_params_.snapshot();
    }
    if (stopper.should_stop()) {
      report.status = FitStatus::early_stopped;
      break;
    }
  }

  if (timed_out) {
    report.status = FitStatus::time_limit_exceeded;
    nan_metrics();
    report.wallclock_s = clock.seconds();
    return report;
  }

  enc.restore(best_enc);
  head_params_.restore(best_head);
  report.access_log.push_back("test:final");
  report.test_metrics = score(evaluate(test, cfg.batch_size), cfg.metrics);
  report.wallclock_s = clock.seconds();
  return report;
}

nlohmann::json to_json(const PretrainReport& r, bool include_timing) {
  nlohmann::json j{{"status", to_string(r.status)}, {"steps_run", r.steps_run}, {"losses", r.losses}};
  if (include_timing) j["wallclock_s"] = r.wallclock_s;
  return j;
}

std::vector<std::size_t> pretrain_batch(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step) {
  auto idx = shuffled(n, derive_seed(seed, {0x62617463ULL, step}));
  idx.resize(std::min(batch_size, n));
  return idx;
}

namespace {

template <typename LossFn>
PretrainReport pretrain_loop(ParameterSet& params, const Dataset& data, const TrainConfig& cfg, LossFn&& loss_fn) {
  cfg.validate();
  if (data.size() == 0) throw DataError("pretraining dataset is empty");
  Stopwatch clock;
  PretrainReport report;
  const auto tensors = params.tensors();
  AdamW opt(tensors, {0.9, 0.999, 1e-8, cfg.weight_decay});
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    if (over_budget(clock, cfg.max_wallclock_hours)) {
      report.status = FitStatus::time_limit_exceeded;
      break;
    }
    const auto idx = pretrain_batch(data.size(), cfg.batch_size, cfg.seed, step);
    RunContext ctx = RunContext::train(derive_seed(cfg.seed, {0x64726f70ULL}), step);
    params.zero_grad();
    Tensor loss = loss_fn(data.batch(idx), step, ctx);
    report.losses.push_back(loss.item());
    loss.backward();
    clip_grad_norm(tensors, cfg.clip_norm);
    opt.step(cosine_warmup_lr(step, cfg.pretrain_steps, cfg.warmup_frac, cfg.base_lr));
    report.steps_run = step + 1;
  }
  report.wallclock_s = clock.seconds();
  return report;
}

}  // namespace

PretrainReport pretrain_contrastive(Encoder& encoder, const Dataset& data, const TrainConfig& cfg) {
  return pretrain_loop(encoder.parameters(), data, cfg, [&](const SignalBatch& x, std::size_t step, RunContext& ctx) {
    Rng rng(derive_seed(cfg.seed, {0x61756775ULL, step}));
    const SignalBatch a = mantis::augment(x, rng, cfg.augment);
    const SignalBatch b = mantis::augment(x, rng, cfg.augment);
    const Tensor za = encoder.encode(a, ctx);
    const Tensor zb = encoder.encode(b, ctx);
    return info_nce(za, zb, cfg.temperature);
  });
}

PretrainReport pretrain_mae(cbramod::CBraModModel& model, const Dataset& data, const TrainConfig& cfg) {
  const auto& mc = model.config();
  return pretrain_loop(model.parameters(), data, cfg, [&](const SignalBatch& x, std::size_t step, RunContext& ctx) {
    const cbramod::PatchBatch pb = cbramod::make_patch_batch(x, mc);
    std::vector<std::uint8_t> mask;
    mask.reserve(pb.rows());
    for (std::size_t b = 0; b < pb.batch; ++b) {
      Rng rng(derive_seed(cfg.seed, {0x6d61736bULL, step, b}));
      const auto m = cbramod::mask_patches(pb.channels, pb.patches, mc.mask_ratio, rng);
      mask.insert(mask.end(), m.mask.begin(), m.mask.end());
    }
    const Tensor er = model.encode_patches(pb, mask, ctx);
    return cbramod::mae_loss(model.reconstruct(er), pb.tensor(), mask);
  });
}

}  // namespace tsfm::train
