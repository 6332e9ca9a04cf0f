// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common/metric_oracles.hpp"
#include "tsfm/cbramod.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/io.hpp"
#include "tsfm/metrics.hpp"
#include "tsfm/random.hpp"
#include "tsfm/signal.hpp"
#include "tsfm/train.hpp"
#include "tsfm/workbench.hpp"

using namespace tsfm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects sub-check failures so that one line can explain the verdict.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  bool ok() const { return failures_.empty(); }
  std::string failures() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    return s;
  }

 private:
  std::vector<std::string> failures_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

workbench::SynthSpec task_spec(std::size_t subjects, std::size_t per_subject, double noise, std::uint64_t seed,
                               std::size_t channels = 2) {
  workbench::SynthSpec s;
  s.n_subjects = subjects;
  s.samples_per_subject = per_subject;
  s.channels = channels;
  s.length = 200;
  s.sample_rate_hz = 100.0;
  s.noise_sigma = noise;
  s.seed = seed;
  return s;
}

nlohmann::json mini(double dropout) { return {{"preset", "mini"}, {"dropout", dropout}}; }

struct Splits {
  Dataset train, val, test;
};

Splits split(const Dataset& ds, std::uint64_t seed) {
  const auto s = workbench::split_by_subject(ds, 0.6, 0.2, 0.2, seed);
  return {ds.subset(s.train), ds.subset(s.val), ds.subset(s.test)};
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const auto results = workbench::run_gradchecks("", 3);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  std::set<std::string> modules;
  std::size_t failed = 0;
  for (const auto& r : results) {
    modules.insert(r.module);
    if (!r.passed) ++failed;
    if (!(r.max_rel_error <= worst)) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  std::ostringstream d;
  d << results.size() / 3 << " cases over " << modules.size() << " modules x 3 seeds, " << failed << " failed, worst "
    << fmt("%.2e", worst) << " (" << worst_name << "), " << fmt("%.1f", secs) << " s";
  return {failed == 0 && modules.size() == 4 && secs < 300.0, d.str()};
}

Outcome metric_oracles() {
  using oracle::D;
  using oracle::U;
  Checks c;
  double worst = 0.0;
  Rng rng(20240601);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng() % 80, k = 2 + rng() % 4;
    U y(n), p(n), yb(n);
    D s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint32_t>(rng() % k);
      p[i] = static_cast<std::uint32_t>(rng() % k);
      s[i] = std::round(uniform(rng) * 10.0) / 10.0;
      yb[i] = static_cast<std::uint32_t>(rng() % 2);
    }
    yb[0] = 0;
    yb[1] = 1;
    for (double d : {metrics::balanced_accuracy(y, p) - oracle::balanced_accuracy(y, p, k),
                     metrics::cohens_kappa(y, p) - oracle::kappa(y, p, k),
                     metrics::weighted_f1(y, p) - oracle::weighted_f1(y, p, k),
                     metrics::auroc(yb, s) - oracle::auroc(yb, s),
                     metrics::auc_pr(yb, s) - oracle::average_precision(yb, s)})
      worst = std::max(worst, std::abs(d));
  }
  c.expect(worst < 1e-9, "oracle gap " + fmt("%.2e", worst));

  const U y4{0, 0, 1, 1};
  const D s4{0.1, 0.4, 0.35, 0.8};
  const double au = metrics::auroc(y4, s4), kp = metrics::cohens_kappa(y4, U{0, 1, 1, 1});
  const double f1 = metrics::weighted_f1(U{0, 0, 1}, U{0, 1, 1}), ap = metrics::auc_pr(y4, s4);
  c.expect(au == 0.75, "AUROC " + fmt("%.17g", au));
  c.expect(kp == 0.5, "kappa " + fmt("%.17g", kp));
  c.expect(std::abs(f1 - 2.0 / 3.0) <= 1e-15, "weighted F1 " + fmt("%.17g", f1));
  c.expect(std::abs(ap - 5.0 / 6.0) <= 1e-15, "AUC-PR " + fmt("%.17g", ap));
  std::ostringstream d;
  d << "200 instances x 5 metrics, max |delta| " << fmt("%.1e", worst) << "; AUROC " << au << ", kappa " << kp
    << ", wF1 " << fmt("%.6f", f1) << ", AUC-PR " << fmt("%.6f", ap);
  if (!c.ok()) d << " [" << c.failures() << "]";
  return {c.ok(), d.str()};
}

Outcome loss_closed_forms() {
  Checks c;
  const double one = train::info_nce(Tensor({1, 4}, {1, 2, 3, 4}), Tensor({1, 4}, {0, 1, 0, 0}), 0.1).item();
  c.expect(one == 0.0, "info_nce N=1 gave " + fmt("%.3g", one));
  double nce_gap = 0.0;
  for (std::size_t n : {2, 8, 32}) {
    std::vector<double> rows;
    for (std::size_t i = 0; i < n; ++i) rows.insert(rows.end(), {0.5, -1.0, 2.0});
    const Tensor z({n, 3}, rows);
    nce_gap = std::max(nce_gap, std::abs(train::info_nce(z, z, 0.1).item() - std::log(double(n))));
  }
  c.expect(nce_gap <= 1e-6, "info_nce uniform gap " + fmt("%.2e", nce_gap));

  double ce_gap = 0.0;
  for (std::size_t k : {2, 5, 10}) {
    std::vector<std::uint32_t> y(4);
    for (std::size_t i = 0; i < 4; ++i) y[i] = static_cast<std::uint32_t>(i % k);
    ce_gap = std::max(ce_gap, std::abs(cross_entropy(Tensor::full({4, k}, -0.3), y).item() - std::log(double(k))));
  }
  c.expect(ce_gap <= 1e-9, "cross_entropy uniform gap " + fmt("%.2e", ce_gap));

  Rng rng(3);
  bool mae_exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 12, t = 40;
    std::vector<double> xh(rows * t), x(rows * t);
    for (auto& v : xh) v = normal(rng);
    for (auto& v : x) v = normal(rng);
    const auto m = cbramod::mask_patches(3, 4, 0.5, rng);
    const double base = cbramod::mae_loss(Tensor({rows, t}, xh), Tensor({rows, t}, x), m.mask).item();
    for (std::size_t r = 0; r < rows; ++r)
      if (!m.mask[r])
        for (std::size_t j = 0; j < t; ++j) {
          xh[r * t + j] += 100.0 * normal(rng);
          x[r * t + j] -= 50.0 * normal(rng);
        }
    mae_exact = mae_exact && cbramod::mae_loss(Tensor({rows, t}, xh), Tensor({rows, t}, x), m.mask).item() == base;
  }
  c.expect(mae_exact, "mae_loss changed under unmasked perturbation");
  std::ostringstream d;
  d << "info_nce(N=1)=" << one << ", |info_nce-log N|<=" << fmt("%.1e", nce_gap) << ", |CE-log K|<="
    << fmt("%.1e", ce_gap) << ", mae_loss unmasked-invariant=" << (mae_exact ? "exact" : "no");
  if (!c.ok()) d << " [" << c.failures() << "]";
  return {c.ok(), d.str()};
}

struct OverfitRun {
  std::size_t epochs = 0;
  double train_ba = 0.0;
  double secs = 0.0;
};

// Plain epoch loop on the training set alone; stops as soon as training
// balanced accuracy reaches the target.
OverfitRun overfit(const std::string& kind, std::uint64_t seed) {
  const auto t0 = Clock::now();
  const Dataset ds = workbench::gen_synthetic(task_spec(8, 8, 0.0, seed));
  auto enc = workbench::make_encoder(kind, mini(0.1), seed);
  train::FineTuner tuner(*enc, {train::HeadKind::mlp3, {64, 32}, 0.1}, ds.channels, ds.length, 2, seed);
  auto params = tuner.parameters();
  train::AdamW opt(params, {0.9, 0.999, 1e-8, 0.0});
  const std::size_t batch = 16;
  OverfitRun run;
  std::vector<std::size_t> order(ds.size());
  for (std::size_t epoch = 1; epoch <= 300; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, {epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::vector<std::size_t> idx(order.begin() + b, order.begin() + std::min(order.size(), b + batch));
      std::vector<std::uint32_t> y;
      for (auto i : idx) y.push_back(ds.labels[i]);
      RunContext ctx = RunContext::train(derive_seed(seed, {0xd0}), epoch * 100 + b);
      for (auto& p : params) p.zero_grad();
      Tensor loss = cross_entropy(tuner.logits(ds.batch(idx), ctx), y);
      loss.backward();
      train::clip_grad_norm(params, 1.0);
      opt.step(1e-3);
    }
    const auto ev = tuner.evaluate(ds);
    run.epochs = epoch;
    run.train_ba = metrics::compute("balanced_accuracy", ev.labels, ev.probabilities, 2);
    if (run.train_ba >= 0.95) break;
  }
  run.secs = seconds_since(t0);
  return run;
}

Outcome overfit_sanity() {
  bool ok = true;
  std::ostringstream d;
  for (const char* kind : {"mantis", "cbramod"}) {
    d << kind << ":";
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto r = overfit(kind, seed);
      const bool pass = r.train_ba >= 0.95 && r.secs < 300.0;
      ok = ok && pass;
      d << " [seed " << seed << " BA " << fmt("%.3f", r.train_ba) << " @" << r.epochs << " ep, " << fmt("%.1f", r.secs)
        << " s]";
    }
    d << " ";
  }
  return {ok, d.str()};
}

Outcome pretraining_dynamics() {
  Checks c;
  std::ostringstream d;
  {
    const Dataset ds = workbench::gen_synthetic(task_spec(16, 8, 0.1, 77));
    std::vector<double> first, last, secs;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto enc = workbench::make_encoder("mantis", "mini", seed);
      train::TrainConfig cfg;
      cfg.batch_size = 32;
      cfg.pretrain_steps = 51;
      cfg.base_lr = 1e-3;
      cfg.seed = seed;
      const auto t0 = Clock::now();
      const auto r = train::pretrain_contrastive(*enc, ds, cfg);
      secs.push_back(seconds_since(t0));
      first.push_back(r.losses.front());
      last.push_back(r.losses.at(50));
    }
    const double f = median(first), l = median(last), t = *std::max_element(secs.begin(), secs.end());
    c.expect(std::abs(f - std::log(32.0)) <= 1.0, "contrastive initial loss off log 32");
    c.expect(l < f, "contrastive loss did not decrease");
    c.expect(t < 600.0, "contrastive run over 10 min");
    d << "contrastive median loss " << fmt("%.3f", f) << " (log 32 = " << fmt("%.3f", std::log(32.0)) << ") -> "
      << fmt("%.3f", l) << " at step 50, slowest " << fmt("%.1f", t) << " s; ";
  }
  {
    const Dataset ds = workbench::gen_synthetic(task_spec(16, 8, 0.1, 78));
    std::vector<double> ratio, secs;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      cbramod::CBraModModel model(cbramod::CBraModConfig::mini(), seed);
      train::TrainConfig cfg;
      cfg.batch_size = 32;
      cfg.pretrain_steps = 101;
      cfg.base_lr = 1e-3;
      cfg.seed = seed;
      const auto t0 = Clock::now();
      const auto r = train::pretrain_mae(model, ds, cfg);
      secs.push_back(seconds_since(t0));
      ratio.push_back(r.losses.at(100) / r.losses.front());
    }
    const double q = median(ratio), t = *std::max_element(secs.begin(), secs.end());
    c.expect(q <= 0.5, "MAE loss did not halve");
    c.expect(t < 600.0, "MAE run over 10 min");
    d << "MAE median loss ratio step 100 / step 0 = " << fmt("%.3f", q) << " on " << ds.size() << " samples, slowest "
      << fmt("%.1f", t) << " s";
  }
  if (!c.ok()) d << " [" << c.failures() << "]";
  return {c.ok(), d.str()};
}

Outcome pretraining_helps() {
  // Pretraining corpus and downstream task use disjoint spectral signatures.
  // Single-channel series keep 3 x 500 pretraining steps affordable.
  auto pre_spec = task_spec(32, 8, 0.3, 500, 1);
  pre_spec.class_bands = {{{11.0, 1.0}}, {{17.0, 1.0}}, {{23.0, 1.0}}};
  pre_spec.n_classes = 3;
  const Dataset pre = workbench::gen_synthetic(pre_spec);
  auto task = task_spec(20, 8, 1.5, 600, 1);
  task.class_bands = {{{4.0, 1.0}}, {{6.0, 1.0}}};
  const Dataset ds = workbench::gen_synthetic(task);
  const Splits sp = split(ds, 600);

  std::size_t wins = 0;
  std::ostringstream d;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto encoder = workbench::make_encoder("mantis", "mini", seed);
    train::TrainConfig pcfg;
    pcfg.batch_size = 32;
    pcfg.pretrain_steps = 500;
    pcfg.base_lr = 1e-3;
    pcfg.seed = seed;
    const auto pr = train::pretrain_contrastive(*encoder, pre, pcfg);
    const auto ckpt = io::make_checkpoint(encoder->parameters(), "mantis", encoder->config_json(), seed, pr.steps_run);

    std::vector<double> curve[2];
    for (int init = 0; init < 2; ++init) {
      auto enc = workbench::make_encoder("mantis", "mini", seed);
      if (init == 1) io::apply_checkpoint(ckpt, enc->parameters());
      train::FineTuner tuner(*enc, {train::HeadKind::mlp3, {64, 32}, 0.1}, ds.channels, ds.length, 2, seed);
      train::TrainConfig cfg;
      cfg.max_epochs = 5;
      cfg.patience = 5;
      cfg.batch_size = 16;
      cfg.base_lr = 1e-3;
      cfg.seed = seed;
      const auto r = tuner.fit(sp.train, sp.val, sp.test, cfg);
      for (const auto& e : r.history) curve[init].push_back(e.val_metrics.at("weighted_f1"));
    }
    const bool win = !curve[1].empty() && curve[1].size() == curve[0].size() && curve[1].back() >= curve[0].back();
    wins += win;
    d << "\n    seed " << seed << " (pretrain loss " << fmt("%.3f", pr.losses.front()) << " -> "
      << fmt("%.3f", pr.losses.back()) << ")\n      random     val wF1:";
    for (double v : curve[0]) d << " " << fmt("%.2f", 100 * v);
    d << "\n      pretrained val wF1:";
    for (double v : curve[1]) d << " " << fmt("%.2f", 100 * v);
  }
  return {wins >= 2, "pretrained >= random after 5 epochs in " + std::to_string(wins) + "/3 seeds (soft)" + d.str()};
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(TSFM_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome protocol_fidelity(const fs::path& tmp) {
  Checks c;
  std::ostringstream d;
  const Dataset ds = workbench::gen_synthetic(task_spec(5, 4, 0.1, 7));
  auto sp = split(ds, 7);
  {
    auto enc = workbench::make_encoder("cbramod", "mini", 1);
    train::FineTuner tuner(*enc, {}, ds.channels, ds.length, 2, 1);
    train::TrainConfig cfg;
    cfg.max_wallclock_hours = 0.0;
    const auto r = tuner.fit(sp.train, sp.val, sp.test, cfg);
    bool all_nan = r.test_metrics.size() == cfg.metrics.size();
    for (const auto& [k, v] : r.test_metrics) all_nan = all_nan && std::isnan(v);
    const bool touched_test = std::any_of(r.access_log.begin(), r.access_log.end(),
                                          [](const std::string& s) { return s.rfind("test", 0) == 0; });
    c.expect(r.status == train::FitStatus::time_limit_exceeded, "status " + train::to_string(r.status));
    c.expect(all_nan, "metrics not all NaN");
    c.expect(!touched_test, "test split read after timeout");
    c.expect(train::to_json(r)["test_metrics"]["auroc"] == "NaN", "report lacks NaN sentinel");
    d << "max-hours 0: " << train::to_string(r.status) << ", metrics " << (all_nan ? "NaN" : "finite");

    io::save_dataset(tmp / "data", ds);
    io::write_file(tmp / "cfg.json", nlohmann::json{{"model", "mini"}}.dump());
    const int rc = run_cli("finetune --model cbramod --init random --head mlp3 --data " + (tmp / "data").string() +
                           " --config " + (tmp / "cfg.json").string() + " --report " + (tmp / "r.json").string() +
                           " --max-hours 0");
    c.expect(rc == 3, "CLI exit " + std::to_string(rc));
    d << ", CLI exit " << rc;
  }
  {
    train::EarlyStopping stop(1);
    std::size_t epochs = 0;
    for (double v : {1.0, 1.5, 2.0, 2.5, 3.0}) {
      ++epochs;
      stop.update(v);
      if (stop.should_stop()) break;
    }
    // End to end: validation is the training inputs with flipped labels, so
    // full-batch descent on the training loss worsens it every epoch.
    Splits f = sp;
    f.val = f.train;
    for (auto& l : f.val.labels) l = 1 - l;
    for (auto& s : f.val.subject_ids) s = "V" + s;
    auto enc = workbench::make_encoder("mantis", mini(0.0), 2);
    train::FineTuner tuner(*enc, {train::HeadKind::linear_preln, {}, 0.0}, ds.channels, ds.length, 2, 2);
    train::TrainConfig cfg;
    cfg.patience = 1;
    cfg.warmup_frac = 0.0;
    cfg.weight_decay = 0.0;
    cfg.base_lr = 1e-3;
    cfg.batch_size = f.train.size();
    const auto r = tuner.fit(f.train, f.val, f.test, cfg);
    bool rising = r.history.size() >= 2;
    for (std::size_t i = 1; i < r.history.size(); ++i) rising = rising && r.history[i].val_loss > r.history[i - 1].val_loss;
    c.expect(epochs == 2, "EarlyStopping stopped after " + std::to_string(epochs));
    c.expect(rising, "validation loss did not rise monotonically");
    c.expect(r.epochs_run == 2 && r.status == train::FitStatus::early_stopped,
             "fit stopped after " + std::to_string(r.epochs_run) + " epochs");
    d << "; patience 1 on rising val loss: stopper " << epochs << " epochs, fit " << r.epochs_run << " epochs ("
      << train::to_string(r.status) << ")";
  }
  {
    double gap = 0.0;
    for (std::size_t total : {10, 97, 1000})
      for (double frac : {0.0, 0.1, 0.2, 0.5}) {
        const double base = 3e-4;
        const auto warm = static_cast<std::size_t>(std::floor(frac * double(total)));
        gap = std::max(gap, std::abs(train::cosine_warmup_lr(0, total, frac, base) - (warm == 0 ? base : 0.0)));
        gap = std::max(gap, std::abs(train::cosine_warmup_lr(warm, total, frac, base) - base));
        gap = std::max(gap, std::abs(train::cosine_warmup_lr(total, total, frac, base)));
      }
    c.expect(gap <= 1e-12, "schedule endpoint gap " + fmt("%.2e", gap));
    d << "; schedule endpoints max gap " << fmt("%.1e", gap);
  }
  if (!c.ok()) d << " [" << c.failures() << "]";
  return {c.ok(), d.str()};
}

Outcome determinism_and_formats(const fs::path& tmp) {
  Checks c;
  std::ostringstream d;
  const Dataset ds = workbench::gen_synthetic(task_spec(5, 4, 0.1, 8));
  const Splits sp = split(ds, 8);
  for (const char* kind : {"mantis", "cbramod"}) {
    auto once = [&] {
      auto enc = workbench::make_encoder(kind, "mini", 4);
      train::FineTuner tuner(*enc, {}, ds.channels, ds.length, 2, 4);
      train::TrainConfig cfg;
      cfg.max_epochs = 2;
      cfg.batch_size = 4;
      cfg.seed = 4;
      return train::to_json(tuner.fit(sp.train, sp.val, sp.test, cfg), false).dump();
    };
    const bool same = once() == once();
    c.expect(same, std::string(kind) + " FitReports differ");

    const auto enc = workbench::make_encoder(kind, "mini", 9);
    io::save_checkpoint(tmp / "a.bin", io::make_checkpoint(enc->parameters(), kind, enc->config_json(), 9, 0));
    io::save_checkpoint(tmp / "b.bin", io::load_checkpoint(tmp / "a.bin"));
    const bool bytes = io::read_file(tmp / "a.bin") == io::read_file(tmp / "b.bin");
    c.expect(bytes, std::string(kind) + " checkpoint round trip differs");
    d << kind << ": reports " << (same ? "identical" : "DIFFER") << ", checkpoint save-load-save "
      << (bytes ? "byte-identical" : "DIFFERS") << "; ";
  }

  Dataset tagged = ds;
  workbench::apply_split_tags(tagged, workbench::split_by_subject(tagged, 0.6, 0.2, 0.2, 1));
  io::save_dataset(tmp / "tagged", tagged);
  auto m = nlohmann::json::parse(io::read_file(tmp / "tagged" / "manifest.json"));
  for (auto& tag : m["split_tags"])
    if (tag == "val") {
      tag = "test";
      break;
    }
  io::write_file(tmp / "tagged" / "manifest.json", m.dump());
  bool rejected = false;
  try {
    workbench::check_split_leakage(io::load_dataset(tmp / "tagged"));
  } catch (const DataError&) {
    rejected = true;
  }
  c.expect(rejected, "corrupted manifest accepted");
  d << "corrupted manifest " << (rejected ? "rejected" : "ACCEPTED");
  if (!c.ok()) d << " [" << c.failures() << "]";
  return {c.ok(), d.str()};
}

double rms(std::span<const double> x, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += x[i] * x[i];
  return std::sqrt(s / double(to - from));
}

Outcome preprocessing_spectra() {
  Checks c;
  const double fs_hz = 100.0;
  const std::size_t n = 6000, lo = 1000, hi = 5000;
  auto gain_db = [&](double f) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * double(i) / fs_hz);
    const auto y = signal::lowpass_filter(x, fs_hz, 30.0);
    return 20.0 * std::log10(rms(y, lo, hi) / rms(x, lo, hi));
  };
  double ripple = 0.0, stop = -1e9;
  for (double f = 0.5; f <= 25.0; f += 0.5) ripple = std::max(ripple, std::abs(gain_db(f)));
  for (double f = 45.0; f <= 49.5; f += 0.5) stop = std::max(stop, gain_db(f));
  c.expect(ripple < 1.0, "passband ripple " + fmt("%.3f", ripple) + " dB");
  c.expect(stop <= -20.0, "stopband " + fmt("%.1f", stop) + " dB");

  double worst_rt = 0.0;
  Rng rng(99);
  for (auto [a, b] : {std::pair{100.0, 200.0}, {200.0, 100.0}, {100.0, 250.0}})
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> x(static_cast<std::size_t>(30.0 * a), 0.0);
      for (int k = 0; k < 4; ++k) {
        const double f = uniform(rng, 0.5, 10.0), ph = uniform(rng, 0.0, 2.0 * std::numbers::pi), amp = uniform(rng, 0.2, 1.0);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += amp * std::sin(2.0 * std::numbers::pi * f * double(i) / a + ph);
      }
      const auto back = signal::resample(signal::resample(x, a, b), b, a);
      std::vector<double> err(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) err[i] = back[i] - x[i];
      worst_rt = std::max(worst_rt, rms(err, 0, x.size()) / rms(x, 0, x.size()));
    }
  c.expect(worst_rt < 0.01, "round-trip error " + fmt("%.4f", worst_rt));
  std::ostringstream d;
  d << "30 Hz low-pass @100 Hz: max |gain| over 0.5-25 Hz " << fmt("%.3f", ripple) << " dB, worst 45-49.5 Hz gain "
    << fmt("%.1f", stop) << " dB; resample round trip (100/200/250 Hz, <=10 Hz mixtures) worst RMS "
    << fmt("%.3f", 100 * worst_rt) << "%";
  if (!c.ok()) d << " [" << c.failures() << "]";
  return {c.ok(), d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const fs::path tmp = fs::temp_directory_path() / ("tsfm_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(tmp);

  struct Criterion {
    int id;
    const char* name;
    bool soft;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient integrity", false, gradient_integrity},
      {2, "metric oracle equivalence", false, metric_oracles},
      {3, "loss closed forms", false, loss_closed_forms},
      {4, "overfit sanity", false, overfit_sanity},
      {5, "pretraining dynamics", false, pretraining_dynamics},
      {6, "pretraining helps", true, pretraining_helps},
      {7, "protocol fidelity", false, [&] { return protocol_fidelity(tmp); }},
      {8, "determinism and formats", false, [&] { return determinism_and_formats(tmp); }},
      {9, "preprocessing spectra", false, preprocessing_spectra},
  };

  bool hard_fail = false;
  for (const auto& cr : criteria) {
    if (!only.empty() && !only.contains(cr.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << cr.id << "] " << cr.name << " (" << fmt("%.1f", seconds_since(t0))
              << " s): " << o.detail << std::endl;
    hard_fail = hard_fail || (!o.pass && !cr.soft);
  }
  fs::remove_all(tmp);
  return hard_fail ? 1 : 0;
}
