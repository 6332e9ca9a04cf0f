#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tsfm/cbramod.hpp"
#include "tsfm/errors.hpp"
#include "tsfm/io.hpp"
#include "tsfm/metrics.hpp"
#include "tsfm/train.hpp"
#include "tsfm/workbench.hpp"

namespace tsfm::workbench {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTimeLimit = 3;
constexpr int kExitCheckFailed = 4;

struct RunConfig {
  nlohmann::json model = "full";
  train::TrainConfig train;
  train::HeadConfig head;
  nlohmann::json split = nlohmann::json::object();
};

nlohmann::json read_json(const std::string& path) {
  const auto raw = io::read_file(path);
  try {
    return nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON (" + e.what() + ")");
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  const auto j = read_json(path);
  try {
    if (j.contains("model")) rc.model = j.at("model");
    if (j.contains("train")) rc.train = train::train_config_from_json(j.at("train"));
    if (j.contains("head")) rc.head = train::head_config_from_json(j.at("head"));
    if (j.contains("split")) rc.split = j.at("split");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return rc;
}

fs::path sibling(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p.replace_extension();
  return p.string() + suffix;
}

ParameterSet combined(const ParameterSet& a, const ParameterSet& b) {
  ParameterSet out;
  for (const auto& [name, t] : a.items()) out.add(name, t);
  for (const auto& [name, t] : b.items()) out.add(name, t);
  return out;
}

std::string pretrain_csv(const train::PretrainReport& r, const train::TrainConfig& cfg) {
  std::ostringstream out;
  out << "step,loss,lr\n";
  char line[128];
  for (std::size_t s = 0; s < r.losses.size(); ++s) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", s, r.losses[s],
                  train::cosine_warmup_lr(s, cfg.pretrain_steps, cfg.warmup_frac, cfg.base_lr));
    out << line;
  }
  return out.str();
}

// Tags from the manifest win; otherwise the config decides (explicit subject
// ranges or seeded fractional split).
workbench::SplitIndices resolve_split(Dataset& ds, const nlohmann::json& split) {
  if (!ds.split_tags.empty()) return split_from_tags(ds);
  SplitIndices s;
  if (split.contains("ranges")) {
    const auto r = parse_ranges(split.at("ranges").get<std::string>());
    if (r.size() != 3) throw ConfigError("split.ranges needs exactly three ranges (train, val, test)");
    s = split_by_subject_ranges(ds, r[0], r[1], r[2]);
  } else {
    const auto f = split.value("fractions", std::vector<double>{0.6, 0.2, 0.2});
    if (f.size() != 3) throw ConfigError("split.fractions needs three values");
    s = split_by_subject(ds, f[0], f[1], f[2], split.value("seed", std::uint64_t{0}));
  }
  apply_split_tags(ds, s);
  check_split_leakage(ds);
  return s;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
  const auto spec = synth_spec_from_json(read_json(spec_path));
  const Dataset ds = gen_synthetic(spec);
  io::save_dataset(out_dir, ds);
  std::cout << "wrote " << ds.size() << " samples (" << ds.subjects().size() << " subjects, " << ds.n_classes()
            << " classes) to " << out_dir << "\n";
  return kExitOk;
}

int cmd_pretrain(const std::string& model_kind, const std::string& objective, const std::string& data_dir,
                 const std::string& config_path, std::uint64_t seed, const std::string& out, double max_hours,
                 std::string report_path) {
  RunConfig rc = load_run_config(config_path);
  rc.train.seed = seed;
  rc.train.max_wallclock_hours = max_hours;
  const Dataset ds = io::load_dataset(data_dir);
  auto encoder = make_encoder(model_kind, rc.model, seed);

  train::PretrainReport report;
  if (objective == "contrastive") {
    report = train::pretrain_contrastive(*encoder, ds, rc.train);
  } else if (objective == "mae") {
    auto* cb = dynamic_cast<cbramod::CBraModModel*>(encoder.get());
    if (cb == nullptr) throw ConfigError("the mae objective requires --model cbramod");
    report = train::pretrain_mae(*cb, ds, rc.train);
  } else {
    throw ConfigError("unknown objective '" + objective + "'");
  }

  const auto ckpt = io::make_checkpoint(encoder->parameters(), encoder->kind(), {{"model", encoder->config_json()}}, seed,
                                        report.steps_run);
  io::save_checkpoint(out, ckpt);
  if (report_path.empty()) report_path = sibling(out, ".report.json");
  io::write_file(report_path, train::to_json(report).dump(2) + "\n");
  io::write_file(sibling(report_path, ".history.csv"), pretrain_csv(report, rc.train));
  std::cout << "pretrain " << train::to_string(report.status) << ": " << report.steps_run << " steps, "
            << ckpt.tensors.size() << " tensors / " << ckpt.numel() << " parameters -> " << out << "\n";
  return report.status == train::FitStatus::time_limit_exceeded ? kExitTimeLimit : kExitOk;
}

struct FinetuneArgs {
  std::string model = "mantis";
  std::string init = "random";
  std::string head = "mlp3";
  std::string data, config, report = "report.json", out;
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  double max_hours = 5.0;
};

int cmd_finetune(const FinetuneArgs& a) {
  RunConfig rc = load_run_config(a.config);
  rc.head.kind = train::head_kind_from_string(a.head);
  rc.train.max_wallclock_hours = a.max_hours;
  Dataset ds = io::load_dataset(a.data);
  const auto split = resolve_split(ds, rc.split);
  const Dataset tr = ds.subset(split.train), va = ds.subset(split.val), te = ds.subset(split.test);

  std::optional<io::Checkpoint> init;
  if (a.init != "random") init = io::load_checkpoint(a.init);

  std::vector<train::FitReport> reports;
  bool timed_out = false;
  for (std::size_t k = 0; k < a.seeds; ++k) {
    const std::uint64_t seed = a.seed + k;
    auto encoder = make_encoder(a.model, rc.model, seed);
    if (init) {
      if (init->kind != encoder->kind()) throw ConfigError("checkpoint holds a " + init->kind + " model, not " + encoder->kind());
      io::apply_checkpoint(*init, encoder->parameters());
    }
    train::FineTuner tuner(*encoder, rc.head, ds.channels, ds.length, ds.n_classes(), seed);
    auto cfg = rc.train;
    cfg.seed = seed;
    reports.push_back(tuner.fit(tr, va, te, cfg));
    const auto& rep = reports.back();
    timed_out = timed_out || rep.status == train::FitStatus::time_limit_exceeded;

    const std::string tag = a.seeds > 1 ? ".seed" + std::to_string(seed) : "";
    io::write_file(sibling(a.report, tag + ".history.csv"), train::history_csv(rep.history));
    if (!a.out.empty()) {
      const nlohmann::json cfg_json{{"model", encoder->config_json()},
                                    {"head", train::to_json(rc.head)},
                                    {"n_classes", ds.n_classes()},
                                    {"channels", ds.channels},
                                    {"length", ds.length},
                                    {"split", rc.split}};
      const fs::path out = a.seeds > 1 ? sibling(a.out, tag + fs::path(a.out).extension().string()) : fs::path(a.out);
      io::save_checkpoint(out, io::make_checkpoint(combined(encoder->parameters(), tuner.head_parameters()), encoder->kind(),
                                                   cfg_json, seed, rep.epochs_run));
    }
    std::cout << "seed " << seed << ": " << train::to_string(rep.status) << " after " << rep.epochs_run << " epochs";
    for (const auto& [name, v] : rep.test_metrics) std::cout << "  " << name << "=" << (std::isnan(v) ? std::string("NaN") : std::to_string(100.0 * v));
    std::cout << "\n";
  }

  nlohmann::json out;
  if (reports.size() == 1) {
    out = train::to_json(reports.front());
  } else {
    out["seeds"] = nlohmann::json::array();
    for (const auto& r : reports) out["seeds"].push_back(train::to_json(r));
    nlohmann::json summary = nlohmann::json::object();
    for (const auto& name : rc.train.metrics) {
      double mean = 0.0, sq = 0.0;
      for (const auto& r : reports) mean += r.test_metrics.at(name);
      mean /= static_cast<double>(reports.size());
      for (const auto& r : reports) sq += (r.test_metrics.at(name) - mean) * (r.test_metrics.at(name) - mean);
      const double sd = std::sqrt(sq / static_cast<double>(reports.size()));
      auto fmt = [](double v) { return std::isnan(v) ? nlohmann::json("NaN") : nlohmann::json(std::round(v * 10000.0) / 100.0); };
      summary[name] = {{"mean", fmt(mean)}, {"std", fmt(sd)}};
    }
    out["summary"] = summary;
  }
  io::write_file(a.report, out.dump(2) + "\n");
  return timed_out ? kExitTimeLimit : kExitOk;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir, const std::string& metric_list,
                 const std::string& split_name, const std::string& report_path) {
  const auto ckpt = io::load_checkpoint(ckpt_path);
  if (!ckpt.config.contains("head")) throw ConfigError(ckpt_path + " is an encoder checkpoint without a classification head");
  Dataset ds = io::load_dataset(data_dir);
  const auto& cc = ckpt.config;
  if (cc.at("channels").get<std::size_t>() != ds.channels || cc.at("length").get<std::size_t>() != ds.length ||
      cc.at("n_classes").get<std::size_t>() != ds.n_classes()) {
    throw DataError("dataset shape does not match the checkpoint (channels, length or classes differ)");
  }
  auto encoder = make_encoder(ckpt.kind, cc.at("model"), ckpt.seed);
  train::FineTuner tuner(*encoder, train::head_config_from_json(cc.at("head")), ds.channels, ds.length, ds.n_classes(), ckpt.seed);
  ParameterSet all = combined(encoder->parameters(), tuner.head_parameters());
  io::apply_checkpoint(ckpt, all);

  std::vector<std::string> names;
  std::stringstream ss(metric_list);
  for (std::string m; std::getline(ss, m, ',');)
    if (!m.empty()) names.push_back(m);
  for (const auto& m : names)
    if (std::find(metrics::metric_names().begin(), metrics::metric_names().end(), m) == metrics::metric_names().end())
      throw ConfigError("unknown metric '" + m + "'");

  Dataset subset = ds;
  if (split_name != "all") {
    // Untagged data falls back to the split the model was fine-tuned with.
    const auto s = resolve_split(ds, cc.value("split", nlohmann::json::object()));
    const auto& idx = split_name == "train" ? s.train : split_name == "val" ? s.val : s.test;
    subset = ds.subset(idx);
  }
  if (subset.size() == 0) throw DataError("no samples in the selected split");
  const auto ev = tuner.evaluate(subset);
  const auto scores = tuner.score(ev, names);
  nlohmann::json out{{"n_samples", subset.size()}, {"loss", ev.loss}};
  for (const auto& [k, v] : scores) out["metrics"][k] = std::isnan(v) ? nlohmann::json("NaN") : nlohmann::json(std::round(v * 10000.0) / 100.0);
  std::cout << out.dump(2) << "\n";
  if (!report_path.empty()) io::write_file(report_path, out.dump(2) + "\n");
  return kExitOk;
}

int cmd_gradcheck(const std::string& module, std::size_t seeds) {
  const auto results = run_gradchecks(module, seeds);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%s %-28s %-17s seed=%llu max_rel_err=%.3e\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.module.c_str(),
                static_cast<unsigned long long>(r.seed), r.max_rel_error);
    ok = ok && r.passed;
  }
  std::printf("%zu checks, %s\n", results.size(), ok ? "all passed" : "FAILURES");
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Time-series foundation model workbench"};
  app.require_subcommand(1);
  double max_hours = 5.0;

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "Synthetic spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output dataset directory")->required();

  std::string model = "mantis", objective = "contrastive", data, config, out, report;
  std::uint64_t seed = 0;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  pre->add_option("--model", model)->check(CLI::IsMember({"mantis", "cbramod"}));
  pre->add_option("--objective", objective)->check(CLI::IsMember({"contrastive", "mae"}));
  pre->add_option("--data", data)->required();
  pre->add_option("--config", config);
  pre->add_option("--seed", seed);
  pre->add_option("--out", out)->required();
  pre->add_option("--report", report, "Report JSON (default: next to --out)");
  pre->add_option("--max-hours", max_hours)->capture_default_str();

  FinetuneArgs ft;
  auto* fine = app.add_subcommand("finetune", "Fine-tune encoder + head with early stopping");
  fine->add_option("--model", ft.model)->check(CLI::IsMember({"mantis", "cbramod"}));
  fine->add_option("--init", ft.init, "random or a checkpoint path");
  fine->add_option("--head", ft.head)->check(CLI::IsMember({"linear_preln", "mlp3"}));
  fine->add_option("--data", ft.data)->required();
  fine->add_option("--config", ft.config);
  fine->add_option("--seed", ft.seed, "First seed");
  fine->add_option("--seeds", ft.seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  fine->add_option("--report", ft.report);
  fine->add_option("--out", ft.out, "Save the fine-tuned model");
  fine->add_option("--max-hours", ft.max_hours)->capture_default_str();

  std::string ckpt, metric_list = "balanced_accuracy,cohens_kappa,weighted_f1,auroc,auc_pr", split_name = "all", eval_report;
  auto* eval = app.add_subcommand("evaluate", "Score a fine-tuned checkpoint");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--metrics", metric_list);
  eval->add_option("--split", split_name)->check(CLI::IsMember({"all", "train", "val", "test"}));
  eval->add_option("--report", eval_report);
  eval->add_option("--max-hours", max_hours);

  std::string module;
  std::size_t gc_seeds = 3;
  auto* gc = app.add_subcommand("gradcheck", "Run the registered gradient checks");
  gc->add_option("--module", module, "tensor-core, mantis-model, cbramod-model, training-harness or a case name");
  gc->add_option("--seeds", gc_seeds)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out_dir);
    if (*pre) return cmd_pretrain(model, objective, data, config, seed, out, max_hours, report);
    if (*fine) return cmd_finetune(ft);
    if (*eval) return cmd_evaluate(ckpt, data, metric_list, split_name, eval_report);
    if (*gc) return cmd_gradcheck(module, gc_seeds);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace tsfm::workbench
